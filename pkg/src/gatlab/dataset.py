"""Synthetic relevance dataset on a star graph.

Each sample draws one scalar feature per node. The hub gets the smallest
drawn value, so every neighbor difference ``x_j - x_0`` is non-negative.
The ground-truth relevant neighbor maximizes ``sin(x_j - x_0)`` and the
hub's regression target is ``x_r - x_0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .graphs import CENTER, Graph, star_graph

UNIQUENESS_GAP = 1e-6
RETRY_LIMIT = 1000
DEFAULT_M = 20_000


class GenerationError(RuntimeError):
    pass


class DatasetParseError(ValueError):
    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"line {line}: {reason}")


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "I"
    m_train: int = DEFAULT_M
    m_test: int = DEFAULT_M
    seed: int = 0
    n_nodes: int = 3

    def __post_init__(self):
        if self.kind not in ("I", "II"):
            raise ValueError(f"experiment kind must be 'I' or 'II', got {self.kind!r}")
        if self.m_train < 1 or self.m_test < 1:
            raise ValueError("sample counts must be positive")
        if self.n_nodes < 2:
            raise ValueError("need at least one neighbor besides the hub")

    @property
    def value_range(self) -> tuple[float, float]:
        return (0.0, 0.5 * math.pi) if self.kind == "I" else (0.0, math.pi)

    @property
    def latent_dim(self) -> int:
        return 1 if self.kind == "I" else 2

    def graph(self) -> Graph:
        return star_graph(self.n_nodes)


@dataclass(frozen=True)
class Sample:
    x: tuple[float, ...]
    y: tuple[float, ...]  # only y[0] is a training target; the rest are 0
    alpha_true: tuple[int, ...]

    @property
    def r(self) -> int:
        return self.alpha_true.index(1)


@dataclass
class Dataset:
    """Samples stored column-wise: ``x`` is (M, n), ``r`` and ``y`` are (M,)."""

    x: np.ndarray
    r: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.r)

    @property
    def n_nodes(self) -> int:
        return self.x.shape[1]

    def __getitem__(self, m: int) -> Sample:
        n = self.n_nodes
        alpha = [0] * n
        alpha[int(self.r[m])] = 1
        y = [0.0] * n
        y[CENTER] = float(self.y[m])
        return Sample(tuple(float(v) for v in self.x[m]), tuple(y), tuple(alpha))

    def __iter__(self) -> Iterator[Sample]:
        return (self[m] for m in range(len(self)))

    def alpha_true(self) -> np.ndarray:
        out = np.zeros(self.x.shape, dtype=np.int64)
        out[np.arange(len(self)), self.r] = 1
        return out

    def subset(self, idx) -> Dataset:
        return Dataset(self.x[idx], self.r[idx], self.y[idx])

    def equals(self, other: Dataset) -> bool:
        return (
            self.x.shape == other.x.shape
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.r, other.r)
            and np.array_equal(self.y, other.y)
        )


def relevance(x_i, x_j):
    return np.sin(np.subtract(x_j, x_i))


def _draw(rng: np.random.Generator, m: int, n: int, lo: float, hi: float) -> np.ndarray:
    x = rng.uniform(lo, hi, size=(m, n))
    rows = np.arange(m)
    k = np.argmin(x, axis=1)
    hub = x[:, CENTER].copy()
    x[:, CENTER] = x[rows, k]
    x[rows, k] = hub
    return x


def _label(x: np.ndarray, candidates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Relevant neighbor and the gap to the runner-up for each row."""
    rel = relevance(x[:, [CENTER]], x[:, candidates])
    order = np.argsort(-rel, axis=1, kind="stable")
    best = rel[np.arange(len(x)), order[:, 0]]
    if rel.shape[1] > 1:
        gap = best - rel[np.arange(len(x)), order[:, 1]]
    else:
        gap = np.full(len(x), np.inf)
    return candidates[order[:, 0]], gap


def generate(
    spec: ExperimentSpec,
    graph: Graph | None = None,
    m: int | None = None,
    seed=None,
) -> Dataset:
    """Draw ``m`` samples (default ``spec.m_train``) for the hub of ``graph``.

    Rows whose two most relevant neighbors are closer than the uniqueness
    gap are redrawn; ``GenerationError`` after ``RETRY_LIMIT`` rounds.
    """
    graph = graph or spec.graph()
    m = spec.m_train if m is None else m
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    lo, hi = spec.value_range
    candidates = np.array([j for j in graph.neighbors[CENTER] if j != CENTER])
    if candidates.size == 0:
        raise GenerationError("hub has no neighbors")

    x = _draw(rng, m, graph.n, lo, hi)
    r, gap = _label(x, candidates)
    for _ in range(RETRY_LIMIT):
        bad = np.flatnonzero(gap < UNIQUENESS_GAP)
        if bad.size == 0:
            break
        x[bad] = _draw(rng, bad.size, graph.n, lo, hi)
        r[bad], gap[bad] = _label(x[bad], candidates)
    else:
        raise GenerationError(f"could not separate relevances within {RETRY_LIMIT} redraws")

    y = x[np.arange(m), r] - x[:, CENTER]
    return Dataset(x, r.astype(np.int64), y)


def train_test(spec: ExperimentSpec, graph: Graph | None = None) -> tuple[Dataset, Dataset]:
    """Independent train and test splits derived from ``spec.seed``."""
    train_seed, test_seed = np.random.SeedSequence(spec.seed).spawn(2)
    return (
        generate(spec, graph, spec.m_train, seed=train_seed),
        generate(spec, graph, spec.m_test, seed=test_seed),
    )


# -- CSV --------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def save(data: Dataset, path) -> None:
    n = data.n_nodes
    header = ["m", *(f"x_{i}" for i in range(n)), "r_index", "y_0"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for m in range(len(data)):
            w.writerow([m, *map(_fmt, data.x[m]), int(data.r[m]), _fmt(data.y[m])])


def load(path) -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        return Dataset(np.zeros((0, 0)), np.zeros(0, dtype=np.int64), np.zeros(0))
    header = rows[0]
    n = len(header) - 3
    if n < 1 or header[0] != "m" or header[-2:] != ["r_index", "y_0"]:
        raise DatasetParseError(1, f"unexpected header {header}")
    x = np.empty((len(rows) - 1, n))
    r = np.empty(len(rows) - 1, dtype=np.int64)
    y = np.empty(len(rows) - 1)
    for k, row in enumerate(rows[1:]):
        line = k + 2
        if len(row) != n + 3:
            raise DatasetParseError(line, f"expected {n + 3} columns, got {len(row)}")
        try:
            x[k] = [float(v) for v in row[1 : n + 1]]
            r[k] = int(row[n + 1])
            y[k] = float(row[n + 2])
        except ValueError as exc:
            raise DatasetParseError(line, str(exc)) from None
        if not 0 <= r[k] < n:
            raise DatasetParseError(line, f"r_index {r[k]} out of range")
    return Dataset(x, r, y)
