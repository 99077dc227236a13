"""Selection accuracy, regression error statistics and sweep summaries."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import ContractError

N_BINS = 10


def argmax_lowest(rows) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest index."""
    rows = np.asarray(rows, dtype=np.float64)
    return np.argmax(rows, axis=-1)  # numpy returns the first maximum


def tpr(predicted, true) -> float:
    predicted = np.asarray(predicted)
    true = np.asarray(true)
    if predicted.shape != true.shape:
        raise ContractError(f"length mismatch: {predicted.shape} vs {true.shape}")
    if predicted.size == 0:
        raise ContractError("TPR of an empty sample set is undefined")
    tp = int(np.count_nonzero(predicted == true))
    fn = predicted.size - tp
    return tp / (tp + fn)


@dataclass(frozen=True)
class ErrorStats:
    me: float
    variance: float
    max_error: float
    me_signed: float


def error_stats(y_hat, y) -> ErrorStats:
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ContractError(f"length mismatch: {y_hat.shape} vs {y.shape}")
    if y.size == 0:
        raise ContractError("error statistics of an empty sample set are undefined")
    err = y_hat - y
    abs_err = np.abs(err)
    return ErrorStats(
        me=float(abs_err.mean()),
        variance=float(abs_err.var()),
        max_error=float(abs_err.max()),
        me_signed=float(err.mean()),
    )


@dataclass
class ConfidenceHistogram:
    edges: np.ndarray
    freq: np.ndarray
    count: int

    @property
    def empty(self) -> bool:
        return self.count == 0

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def top_bin(self) -> float:
        return float(self.freq[-1])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_center", "rel_freq"])
            for c, f in zip(self.centers, self.freq):
                w.writerow([f"{c:.2f}", format(float(f), ".17g")])


def confidence_histogram(rows, true, predicted=None) -> ConfidenceHistogram:
    """Histogram of the weight on the true node over correctly selected samples.

    Bins are right-closed: (0, 0.1], (0.1, 0.2], ..., (0.9, 1.0]; a weight of
    exactly 0 lands in the first bin.
    """
    rows = np.asarray(rows, dtype=np.float64)
    true = np.asarray(true)
    if predicted is None:
        predicted = argmax_lowest(rows)
    hit = np.asarray(predicted) == true
    weights = rows[np.flatnonzero(hit), true[hit]]
    edges = np.linspace(0.0, 1.0, N_BINS + 1)
    idx = np.clip(np.ceil(weights * N_BINS).astype(int) - 1, 0, N_BINS - 1)
    counts = np.bincount(idx, minlength=N_BINS).astype(np.float64)
    freq = counts / counts.sum() if weights.size else counts
    return ConfidenceHistogram(edges, freq, int(weights.size))


# -- sweep aggregation -------------------------------------------------------

@dataclass
class BoxStats:
    """Five-number summary; quartiles by linear interpolation (numpy default)."""

    q1: float
    median: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    outliers: list[float] = field(default_factory=list)

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def box_stats(values) -> BoxStats:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ContractError("box statistics of nothing")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    span = 1.5 * (q3 - q1)
    inside = v[(v >= q1 - span) & (v <= q3 + span)]
    outliers = sorted(float(x) for x in v[(v < q1 - span) | (v > q3 + span)])
    return BoxStats(float(q1), float(med), float(q3), float(inside.min()), float(inside.max()), outliers)


@dataclass
class SweepSummary:
    variants: list[str]
    me: dict[str, np.ndarray]
    tpr: dict[str, np.ndarray]
    max_error: dict[str, np.ndarray]
    variance: dict[str, np.ndarray]

    def box(self, variant: str, metric: str = "tpr") -> BoxStats:
        return box_stats(getattr(self, metric)[variant])

    def median(self, variant: str, metric: str = "tpr") -> float:
        return float(np.median(getattr(self, metric)[variant]))


def sweep_rows(results) -> list[dict]:
    """One CSV row per seed; failed runs contribute NaN metrics."""
    rows = []
    for res in sorted(results, key=lambda r: r.seed):
        if res.failed:
            rows.append(dict(idx=res.seed, me=np.nan, tpr=np.nan, max_error=np.nan, variance=np.nan))
        else:
            rows.append(dict(idx=res.seed, me=res.stats.me, tpr=res.tpr,
                             max_error=res.stats.max_error, variance=res.stats.variance))
    return rows


def write_sweep_csv(results, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["idx", "me", "tpr", "max_error", "variance"])
        for row in sweep_rows(results):
            w.writerow([row["idx"], *(format(float(row[k]), ".17g") for k in ("me", "tpr", "max_error", "variance"))])


def read_sweep_csv(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in ("idx", "me", "tpr", "max_error", "variance")}


def summarize_sweep(by_variant: dict[str, list], out_dir=None) -> SweepSummary:
    """Aggregate per-seed results of several variants; optionally write CSVs and SVGs."""
    ok = {v: [r for r in rs if not r.failed] for v, rs in by_variant.items()}
    if not any(ok.values()):
        raise ContractError("no successful runs to summarize")

    def col(attr):
        return {v: np.array([attr(r) for r in sorted(rs, key=lambda r: r.seed)]) for v, rs in ok.items()}

    summary = SweepSummary(
        variants=list(by_variant),
        me=col(lambda r: r.stats.me),
        tpr=col(lambda r: r.tpr),
        max_error=col(lambda r: r.stats.max_error),
        variance=col(lambda r: r.stats.variance),
    )
    if out_dir is not None:
        from . import report

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for v, rs in by_variant.items():
            write_sweep_csv(rs, out / f"sweep_{v}.csv")
        report.seed_lines_svg(summary, out / "robustness.svg")
        report.boxplots_svg(summary, out / "boxplots.svg")
    return summary


def load_sweep_dir(path) -> SweepSummary:
    """Rebuild a summary from the ``sweep_<variant>.csv`` files in ``path``."""
    files = sorted(Path(path).glob("sweep_*.csv"))
    if not files:
        raise FileNotFoundError(f"no sweep_*.csv files in {path}")
    cols: dict[str, dict[str, np.ndarray]] = {k: {} for k in ("me", "tpr", "max_error", "variance")}
    names = []
    for f in files:
        v = f.stem[len("sweep_"):]
        data = read_sweep_csv(f)
        keep = ~np.isnan(data["tpr"])
        names.append(v)
        for k in cols:
            cols[k][v] = data[k][keep]
    return SweepSummary(variants=names, **cols)
