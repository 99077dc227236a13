"""Loss, optimizer, single-run trainer and multi-seed sweep."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import dataset as ds
from . import metrics
from .autodiff import Tensor
from .graphs import CENTER
from .models import ModelParams, VariantConfig, forward, init_params, predict, snapshot

log = logging.getLogger(__name__)

AUDIT_PROBE = 2000  # training samples re-evaluated by the per-epoch gradient audit


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-2
    optimizer: str = "adam"
    seed: int = 0
    loss: str = "abs"
    audit: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in ("abs", "signed"):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass
class RunResult:
    variant: str
    seed: int
    params: dict[str, np.ndarray]
    loss_trace: list[float]
    tpr: float = math.nan
    stats: metrics.ErrorStats | None = None
    histogram: metrics.ConfidenceHistogram | None = None
    audit: list[dict] = field(default_factory=list)
    failed: bool = False
    failed_epoch: int | None = None

    def summary_row(self) -> str:
        if self.failed:
            return f"{self.variant:<18} seed={self.seed:<4} FAILED at epoch {self.failed_epoch}"
        s = self.stats
        return (f"{self.variant:<18} seed={self.seed:<4} TPR={self.tpr:.3f}  "
                f"ME={s.me:.4f}  var={s.variance:.4f}  max={s.max_error:.3f}  me_signed={s.me_signed:+.3f}")


def loss(y_hat: Tensor, y, kind: str = "abs") -> Tensor:
    """Batch-mean loss between predictions and targets."""
    diff = y_hat - np.asarray(y, dtype=np.float64)
    if kind == "signed":
        return diff.mean()
    return diff.abs().mean()


class Adam:
    def __init__(self, params: ModelParams, lr: float = 1e-2, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr, (self.b1, self.b2), self.eps = lr, betas, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class SGD:
    def __init__(self, params: ModelParams, lr: float = 1e-2):
        self.params, self.lr = params, lr

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            p.data = p.data - self.lr * grads[k]


def gradients(params: ModelParams, cfg: VariantConfig, graph, x, y, kind: str = "abs"):
    """Loss on the hub node and its gradient w.r.t. every parameter."""
    out = forward(params, cfg, graph, x, nodes=[CENTER])
    value = loss(out.prediction[:, 0], y, kind)
    leaves = ad.backward(value)
    grads = {k: leaves.get(p, np.zeros_like(p.data)) for k, p in params.items()}
    return float(value.data), grads


def evaluate(params, cfg: VariantConfig, graph, data: ds.Dataset):
    """Predictions and hub attention rows on ``data``, plus metrics."""
    y_hat, rows = predict(params, cfg, graph, data.x, node=CENTER)
    chosen = metrics.argmax_lowest(rows)
    return dict(
        y_hat=y_hat,
        rows=rows,
        tpr=metrics.tpr(chosen, data.r),
        stats=metrics.error_stats(y_hat, data.y),
        histogram=metrics.confidence_histogram(rows, data.r, chosen),
    )


Hook = Callable[[int, ModelParams], dict]


def train(
    cfg: VariantConfig,
    spec: ds.ExperimentSpec,
    tcfg: TrainConfig,
    data: tuple[ds.Dataset, ds.Dataset] | None = None,
    params: ModelParams | None = None,
    hook: Hook | None = None,
) -> RunResult:
    """Train one model; metrics are computed on the held-out split only.

    ``data`` may pass pre-generated (train, test) splits; ``params`` a warm
    start. The seed drives initialization and batch order. With
    ``tcfg.audit`` and no explicit ``hook``, the gradient audit runs on the
    first training samples after every epoch.
    """
    if cfg.d_prime != spec.latent_dim:
        raise ValueError(
            f"experiment {spec.kind} needs latent dimension {spec.latent_dim}, got {cfg.d_prime}"
        )
    graph = spec.graph()
    train_set, test_set = data if data is not None else ds.train_test(spec, graph)
    init_seq, order_seq = np.random.SeedSequence(tcfg.seed).spawn(2)
    if params is None:
        params = init_params(cfg, seed=init_seq)
    order_rng = np.random.default_rng(order_seq)
    if hook is None and tcfg.audit:
        from .gradients import audit_hook

        probe = slice(0, AUDIT_PROBE)
        hook = audit_hook(cfg, graph, train_set.x[probe], train_set.y[probe], tcfg.loss)
    opt = Adam(params, tcfg.lr) if tcfg.optimizer == "adam" else SGD(params, tcfg.lr)
    result = RunResult(cfg.variant, tcfg.seed, {}, [])

    m = len(train_set)
    for epoch in range(tcfg.epochs):
        perm = order_rng.permutation(m)
        total = 0.0
        for start in range(0, m, tcfg.batch_size):
            idx = perm[start : start + tcfg.batch_size]
            value, grads = gradients(params, cfg, graph, train_set.x[idx], train_set.y[idx], tcfg.loss)
            if not math.isfinite(value) or not all(np.isfinite(g).all() for g in grads.values()):
                log.warning("%s seed %d diverged in epoch %d", cfg.variant, tcfg.seed, epoch)
                result.failed, result.failed_epoch = True, epoch
                result.params = snapshot(params)
                return result
            opt.step(grads)
            total += value * len(idx)
        result.loss_trace.append(total / m)
        if hook is not None:
            result.audit.append(hook(epoch, params))

    result.params = snapshot(params)
    ev = evaluate(params, cfg, graph, test_set)
    result.tpr, result.stats, result.histogram = ev["tpr"], ev["stats"], ev["histogram"]
    return result


def sweep(
    cfgs: list[VariantConfig],
    spec: ds.ExperimentSpec,
    tcfg: TrainConfig,
    seeds: int,
    progress: Callable[[RunResult], None] | None = None,
) -> dict[str, list[RunResult]]:
    """Train every variant for seeds 0..seeds-1 on one shared dataset.

    Runs are independent: each owns its parameters and RNG streams, so
    the result for a seed does not depend on which other seeds run.
    """
    if seeds < 1:
        raise ValueError("need at least one seed")
    data = ds.train_test(spec)
    out: dict[str, list[RunResult]] = {}
    for cfg in cfgs:
        runs = []
        for e in range(seeds):
            try:
                res = train(cfg, spec, TrainConfig(**{**tcfg.__dict__, "seed": e}), data=data)
            except (ArithmeticError, FloatingPointError) as exc:
                log.warning("%s seed %d failed: %s", cfg.variant, e, exc)
                res = RunResult(cfg.variant, e, {}, [], failed=True)
            runs.append(res)
            if progress is not None:
                progress(res)
        out[cfg.variant] = runs
    return out
