"""Closed-form Theta_R gradient for one-layer GATv2, sign-condition analysis,
and a central finite-difference oracle.

For scalar node features (d = 1) the gradient of the loss w.r.t. row ``t``
of Theta_R, contributed by node ``i``, is

    g^t = a^t * sum_{{j,k} in S_i} alpha_ij alpha_ik (A_j - A_k)(s_ij^t - s_ik^t) * [1, h_i]

where ``S_i`` are the unordered pairs of distinct members of the attention
domain, ``s_ij^t`` the LeakyReLU slope at ``x_ij^t = (Theta_R h~_i + Theta_L h~_j)^t``
and ``A_q = sum_u u_u (Theta_L h~_q)^u`` with ``u = dL/dh'_i``. When every
component of ``u`` equals the same scalar ``c`` this is ``c`` times the plain
component sum of ``Theta_L h~_q``. The bias entry (first column) and the weight
entry (second column) differ only by the factor ``h_i``.

Whenever all ``x_ij^t`` of node ``i`` share a sign the slope difference
vanishes for every pair and so does the component.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .graphs import CENTER, Graph
from .models import ModelParams, VariantConfig, attention_domain, augment, forward, params_from_arrays

REL_FLOOR = 1e-8
FD_STEP = 1e-5


def rel_error(a, b, floor: float = REL_FLOOR) -> float:
    """Normwise ``||a - b|| / max(||a||, ||b||, floor)`` (Frobenius norms).

    Normwise rather than elementwise: a dead component has an exactly zero
    gradient row, which finite differences only resolve to roundoff level.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


def _slopes(z: np.ndarray, slope: float) -> np.ndarray:
    # sign(0) counts as positive
    return np.where(z >= 0, 1.0, slope)


def pre_activations(params: ModelParams, graph: Graph, features) -> np.ndarray:
    """``z[i, j, t] = (Theta_R h~_i + Theta_L h~_j)^t`` for one sample, shape (n, n, d')."""
    x = np.asarray(features, dtype=np.float64).reshape(graph.n, -1)
    H = augment(x)
    q = H @ params["theta_r"].data.T
    m = H @ params["theta_l"].data.T
    return q[:, None, :] + m[None, :, :]


def _attention_row(params, graph, x, i, cfg) -> tuple[list[int], np.ndarray]:
    dom = attention_domain(i, graph, cfg)
    z = pre_activations(params, graph, x)[i, dom]  # (|dom|, d')
    act = np.where(z >= 0, z, cfg.slope * z)
    e = act @ params["a"].data
    w = np.exp(e - e.max())
    return dom, w / w.sum()


@dataclass
class NodeGrad:
    weight: np.ndarray  # (d',)
    bias: np.ndarray  # (d',)

    def as_matrix(self) -> np.ndarray:
        """Same layout as Theta_R: column 0 bias, column 1 weight."""
        return np.stack([self.bias, self.weight], axis=1)


def analytic_grad_theta_r(
    params: ModelParams,
    i: int,
    graph: Graph,
    features,
    upstream,
    cfg: VariantConfig | None = None,
) -> NodeGrad:
    """Contribution of node ``i`` to dL/dTheta_R through the scoring path.

    ``upstream`` is dL/dh'_i, either a scalar (applied to every component)
    or a length-d' vector. Only LeakyReLU scoring with d = 1 is covered; a
    node with fewer than two attention candidates contributes zero.
    """
    cfg = cfg or VariantConfig("gatv2", d=1, d_prime=params["a"].data.shape[0])
    if cfg.d != 1:
        raise ValueError("closed-form gradient is defined for scalar features only")
    if cfg.activation != "leaky_relu":
        raise ValueError("closed-form gradient assumes LeakyReLU scoring")
    dp = cfg.d_prime
    x = np.asarray(features, dtype=np.float64).reshape(graph.n)
    u = np.broadcast_to(np.asarray(upstream, dtype=np.float64), (dp,))
    dom, alpha = _attention_row(params, graph, x, i, cfg)
    z = pre_activations(params, graph, x)[i]  # (n, d')
    s = _slopes(z, cfg.slope)
    msg = augment(x[:, None]) @ params["theta_l"].data.T  # (n, d')
    A = msg @ u  # upstream-weighted component sum
    a = params["a"].data

    bias = np.zeros(dp)
    pos = {j: k for k, j in enumerate(dom)}
    for j, k in itertools.combinations(dom, 2):
        bias += alpha[pos[j]] * alpha[pos[k]] * (A[j] - A[k]) * (s[j] - s[k])
    bias *= a
    return NodeGrad(weight=x[i] * bias, bias=bias)


def analytic_grad_theta_r_graph(params, graph, features, upstream_rows, cfg=None) -> np.ndarray:
    """Shared-weight total: sum of node contributions, shape (d', 2)."""
    total = np.zeros_like(params["theta_r"].data)
    for i in range(graph.n):
        total += analytic_grad_theta_r(params, i, graph, features, upstream_rows[i], cfg).as_matrix()
    return total


# -- finite differences ---------------------------------------------------------

def finite_diff(loss_fn: Callable[[ModelParams], float], params: ModelParams,
                step: float = FD_STEP, names=None) -> dict[str, np.ndarray]:
    """Central differences of ``loss_fn`` for every entry of the named parameters."""
    if not step > 0:
        raise ValueError("step must be positive")
    base = {k: v.data.copy() for k, v in params.items()}
    out = {}
    for name in names or list(params):
        g = np.zeros_like(base[name])
        for idx in np.ndindex(*base[name].shape):
            vals = []
            for sgn in (1.0, -1.0):
                trial = {k: v.copy() for k, v in base.items()}
                trial[name][idx] += sgn * step
                vals.append(loss_fn(params_from_arrays(trial, requires_grad=False)))
            g[idx] = (vals[0] - vals[1]) / (2.0 * step)
        out[name] = g
    return out


def autodiff_grad(loss_fn: Callable[[ModelParams], ad.Tensor], params: ModelParams) -> dict[str, np.ndarray]:
    fresh = params_from_arrays({k: v.data for k, v in params.items()})
    leaves = ad.backward(loss_fn(fresh))
    return {k: leaves.get(p, np.zeros_like(p.data)) for k, p in fresh.items()}


@dataclass
class GradCheck:
    analytic: np.ndarray
    autodiff: np.ndarray
    finite_diff: np.ndarray

    @property
    def max_rel_error(self) -> float:
        return max(
            rel_error(self.analytic, self.autodiff),
            rel_error(self.analytic, self.finite_diff),
            rel_error(self.autodiff, self.finite_diff),
        )


def random_instance(rng: np.random.Generator, d_prime: int, n: int = 3):
    """Random GATv2 parameters, node features and a readout vector for the hub."""
    cfg = VariantConfig("gatv2", d=1, d_prime=d_prime)
    arrays = {
        "a": rng.normal(size=d_prime),
        "theta_l": rng.normal(size=(d_prime, 2)),
        "theta_r": rng.normal(size=(d_prime, 2)),
        "b": rng.normal(size=d_prime),
    }
    if cfg.has_head:  # present so forward() runs; the checked loss never reaches it
        arrays["w_phi"] = rng.normal(size=d_prime)
        arrays["b_phi"] = np.array(0.0)
    x = rng.uniform(-2.0, 2.0, size=n)
    readout = rng.normal(size=d_prime)
    return cfg, params_from_arrays(arrays), x, readout


def _kink_margin(params, graph, x) -> float:
    return float(np.min(np.abs(pre_activations(params, graph, x))))


def _hub_alive(params, graph, x) -> bool:
    """True if some component changes sign across the hub's neighbors."""
    z = pre_activations(params, graph, x)[CENTER, list(graph.neighbors[CENTER])]
    pos = z >= 0
    return bool((pos.any(axis=0) & ~pos.all(axis=0)).any())


def check_theta_r(cfg, params, graph, x, readout, step: float = FD_STEP) -> GradCheck:
    """Three-way comparison for the hub loss ``L = readout . h'_0``."""

    def loss_t(p):
        out = forward(p, cfg, graph, x[None, :])
        return (out.hidden[0, CENTER] * readout).sum()

    upstream = np.zeros((graph.n, cfg.d_prime))
    upstream[CENTER] = readout
    analytic = analytic_grad_theta_r_graph(params, graph, x, upstream, cfg)
    auto = autodiff_grad(loss_t, params)["theta_r"]
    fd = finite_diff(lambda p: float(loss_t(p).data), params, step, names=["theta_r"])["theta_r"]
    return GradCheck(analytic, auto, fd)


def grad_check_trials(trials: int = 100, seed: int = 0, d_primes=(1, 2, 4), n: int = 3,
                      step: float = FD_STEP) -> list[tuple[int, GradCheck]]:
    """Random three-way gradient checks on a star graph.

    Instances whose pre-activations sit within 1e-3 of the LeakyReLU kink
    are redrawn: the finite-difference stencil would straddle it. So are
    instances where every hub component is same-signed; their gradient is
    exactly zero and leaves nothing to compare beyond roundoff.
    """
    from .graphs import star_graph

    graph = star_graph(n)
    rng = np.random.default_rng(seed)
    results = []
    for t in range(trials):
        dp = d_primes[t % len(d_primes)]
        while True:
            cfg, params, x, readout = random_instance(rng, dp, n)
            if _kink_margin(params, graph, x) > 1e-3 and _hub_alive(params, graph, x):
                break
        results.append((dp, check_theta_r(cfg, params, graph, x, readout, step)))
    return results


# -- sign condition ---------------------------------------------------------------

@dataclass
class SignReport:
    """Per-(sample, node, component) flags of the same-sign condition.

    ``same_sign[m, i, t]`` is true when every ``x_ij^t`` over node ``i``'s
    attention domain has one sign; such a component receives no gradient
    through the score. Nodes with fewer than two candidates are trivially
    flagged.
    """

    same_sign: np.ndarray  # (M, len(nodes), d')
    nodes: tuple[int, ...]

    @property
    def predicted_zero(self) -> np.ndarray:
        """(len(nodes), d'): dead over the whole batch of samples."""
        return self.same_sign.all(axis=0)

    @property
    def fraction_dead(self) -> float:
        return float(self.same_sign.mean()) if self.same_sign.size else 1.0

    def table(self) -> str:
        lines = ["node  component  same_sign_fraction  predicted_zero"]
        frac = self.same_sign.mean(axis=0)
        dead = self.predicted_zero
        for a, i in enumerate(self.nodes):
            for t in range(frac.shape[1]):
                lines.append(f"{i:>4}  {t:>9}  {frac[a, t]:>18.4f}  {str(bool(dead[a, t])):>14}")
        lines.append(f"fraction_dead = {self.fraction_dead:.4f}")
        return "\n".join(lines)


def sign_condition(params: ModelParams, graph: Graph, features, cfg: VariantConfig | None = None,
                   nodes=None) -> SignReport:
    """Evaluate the same-sign condition on one sample (n,) or a batch (M, n).

    Softplus scoring has an injective derivative, so no component is
    flagged unless a node has fewer than two candidates.
    """
    cfg = cfg or VariantConfig("gatv2", d=1, d_prime=params["a"].data.shape[0])
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    nodes = tuple(range(graph.n)) if nodes is None else tuple(nodes)
    H = augment(x[..., None])  # (M, n, 2)
    q = H @ params["theta_r"].data.T  # (M, n, d')
    m = H @ params["theta_l"].data.T
    flags = np.empty((x.shape[0], len(nodes), cfg.d_prime), dtype=bool)
    for a, i in enumerate(nodes):
        dom = attention_domain(i, graph, cfg)
        if len(dom) < 2:
            flags[:, a, :] = True
            continue
        if cfg.activation == "softplus":
            z = q[:, i, None, :] + m[:, dom, :]
            d = ad.sigmoid(z)
            flags[:, a, :] = (d == d[:, :1, :]).all(axis=1)
            continue
        pos = (q[:, i, None, :] + m[:, dom, :]) >= 0  # (M, |dom|, d')
        flags[:, a, :] = pos.all(axis=1) | (~pos).all(axis=1)
    return SignReport(flags, nodes)


def audit_hook(cfg: VariantConfig, graph: Graph, x, y, loss_kind: str = "abs"):
    """Per-epoch record of hub-node deadness and the Theta_R gradient norm.

    ``x``/``y`` is the probe set (typically a slice of the training data).
    """
    from .training import gradients

    def hook(epoch: int, params: ModelParams) -> dict:
        rep = sign_condition(params, graph, x, cfg, nodes=[CENTER])
        frozen = params_from_arrays({k: v.data for k, v in params.items()})
        _, grads = gradients(frozen, cfg, graph, x, y, loss_kind)
        return dict(
            epoch=epoch,
            fraction_dead=rep.fraction_dead,
            batch_dead=int(rep.predicted_zero.sum()),
            grad_theta_r=float(np.linalg.norm(grads["theta_r"])),
        )

    return hook


