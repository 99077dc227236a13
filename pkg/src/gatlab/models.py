"""One-layer, single-head graph attention variants.

Variants
--------
``gatv2``
    Score ``a . act(Theta_R h~_i + Theta_L h~_j)``, softmax over N_i (the
    self-loop makes i its own neighbor), update ``b + sum_j alpha_ij Theta_L h~_j``.
``gat-theta-n``
    Softmax over N_i without i; the query enters the update through its
    own transform: ``b + Theta_n h~_i + sum_{j != i} alpha_ij Theta_L h~_j``.
``gat-theta-r``
    Same as ``gat-theta-n`` but re-using the scoring matrix Theta_R for the
    query term.
``*-plus``
    Softplus instead of LeakyReLU inside the score.

Node features are bias-augmented, ``h~ = [1, h]``, so every transform
matrix has shape ``(d', d + 1)`` and its first column acts as a bias.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tensor
from .graphs import Graph

VARIANTS = ("gatv2", "gat-theta-n", "gat-theta-r", "gat-theta-n-plus", "gat-theta-r-plus")

ModelParams = dict[str, Tensor]


@dataclass(frozen=True)
class VariantConfig:
    variant: str = "gatv2"
    d: int = 1
    d_prime: int = 1
    slope: float = ad.DEFAULT_SLOPE
    separate_neighbor_transform: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.d < 1 or self.d_prime < 1:
            raise ValueError("dimensions must be positive")

    @property
    def activation(self) -> str:
        return "softplus" if self.variant.endswith("-plus") else "leaky_relu"

    @property
    def update(self) -> str:
        if self.variant == "gatv2":
            return "gatv2"
        return "theta_n" if self.variant.startswith("gat-theta-n") else "theta_r"

    @property
    def excludes_query(self) -> bool:
        return self.update != "gatv2"

    @property
    def has_head(self) -> bool:
        return self.d_prime != self.d

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        dp, k = self.d_prime, self.d + 1
        shapes = {"a": (dp,), "theta_l": (dp, k), "theta_r": (dp, k)}
        if self.update == "theta_n":
            shapes["theta_n"] = (dp, k)
        if self.update == "theta_r" and self.separate_neighbor_transform:
            shapes["theta_j"] = (dp, k)
        shapes["b"] = (dp,)
        if self.has_head:
            shapes["w_phi"] = (dp,)
            shapes["b_phi"] = ()
        return shapes


def init_params(cfg: VariantConfig, seed: int = 0) -> ModelParams:
    """Glorot-uniform weights, zero biases ``b`` and ``b_phi``."""
    rng = np.random.default_rng(seed)
    params: ModelParams = {}
    for name, shape in cfg.param_shapes().items():
        if name in ("b", "b_phi"):
            value = np.zeros(shape)
        else:
            fan_out, fan_in = (1, shape[0]) if len(shape) == 1 else shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            value = rng.uniform(-limit, limit, size=shape)
        params[name] = Tensor(value, requires_grad=True, name=name)
    return params


def params_from_arrays(arrays: dict[str, np.ndarray], requires_grad: bool = True) -> ModelParams:
    return {k: Tensor(np.array(v, dtype=np.float64), requires_grad, name=k) for k, v in arrays.items()}


def snapshot(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: v.data.copy() for k, v in params.items()}


def augment(h) -> np.ndarray:
    """Prepend a constant 1 along the last axis."""
    h = np.asarray(h, dtype=np.float64)
    return np.concatenate([np.ones(h.shape[:-1] + (1,)), h], axis=-1)


def _act(z: Tensor, cfg: VariantConfig) -> Tensor:
    return ad.softplus(z) if cfg.activation == "softplus" else ad.leaky_relu(z, cfg.slope)


# -- single-node reference operations ---------------------------------------
# These follow the per-node formulas literally; `forward` is the vectorized
# path used for training and is checked against them.

def _vec(h, d: int) -> np.ndarray:
    return augment(np.atleast_1d(np.asarray(h, dtype=np.float64)).reshape(d))


def score(params: ModelParams, h_i, h_j, cfg: VariantConfig) -> Tensor:
    z = ad.matvec(params["theta_r"], _vec(h_i, cfg.d)) + ad.matvec(params["theta_l"], _vec(h_j, cfg.d))
    return ad.dot(params["a"], _act(z, cfg))


def attention_domain(i: int, graph: Graph, cfg: VariantConfig) -> list[int]:
    dom = [j for j in graph.neighbors[i] if not (cfg.excludes_query and j == i)]
    if not dom:
        raise ContractError(f"node {i} has no neighbors to attend to")
    return dom


def attention(params: ModelParams, i: int, graph: Graph, features, cfg: VariantConfig):
    """Attention row of node ``i`` as ``(domain, weights)``."""
    x = np.asarray(features, dtype=np.float64).reshape(graph.n, cfg.d)
    dom = attention_domain(i, graph, cfg)
    e = ad.stack([score(params, x[i], x[j], cfg) for j in dom])
    return dom, ad.softmax(e)


def _weighted_neighbors(params, weights: Tensor, dom, x, matrix: str) -> Tensor:
    total = None
    for k, j in enumerate(dom):
        term = weights[k] * ad.matvec(params[matrix], augment(x[j]))
        total = term if total is None else total + term
    return total


def update_gatv2(params: ModelParams, i: int, graph: Graph, features, cfg: VariantConfig) -> Tensor:
    if cfg.update != "gatv2":
        raise ContractError(f"update_gatv2 called for variant {cfg.variant}")
    x = np.asarray(features, dtype=np.float64).reshape(graph.n, cfg.d)
    dom, w = attention(params, i, graph, features, cfg)
    return params["b"] + _weighted_neighbors(params, w, dom, x, "theta_l")


def update_theta_n(params: ModelParams, i: int, graph: Graph, features, cfg: VariantConfig) -> Tensor:
    if cfg.update != "theta_n":
        raise ContractError(f"update_theta_n called for variant {cfg.variant}")
    x = np.asarray(features, dtype=np.float64).reshape(graph.n, cfg.d)
    dom, w = attention(params, i, graph, features, cfg)
    query = ad.matvec(params["theta_n"], augment(x[i]))
    return params["b"] + query + _weighted_neighbors(params, w, dom, x, "theta_l")


def update_theta_r(params: ModelParams, i: int, graph: Graph, features, cfg: VariantConfig) -> Tensor:
    if cfg.update != "theta_r":
        raise ContractError(f"update_theta_r called for variant {cfg.variant}")
    x = np.asarray(features, dtype=np.float64).reshape(graph.n, cfg.d)
    dom, w = attention(params, i, graph, features, cfg)
    query = ad.matvec(params["theta_r"], augment(x[i]))
    neighbor = "theta_j" if cfg.separate_neighbor_transform else "theta_l"
    return params["b"] + query + _weighted_neighbors(params, w, dom, x, neighbor)


def update(params: ModelParams, i: int, graph: Graph, features, cfg: VariantConfig) -> Tensor:
    fn = {"gatv2": update_gatv2, "theta_n": update_theta_n, "theta_r": update_theta_r}[cfg.update]
    return fn(params, i, graph, features, cfg)


def head(params: ModelParams, h: Tensor, cfg: VariantConfig) -> Tensor:
    """Map updated features (..., d') to scalar predictions (...)."""
    if not cfg.has_head:
        return h[..., 0]
    z = ad.leaky_relu(h, cfg.slope)
    return (z * params["w_phi"]).sum(axis=-1) + params["b_phi"]


# -- vectorized forward -------------------------------------------------------

class Output(NamedTuple):
    prediction: Tensor  # (B, n)
    attention: Tensor  # (B, n, n); row i is zero outside i's attention domain
    hidden: Tensor  # (B, n, d')


def forward(params: ModelParams, cfg: VariantConfig, graph: Graph, features, nodes=None) -> Output:
    """Apply the configured variant to every node of every sample.

    ``features`` has shape ``(B, n)`` (scalar features) or ``(B, n, d)``.
    ``nodes`` restricts the computation to those query nodes; the outputs
    then have one row per listed node, in the given order.
    """
    x = np.asarray(features, dtype=np.float64)
    if cfg.d == 1 and x.ndim == 2:
        x = x[..., None]
    if x.ndim != 3 or x.shape[1:] != (graph.n, cfg.d):
        raise ad.ShapeError("forward", x.shape, (graph.n, cfg.d))
    B, n, dp = x.shape[0], graph.n, cfg.d_prime
    rows = list(range(n)) if nodes is None else [int(i) for i in nodes]
    k = len(rows)
    H = augment(x)  # (B, n, d+1)
    Hq = H if nodes is None else H[:, rows]

    msg = ad.matmul(H, params["theta_l"].T)  # (B, n, d')
    query = ad.matmul(Hq, params["theta_r"].T)  # (B, k, d')
    z = query.reshape(B, k, 1, dp) + msg.reshape(B, 1, n, dp)  # z[b, i, j] = x_ij
    e = ad.matmul(_act(z, cfg), params["a"])  # (B, k, n)
    alpha = ad.softmax(e, axis=-1, mask=graph.mask(exclude_self=cfg.excludes_query)[rows])

    if cfg.update == "theta_r" and cfg.separate_neighbor_transform:
        msg = ad.matmul(H, params["theta_j"].T)
    h = ad.matmul(alpha, msg) + params["b"]
    if cfg.update == "theta_n":
        h = h + ad.matmul(Hq, params["theta_n"].T)
    elif cfg.update == "theta_r":
        h = h + query
    return Output(head(params, h, cfg), alpha, h)


def predict(params: ModelParams, cfg: VariantConfig, graph: Graph, features, node: int = 0,
            batch: int = 4096):
    """Frozen-parameter evaluation: predictions and attention rows of ``node``."""
    frozen = params_from_arrays(snapshot(params), requires_grad=False)
    x = np.asarray(features, dtype=np.float64)
    preds, rows = [], []
    for start in range(0, len(x), batch):
        out = forward(frozen, cfg, graph, x[start : start + batch], nodes=[node])
        preds.append(out.prediction.data[:, 0])
        rows.append(out.attention.data[:, 0, :])
    if not preds:
        return np.zeros(0), np.zeros((0, graph.n))
    return np.concatenate(preds), np.concatenate(rows)


def analytic_theta_n_params(sharpness: float = 1e6) -> ModelParams:
    """Exact solution of the monotonic-relevance task for ``gat-theta-n`` with d' = 1.

    ``theta_n = [[0, -1]]`` and ``theta_l = [[0, 1]]`` give ``x_r - x_i`` once the
    attention is one-hot on the largest neighbor; a large score scale ``a``
    pushes the softmax there.
    """
    return params_from_arrays({
        "a": [sharpness],
        "theta_l": [[0.0, 1.0]],
        "theta_r": [[0.0, 0.0]],
        "theta_n": [[0.0, -1.0]],
        "b": [0.0],
    })


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(params, cfg: VariantConfig, path, seed: int = 0) -> None:
    """Write parameters (Tensors or plain arrays) as ``name=v1,v2,...`` lines."""
    lines = [
        f"# variant={cfg.variant} d={cfg.d} d_prime={cfg.d_prime} slope={cfg.slope!r} "
        f"separate_neighbor_transform={int(cfg.separate_neighbor_transform)} seed={seed}"
    ]
    for name in cfg.param_shapes():
        p = params[name]
        flat = np.asarray(p.data if isinstance(p, Tensor) else p).reshape(-1)
        lines.append(f"{name}=" + ",".join(format(float(v), ".17g") for v in flat))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[ModelParams, VariantConfig, int]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing checkpoint header")
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    cfg = VariantConfig(
        variant=meta["variant"],
        d=int(meta["d"]),
        d_prime=int(meta["d_prime"]),
        slope=float(meta["slope"]),
        separate_neighbor_transform=bool(int(meta.get("separate_neighbor_transform", 0))),
    )
    shapes = cfg.param_shapes()
    arrays = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        name, _, vals = line.partition("=")
        if name not in shapes:
            raise ValueError(f"{path}: unexpected tensor {name!r}")
        flat = np.array([float(v) for v in vals.split(",")]) if vals else np.zeros(0)
        arrays[name] = flat.reshape(shapes[name])
    missing = set(shapes) - set(arrays)
    if missing:
        raise ValueError(f"{path}: missing tensors {sorted(missing)}")
    return params_from_arrays(arrays), cfg, int(meta.get("seed", 0))
