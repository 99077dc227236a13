"""Small reverse-mode automatic differentiation over numpy arrays.

Evaluation is eager (define-by-run): every operation computes its value
immediately and records a closure that propagates adjoints to its
operands. Calling :meth:`Tensor.backward` on a scalar root walks the
recorded graph in reverse topological order.

All values are float64. Elementwise operations follow numpy broadcasting;
the adjoint of a broadcast operand is summed back to its original shape.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = [
    "ContractError",
    "ShapeError",
    "Tensor",
    "as_tensor",
    "backward",
    "dot",
    "leaky_relu",
    "matmul",
    "matvec",
    "softmax",
    "softplus",
    "sigmoid",
    "stack",
]

DEFAULT_SLOPE = 0.2


class ShapeError(ValueError):
    """Operands have incompatible shapes."""

    def __init__(self, op: str, *shapes: tuple[int, ...]):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {', '.join(map(str, shapes))}")


class ContractError(RuntimeError):
    """An operation was called outside its precondition."""


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


class Tensor:
    """A node in the computation graph holding a float64 array."""

    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        *,
        _parents: tuple[Tensor, ...] = (),
        _op: str = "leaf",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = _op
        self._parents = _parents
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def value(self) -> np.ndarray:
        return self.data

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(op={self.op}{tag}, shape={self.shape})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    # -- graph construction -------------------------------------------------
    @staticmethod
    def _make(data, parents: tuple[Tensor, ...], op: str, backward) -> Tensor:
        needs = any(p.requires_grad for p in parents)
        out = Tensor(data, needs, _parents=parents if needs else (), _op=op)
        if needs:
            out._backward = backward
        return out

    # -- elementwise arithmetic ----------------------------------------------
    def __add__(self, other) -> Tensor:
        other = as_tensor(other)
        _broadcast_shape("add", self.data, other.data)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))

        return Tensor._make(a.data + b.data, (a, b), "add", bw)

    __radd__ = __add__

    def __sub__(self, other) -> Tensor:
        other = as_tensor(other)
        _broadcast_shape("sub", self.data, other.data)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.shape))

        return Tensor._make(a.data - b.data, (a, b), "sub", bw)

    def __rsub__(self, other) -> Tensor:
        return as_tensor(other) - self

    def __mul__(self, other) -> Tensor:
        other = as_tensor(other)
        _broadcast_shape("mul", self.data, other.data)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))

        return Tensor._make(a.data * b.data, (a, b), "mul", bw)

    __rmul__ = __mul__

    def __neg__(self) -> Tensor:
        a = self
        return Tensor._make(-a.data, (a,), "neg", lambda g: a._accumulate(-g))

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, idx) -> Tensor:
        a = self

        def bw(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a._accumulate(full)

        return Tensor._make(a.data[idx], (a,), "index", bw)

    def abs(self) -> Tensor:
        a = self
        # d|x|/dx at 0 taken as 0
        return Tensor._make(
            np.abs(a.data), (a,), "abs", lambda g: a._accumulate(g * np.sign(a.data))
        )

    def square(self) -> Tensor:
        a = self
        return Tensor._make(a.data**2, (a,), "square", lambda g: a._accumulate(2.0 * a.data * g))

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        a = self

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape))

        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum", bw)

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        n = self.data.size if axis is None else np.prod([self.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape) -> Tensor:
        a = self
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        try:
            data = a.data.reshape(shape)
        except ValueError:
            raise ShapeError("reshape", a.shape, tuple(shape)) from None
        return Tensor._make(data, (a,), "reshape", lambda g: a._accumulate(g.reshape(a.shape)))

    def swap_last(self) -> Tensor:
        """Swap the two trailing axes (matrix transpose for 2-D)."""
        a = self
        if a.ndim < 2:
            raise ShapeError("transpose", a.shape)
        return Tensor._make(
            np.swapaxes(a.data, -1, -2), (a,), "transpose",
            lambda g: a._accumulate(np.swapaxes(g, -1, -2)),
        )

    @property
    def T(self) -> Tensor:
        return self.swap_last()

    def leaky_relu(self, slope: float = DEFAULT_SLOPE) -> Tensor:
        return leaky_relu(self, slope)

    def softplus(self) -> Tensor:
        return softplus(self)

    # -- reverse pass ---------------------------------------------------------
    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def backward(self) -> dict[Tensor, np.ndarray]:
        return backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> dict[Tensor, np.ndarray]:
    """Propagate adjoints from a scalar root.

    Returns a mapping from every gradient-requiring leaf reachable from
    ``root`` to its gradient. Gradients also remain on ``leaf.grad``;
    existing gradients on the graph are overwritten, not accumulated.
    """
    if root.data.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    order = _topological(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.data)
    leaves: dict[Tensor, np.ndarray] = {}
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        elif node.is_leaf and node.requires_grad:
            leaves[node] = node.grad if node.grad is not None else np.zeros_like(node.data)
    return leaves


# -- free-function operations --------------------------------------------------

def matmul(a, b) -> Tensor:
    """numpy ``matmul`` semantics, including batching and 1-D operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def bw(g):
        A = a.data[None, :] if a.ndim == 1 else a.data
        B = b.data[:, None] if b.ndim == 1 else b.data
        G = g
        if b.ndim == 1:
            G = G[..., None]
        if a.ndim == 1:
            G = G[..., None, :]
        if a.requires_grad:
            ga = np.matmul(G, np.swapaxes(B, -1, -2))
            if a.ndim == 1:
                ga = ga[..., 0, :]
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(A, -1, -2), G)
            if b.ndim == 1:
                gb = gb[..., 0]
            b._accumulate(_unbroadcast(gb, b.shape))

    return Tensor._make(data, (a, b), "matmul", bw)


def matvec(m, v) -> Tensor:
    m, v = as_tensor(m), as_tensor(v)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError("matvec", m.shape, v.shape)
    return matmul(m, v)


def dot(u, v) -> Tensor:
    u, v = as_tensor(u), as_tensor(v)
    if u.shape != v.shape:
        raise ShapeError("dot", u.shape, v.shape)
    return (u * v).sum(axis=-1)


def leaky_relu(x, slope: float = DEFAULT_SLOPE) -> Tensor:
    """LeakyReLU; the derivative at exactly 0 is taken from the positive branch."""
    x = as_tensor(x)
    pos = x.data >= 0
    scale = np.where(pos, 1.0, slope)
    return Tensor._make(x.data * scale, (x,), "leaky_relu", lambda g: x._accumulate(g * scale))


def softplus(x) -> Tensor:
    x = as_tensor(x)
    return Tensor._make(
        np.logaddexp(0.0, x.data), (x,), "softplus",
        lambda g: x._accumulate(g * sigmoid(x.data)),
    )


def softmax(x, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along ``axis``, optionally restricted to ``mask``-selected entries.

    Masked-out entries get exactly zero weight. Every slice along ``axis``
    must keep at least one entry.
    """
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ContractError("softmax over an empty set")
    if mask is None:
        z = x.data
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=axis).all():
            raise ContractError("softmax over an empty set")
        z = np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        x._accumulate(s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return Tensor._make(s, (x,), "softmax", bw)



def stack(parts, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("stack of nothing")
    try:
        data = np.stack([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeError("stack", *(p.shape for p in parts)) from None

    def bw(g):
        for k, p in enumerate(parts):
            if p.requires_grad:
                p._accumulate(np.take(g, k, axis=axis))

    return Tensor._make(data, tuple(parts), "stack", bw)
