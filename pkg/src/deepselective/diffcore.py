"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

Every operation records its inputs on a dynamically built graph; calling
``backward()`` on a scalar accumulates exact partial derivatives into the
``grad`` buffer of every reachable tensor with ``requires_grad=True``.
Subtrees whose inputs all have ``requires_grad=False`` are not recorded.
Backward closures receive the output gradient as an argument instead of
capturing their own node, so finished graphs free by reference counting;
gradients of interior nodes are dropped as soon as they are consumed and
only leaves keep their ``grad``.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, NumericalError

__all__ = [
    "Tensor",
    "as_tensor",
    "parameter",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "exp",
    "log",
    "sqrt",
    "power",
    "clip",
    "sigmoid",
    "relu",
    "softmax",
    "take",
    "concat",
    "reshape",
    "swapaxes",
    "tsum",
    "mean",
    "l2_norm",
    "frobenius_norm",
    "layer_norm",
    "gradient_check",
]


class Tensor:
    """Dense float64 array plus an optional gradient buffer of the same shape."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    # keep numpy from absorbing us in mixed expressions; force __radd__ & co.
    __array_ufunc__ = None

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def item(self) -> float:
        return float(self.values)

    def detach(self) -> "Tensor":
        """Same values, cut off from the graph."""
        return Tensor(self.values.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable grad-enabled leaf.

        Only valid on scalars (single-element tensors). Interior nodes do
        not retain their gradient.
        """
        if self.values.size != 1:
            raise DimensionError(
                f"backward() requires a scalar, got shape {self.shape}"
            )
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.values)
        for node in reversed(topo):
            if node._backward is not None:
                if node.grad is not None:
                    node._backward(node.grad)
                node.grad = None  # interior grads are transient

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(values) -> Tensor:
    """Leaf tensor that collects gradients."""
    return Tensor(values, requires_grad=True)


def _make(values: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    """Internal node constructor; skips graph recording for constant inputs."""
    tracked = tuple(p for p in parents if p.requires_grad)
    if not tracked:
        return Tensor(values)
    out = Tensor(values, requires_grad=True)
    out._parents = tracked
    out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray, own: bool = False) -> None:
    """Add `g` into t.grad. `own=True` promises g is freshly allocated and
    referenced nowhere else, so the first accumulation can adopt it."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g if own else np.array(g)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g over the axes numpy broadcasting introduced to reach `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    squeeze = tuple(
        i for i, (gs, ts) in enumerate(zip(g.shape, shape)) if ts == 1 and gs != 1
    )
    if squeeze:
        g = g.sum(axis=squeeze, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ---------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = _unbroadcast(g, a.shape)
        _accumulate(a, ga, own=ga is not g)
        gb = _unbroadcast(g, b.shape)
        _accumulate(b, gb, own=gb is not g)

    return _make(a.values + b.values, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = _unbroadcast(g, a.shape)
        _accumulate(a, ga, own=ga is not g)
        _accumulate(b, _unbroadcast(-g, b.shape), own=True)

    return _make(a.values - b.values, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.values, a.shape), own=True)
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.values, b.shape), own=True)

    return _make(a.values * b.values, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g / b.values, a.shape), own=True)
        if b.requires_grad:
            gb = -g * a.values / (b.values * b.values)
            _accumulate(b, _unbroadcast(gb, b.shape), own=True)

    return _make(a.values / b.values, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    p = float(exponent)

    def backward(g):
        _accumulate(a, g * p * a.values ** (p - 1.0), own=True)

    return _make(a.values**p, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    result = np.exp(a.values)

    def backward(g):
        _accumulate(a, g * result, own=True)

    return _make(result, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, g / a.values, own=True)

    return _make(np.log(a.values), (a,), backward)


def sqrt(a) -> Tensor:
    # derivative at exactly 0 taken as 0 (subgradient choice)
    a = as_tensor(a)
    root = np.sqrt(a.values)

    def backward(g):
        positive = a.values > 0.0
        safe = np.where(positive, root, 1.0)
        _accumulate(a, g * np.where(positive, 0.5 / safe, 0.0), own=True)

    return _make(root, (a,), backward)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes only through the interior."""
    a = as_tensor(a)

    def backward(g):
        inside = (a.values > lo) & (a.values < hi)
        _accumulate(a, g * inside, own=True)

    return _make(np.clip(a.values, lo, hi), (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    v = a.values
    e = np.exp(-np.abs(v))
    s = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def backward(g):
        _accumulate(a, g * s * (1.0 - s), own=True)

    return _make(s, (a,), backward)


def relu(a) -> Tensor:
    # gradient at exactly 0 is 0 (subgradient choice)
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, g * (a.values > 0.0), own=True)

    return _make(np.maximum(a.values, 0.0), (a,), backward)


# -- structural ops -----------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batch broadcasting on leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul requires ndim >= 2 operands, got {a.shape} and {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.shape} x {b.shape}"
        )

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g @ b.values.swapaxes(-1, -2), a.shape), own=True)
        if b.requires_grad:
            _accumulate(b, _unbroadcast(a.values.swapaxes(-1, -2) @ g, b.shape), own=True)

    return _make(a.values @ b.values, (a, b), backward)


def softmax(a, axis: int = -1) -> Tensor:
    """Max-shifted softmax along `axis`; rows sum to 1."""
    a = as_tensor(a)
    if not (-a.ndim <= axis < a.ndim):
        raise DimensionError(f"softmax axis {axis} invalid for shape {a.shape}")
    v = a.values
    s = v - v.max(axis=axis, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=axis, keepdims=True)

    def backward(g):
        buf = g * s
        inner = buf.sum(axis=axis, keepdims=True)
        np.subtract(g, inner, out=buf)
        buf *= s
        _accumulate(a, buf, own=True)

    return _make(s, (a,), backward)


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather slices along `axis`; backward scatter-adds into the source."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    ax = axis if axis >= 0 else a.ndim + axis
    if not (0 <= ax < a.ndim):
        raise DimensionError(f"take axis {axis} invalid for shape {a.shape}")
    if idx.size == 0:
        raise DimensionError("take requires at least one index")
    if idx.min() < 0 or idx.max() >= a.shape[ax]:
        raise DimensionError(
            f"take indices out of range for axis {ax} of shape {a.shape}"
        )

    def backward(g):
        buf = np.zeros_like(a.values)
        np.add.at(buf, (slice(None),) * ax + (idx,), g)
        _accumulate(a, buf, own=True)

    return _make(np.take(a.values, idx, axis=ax), (a,), backward)


def concat(parts: Iterable, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat requires at least one tensor")
    try:
        values = np.concatenate([p.values for p in parts], axis=axis)
    except ValueError as err:
        raise DimensionError(f"concat shape mismatch: {err}") from err
    ax = axis if axis >= 0 else values.ndim + axis
    sizes = [p.shape[ax] for p in parts]

    def backward(g):
        offset = 0
        for p, size in zip(parts, sizes):
            sl = (slice(None),) * ax + (slice(offset, offset + size),)
            _accumulate(p, g[sl])
            offset += size

    return _make(values, parts, backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, g.reshape(a.shape))

    return _make(a.values.reshape(shape), (a,), backward)


def swapaxes(a, axis1: int, axis2: int) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, g.swapaxes(axis1, axis2))

    return _make(a.values.swapaxes(axis1, axis2), (a,), backward)


# -- reductions ---------------------------------------------------------------


def _restore_axes(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    if not keepdims:
        for ax in sorted(a if a >= 0 else len(shape) + a for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, _restore_axes(g, a.shape, axis, keepdims))

    return _make(a.values.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_values = a.values.mean(axis=axis, keepdims=keepdims)
    count = a.values.size / max(out_values.size, 1)

    def backward(g):
        _accumulate(a, _restore_axes(g, a.shape, axis, keepdims) / count, own=True)

    return _make(out_values, (a,), backward)


def l2_norm(a) -> Tensor:
    """Euclidean norm of all elements."""
    return sqrt(tsum(power(as_tensor(a), 2.0)))


def frobenius_norm(a) -> Tensor:
    """Frobenius norm; identical to l2_norm but named for matrix arguments."""
    return l2_norm(a)


def layer_norm(a, gain=None, bias=None, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalize to zero mean / unit variance along `axis`, then affine."""
    a = as_tensor(a)
    g_t = None if gain is None else as_tensor(gain)
    b_t = None if bias is None else as_tensor(bias)
    v = a.values
    mu = v.mean(axis=axis, keepdims=True)
    centered = v - mu
    sigma = np.sqrt((centered * centered).mean(axis=axis, keepdims=True) + eps)
    normed = centered / sigma
    values = normed
    if g_t is not None:
        values = values * g_t.values
    if b_t is not None:
        values = values + b_t.values

    def backward(g):
        if b_t is not None:
            _accumulate(b_t, _unbroadcast(g, b_t.shape))
        if g_t is not None:
            _accumulate(g_t, _unbroadcast(g * normed, g_t.shape), own=True)
        if a.requires_grad:
            gh = g if g_t is None else g * g_t.values
            term = gh - gh.mean(axis=axis, keepdims=True)
            term -= normed * (gh * normed).mean(axis=axis, keepdims=True)
            term /= sigma
            _accumulate(a, term, own=True)

    parents = tuple(t for t in (a, g_t, b_t) if t is not None)
    return _make(values, parents, backward)


# -- gradient checking --------------------------------------------------------


def gradient_check(f, *points, h: float = 1e-5) -> float:
    """Worst relative error between backward gradients and central differences.

    `f` must map the given tensors to a scalar Tensor. Relative error is
    |analytic - numeric| / max(1, |analytic|, |numeric|) so that tiny
    gradients are compared absolutely. Raises NumericalError if any
    evaluation is non-finite.
    """
    pts = [parameter(np.array(as_tensor(p).values, dtype=np.float64)) for p in points]
    out = f(*pts)
    if out.values.size != 1:
        raise DimensionError("gradient_check requires a scalar-valued function")
    if not np.isfinite(out.values).all():
        raise NumericalError("gradient_check: f(point) is not finite")
    out.backward()
    worst = 0.0
    for p in pts:
        grad = np.zeros_like(p.values) if p.grad is None else p.grad
        flat = p.values.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = float(f(*pts).values)
            flat[i] = orig - h
            lo = float(f(*pts).values)
            flat[i] = orig
            if not (math.isfinite(hi) and math.isfinite(lo)):
                raise NumericalError("gradient_check: perturbed evaluation not finite")
            numeric = (hi - lo) / (2.0 * h)
            analytic = gflat[i]
            err = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
            if err > worst:
                worst = err
    return worst
