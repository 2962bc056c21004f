"""Minimal dense-tensor engine with reverse-mode gradients.

Every operation records its parents and a closure computing parent
gradients, forming a tape that :func:`backward` walks in reverse
topological order.  Data is float64 numpy throughout; broadcasting in
elementwise ops is supported and un-broadcast on the way back.

Segment ops (``segment_sum``/``segment_mean``/``segment_softmax``)
aggregate rows by an integer id array, which is how edge messages reach
their target nodes and node states reach their per-graph pools.

``set_nan_checks(True)`` makes every op validate its output; gradients
of trainable leaves are always validated by the training step.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError

_NAN_CHECKS = False


def set_nan_checks(enabled: bool) -> None:
    global _NAN_CHECKS
    _NAN_CHECKS = bool(enabled)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_parent_grads")

    def __init__(self, data, requires_grad=False, op="leaf", parents=(), parent_grads=None):
        self.data = np.asarray(data, dtype=float)
        if _NAN_CHECKS and not np.all(np.isfinite(self.data)):
            raise NumericError(f"non-finite values produced by op '{op}'")
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._parent_grads = parent_grads

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape}, grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, op, parents, parent_grads):
    requires = any(p.requires_grad for p in parents)
    if not requires:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, op=op, parents=parents, parent_grads=parent_grads)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcasted gradient back down to the parent's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Elementwise and linear algebra
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data + b.data, "add", (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data - b.data, "sub", (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data * b.data, "mul", (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, "neg", (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    return _result(
        a.data @ b.data, "matmul", (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _result(a.data.sum(axis=axis, keepdims=keepdims), "sum", (a,), back)


def mean_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]

    def back(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, a.data.shape).copy(),)

    return _result(a.data.mean(axis=axis, keepdims=keepdims), "mean", (a,), back)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _result(
        a.data.reshape(shape), "reshape", (a,),
        lambda g: (g.reshape(a.data.shape),),
    )


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.array_split(g, splits, axis=axis))

    return _result(
        np.concatenate([t.data for t in tensors], axis=axis), "concat",
        tuple(tensors), back,
    )


# ---------------------------------------------------------------------------
# Gather / segment ops
# ---------------------------------------------------------------------------

def gather_rows(a, index) -> Tensor:
    a = as_tensor(a)
    index = np.asarray(index, dtype=int)

    def back(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)

    return _result(a.data[index], "gather_rows", (a,), back)


def segment_sum(a, segments, num_segments: int) -> Tensor:
    a = as_tensor(a)
    segments = np.asarray(segments, dtype=int)
    out = np.zeros((num_segments,) + a.data.shape[1:])
    np.add.at(out, segments, a.data)
    return _result(out, "segment_sum", (a,), lambda g: (g[segments],))


def segment_mean(a, segments, num_segments: int) -> Tensor:
    a = as_tensor(a)
    segments = np.asarray(segments, dtype=int)
    counts = np.bincount(segments, minlength=num_segments).astype(float)
    if np.any(counts == 0):
        raise ValueError("segment_mean requires every segment to be nonempty")
    out = np.zeros((num_segments,) + a.data.shape[1:])
    np.add.at(out, segments, a.data)
    denom = counts.reshape((num_segments,) + (1,) * (a.data.ndim - 1))
    return _result(
        out / denom, "segment_mean", (a,),
        lambda g: ((g / denom)[segments],),
    )


def segment_softmax(scores, segments, num_segments: int) -> Tensor:
    """Softmax of score rows grouped by segment id (axis 0).

    Used to normalize attention scores across each node's incoming
    edges; rows of the result sum to 1 within each segment.
    """
    s = as_tensor(scores)
    segments = np.asarray(segments, dtype=int)
    trailing = s.data.shape[1:]
    peak = np.full((num_segments,) + trailing, -np.inf)
    np.maximum.at(peak, segments, s.data)
    shifted = np.exp(s.data - peak[segments])
    denom = np.zeros((num_segments,) + trailing)
    np.add.at(denom, segments, shifted)
    p = shifted / denom[segments]

    def back(g):
        weighted = np.zeros((num_segments,) + trailing)
        np.add.at(weighted, segments, p * g)
        return (p * (g - weighted[segments]),)

    return _result(p, "segment_softmax", (s,), back)


# ---------------------------------------------------------------------------
# Nonlinearities and normalization
# ---------------------------------------------------------------------------

def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    mask = a.data >= 0
    out = a.data * slope
    np.copyto(out, a.data, where=mask)

    def back(g):
        grad = g * slope
        np.copyto(grad, g, where=mask)
        return (grad,)

    return _result(out, "leaky_relu", (a,), back)


def elu(a, alpha: float = 1.0) -> Tensor:
    a = as_tensor(a)
    mask = a.data >= 0
    out = alpha * (np.exp(np.minimum(a.data, 0.0)) - 1.0)
    deriv = out + alpha  # alpha * exp(x) on the negative branch
    np.copyto(out, a.data, where=mask)

    def back(g):
        grad = g * deriv
        np.copyto(grad, g, where=mask)
        return (grad,)

    return _result(out, "elu", (a,), back)


def group_norm(x, gamma, beta, num_groups: int, eps: float = 1e-5) -> Tensor:
    """Per-sample normalization over channel groups: x is (N, C)."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    n, c = x.data.shape
    if c % num_groups != 0:
        raise ValueError(f"{c} channels not divisible into {num_groups} groups")
    m = c // num_groups
    xg = x.data.reshape(n, num_groups, m)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xg - mu) * inv
    flat = xhat.reshape(n, c)
    out = flat * gamma.data + beta.data

    def back(g):
        dgamma = (g * flat).sum(axis=0)
        dbeta = g.sum(axis=0)
        dxhat = (g * gamma.data).reshape(n, num_groups, m)
        dvar = (dxhat * (xg - mu)).sum(axis=2, keepdims=True) * (-0.5) * inv**3
        dmu = -(dxhat.sum(axis=2, keepdims=True)) * inv + dvar * (
            -2.0 * (xg - mu).sum(axis=2, keepdims=True) / m
        )
        dx = dxhat * inv + dvar * 2.0 * (xg - mu) / m + dmu / m
        return (dx.reshape(n, c), dgamma, dbeta)

    return _result(out, "group_norm", (x, gamma, beta), back)


def dropout(a, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout with a mask drawn from the given generator."""
    a = as_tensor(a)
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if p == 0.0:
        return a
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)
    return _result(a.data * mask, "dropout", (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def backward(t: Tensor, grad: np.ndarray | None = None) -> None:
    """Accumulate gradients of ``t`` into every reachable requires-grad leaf."""
    if not t.requires_grad:
        return
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(t, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    t.grad = np.ones_like(t.data) if grad is None else np.asarray(grad, dtype=float)
    for node in reversed(order):
        if node._parent_grads is None or node.grad is None:
            continue
        parent_grads = node._parent_grads(node.grad)
        for parent, g in zip(node._parents, parent_grads):
            if not parent.requires_grad or g is None:
                continue
            if _NAN_CHECKS and not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient flowing out of op '{node.op}'")
            # grads are never mutated in place, so aliasing views is safe
            parent.grad = g if parent.grad is None else parent.grad + g
