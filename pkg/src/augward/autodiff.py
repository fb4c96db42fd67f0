"""Reverse-mode automatic differentiation over dense float64 arrays.

Each primitive returns a new :class:`Tensor` that remembers its parents and
a closure mapping the output adjoint to the parents' adjoints. The recorded
graph is the tape; it is rebuilt on every forward pass and dropped with the
last reference to the loss.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other): return add(self, _wrap(other))
    def __radd__(self, other): return add(_wrap(other), self)
    def __sub__(self, other): return add(self, scale(_wrap(other), -1.0))
    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return elementwise_mul(self, _wrap(other))
    __rmul__ = __mul__
    def __neg__(self): return scale(self, -1.0)
    def __matmul__(self, other): return matmul(self, other)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


_recording = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a tape."""
    global _recording
    prev, _recording = _recording, False
    try:
        yield
    finally:
        _recording = prev


def _node(data, parents: tuple, backward: Callable) -> Tensor:
    if _recording and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# primitives ---------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _node(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}") from None
    return _node(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.data * c, (a,), lambda g: (g * c,))


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"elementwise_mul shape mismatch: {a.shape} * {b.shape}") from None
    return _node(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _node(a.data * mask, (a,), lambda g: (g * mask,))


def row_sum(a: Tensor) -> Tensor:
    """Sum across columns: ``(n, k) -> (n, 1)``."""
    if a.data.ndim != 2:
        raise ShapeError(f"row_sum expects a matrix, got {a.shape}")
    return _node(a.data.sum(axis=1, keepdims=True), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def total(a: Tensor) -> Tensor:
    """Sum of all entries as a scalar of shape ``()``."""
    return _node(np.asarray(a.data.sum()), (a,), lambda g: (np.full(a.shape, float(g)),))


def mean(a: Tensor) -> Tensor:
    return scale(total(a), 1.0 / a.data.size)


def segment_matrix(segment_ids, num_segments: int) -> sparse.csr_matrix:
    ids = np.asarray(segment_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= num_segments):
        raise ShapeError(f"segment ids must lie in [0, {num_segments})")
    cols = np.arange(len(ids))
    return sparse.csr_matrix((np.ones(len(ids)), (ids, cols)), shape=(num_segments, len(ids)))


def segment_sum(values: Tensor, segment_ids, num_segments: int, matrix=None) -> Tensor:
    """Sum rows of ``values`` that share a segment id.

    A prebuilt :func:`segment_matrix` may be passed to skip its construction.
    """
    ids = np.asarray(segment_ids, dtype=np.int64)
    if values.data.ndim == 1:
        return reshape(segment_sum(reshape(values, (-1, 1)), ids, num_segments, matrix), (num_segments,))
    if len(ids) != values.shape[0]:
        raise ShapeError(f"segment_sum: {len(ids)} ids for values of shape {values.shape}")
    S = segment_matrix(ids, num_segments) if matrix is None else matrix
    return _node(np.asarray(S @ values.data), (values,), lambda g: (g[ids],))


def gather_rows(a: Tensor, index) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    rows = a.shape[0]

    def backward(g):
        out = np.zeros(a.shape)
        np.add.at(out, index, g)
        return (out,)

    if index.size and (index.min() < 0 or index.max() >= rows):
        raise ShapeError(f"gather_rows: index out of range for {rows} rows")
    return _node(a.data[index], (a,), backward)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    def backward(g):
        out = np.zeros(a.shape)
        out[start:stop] = g
        return (out,)

    return _node(a.data[start:stop], (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = list(tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat shape mismatch along axis {axis}: {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors)))

    return _node(out, tuple(tensors), backward)


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    return concat(tensors, 0)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    return concat(tensors, 1)


def softmax_row(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_row expects a matrix, got {a.shape}")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _node(s, (a,), backward)


def log_softmax_row(a: Tensor) -> Tensor:
    """Row-wise ``log(softmax(a))`` computed without forming tiny probabilities."""
    if a.data.ndim != 2:
        raise ShapeError(f"log_softmax_row expects a matrix, got {a.shape}")
    z = a.data - a.data.max(axis=1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    s = np.exp(out)
    return _node(out, (a,), lambda g: (g - s * g.sum(axis=1, keepdims=True),))


def log(a: Tensor, floor: float = 1e-12) -> Tensor:
    """Natural log of ``max(a, floor)``; the gradient is zero where clamped."""
    x = np.maximum(a.data, floor)
    live = a.data >= floor
    return _node(np.log(x), (a,), lambda g: (np.where(live, g / x, 0.0),))


def mse_scalar(pred: Tensor, target) -> Tensor:
    """Mean squared error against a constant target, as a scalar."""
    t = np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape and t.size != 1:
        raise ShapeError(f"mse_scalar shape mismatch: {pred.shape} vs {t.shape}")
    r = pred.data - t
    n = pred.data.size
    return _node(np.asarray((r * r).sum() / n), (pred,), lambda g: (2.0 * float(g) * r / n,))


def dropout(a: Tensor, rate: float, rng: np.random.Generator, train: bool = True) -> Tensor:
    if not train or rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate {rate} outside [0, 1)")
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _node(a.data * mask, (a,), lambda g: (g * mask,))


# backward -----------------------------------------------------------------------

def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d leaf`` into ``.grad`` of every requires-grad leaf."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise RuntimeError("loss is detached: no input requires grad")
    adj = {id(loss): np.ones(loss.shape)}
    for node in reversed(_topological(loss)):
        g = adj.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            adj[key] = pg if key not in adj else adj[key] + pg


def gradcheck(f: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-5,
              max_coords: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> float:
    """Worst relative error between ``backward`` and central differences.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, 1e-5)``. With
    ``max_coords`` set, that many coordinates per input are sampled by ``rng``.
    """
    for t in inputs:
        t.data = np.ascontiguousarray(t.data)
        t.zero_grad()
    backward(f(*inputs))
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    worst = 0.0
    for t, grad in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = (rng or np.random.default_rng(0)).choice(flat.size, max_coords, replace=False)
        for k in coords:
            old = flat[k]
            flat[k] = old + h
            up = f(*inputs).item()
            flat[k] = old - h
            down = f(*inputs).item()
            flat[k] = old
            num = (up - down) / (2 * h)
            a = grad.reshape(-1)[k]
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-5))
    for t in inputs:
        t.zero_grad()
    return worst
