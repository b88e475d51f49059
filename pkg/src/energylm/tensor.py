"""Dense float64 tensors with reverse-mode autodiff on a dynamic tape.

Ops executed while a Tape is active are recorded in execution order, which is
already a topological order of the computation graph, so a single reverse
sweep over the tape propagates gradients with each recorded op visited exactly
once.  Ops executed with no active tape are plain numpy computations.

All data is float64; speed is a non-goal, tight tolerances are.
"""

from __future__ import annotations

import math
import threading

import numpy as np
from scipy.special import erf

_local = threading.local()


def _active_tape():
    stack = getattr(_local, "tape_stack", None)
    if not stack:
        return None
    return stack[-1]


class Tensor:
    """A dense float64 array plus an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.tape is None:
            raise ValueError("tensor was not produced under an active tape")
        self.tape.backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; constants are wrapped automatically
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class no_grad:
    """Suspend recording on whatever tape is active inside the block."""

    def __enter__(self):
        if not hasattr(_local, "tape_stack"):
            _local.tape_stack = []
        _local.tape_stack.append(None)
        return self

    def __exit__(self, exc_type, exc, tb):
        _local.tape_stack.pop()
        return False


class Tape:
    """Ordered record of primitive ops; replayed in reverse by backward()."""

    def __init__(self):
        self._records = []  # (out, inputs, backward_fn)

    def __len__(self):
        return len(self._records)

    def __enter__(self):
        if not hasattr(_local, "tape_stack"):
            _local.tape_stack = []
        _local.tape_stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _local.tape_stack.pop()
        return False

    def record(self, out: Tensor, inputs, backward_fn):
        out.tape = self
        self._records.append((out, inputs, backward_fn))

    def backward(self, loss: Tensor):
        """Fill .grad of every requires_grad tensor reachable from loss."""
        if loss.data.shape != ():
            raise ValueError(
                f"backward expects a scalar loss, got shape {loss.data.shape}"
            )
        if loss.tape is not self:
            raise ValueError("loss was not recorded on this tape")
        # Intermediate grads are transient; leaf grads accumulate across calls.
        for out, _, _ in self._records:
            out.grad = None
        loss.grad = np.ones((), dtype=np.float64)
        for out, inputs, backward_fn in reversed(self._records):
            if out.grad is None:
                continue
            backward_fn(out.grad)


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g.reshape(shape)


def _make(data, inputs, backward_builder) -> Tensor:
    """Create the op output; record it if grads are needed and a tape is live."""
    out = Tensor(data)
    out.requires_grad = any(t.requires_grad for t in inputs)
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, inputs, backward_builder(out))
    return out


# ---------------------------------------------------------------------------
# primitives

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                _accumulate(a, _unbroadcast(g, a.data.shape))
            if b.requires_grad:
                _accumulate(b, _unbroadcast(g, b.data.shape))
        return fn

    return _make(data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                _accumulate(b, _unbroadcast(g * a.data, b.data.shape))
        return fn

    return _make(data, (a, b), bwd)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                _accumulate(a, -g)
        return fn

    return _make(-a.data, (a,), bwd)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must have at least 2 dimensions")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(
            f"matmul inner dimensions differ: {a.data.shape} @ {b.data.shape}"
        )
    data = a.data @ b.data

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
            if b.requires_grad:
                _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))
        return fn

    return _make(data, (a, b), bwd)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                _accumulate(a, g * out.data)
        return fn

    return _make(data, (a,), bwd)


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        raise ValueError("log of non-positive value")
    data = np.log(a.data)

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                _accumulate(a, g / a.data)
        return fn

    return _make(data, (a,), bwd)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                _accumulate(a, g * (1.0 - out.data * out.data))
        return fn

    return _make(data, (a,), bwd)


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a) -> Tensor:
    """Exact (erf-based) GELU."""
    a = as_tensor(a)
    cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    data = a.data * cdf

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                pdf = _INV_SQRT2PI * np.exp(-0.5 * a.data * a.data)
                _accumulate(a, g * (cdf + a.data * pdf))
        return fn

    return _make(data, (a,), bwd)


def pow_const(a, c: float) -> Tensor:
    """Elementwise a**c for a real constant c; domain a > 0 unless c is a
    non-negative integer."""
    a = as_tensor(a)
    if not (float(c).is_integer() and c >= 0) and np.any(a.data <= 0.0):
        raise ValueError(f"pow_const with exponent {c} needs positive base")
    data = a.data ** c

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                _accumulate(a, g * c * a.data ** (c - 1.0))
        return fn

    return _make(data, (a,), bwd)


def softmax_last(a) -> Tensor:
    """Softmax along the last axis, max-subtracted for overflow safety."""
    a = as_tensor(a)
    m = np.max(a.data, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(a.data - m)
    data = e / e.sum(axis=-1, keepdims=True)

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                y = out.data
                _accumulate(a, y * (g - np.sum(g * y, axis=-1, keepdims=True)))
        return fn

    return _make(data, (a,), bwd)


def logsumexp_last(a) -> Tensor:
    """log(sum(exp(a))) along the last axis, max-subtracted; drops the axis."""
    a = as_tensor(a)
    m = np.max(a.data, axis=-1)
    m0 = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(a.data - m0[..., None]).sum(axis=-1)
    with np.errstate(divide="ignore"):
        data = m0 + np.log(s)
    data = np.where(np.isfinite(m), data, m)

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                w = np.exp(a.data - np.where(np.isfinite(out.data), out.data, 0.0)[..., None])
                w = np.where(np.isfinite(out.data)[..., None], w, 0.0)
                _accumulate(a, g[..., None] * w)
        return fn

    return _make(data, (a,), bwd)


def logaddexp(a, b) -> Tensor:
    """Elementwise log(exp(a) + exp(b)), overflow-safe."""
    a, b = as_tensor(a), as_tensor(b)
    data = np.logaddexp(a.data, b.data)

    def bwd(out):
        def fn(g):
            finite = np.isfinite(out.data)
            if a.requires_grad:
                wa = np.where(finite, np.exp(np.minimum(a.data - out.data, 0.0)), 0.0)
                _accumulate(a, _unbroadcast(g * wa, a.data.shape))
            if b.requires_grad:
                wb = np.where(finite, np.exp(np.minimum(b.data - out.data, 0.0)), 0.0)
                _accumulate(b, _unbroadcast(g * wb, b.data.shape))
        return fn

    return _make(data, (a, b), bwd)


def sum_all(a) -> Tensor:
    a = as_tensor(a)

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                _accumulate(a, np.broadcast_to(g, a.data.shape))
        return fn

    return _make(a.data.sum(), (a,), bwd)


def sum_axis(a, axis: int, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                gg = g if keepdims else np.expand_dims(g, axis)
                _accumulate(a, np.broadcast_to(gg, a.data.shape))
        return fn

    return _make(data, (a,), bwd)


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    if n == 0:
        raise ValueError("mean of an empty tensor")
    return mul(sum_all(a), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    data = a.data.reshape(shape)

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                _accumulate(a, g.reshape(a.data.shape))
        return fn

    return _make(data, (a,), bwd)


def swapaxes(a, i: int, j: int) -> Tensor:
    a = as_tensor(a)
    data = np.swapaxes(a.data, i, j)

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                _accumulate(a, np.swapaxes(g, i, j))
        return fn

    return _make(data, (a,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of an empty list")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def bwd(out):
        def fn(g):
            start = 0
            for t, n in zip(tensors, sizes):
                if t.requires_grad:
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(start, start + n)
                    _accumulate(t, g[tuple(idx)])
                start += n
        return fn

    return _make(data, tensors, bwd)


def index_select(a, ids, axis: int = 0) -> Tensor:
    """Gather slices of `a` along `axis` by integer index array `ids`."""
    a = as_tensor(a)
    ids = np.asarray(ids, dtype=np.int64)
    n = a.data.shape[axis]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"index out of range for axis of extent {n}")
    data = np.take(a.data, ids, axis=axis)

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                acc = np.zeros_like(a.data)
                acc_m = np.moveaxis(acc, axis, 0)
                g_m = np.moveaxis(
                    g, tuple(range(axis, axis + ids.ndim)), tuple(range(ids.ndim))
                )
                np.add.at(acc_m, ids, g_m)
                _accumulate(a, acc)
        return fn

    return _make(data, (a,), bwd)


def take_along_last(a, idx) -> Tensor:
    """Pick one element along the last axis per leading position.

    idx has shape a.shape[:-1]; the result drops the last axis.
    """
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape != a.data.shape[:-1]:
        raise ValueError(
            f"index shape {idx.shape} must equal {a.data.shape[:-1]}"
        )
    n = a.data.shape[-1]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"index out of range for last axis of extent {n}")
    data = np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0]

    def bwd(out):
        def fn(g):
            if a.requires_grad:
                acc = np.zeros_like(a.data)
                # each output element owns a distinct slot, so no collisions
                np.put_along_axis(acc, idx[..., None], g[..., None], axis=-1)
                _accumulate(a, acc)
        return fn

    return _make(data, (a,), bwd)
