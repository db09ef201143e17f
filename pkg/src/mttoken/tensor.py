"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op computes its value eagerly with numpy. When a ``GradientTape`` is
active and at least one input is tracked, the op appends a record holding a
vector-Jacobian closure; ``backward`` replays the records in reverse.

Leaves created with ``requires_grad=True`` are tracked automatically the
first time an active tape sees them.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class ContractError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


_state = threading.local()
_DEBUG = False


def set_debug(flag: bool) -> None:
    """Also assert finiteness of every gradient produced during ``backward``."""
    global _DEBUG
    _DEBUG = bool(flag)


def _tape_stack() -> list:
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


def current_tape() -> Optional["GradientTape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite value produced by {where}")


class Tensor:
    __slots__ = ("data", "requires_grad", "node_id", "_tape")

    def __init__(self, data, requires_grad: bool = False, *, _op: str = "constructor"):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, _op)
        self.data = arr
        self.requires_grad = requires_grad
        self.node_id: Optional[int] = None
        self._tape: Optional[GradientTape] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a: int, b: int):
        return swapaxes(self, a, b)

    @property
    def T(self):
        return swapaxes(self, -1, -2)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class GradientTape:
    """Ordered record of primitive ops executed while the tape is active.

    Use as a context manager; tapes nest per thread and the innermost one
    records.
    """

    def __init__(self):
        self.records: list = []  # (out_id, input ids, vjp)
        self.shapes: dict = {}
        self._next = 0

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def _bind(self, t: Tensor) -> int:
        t.node_id = self._next
        t._tape = self
        self.shapes[self._next] = t.shape
        self._next += 1
        return t.node_id

    def watch(self, *tensors: Tensor) -> None:
        for t in tensors:
            self._bind(t)

    def _id_of(self, t: Tensor) -> Optional[int]:
        if t._tape is self:
            return t.node_id
        if t.requires_grad:
            return self._bind(t)
        return None

    def gradient(self, loss: Tensor, sources: Sequence[Tensor]) -> list:
        """Gradients of ``loss`` w.r.t. ``sources`` as arrays; zeros when unreachable."""
        grads = backward(loss, self)
        out = []
        for s in sources:
            g = grads.get(s.node_id) if s._tape is self else None
            out.append(np.zeros(s.shape) if g is None else g.data)
        return out


def _record(out_data: np.ndarray, inputs: Sequence[Tensor], vjp: Callable, name: str) -> Tensor:
    out = Tensor(out_data, _op=name)
    tape = current_tape()
    if tape is None:
        return out
    ids = [tape._id_of(t) for t in inputs]
    if any(i is not None for i in ids):
        tape.records.append((tape._bind(out), ids, vjp))
    return out


def backward(loss: Tensor, tape: GradientTape) -> dict:
    """Reverse sweep over ``tape``; returns ``{node_id: gradient Tensor}``.

    Gradients from several uses of one node are summed.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._tape is not tape:
        raise ContractError("loss was not recorded on this tape")
    grads = {loss.node_id: np.ones(loss.shape)}
    for out_id, ids, vjp in reversed(tape.records):
        g = grads.get(out_id)
        if g is None:
            continue
        in_grads = vjp(g)
        for i, gi in zip(ids, in_grads):
            if i is None or gi is None:
                continue
            if _DEBUG:
                _check_finite(gi, f"backward of node {out_id}")
            if i in grads:
                grads[i] = grads[i] + gi
            else:
                grads[i] = gi
    return {k: Tensor(v, _op="backward") for k, v in grads.items()}


def finite_diff_grad(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> Tensor:
    """Central-difference gradient of scalar ``f`` at ``x``, one coordinate at a time."""
    if eps <= 0:
        raise ContractError("eps must be positive")
    base = np.array(x.data, dtype=np.float64)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = _scalar(f(Tensor(base.copy())))
        flat[i] = old - eps
        lo = _scalar(f(Tensor(base.copy())))
        flat[i] = old
        gflat[i] = (hi - lo) / (2 * eps)
    return Tensor(grad)


def _scalar(v) -> float:
    return v.item() if isinstance(v, Tensor) else float(v)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---- elementwise ----

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _record(ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd
    return _record(out, (a, b),
                   lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)), "div")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return _record(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    xd = x.data
    if (xd <= 0).any():
        raise NonFiniteError("log of a non-positive value")
    return _record(np.log(xd), (x,), lambda g: (g / xd,), "log")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return _record(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x) without overflow."""
    xd = x.data
    out = np.maximum(xd, 0.0) + np.log1p(np.exp(-np.abs(xd)))
    return _record(out, (x,), lambda g: (g * _sigmoid(xd),), "softplus")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis(x, axis)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)
    return _record(out, (x,),
                   lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),), "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis(x, axis)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    p = np.exp(out)
    return _record(out, (x,),
                   lambda g: (g - p * g.sum(axis=axis, keepdims=True),), "log_softmax")


def _check_axis(x: Tensor, axis: int) -> None:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} out of range for shape {x.shape}")


# ---- linear algebra / reductions / shape ----

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _record(ad @ bd, (a, b), vjp, "matmul")


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(x.data.sum(axis=axis, keepdims=keepdims), (x,), vjp, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum_(x, axis, keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _record(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    return _record(np.swapaxes(x.data, a, b), (x,), lambda g: (np.swapaxes(g, a, b),), "swapaxes")


def broadcast_to(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _record(np.broadcast_to(x.data, shape).copy(), (x,),
                   lambda g: (_unbroadcast(g, old),), "broadcast_to")


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tensors, vjp, "concat")


def index(x: Tensor, idx) -> Tensor:
    """Slice or gather; the backward pass scatter-adds into zeros."""
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _record(x.data[idx], (x,), vjp, "index")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm params {gamma.shape}/{beta.shape} do not fit input {x.shape}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gamma.data

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        dxhat = g * gd
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, dgamma, dbeta

    return _record(xhat * gd + beta.data, (x, gamma, beta), vjp, "layer_norm")


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Channels-last convolution.

    x: [B, H, W, C], w: [k, k, C, O], b: [O] -> [B, H', W', O].
    """
    if x.ndim != 4 or w.ndim != 4 or w.shape[0] != w.shape[1] or x.shape[-1] != w.shape[2]:
        raise ShapeError(f"conv2d mismatch: input {x.shape}, kernel {w.shape}")
    if b.shape != (w.shape[3],):
        raise ShapeError(f"conv2d bias {b.shape} does not fit kernel {w.shape}")
    k, s = w.shape[0], stride
    B, H, W, C = x.shape
    O = w.shape[3]
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    Ho = (H + 2 * pad - k) // s + 1
    Wo = (W + 2 * pad - k) // s + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"conv2d input {x.shape} too small for kernel {k} and stride {s}")
    cols = np.empty((B, Ho, Wo, k, k, C))
    for di in range(k):
        for dj in range(k):
            cols[:, :, :, di, dj, :] = xp[:, di:di + s * Ho:s, dj:dj + s * Wo:s, :]
    cols2 = cols.reshape(B * Ho * Wo, k * k * C)
    wmat = w.data.reshape(k * k * C, O)
    out = (cols2 @ wmat).reshape(B, Ho, Wo, O) + b.data

    def vjp(g):
        g2 = g.reshape(B * Ho * Wo, O)
        gw = (cols2.T @ g2).reshape(w.shape)
        gb = g2.sum(axis=0)
        gcols = (g2 @ wmat.T).reshape(B, Ho, Wo, k, k, C)
        gxp = np.zeros(xp.shape)
        for di in range(k):
            for dj in range(k):
                gxp[:, di:di + s * Ho:s, dj:dj + s * Wo:s, :] += gcols[:, :, :, di, dj, :]
        gx = gxp[:, pad:pad + H, pad:pad + W, :]
        return gx, gw, gb

    return _record(out, (x, w, b), vjp, "conv2d")
