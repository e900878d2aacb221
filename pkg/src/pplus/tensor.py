"""Dense float64 tensors with a reverse-mode differentiation tape.

Every op that sees an input with ``requires_grad`` appends a :class:`Record`
holding its inputs, saved values and a backward closure.  Records carry a
global sequence number, so sorting the records reachable from a loss by that
number yields a topological order of the graph.  ``backward`` walks that order
in reverse exactly once and accumulates gradients by summation in graph order.

Broadcasting is limited to scalar-tensor combinations; anything else needs an
explicit :func:`reshape` / :func:`expand`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_SEQ = itertools.count()


class ShapeError(ValueError):
    """Operand shapes do not conform for an op."""


class NonFiniteError(ValueError):
    """A NaN or Inf reached a place where it is not allowed."""


@dataclass(eq=False)
class Record:
    seq: int
    op: str
    inputs: tuple
    backward: Callable[[np.ndarray], tuple]
    saved: dict = field(default_factory=dict)


class Tensor:
    __slots__ = ("data", "requires_grad", "_rec", "name", "__weakref__")

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError("tensor data contains NaN or Inf")
        self.data = arr
        self.requires_grad = requires_grad
        self._rec = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t._rec = None
        t.name = None
        return t

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def record(self) -> Record | None:
        return self._rec

    @property
    def is_leaf(self) -> bool:
        return self._rec is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __repr__(self):
        tag = " grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __len__(self):
        return self.shape[0]

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        return NotImplemented

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracked(*xs) -> bool:
    return any(isinstance(x, Tensor) and x.requires_grad for x in xs)


def _emit(op: str, out: np.ndarray, inputs: Sequence[Tensor], backward, **saved) -> Tensor:
    t = Tensor._wrap(out)
    if _tracked(*inputs):
        t.requires_grad = True
        t._rec = Record(next(_SEQ), op, tuple(inputs), backward, saved)
    return t


def _needs(inputs) -> tuple:
    return tuple(x.requires_grad for x in inputs)


def _check_finite(op: str, *arrays):
    for a in arrays:
        if not np.isfinite(a).all():
            raise NonFiniteError(f"{op}: non-finite input")


# ---------------------------------------------------------------------------
# elementwise

def _same_or_scalar(op, a: Tensor, b: Tensor):
    if a.shape != b.shape and a.ndim and b.ndim:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no broadcasting)")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    return g if g.shape == shape else np.asarray(g.sum()).reshape(shape)


def add(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        c = float(b)
        return _emit("add_const", a.data + c, (a,), lambda g: (g,))
    a = as_tensor(a)
    _same_or_scalar("add", a, b)
    sa, sb = a.shape, b.shape
    return _emit("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        return add(a, -float(b))
    a = as_tensor(a)
    _same_or_scalar("sub", a, b)
    sa, sb = a.shape, b.shape
    return _emit("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def neg(a: Tensor) -> Tensor:
    return _emit("neg", -a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit("scale", a.data * c, (a,), lambda g: (g * c,))


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        return scale(as_tensor(a), b)
    a = as_tensor(a)
    _same_or_scalar("mul", a, b)
    ad, bd = a.data, b.data
    na, nb = a.requires_grad, b.requires_grad

    def bw(g):
        return (_unbroadcast(g * bd, ad.shape) if na else None,
                _unbroadcast(g * ad, bd.shape) if nb else None)

    return _emit("mul", ad * bd, (a, b), bw)


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _emit("square", ad * ad, (a,), lambda g: (2.0 * g * ad,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if (a.data <= 0).any():
        raise NonFiniteError("log: non-positive input")
    ad = a.data
    return _emit("log", np.log(ad), (a,), lambda g: (g / ad,))


def silu(a: Tensor) -> Tensor:
    x = a.data
    s = 1.0 / (1.0 + np.exp(-x))
    return _emit("silu", x * s, (a,), lambda g: (g * (s * (1.0 + x * (1.0 - s))),))


# ---------------------------------------------------------------------------
# shape ops

def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {old} as {shape}") from exc
    return _emit("reshape", out, (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _emit("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def expand(a: Tensor, shape) -> Tensor:
    """Explicit broadcast of size-1 axes (or a scalar) to ``shape``."""
    shape = tuple(shape)
    src = a.shape
    if a.ndim and a.ndim != len(shape):
        raise ShapeError(f"expand: rank of {src} differs from {shape}")
    if a.ndim:
        for s, t in zip(src, shape):
            if s != t and s != 1:
                raise ShapeError(f"expand: cannot expand {src} to {shape}")
        axes = tuple(i for i, (s, t) in enumerate(zip(src, shape)) if s != t)
    out = np.broadcast_to(a.data, shape)

    def bw(g):
        if not a.ndim:
            return (np.asarray(g.sum()),)
        return (g.sum(axis=axes, keepdims=True),)

    return _emit("expand", out, (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors:
        if len(t.shape) != len(ref) or any(s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != ax):
            raise ShapeError(f"concat: shapes {[x.shape for x in tensors]} do not conform on axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=ax))

    return _emit("concat", np.concatenate([t.data for t in tensors], axis=ax), tensors, bw)


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]
    shape = a.shape

    def bw(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return _emit("getitem", np.array(out), (a,), bw)


# ---------------------------------------------------------------------------
# reductions

def tsum(a: Tensor, axis=None) -> Tensor:
    shape = a.shape
    out = a.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.full(shape, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape),)

    return _emit("sum", np.asarray(out), (a,), bw)


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return scale(tsum(a, axis), 1.0 / n)


def logsumexp(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (np.log(s) + m).squeeze(axis)
    w = e / s
    return _emit("logsumexp", out, (a,), lambda g: (np.expand_dims(g, axis) * w,))


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    _check_finite("softmax", a.data)
    x = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(x)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit("softmax", y, (a,), bw)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D @ 2-D, or batched 3-D @ 3-D with equal leading extent."""
    if a.ndim != b.ndim or a.ndim not in (2, 3) or a.shape[-1] != b.shape[-2] \
            or (a.ndim == 3 and a.shape[0] != b.shape[0]):
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    ad, bd = a.data, b.data
    na, nb = _needs((a, b))

    def bw(g):
        return (g @ np.swapaxes(bd, -1, -2) if na else None,
                np.swapaxes(ad, -1, -2) @ g if nb else None)

    return _emit("matmul", ad @ bd, (a, b), bw)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` over the last axis of ``x`` (any leading shape)."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0] or (b is not None and b.shape != (w.shape[1],)):
        raise ShapeError(f"linear: x {x.shape}, w {w.shape}, b {None if b is None else b.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, w.shape[0])
    out = x2 @ w.data
    if b is not None:
        out = out + b.data
    inputs = (x, w) if b is None else (x, w, b)
    nx, nw = x.requires_grad, w.requires_grad
    wd = w.data

    def bw(g):
        g2 = g.reshape(-1, wd.shape[1])
        grads = (
            (g2 @ wd.T).reshape(lead + (wd.shape[0],)) if nx else None,
            x2.T @ g2 if nw else None,
        )
        return grads + ((g2.sum(axis=0),) if b is not None else ())

    return _emit("linear", out.reshape(lead + (w.shape[1],)), inputs, bw)


# ---------------------------------------------------------------------------
# normalisation

def _normalize(x: np.ndarray, axes, eps):
    mu = x.mean(axis=axes, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    return xc * inv, inv


def _normalize_bw(g, xhat, inv, axes):
    gm = g.mean(axis=axes, keepdims=True)
    gx = (g * xhat).mean(axis=axes, keepdims=True)
    return inv * (g - gm - xhat * gx)


def group_norm(x: Tensor, groups: int, weight: Tensor | None = None,
               bias: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    """Group normalisation of an (N, C, H, W) tensor with optional affine."""
    if x.ndim != 4 or x.shape[1] % groups:
        raise ShapeError(f"group_norm: {x.shape} with {groups} groups")
    n, c, h, w = x.shape
    xg = x.data.reshape(n, groups, -1)
    xhat, inv = _normalize(xg, 2, eps)
    xhat4 = xhat.reshape(x.shape)
    out = xhat4
    if weight is not None:
        out = out * weight.data.reshape(1, c, 1, 1) + bias.data.reshape(1, c, 1, 1)
    inputs = (x,) if weight is None else (x, weight, bias)

    def bw(g):
        gx = g if weight is None else g * weight.data.reshape(1, c, 1, 1)
        dx = _normalize_bw(gx.reshape(n, groups, -1), xhat, inv, 2).reshape(x.shape)
        if weight is None:
            return (dx,)
        return dx, (g * xhat4).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return _emit("group_norm", out, inputs, bw)


def layer_norm(x: Tensor, weight: Tensor | None = None, bias: Tensor | None = None,
               eps: float = 1e-5) -> Tensor:
    """Normalisation over the last axis with optional affine."""
    xhat, inv = _normalize(x.data, -1, eps)
    out = xhat if weight is None else xhat * weight.data + bias.data
    inputs = (x,) if weight is None else (x, weight, bias)
    lead = tuple(range(x.ndim - 1))

    def bw(g):
        gx = g if weight is None else g * weight.data
        dx = _normalize_bw(gx, xhat, inv, -1)
        if weight is None:
            return (dx,)
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _emit("layer_norm", out, inputs, bw)


# ---------------------------------------------------------------------------
# spatial ops on (N, C, H, W)

def _conv(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    k = w.shape[-1]
    p = k // 2
    if k == 1:
        return np.einsum("nchw,oc->nohw", x, w[:, :, 0, 0], optimize=True)
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return np.einsum("nchwij,ocij->nohw", win, w, optimize=True)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Stride-1 'same' convolution with an odd square kernel (1x1 or 3x3)."""
    if x.ndim != 4 or w.ndim != 4 or w.shape[1] != x.shape[1] or w.shape[2] != w.shape[3] \
            or w.shape[2] % 2 == 0 or (b is not None and b.shape != (w.shape[0],)):
        raise ShapeError(f"conv2d: x {x.shape}, w {w.shape}")
    xd, wd = x.data, w.data
    out = _conv(xd, wd)
    if b is not None:
        out = out + b.data.reshape(1, -1, 1, 1)
    inputs = (x, w) if b is None else (x, w, b)
    nx, nw = x.requires_grad, w.requires_grad
    k = wd.shape[-1]

    def bw(g):
        dx = _conv(g, wd[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)) if nx else None
        dw = None
        if nw:
            if k == 1:
                dw = np.einsum("nohw,nchw->oc", g, xd, optimize=True)[:, :, None, None]
            else:
                p = k // 2
                win = sliding_window_view(np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p))), (k, k), axis=(2, 3))
                dw = np.einsum("nohw,nchwij->ocij", g, win, optimize=True)
        grads = (dx, dw)
        return grads + ((g.sum(axis=(0, 2, 3)),) if b is not None else ())

    return _emit("conv2d", out, inputs, bw)


def avg_pool2(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg_pool2: odd spatial size {x.shape}")
    out = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def bw(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25,)

    return _emit("avg_pool2", out, (x,), bw)


def upsample2(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def bw(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return _emit("upsample2", out, (x,), bw)


# ---------------------------------------------------------------------------
# attention

def attention(q: Tensor, k: Tensor, v: Tensor, key_mask: np.ndarray | None = None,
              hook: Callable[[np.ndarray], None] | None = None) -> Tensor:
    """Scaled dot-product attention on (B, Lq, d) / (B, Lk, d) / (B, Lk, dv).

    ``key_mask`` is a boolean (B, Lk) array, True where a key may be attended.
    The normalised weights (B, Lq, Lk) are saved on the record and passed to
    ``hook`` when given.
    """
    if q.ndim != 3 or k.ndim != 3 or v.ndim != 3 or q.shape[0] != k.shape[0] != v.shape[0] \
            or q.shape[2] != k.shape[2] or k.shape[1] != v.shape[1]:
        raise ShapeError(f"attention: q {q.shape}, k {k.shape}, v {v.shape}")
    _check_finite("attention", q.data, k.data, v.data)
    qd, kd, vd = q.data, k.data, v.data
    sc = 1.0 / math.sqrt(qd.shape[-1])
    s = (qd @ kd.transpose(0, 2, 1)) * sc
    if key_mask is not None:
        key_mask = np.asarray(key_mask, dtype=bool)
        if key_mask.shape != (kd.shape[0], kd.shape[1]):
            raise ShapeError(f"attention: mask {key_mask.shape} vs keys {kd.shape}")
        if not key_mask.any(axis=1).all():
            raise ValueError("attention: a query row has no attendable key")
        s = np.where(key_mask[:, None, :], s, -np.inf)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    wts = e / e.sum(axis=-1, keepdims=True)
    if hook is not None:
        hook(wts)
    nq, nk, nv = _needs((q, k, v))

    def bw(g):
        dv = wts.transpose(0, 2, 1) @ g if nv else None
        dq = dk = None
        if nq or nk:
            dw = g @ vd.transpose(0, 2, 1)
            ds = wts * (dw - (dw * wts).sum(axis=-1, keepdims=True)) * sc
            dq = ds @ kd if nq else None
            dk = ds.transpose(0, 2, 1) @ qd if nk else None
        return dq, dk, dv

    return _emit("attention", wts @ vd, (q, k, v), bw, weights=wts)


# ---------------------------------------------------------------------------
# backward pass

class Gradients:
    """Gradient map returned by :func:`backward`, indexed by tensor."""

    def __init__(self, grads: dict, tensors: dict):
        self._grads = grads
        self._tensors = tensors

    def __getitem__(self, t: Tensor) -> Tensor:
        g = self._grads.get(id(t))
        if g is None:
            if not t.requires_grad:
                raise KeyError("tensor does not require grad")
            return Tensor._wrap(np.zeros(t.shape))
        return Tensor._wrap(g)

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._grads

    def leaves(self) -> list:
        return [t for i, t in self._tensors.items() if t.is_leaf and t.requires_grad and i in self._grads]


def trace(loss: Tensor) -> list:
    """Records reachable from ``loss`` in topological (creation) order."""
    seen = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        r = t._rec
        if r is None or r.seq in seen:
            continue
        seen[r.seq] = (r, t)
        stack.extend(x for x in r.inputs if x.requires_grad)
    return [seen[s] for s in sorted(seen)]


def backward(loss: Tensor) -> Gradients:
    if loss.size != 1 or loss.ndim:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    tensors = {id(loss): loss}
    grads = {id(loss): np.ones(())}
    if not loss.requires_grad:
        return Gradients(grads, tensors)
    for rec, out in reversed(trace(loss)):
        g = grads.get(id(out))
        if g is None:
            continue
        parts = rec.backward(g)
        for x, gx in zip(rec.inputs, parts):
            if gx is None or not x.requires_grad:
                continue
            k = id(x)
            tensors[k] = x
            if k in grads:
                grads[k] = grads[k] + gx
            else:
                grads[k] = np.array(gx, dtype=np.float64)
    return Gradients(grads, tensors)


def leaf(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


OPS: dict = {
    "add": add, "sub": sub, "neg": neg, "scale": scale, "mul": mul, "square": square,
    "exp": exp, "log": log, "silu": silu, "reshape": reshape, "transpose": transpose,
    "expand": expand, "concat": concat, "getitem": getitem, "sum": tsum, "mean": mean,
    "logsumexp": logsumexp, "softmax": softmax, "matmul": matmul, "linear": linear,
    "group_norm": group_norm, "layer_norm": layer_norm, "conv2d": conv2d,
    "avg_pool2": avg_pool2, "upsample2": upsample2, "attention": attention,
}
