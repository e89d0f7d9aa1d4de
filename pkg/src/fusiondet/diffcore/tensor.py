"""Dense tensors with tape-based reverse-mode differentiation.

Every op executes eagerly on numpy arrays and, when any input requires a
gradient, records a closure that maps the output gradient onto its inputs.
``Tensor.backward`` replays those closures in reverse topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference passes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self.name = name

    # ------------------------------------------------------------------ basics
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    # --------------------------------------------------------------- backward
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every graph input."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        self.grad = np.asarray(grad, dtype=self.data.dtype).reshape(self.shape).copy()
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -------------------------------------------------------------- operators
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return index_select(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def _topological_order(root: Tensor) -> list:
    order: list = []
    seen: set = set()
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
        for parent in reversed(node._parents):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None and isinstance(x, (int, float)):
        return Tensor(np.asarray(x, dtype=np.float64))
    return Tensor(x, dtype=dtype)


def _coerce_pair(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    else:
        a, b = as_tensor(a), as_tensor(b)
    return a, b


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if g.dtype != t.data.dtype:
        g = g.astype(t.data.dtype)
    if t.grad is None:
        # always a private copy: the same upstream array may reach several inputs
        t.grad = np.broadcast_to(g, t.shape).copy() if g.shape != t.shape else np.array(g, copy=True)
    else:
        t.grad = t.grad + g


def _check_broadcast(op: str, a: tuple, b: tuple) -> tuple:
    """Right-aligned unit-extent expansion only; anything else is a shape error."""
    n = max(len(a), len(b))
    pa = (1,) * (n - len(a)) + tuple(a)
    pb = (1,) * (n - len(b)) + tuple(b)
    out = []
    for x, y in zip(pa, pb):
        if x == y or y == 1:
            out.append(x)
        elif x == 1:
            out.append(y)
        else:
            raise ShapeError(f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}")
    return tuple(out)


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` back down to ``shape`` after a broadcasting op."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    _check_broadcast("add", a.shape, b.shape)

    def backward(g):
        _accumulate(a, unbroadcast(g, a.shape))
        _accumulate(b, unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    _check_broadcast("sub", a.shape, b.shape)

    def backward(g):
        _accumulate(a, unbroadcast(g, a.shape))
        _accumulate(b, unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    _check_broadcast("mul", a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    _check_broadcast("div", a.shape, b.shape)
    out = a.data / b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, unbroadcast(-g * out / b.data, b.shape))

    return _make(out, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: _accumulate(a, -g))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out = a.data**exponent

    def backward(g):
        _accumulate(a, g * exponent * a.data ** (exponent - 1))

    return _make(out, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: _accumulate(a, g * out))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: _accumulate(a, g / a.data))


def sin(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.sin(a.data), (a,), lambda g: _accumulate(a, g * np.cos(a.data)))


def cos(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.cos(a.data), (a,), lambda g: _accumulate(a, -g * np.sin(a.data)))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: _accumulate(a, g * (1.0 - out * out)))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # split form avoids overflow for large |x|
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)
    return _make(out, (a,), lambda g: _accumulate(a, g * out * (1.0 - out)))


def log_sigmoid(a) -> Tensor:
    """log(sigmoid(x)) without cancellation for very negative x."""
    a = as_tensor(a)
    x = a.data
    out = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    e = np.exp(-np.abs(x))
    sig_neg = np.where(x >= 0, e / (1.0 + e), 1.0 / (1.0 + e))  # sigmoid(-x)
    return _make(out.astype(x.dtype, copy=False), (a,), lambda g: _accumulate(a, g * sig_neg))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: _accumulate(a, g * mask))


def absolute(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.abs(a.data), (a,), lambda g: _accumulate(a, g * np.sign(a.data)))


def clamp(a, lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    """Clip to [lo, hi]; gradient passes only where the input was strictly inside."""
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)
    mask = np.ones(a.shape, dtype=bool)
    if lo is not None:
        mask &= a.data > lo
    if hi is not None:
        mask &= a.data < hi
    return _make(out, (a,), lambda g: _accumulate(a, g * mask))


# ---------------------------------------------------------------------------
# reductions and shape manipulation
# ---------------------------------------------------------------------------


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _make(np.asarray(out), (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / max(count, 1))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from exc
    return _make(out, (a,), lambda g: _accumulate(a, g.reshape(a.shape)))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _make(out, (a,), lambda g: _accumulate(a, np.transpose(g, inv)))


def index_select(a, index) -> Tensor:
    """Basic or advanced indexing; the gradient scatters back with accumulation."""
    a = as_tensor(a)
    if isinstance(index, Tensor):
        index = index.data.astype(np.int64)
    out = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        _accumulate(a, full)

    return _make(np.asarray(out), (a,), backward)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: empty input list")
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ts[0].shape)) if i != ax
        ):
            raise ShapeError(f"concat: incompatible shapes {ts[0].shape} and {t.shape} on axis {axis}")
    out = np.concatenate([t.data for t in ts], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def backward(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[ax] = slice(lo, hi)
                _accumulate(t, g[tuple(sl)])

    return _make(out, ts, backward)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    return concat([reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):]) for t in ts], axis=axis)


# ---------------------------------------------------------------------------
# linear algebra and normalisation
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            _accumulate(a, unbroadcast(ga, a.shape))
        if b.requires_grad:
            if a.ndim == 1:
                gb = np.outer(a.data, g)
            else:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            _accumulate(b, unbroadcast(gb, b.shape))

    return _make(out, (a, b), backward)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        _accumulate(a, out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _make(out, (a,), backward)


def layer_norm(a, weight=None, bias=None, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply the optional affine pair."""
    a = as_tensor(a)
    parents = [a]
    w = as_tensor(weight) if weight is not None else None
    b = as_tensor(bias) if bias is not None else None
    if w is not None:
        parents.append(w)
    if b is not None:
        parents.append(b)
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat
    if w is not None:
        out = out * w.data
    if b is not None:
        out = out + b.data
    n = a.shape[-1]

    def backward(g):
        if w is not None and w.requires_grad:
            _accumulate(w, unbroadcast(g * xhat, w.shape))
        if b is not None and b.requires_grad:
            _accumulate(b, unbroadcast(g, b.shape))
        if a.requires_grad:
            gx = g * w.data if w is not None else g
            ga = rstd / n * (n * gx - gx.sum(-1, keepdims=True) - xhat * (gx * xhat).sum(-1, keepdims=True))
            _accumulate(a, ga)

    return _make(out, parents, backward)


# ---------------------------------------------------------------------------
# convolution, sampling, scatter
# ---------------------------------------------------------------------------


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation. x: N×Cin×H×W, weight: Cout×Cin×kh×kw."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d: incompatible shapes {x.shape} and {weight.shape}")
    parents = [x, weight]
    b = None
    if bias is not None:
        b = as_tensor(bias)
        parents.append(b)
    n, cin, h, w = x.shape
    cout, _, kh, kw = weight.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    win = win[:, :, :ho, :wo]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, cin * kh * kw)
    w2 = weight.data.reshape(cout, -1)
    out2 = cols @ w2.T
    if b is not None:
        out2 = out2 + b.data
    out = out2.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, cout)
        if weight.requires_grad:
            _accumulate(weight, (g2.T @ cols).reshape(weight.shape))
        if b is not None and b.requires_grad:
            _accumulate(b, g2.sum(axis=0))
        if x.requires_grad:
            dcols = (g2 @ w2).reshape(n, ho, wo, cin, kh, kw)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
            if padding:
                dxp = dxp[:, :, padding : padding + h, padding : padding + w]
            _accumulate(x, dxp)

    return _make(np.ascontiguousarray(out), parents, backward)


def bilinear_sample(featmap, coords, border_mode: str = "clamp") -> Tensor:
    """Sample a C×H×W map at continuous pixel coords (P×2, columns = (u, v)).

    ``u`` indexes width and ``v`` height; integer coords hit cell centres.
    ``clamp`` pins coords to the map; ``zero`` treats outside cells as zero.
    Differentiable in both the map values and the coords.
    """
    if border_mode not in ("clamp", "zero"):
        raise ValueError(f"unknown border_mode {border_mode!r}")
    feat, coords = as_tensor(featmap), as_tensor(coords)
    if feat.ndim != 3 or coords.ndim != 2 or coords.shape[1] != 2:
        raise ShapeError(f"bilinear_sample: incompatible shapes {feat.shape} and {coords.shape}")
    c, h, w = feat.shape
    u = coords.data[:, 0]
    v = coords.data[:, 1]
    if border_mode == "clamp":
        uc = np.clip(u, 0.0, w - 1)
        vc = np.clip(v, 0.0, h - 1)
        u0 = np.clip(np.floor(uc), 0, max(w - 2, 0)).astype(np.int64)
        v0 = np.clip(np.floor(vc), 0, max(h - 2, 0)).astype(np.int64)
        u1 = np.minimum(u0 + 1, w - 1)
        v1 = np.minimum(v0 + 1, h - 1)
        du = uc - u0
        dv = vc - v0
        valid = [np.ones(u.shape, dtype=bool)] * 4
        gate_u = (u > 0) & (u < w - 1)
        gate_v = (v > 0) & (v < h - 1)
    else:
        u0 = np.floor(u).astype(np.int64)
        v0 = np.floor(v).astype(np.int64)
        u1 = u0 + 1
        v1 = v0 + 1
        du = u - u0
        dv = v - v0
        inu0 = (u0 >= 0) & (u0 < w)
        inu1 = (u1 >= 0) & (u1 < w)
        inv0 = (v0 >= 0) & (v0 < h)
        inv1 = (v1 >= 0) & (v1 < h)
        valid = [inv0 & inu0, inv0 & inu1, inv1 & inu0, inv1 & inu1]
        gate_u = gate_v = np.ones(u.shape, dtype=bool)
        u0, u1 = np.clip(u0, 0, w - 1), np.clip(u1, 0, w - 1)
        v0, v1 = np.clip(v0, 0, h - 1), np.clip(v1, 0, h - 1)
    flat = feat.data.reshape(c, h * w)
    idx = [v0 * w + u0, v0 * w + u1, v1 * w + u0, v1 * w + u1]
    corners = [flat[:, k].T * m[:, None] for k, m in zip(idx, valid)]  # each P×C
    wts = [(1 - du) * (1 - dv), du * (1 - dv), (1 - du) * dv, du * dv]
    out = sum(cv * wt[:, None] for cv, wt in zip(corners, wts))
    f00, f01, f10, f11 = corners

    def backward(g):
        if feat.requires_grad:
            gflat = np.zeros((h * w, c), dtype=feat.data.dtype)
            for k, m, wt in zip(idx, valid, wts):
                np.add.at(gflat, k, g * (wt * m)[:, None])
            _accumulate(feat, gflat.T.reshape(c, h, w))
        if coords.requires_grad:
            dout_du = (f01 - f00) * (1 - dv)[:, None] + (f11 - f10) * dv[:, None]
            dout_dv = (f10 - f00) * (1 - du)[:, None] + (f11 - f01) * du[:, None]
            gu = (g * dout_du).sum(axis=1) * gate_u
            gv = (g * dout_dv).sum(axis=1) * gate_v
            _accumulate(coords, np.stack([gu, gv], axis=1))

    return _make(np.asarray(out, dtype=feat.data.dtype), (feat, coords), backward)


def scatter_rows(values, index: np.ndarray, n_rows: int) -> Tensor:
    """Sum rows of ``values`` (P×C) into an n_rows×C zero matrix at ``index``."""
    values = as_tensor(values)
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros((n_rows,) + values.shape[1:], dtype=values.data.dtype)
    np.add.at(out, index, values.data)
    return _make(out, (values,), lambda g: _accumulate(values, g[index]))


def scatter_max(values, index: np.ndarray, n_rows: int) -> Tensor:
    """Per-row max of ``values`` grouped by ``index``; rows with no members are zero.

    Ties route the gradient to the lowest-index member.
    """
    values = as_tensor(values)
    index = np.asarray(index, dtype=np.int64)
    p = values.shape[0]
    ch = values.shape[1]
    out = np.full((n_rows, ch), -np.inf, dtype=values.data.dtype)
    np.maximum.at(out, index, values.data)
    out[np.isneginf(out)] = 0.0
    winners = np.full((n_rows, ch), p, dtype=np.int64)
    if p:
        hit_p, hit_c = np.nonzero(values.data == out[index])
        np.minimum.at(winners, (index[hit_p], hit_c), hit_p)

    def backward(g):
        rows, cols = np.nonzero(winners < p)
        gv = np.zeros_like(values.data)
        gv[winners[rows, cols], cols] = g[rows, cols]
        _accumulate(values, gv)

    return _make(out, (values,), backward)


def where_mask(a, mask: np.ndarray) -> Tensor:
    """Multiply by a constant 0/1 mask (broadcast allowed)."""
    return mul(a, Tensor(np.asarray(mask, dtype=as_tensor(a).dtype)))


def parameters_of(tensors: Iterable[Tensor]) -> list:
    return [t for t in tensors if t.requires_grad]
