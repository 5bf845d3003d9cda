"""Differentiable primitives.

Each primitive computes its forward value with numpy and, when any input
requires gradients, records a closure returning the vector-Jacobian product
for every input.  Operator overloads on :class:`Tensor` are installed at the
bottom of this module.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import ContractError, DomainError, ShapeError
from . import kernels
from .tensor import Tensor, make_node, unbroadcast


def _wrap(x, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else x)


def _binary_shapes(a: Tensor, b: Tensor, opname: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = (_wrap(a, b if isinstance(b, Tensor) else None), _wrap(b, a if isinstance(a, Tensor) else None))
    _binary_shapes(a, b, "add")
    return make_node(a.data + b.data, (a, b),
                     lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = (_wrap(a, b if isinstance(b, Tensor) else None), _wrap(b, a if isinstance(a, Tensor) else None))
    _binary_shapes(a, b, "sub")
    return make_node(a.data - b.data, (a, b),
                     lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = (_wrap(a, b if isinstance(b, Tensor) else None), _wrap(b, a if isinstance(a, Tensor) else None))
    _binary_shapes(a, b, "mul")

    def bw(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = (_wrap(a, b if isinstance(b, Tensor) else None), _wrap(b, a if isinstance(a, Tensor) else None))
    _binary_shapes(a, b, "div")
    out = a.data / b.data

    def bw(g):
        ga = unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), bw, "div")


def neg(a: Tensor) -> Tensor:
    return make_node(-a.data, (a,), lambda g: (-g,), "neg")


def power(a: Tensor, p: float) -> Tensor:
    """``a ** p`` for a scalar exponent."""
    out = a.data ** p
    return make_node(out, (a,), lambda g: (g * p * a.data ** (p - 1),), "pow")


def square(a: Tensor) -> Tensor:
    return make_node(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_node(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor, eps: Optional[float] = None) -> Tensor:
    """Natural log.  With ``eps`` the input is clamped below at ``eps`` first."""
    if eps is None:
        if np.any(a.data <= 0):
            raise DomainError("log of non-positive value; pass eps for a guarded log")
        return make_node(np.log(a.data), (a,), lambda g: (g / a.data,), "log")
    safe = np.maximum(a.data, a.dtype.type(eps))
    live = a.data > eps
    return make_node(np.log(safe), (a,), lambda g: (np.where(live, g / safe, 0.0).astype(a.dtype),), "log")


def sqrt(a: Tensor, eps: Optional[float] = None) -> Tensor:
    """Square root.  With ``eps`` the input is clamped below at ``eps`` first."""
    if eps is None:
        if np.any(a.data <= 0):
            raise DomainError("sqrt of non-positive value; pass eps for a guarded sqrt")
        out = np.sqrt(a.data)
        return make_node(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")
    live = a.data > eps
    out = np.sqrt(np.maximum(a.data, a.dtype.type(eps)))
    return make_node(out, (a,), lambda g: (np.where(live, g * 0.5 / out, 0.0).astype(a.dtype),), "sqrt")


def clamp_min(a: Tensor, lo: float) -> Tensor:
    live = a.data > lo
    out = np.maximum(a.data, a.dtype.type(lo))
    return make_node(out, (a,), lambda g: (g * live,), "clamp_min")


def relu(a: Tensor) -> Tensor:
    live = a.data > 0
    return make_node(a.data * live, (a,), lambda g: (g * live,), "relu")


_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    x = a.data
    c = x.dtype.type(_GELU_C)
    k = x.dtype.type(_GELU_A)
    th = x * x
    th *= k
    th += 1
    th *= x
    th *= c
    np.tanh(th, out=th)
    y = th + 1
    y *= x
    y *= 0.5

    def bw(g):
        # d/dx = 0.5(1+t) + 0.5 x (1-t^2) c (1 + 3k x^2)
        dinner = x * x
        dinner *= 3 * k
        dinner += 1
        dinner *= c
        sech2 = th * th
        np.subtract(1, sech2, out=sech2)
        sech2 *= x
        sech2 *= dinner
        sech2 += th
        sech2 += 1
        sech2 *= 0.5
        sech2 *= g
        return (sech2,)

    return make_node(y, (a,), bw, "gelu")


def bias_add(x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``x + b`` over the last axis.  Short last axes are tiled first: numpy
    broadcasting over a handful of channels is several times slower than a
    plain elementwise add."""
    c = b.shape[0]
    reps = max(1, 64 // c)
    rows = x.size // c if c else 0
    if reps > 1 and rows % reps == 0 and x.flags.c_contiguous:
        return (x.reshape(-1, c * reps) + np.tile(b, reps)).reshape(x.shape)
    return x + b


def colsum(g: np.ndarray) -> np.ndarray:
    """Sum over all leading axes, keeping the last; a BLAS gemv beats strided reduction here."""
    g2 = g.reshape(-1, g.shape[-1])
    return np.ones(g2.shape[0], dtype=g.dtype) @ g2


# ---------------------------------------------------------------- reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def _expand(g, shape, axes, keepdims):
    if not keepdims:
        for ax in axes:
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)
    return make_node(out, (a,), lambda g: (_expand(g, a.shape, axes, keepdims),), "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims)
    return make_node(out, (a,), lambda g: (_expand(g / count, a.shape, axes, keepdims),), "mean")


def var(a: Tensor, axis=None, ddof: int = 0, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    if count - ddof <= 0:
        raise ShapeError(f"var: {count} samples with ddof={ddof}")
    centered = a.data - a.data.mean(axis=axes, keepdims=True)
    out = (centered * centered).sum(axis=axes, keepdims=keepdims) / (count - ddof)

    def bw(g):
        return (_expand(g, a.shape, axes, keepdims) * centered * (2.0 / (count - ddof)),)

    return make_node(out, (a,), bw, "var")


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a, b if isinstance(b, Tensor) else None), _wrap(b, a if isinstance(a, Tensor) else None)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands with ndim >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner extents differ, {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}: {exc}") from None

    def bw(g):
        ga = unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if a.requires_grad else None
        gb = unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), bw, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight + bias`` over the last axis, with ``weight`` of shape (in, out)."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input features {x.shape[-1]} != weight rows {weight.shape[0]}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data
    if bias is not None:
        out = out + bias.data
    out = out.reshape(lead + (weight.shape[1],))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g2 = g.reshape(-1, weight.shape[1])
        gx = (g2 @ weight.data.T).reshape(x.shape) if x.requires_grad else None
        gw = x2.T @ g2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, colsum(g2)

    return make_node(out, parents, bw, "linear")


# ---------------------------------------------------------------- shape ops

def reshape(a: Tensor, shape) -> Tensor:
    if isinstance(shape, int):
        shape = (shape,)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {a.shape} into {tuple(shape)}") from None
    return make_node(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(ax % a.ndim for ax in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose: {axes} is not a permutation of {a.ndim} axes")
    inverse = tuple(np.argsort(axes))
    return make_node(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),), "transpose")


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    axes = list(range(a.ndim))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, axes)


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice, type(None), type(Ellipsis))) for i in items)


def getitem(a: Tensor, idx) -> Tensor:
    if isinstance(idx, Tensor):
        idx = idx.data.astype(np.intp)
    try:
        out = a.data[idx]
    except IndexError as exc:
        raise ShapeError(f"index {idx!r} invalid for shape {a.shape}: {exc}") from None
    basic = _is_basic_index(idx)

    def bw(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return make_node(out, (a,), bw, "getitem")


def concatenate(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concatenate: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return make_node(out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)), "concatenate")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"stack: {exc}") from None
    n = len(tensors)
    return make_node(out, tensors,
                     lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)), "stack")


# ---------------------------------------------------------------- normalization

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_node(out, (a,), bw, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    p = np.exp(out)
    return make_node(out, (a,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),), "log_softmax")


def layer_norm(x: Tensor, gamma: Optional[Tensor] = None, beta: Optional[Tensor] = None,
               eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply the optional affine map."""
    d = x.shape[-1]
    for p in (gamma, beta):
        if p is not None and p.shape != (d,):
            raise ShapeError(f"layer_norm: affine parameter shape {p.shape} != ({d},)")
    out, xhat, rstd = kernels.active.layer_norm_forward(
        x.data, None if gamma is None else gamma.data, None if beta is None else beta.data, eps)
    parents = [x] + [p for p in (gamma, beta) if p is not None]
    ln_backward = kernels.active.layer_norm_backward

    def bw(g):
        dx, dgamma, dbeta = ln_backward(xhat, rstd, None if gamma is None else gamma.data, g)
        grads = [dx]
        if gamma is not None:
            grads.append(dgamma)
        if beta is not None:
            grads.append(dbeta)
        return grads

    return make_node(out, parents, bw, "layer_norm")


def dropout(a: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout.  Identity in eval mode or at rate 0."""
    if not training or rate <= 0.0:
        return a
    if rng is None:
        raise ContractError("dropout in training mode needs an explicit rng")
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / a.dtype.type(1.0 - rate)
    return make_node(a.data * keep, (a,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------- convolution

def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """1-D cross-correlation, channels-last.

    ``x``: (N, T, C_in); ``weight``: (K, C_in, C_out); ``bias``: (C_out,).
    Output length is ``(T + 2*padding - K) // stride + 1``.
    """
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv1d expects x (N,T,C) and weight (K,Cin,Cout), got {x.shape}, {weight.shape}")
    n, t, c = x.shape
    k, cin, cout = weight.shape
    if cin != c:
        raise ShapeError(f"conv1d: input has {c} channels, weight expects {cin}")
    t_pad = t + 2 * padding
    if t_pad < k:
        raise ShapeError(f"conv1d: padded length {t_pad} shorter than kernel {k}")
    t_out = (t_pad - k) // stride + 1
    cols = kernels.active.im2col(x.data, k, stride, t_out, padding).reshape(n * t_out, k * c)
    w2 = weight.data.reshape(k * c, cout)
    out = (cols @ w2).reshape(n, t_out, cout)
    if bias is not None:
        out = bias_add(out, bias.data)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g2 = g.reshape(n * t_out, cout)
        gx = gw = None
        if x.requires_grad:
            dcols = (g2 @ w2.T).reshape(n, t_out, k, c)
            gx = kernels.active.col2im(dcols, t, stride, padding)
        if weight.requires_grad:
            gw = (cols.T @ g2).reshape(k, c, cout)
        if bias is None:
            return gx, gw
        return gx, gw, colsum(g2)

    return make_node(out, parents, bw, "conv1d")


def conv_transpose1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1,
                     padding: int = 0, output_padding: int = 0) -> Tensor:
    """Transposed 1-D convolution (adjoint of :func:`conv1d`), channels-last.

    ``x``: (N, T, C_in); ``weight``: (K, C_out, C_in), i.e. the layout of the
    conv1d weight it is the adjoint of.  Output length is
    ``(T - 1)*stride - 2*padding + K + output_padding``.
    """
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv_transpose1d expects x (N,T,C) and weight (K,Cout,Cin), got {x.shape}, {weight.shape}")
    n, t, cin = x.shape
    k, cout, wcin = weight.shape
    if wcin != cin:
        raise ShapeError(f"conv_transpose1d: input has {cin} channels, weight expects {wcin}")
    if output_padding >= max(stride, 1) and output_padding > 0:
        raise ShapeError("conv_transpose1d: output_padding must be smaller than stride")
    t_full = (t - 1) * stride + k
    t_out = t_full - 2 * padding + output_padding
    if t_out <= 0:
        raise ShapeError(f"conv_transpose1d: non-positive output length {t_out}")
    w2 = weight.data.reshape(k * cout, cin)                         # rows ordered (k, c_out)
    x2 = x.data.reshape(n * t, cin)
    cols = (x2 @ w2.T).reshape(n, t, k, cout)
    out = kernels.active.col2im(cols, t_out, stride, padding)
    if bias is not None:
        out = bias_add(out, bias.data)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        gcols = kernels.active.im2col(g, k, stride, t, padding).reshape(n * t, k * cout)
        gx = (gcols @ w2).reshape(n, t, cin) if x.requires_grad else None
        gw = (gcols.T @ x2).reshape(k, cout, cin) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, colsum(g)

    return make_node(out, parents, bw, "conv_transpose1d")


def avg_pool1d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping average pooling over the time axis of (N, T, C); drops a ragged tail."""
    if x.ndim != 3:
        raise ShapeError(f"avg_pool1d expects (N, T, C), got {x.shape}")
    n, t, c = x.shape
    t_out = t // size
    if t_out == 0:
        raise ShapeError(f"avg_pool1d: length {t} shorter than window {size}")
    windows = x.data[:, : t_out * size].reshape(n, t_out, size * c)
    out = windows[:, :, :c].copy()
    for j in range(1, size):
        out += windows[:, :, j * c : (j + 1) * c]
    out *= x.dtype.type(1.0 / size)

    def bw(g):
        full = np.zeros(x.shape, dtype=g.dtype)
        spread = np.repeat(g * g.dtype.type(1.0 / size), size, axis=1)
        full[:, : t_out * size] = spread
        return (full,)

    return make_node(out, (x,), bw, "avg_pool1d")


# ---------------------------------------------------------------- operator overloads

def _getitem(self, idx):
    return getitem(self, idx)


Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = lambda self, other: div(self, other)
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__neg__ = neg
Tensor.__matmul__ = lambda self, other: matmul(self, other)
Tensor.__pow__ = lambda self, p: power(self, p)
Tensor.__getitem__ = _getitem
Tensor.sum = lambda self, axis=None, keepdims=False: sum(self, axis, keepdims)
Tensor.mean = lambda self, axis=None, keepdims=False: mean(self, axis, keepdims)
Tensor.var = lambda self, axis=None, ddof=0, keepdims=False: var(self, axis, ddof, keepdims)
Tensor.reshape = lambda self, *shape: reshape(self, shape[0] if len(shape) == 1 else shape)
Tensor.transpose = lambda self, *axes: transpose(self, axes[0] if len(axes) == 1 else (axes or None))
Tensor.exp = exp
Tensor.log = log
Tensor.sqrt = sqrt
