"""Pure-numpy implementations of the hot kernels.

Every function here has a twin with the same signature in the compiled
``_ckernels`` extension.  Layout is channels-last: signals are ``(N, T, C)``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "numpy"


def im2col(x, k, stride, t_out, pad=0):
    """Sliding windows over ``x`` zero-padded by ``pad`` on the left, as ``(N, t_out, k, C)``.

    The right side is zero-padded as far as the last window needs.
    """
    n, t, c = x.shape
    need = (t_out - 1) * stride + k
    right = max(0, need - pad - t)
    xp = np.pad(x, ((0, 0), (pad, right), (0, 0))) if pad or right else x
    win = sliding_window_view(xp[:, :need], k, axis=1)[:, ::stride]
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2))


def col2im(cols, t_out, stride, offset=0):
    """Scatter-add ``(N, T, k, C)`` windows into an ``(N, t_out, C)`` signal.

    Window ``t`` lands at positions ``t*stride - offset + j``; anything outside
    ``[0, t_out)`` is dropped.
    """
    n, t, k, c = cols.shape
    full_len = max((t - 1) * stride + k, offset + t_out)
    full = np.zeros((n, full_len, c), dtype=cols.dtype)
    span = (t - 1) * stride + 1
    for j in range(k):
        full[:, j : j + span : stride] += cols[:, :, j]
    return np.ascontiguousarray(full[:, offset : offset + t_out])


def layer_norm_forward(x, gamma, beta, eps):
    """Normalize over the last axis, then apply the affine map; returns ``(out, xhat, rstd)``."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * rstd
    out = xhat
    if gamma is not None:
        out = out * gamma
    if beta is not None:
        out = out + beta
    return out, xhat, rstd


def layer_norm_backward(xhat, rstd, gamma, g):
    """Returns ``(dx, dgamma, dbeta)`` for upstream gradient ``g``."""
    gxhat = g * gamma if gamma is not None else g
    m1 = gxhat.mean(axis=-1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=-1, keepdims=True)
    dx = rstd * (gxhat - m1 - xhat * m2)
    lead = tuple(range(g.ndim - 1))
    return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)
