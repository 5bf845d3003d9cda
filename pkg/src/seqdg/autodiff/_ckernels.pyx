# cython: language_level=3, boundscheck=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_fallback.py``.

Loops run in canonical index order, so results are bit-reproducible for a given
input.  Arrays are channels-last and C-contiguous.
"""
import numpy as np
cimport cython
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "compiled"

ctypedef fused real:
    float
    double


def im2col(x, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t t_out, Py_ssize_t pad=0):
    x = np.ascontiguousarray(x)
    out = np.empty((x.shape[0], t_out, k, x.shape[2]), dtype=x.dtype)
    if x.dtype == np.float32:
        _im2col[float](x, out, stride, pad)
    else:
        _im2col[double](x, out, stride, pad)
    return out


@cython.wraparound(False)
cdef void _im2col(const real[:, :, ::1] x, real[:, :, :, ::1] out, Py_ssize_t stride,
                  Py_ssize_t pad) noexcept nogil:
    # window t covers padded positions [t*stride, t*stride + k), i.e. x rows shifted by -pad;
    # the in-range rows form one contiguous run of values
    cdef Py_ssize_t n, t, m, j0, j1, start
    cdef Py_ssize_t nt = out.shape[1], k = out.shape[2], nc = out.shape[3], tx = x.shape[1]
    cdef const real* xrow
    cdef real* orow
    for n in range(x.shape[0]):
        xrow = &x[n, 0, 0]
        for t in range(nt):
            orow = &out[n, t, 0, 0]
            start = t * stride - pad
            j0 = -start if start < 0 else 0
            j1 = tx - start if start + k > tx else k
            if j1 < j0:
                j1 = j0
            for m in range(j0 * nc):
                orow[m] = 0
            for m in range(j0 * nc, j1 * nc):
                orow[m] = xrow[start * nc + m]
            for m in range(j1 * nc, k * nc):
                orow[m] = 0


def col2im(cols, Py_ssize_t t_out, Py_ssize_t stride, Py_ssize_t offset=0):
    cols = np.ascontiguousarray(cols)
    out = np.zeros((cols.shape[0], t_out, cols.shape[3]), dtype=cols.dtype)
    if cols.dtype == np.float32:
        _col2im[float](cols, out, stride, offset)
    else:
        _col2im[double](cols, out, stride, offset)
    return out


@cython.wraparound(False)
cdef void _col2im(const real[:, :, :, ::1] cols, real[:, :, ::1] out, Py_ssize_t stride,
                  Py_ssize_t offset) noexcept nogil:
    cdef Py_ssize_t n, t, m, j0, j1, start
    cdef Py_ssize_t nt = cols.shape[1], k = cols.shape[2], nc = cols.shape[3], to = out.shape[1]
    cdef const real* crow
    cdef real* orow
    for n in range(cols.shape[0]):
        orow = &out[n, 0, 0]
        for t in range(nt):
            crow = &cols[n, t, 0, 0]
            start = t * stride - offset
            j0 = -start if start < 0 else 0
            j1 = to - start if start + k > to else k
            for m in range(j0 * nc, j1 * nc):
                orow[start * nc + m] += crow[m]


def layer_norm_forward(x, gamma, beta, eps):
    """Returns ``(out, xhat, rstd)``; ``gamma``/``beta`` may be None."""
    x = np.ascontiguousarray(x)
    d = x.shape[x.ndim - 1]
    rows = x.size // d if d else 0
    xhat = np.empty_like(x)
    out = np.empty_like(x)
    rstd = np.empty(x.shape[:x.ndim - 1] + (1,), dtype=x.dtype)
    g = np.ones(d, dtype=x.dtype) if gamma is None else np.ascontiguousarray(gamma, dtype=x.dtype)
    b = np.zeros(d, dtype=x.dtype) if beta is None else np.ascontiguousarray(beta, dtype=x.dtype)
    if x.dtype == np.float32:
        _ln_fwd[float](x.reshape(rows, d), g, b, out.reshape(rows, d), xhat.reshape(rows, d),
                       rstd.reshape(-1), eps)
    else:
        _ln_fwd[double](x.reshape(rows, d), g, b, out.reshape(rows, d), xhat.reshape(rows, d),
                        rstd.reshape(-1), eps)
    return out, xhat, rstd


@cython.wraparound(False)
cdef void _ln_fwd(const real[:, ::1] x, const real[::1] gamma, const real[::1] beta, real[:, ::1] out,
                  real[:, ::1] xhat, real[::1] rstd, double eps) noexcept nogil:
    cdef Py_ssize_t r, j, d = x.shape[1]
    cdef double mu, var, diff, rs
    cdef real xh
    for r in range(x.shape[0]):
        mu = 0.0
        for j in range(d):
            mu += x[r, j]
        mu /= d
        var = 0.0
        for j in range(d):
            diff = x[r, j] - mu
            var += diff * diff
        var /= d
        rs = 1.0 / sqrt(var + eps)
        rstd[r] = <real>rs
        for j in range(d):
            xh = <real>((x[r, j] - mu) * rs)
            xhat[r, j] = xh
            out[r, j] = xh * gamma[j] + beta[j]


def layer_norm_backward(xhat, rstd, gamma, g):
    """Returns ``(dx, dgamma, dbeta)`` for upstream gradient ``g``."""
    xhat = np.ascontiguousarray(xhat)
    g = np.ascontiguousarray(g, dtype=xhat.dtype)
    rstd = np.ascontiguousarray(rstd, dtype=xhat.dtype)
    d = xhat.shape[xhat.ndim - 1]
    rows = xhat.size // d if d else 0
    gam = np.ones(d, dtype=xhat.dtype) if gamma is None else np.ascontiguousarray(gamma, dtype=xhat.dtype)
    dx = np.empty_like(xhat)
    dgamma = np.zeros(d, dtype=np.float64)
    dbeta = np.zeros(d, dtype=np.float64)
    if xhat.dtype == np.float32:
        _ln_bwd[float](xhat.reshape(rows, d), rstd.reshape(-1), gam, g.reshape(rows, d), dx.reshape(rows, d),
                       dgamma, dbeta)
    else:
        _ln_bwd[double](xhat.reshape(rows, d), rstd.reshape(-1), gam, g.reshape(rows, d), dx.reshape(rows, d),
                        dgamma, dbeta)
    return dx, dgamma.astype(xhat.dtype), dbeta.astype(xhat.dtype)


@cython.wraparound(False)
cdef void _ln_bwd(const real[:, ::1] xhat, const real[::1] rstd, const real[::1] gamma, const real[:, ::1] g,
                  real[:, ::1] dx, double[::1] dgamma, double[::1] dbeta) noexcept nogil:
    cdef Py_ssize_t r, j, d = xhat.shape[1]
    cdef double m1, m2, rs, gx
    for r in range(xhat.shape[0]):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            gx = g[r, j] * gamma[j]
            m1 += gx
            m2 += gx * xhat[r, j]
            dgamma[j] += g[r, j] * xhat[r, j]
            dbeta[j] += g[r, j]
        m1 /= d
        m2 /= d
        rs = rstd[r]
        for j in range(d):
            dx[r, j] = <real>(rs * (g[r, j] * gamma[j] - m1 - xhat[r, j] * m2))
