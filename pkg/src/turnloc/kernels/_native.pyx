# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of `turnloc.kernels.reference`.

Loop nesting mirrors the numpy fallback's accumulation order exactly
(kernel-offset-major for col2im, corner-major for the bilinear adjoint),
so both backends produce bitwise-identical float32 results.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def im2col(cnp.ndarray[cnp.float32_t, ndim=3] x, int kh, int kw, int stride):
    cdef int c = x.shape[0]
    cdef int h = x.shape[1]
    cdef int w = x.shape[2]
    cdef int oh = (h - kh) // stride + 1
    cdef int ow = (w - kw) // stride + 1
    cdef cnp.ndarray[cnp.float32_t, ndim=2] cols = np.empty((c * kh * kw, oh * ow), dtype=np.float32)
    cdef float[:, :, :] xv = x
    cdef float[:, :] cv = cols
    cdef int ci, ki, kj, oi, oj, row
    with nogil:
        for ci in range(c):
            for ki in range(kh):
                for kj in range(kw):
                    row = (ci * kh + ki) * kw + kj
                    for oi in range(oh):
                        for oj in range(ow):
                            cv[row, oi * ow + oj] = xv[ci, oi * stride + ki, oj * stride + kj]
    return cols


def col2im(cnp.ndarray[cnp.float32_t, ndim=2] cols, int c, int h, int w, int kh, int kw, int stride):
    cdef int oh = (h - kh) // stride + 1
    cdef int ow = (w - kw) // stride + 1
    cdef cnp.ndarray[cnp.float32_t, ndim=3] out = np.zeros((c, h, w), dtype=np.float32)
    cdef float[:, :] cv = cols
    cdef float[:, :, :] ov = out
    cdef int ci, ki, kj, oi, oj, row
    with nogil:
        # kernel-offset loop outermost: contributions to one output pixel
        # always arrive in (ki, kj) order, matching the numpy fallback
        for ki in range(kh):
            for kj in range(kw):
                for ci in range(c):
                    row = (ci * kh + ki) * kw + kj
                    for oi in range(oh):
                        for oj in range(ow):
                            ov[ci, oi * stride + ki, oj * stride + kj] += cv[row, oi * ow + oj]
    return out


cdef void _fill_grid(int in_size, int out_size, long[:] lo, long[:] hi, float[:] frac) nogil:
    cdef int i
    cdef double step, pos
    if out_size == 1:
        lo[0] = 0
        hi[0] = 0
        frac[0] = 0.0
        return
    step = (in_size - 1.0) / (out_size - 1.0)
    for i in range(out_size):
        pos = i * step
        lo[i] = <long>pos
        if lo[i] > in_size - 1:
            lo[i] = in_size - 1
        hi[i] = lo[i] + 1
        if hi[i] > in_size - 1:
            hi[i] = in_size - 1
        frac[i] = <float>(pos - lo[i])


def bilinear_resize(cnp.ndarray[cnp.float32_t, ndim=3] x, int out_h, int out_w):
    cdef int c = x.shape[0]
    cdef int h = x.shape[1]
    cdef int w = x.shape[2]
    cdef cnp.ndarray[cnp.float32_t, ndim=3] out = np.empty((c, out_h, out_w), dtype=np.float32)
    y0 = np.empty(out_h, dtype=np.int64)
    y1 = np.empty(out_h, dtype=np.int64)
    fy = np.empty(out_h, dtype=np.float32)
    x0 = np.empty(out_w, dtype=np.int64)
    x1 = np.empty(out_w, dtype=np.int64)
    fx = np.empty(out_w, dtype=np.float32)
    cdef long[:] y0v = y0, y1v = y1, x0v = x0, x1v = x1
    cdef float[:] fyv = fy, fxv = fx
    cdef float[:, :, :] xv = x
    cdef float[:, :, :] ov = out
    cdef int ci, i, j
    cdef float v00, v01, v10, v11, a, b, top, bot, wy, wx, iwy, iwx
    cdef float one = 1.0
    with nogil:
        _fill_grid(h, out_h, y0v, y1v, fyv)
        _fill_grid(w, out_w, x0v, x1v, fxv)
        for ci in range(c):
            for i in range(out_h):
                wy = fyv[i]
                iwy = one - wy
                for j in range(out_w):
                    wx = fxv[j]
                    iwx = one - wx
                    v00 = xv[ci, y0v[i], x0v[j]]
                    v01 = xv[ci, y0v[i], x1v[j]]
                    v10 = xv[ci, y1v[i], x0v[j]]
                    v11 = xv[ci, y1v[i], x1v[j]]
                    # float temporaries keep the rounding identical to the
                    # numpy float32 expression tree (no double promotion or
                    # FMA contraction differences)
                    a = iwx * v00
                    b = wx * v01
                    top = a + b
                    a = iwx * v10
                    b = wx * v11
                    bot = a + b
                    a = iwy * top
                    b = wy * bot
                    ov[ci, i, j] = a + b
    return out


def bilinear_resize_backward(cnp.ndarray[cnp.float32_t, ndim=3] grad, int in_h, int in_w):
    cdef int c = grad.shape[0]
    cdef int out_h = grad.shape[1]
    cdef int out_w = grad.shape[2]
    cdef cnp.ndarray[cnp.float32_t, ndim=3] out = np.zeros((c, in_h, in_w), dtype=np.float32)
    y0 = np.empty(out_h, dtype=np.int64)
    y1 = np.empty(out_h, dtype=np.int64)
    fy = np.empty(out_h, dtype=np.float32)
    x0 = np.empty(out_w, dtype=np.int64)
    x1 = np.empty(out_w, dtype=np.int64)
    fx = np.empty(out_w, dtype=np.float32)
    cdef long[:] y0v = y0, y1v = y1, x0v = x0, x1v = x1
    cdef float[:] fyv = fy, fxv = fx
    cdef float[:, :, :] gv = grad
    cdef float[:, :, :] ov = out
    cdef int ci, i, j
    cdef float wgt, one = 1.0
    with nogil:
        _fill_grid(in_h, out_h, y0v, y1v, fyv)
        _fill_grid(in_w, out_w, x0v, x1v, fxv)
        # one pass per corner (corner-major) to match np.add.at call order;
        # float temporaries mirror the numpy float32 expression tree
        for ci in range(c):
            for i in range(out_h):
                for j in range(out_w):
                    wgt = (one - fyv[i]) * (one - fxv[j])
                    ov[ci, y0v[i], x0v[j]] += wgt * gv[ci, i, j]
        for ci in range(c):
            for i in range(out_h):
                for j in range(out_w):
                    wgt = (one - fyv[i]) * fxv[j]
                    ov[ci, y0v[i], x1v[j]] += wgt * gv[ci, i, j]
        for ci in range(c):
            for i in range(out_h):
                for j in range(out_w):
                    wgt = fyv[i] * (one - fxv[j])
                    ov[ci, y1v[i], x0v[j]] += wgt * gv[ci, i, j]
        for ci in range(c):
            for i in range(out_h):
                for j in range(out_w):
                    wgt = fyv[i] * fxv[j]
                    ov[ci, y1v[i], x1v[j]] += wgt * gv[ci, i, j]
    return out
