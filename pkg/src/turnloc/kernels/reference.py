"""Numpy implementations of the loop-heavy kernels.

These are the fallback backend; `turnloc.kernels` prefers the compiled
`_native` module when it is importable.  Both backends implement the same
contracts with identical accumulation order, so results agree bitwise:

- ``im2col`` / ``col2im``: patch gather/scatter for convolution, kernel-offset
  loop outermost (scatter contributions to one pixel always add in the same
  order).
- ``bilinear_resize`` / ``bilinear_resize_backward``: corner-aligned sampling,
  positions computed in float64, blending in float32 with fixed expression
  order.
"""

from __future__ import annotations

import numpy as np


def _out_extent(size: int, k: int, stride: int) -> int:
    return (size - k) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Gather sliding patches of a padded [C,H,W] map into [C*kh*kw, oh*ow]."""
    c, h, w = x.shape
    oh = _out_extent(h, kh, stride)
    ow = _out_extent(w, kw, stride)
    cols = np.empty((c * kh * kw, oh * ow), dtype=np.float32)
    view = cols.reshape(c, kh, kw, oh, ow)
    for ki in range(kh):
        for kj in range(kw):
            view[:, ki, kj] = x[:, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride]
    return cols


def col2im(cols: np.ndarray, c: int, h: int, w: int, kh: int, kw: int, stride: int) -> np.ndarray:
    """Adjoint of im2col: scatter-add columns back onto a [C,H,W] map."""
    oh = _out_extent(h, kh, stride)
    ow = _out_extent(w, kw, stride)
    out = np.zeros((c, h, w), dtype=np.float32)
    view = cols.reshape(c, kh, kw, oh, ow)
    for ki in range(kh):
        for kj in range(kw):
            out[:, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride] += view[:, ki, kj]
    return out


def _grid(in_size: int, out_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Corner-aligned source positions; float64 so the floor/frac split is stable.
    if out_size == 1:
        pos = np.zeros(1, dtype=np.float64)
    else:
        pos = np.arange(out_size, dtype=np.float64) * ((in_size - 1) / (out_size - 1))
    lo = np.floor(pos).astype(np.int64)
    lo = np.minimum(lo, in_size - 1)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = (pos - lo).astype(np.float32)
    return lo, hi, frac


def bilinear_resize(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resample of a [C,H,W] map to [C,out_h,out_w]."""
    _, h, w = x.shape
    y0, y1, fy = _grid(h, out_h)
    x0, x1, fx = _grid(w, out_w)
    fy = fy[None, :, None]
    fx = fx[None, None, :]
    v00 = x[:, y0[:, None], x0[None, :]]
    v01 = x[:, y0[:, None], x1[None, :]]
    v10 = x[:, y1[:, None], x0[None, :]]
    v11 = x[:, y1[:, None], x1[None, :]]
    one = np.float32(1.0)
    top = (one - fx) * v00 + fx * v01
    bot = (one - fx) * v10 + fx * v11
    return (one - fy) * top + fy * bot


def bilinear_resize_backward(grad: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    """Adjoint of bilinear_resize: scatter the output gradient to [C,in_h,in_w]."""
    c, out_h, out_w = grad.shape
    y0, y1, fy = _grid(in_h, out_h)
    x0, x1, fx = _grid(in_w, out_w)
    fy = fy[None, :, None]
    fx = fx[None, None, :]
    one = np.float32(1.0)
    out = np.zeros((c, in_h, in_w), dtype=np.float32)
    ch = np.arange(c)[:, None, None]
    yy0 = y0[None, :, None]
    yy1 = y1[None, :, None]
    xx0 = x0[None, None, :]
    xx1 = x1[None, None, :]
    np.add.at(out, (ch, yy0, xx0), (one - fy) * (one - fx) * grad)
    np.add.at(out, (ch, yy0, xx1), (one - fy) * fx * grad)
    np.add.at(out, (ch, yy1, xx0), fy * (one - fx) * grad)
    np.add.at(out, (ch, yy1, xx1), fy * fx * grad)
    return out
