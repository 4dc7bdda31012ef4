# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_pykernels``.

Loop order inside the accumulating kernels mirrors the numpy fallback so
that both backends produce identical floating-point results.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil

cnp.import_array()

ctypedef fused real:
    float
    double


def _im2col(const real[:, :, :, ::1] x, real[:, ::1] cols, int k, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = h + 2 * pad - k + 1, wo = w + 2 * pad - k + 1
    cdef Py_ssize_t ci, i, j, b, y, xx, sy, sx, row, col
    with nogil:
        for ci in range(c):
            for i in range(k):
                for j in range(k):
                    row = (ci * k + i) * k + j
                    col = 0
                    for b in range(n):
                        for y in range(ho):
                            sy = y + i - pad
                            if sy < 0 or sy >= h:
                                for xx in range(wo):
                                    cols[row, col + xx] = 0
                            else:
                                for xx in range(wo):
                                    sx = xx + j - pad
                                    if sx < 0 or sx >= w:
                                        cols[row, col + xx] = 0
                                    else:
                                        cols[row, col + xx] = x[b, ci, sy, sx]
                            col += wo


def im2col(x, int k, int pad):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    ho = h + 2 * pad - k + 1
    wo = w + 2 * pad - k + 1
    cols = np.empty((c * k * k, n * ho * wo), dtype=x.dtype)
    _im2col(x, cols, k, pad)
    return cols


def _col2im(const real[:, ::1] cols, real[:, :, :, ::1] out, int k, int pad):
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], h = out.shape[2], w = out.shape[3]
    cdef Py_ssize_t ho = h + 2 * pad - k + 1, wo = w + 2 * pad - k + 1
    cdef Py_ssize_t ci, i, j, b, y, xx, sy, sx, row, col
    with nogil:
        for ci in range(c):
            for i in range(k):
                for j in range(k):
                    row = (ci * k + i) * k + j
                    col = 0
                    for b in range(n):
                        for y in range(ho):
                            sy = y + i - pad
                            if sy >= 0 and sy < h:
                                for xx in range(wo):
                                    sx = xx + j - pad
                                    if sx >= 0 and sx < w:
                                        out[b, ci, sy, sx] += cols[row, col + xx]
                            col += wo


def col2im(cols, shape, int k, int pad):
    cols = np.ascontiguousarray(cols)
    out = np.zeros(shape, dtype=cols.dtype)
    _col2im(cols, out, k, pad)
    return out


def _maxpool_fwd(const real[:, :, :, ::1] x, real[:, :, :, ::1] out, cnp.int8_t[:, :, :, ::1] arg):
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], h2 = out.shape[2], w2 = out.shape[3]
    cdef Py_ssize_t h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t b, ci, y, xx, q, sy, sx
    cdef real best, v
    cdef cnp.int8_t which
    with nogil:
        for b in range(n):
            for ci in range(c):
                for y in range(h2):
                    for xx in range(w2):
                        best = x[b, ci, 2 * y, 2 * xx]
                        which = 0
                        for q in range(1, 4):
                            sy = 2 * y + q // 2
                            sx = 2 * xx + q % 2
                            if sy >= h or sx >= w:
                                continue
                            v = x[b, ci, sy, sx]
                            if v > best:
                                best = v
                                which = <cnp.int8_t>q
                        out[b, ci, y, xx] = best
                        arg[b, ci, y, xx] = which


def maxpool2_forward(x):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    out = np.empty((n, c, (h + 1) // 2, (w + 1) // 2), dtype=x.dtype)
    arg = np.empty((n, c, (h + 1) // 2, (w + 1) // 2), dtype=np.int8)
    _maxpool_fwd(x, out, arg)
    return out, arg


def _maxpool_bwd(const real[:, :, :, ::1] dout, const cnp.int8_t[:, :, :, ::1] arg, real[:, :, :, ::1] dx):
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1], h2 = dout.shape[2], w2 = dout.shape[3]
    cdef Py_ssize_t b, ci, y, xx, q
    with nogil:
        for b in range(n):
            for ci in range(c):
                for y in range(h2):
                    for xx in range(w2):
                        q = arg[b, ci, y, xx]
                        dx[b, ci, 2 * y + q // 2, 2 * xx + q % 2] = dout[b, ci, y, xx]


def maxpool2_backward(dout, arg, shape):
    dout = np.ascontiguousarray(dout)
    dx = np.zeros(shape, dtype=dout.dtype)
    _maxpool_bwd(dout, np.ascontiguousarray(arg), dx)
    return dx


cdef inline double _at(const double[:, ::1] img, Py_ssize_t r, Py_ssize_t c) noexcept nogil:
    # replicate padding
    if r < 0:
        r = 0
    elif r >= img.shape[0]:
        r = img.shape[0] - 1
    if c < 0:
        c = 0
    elif c >= img.shape[1]:
        c = img.shape[1] - 1
    return img[r, c]


def lbp_codes(img, dy, dx, bint bilinear, int margin):
    cdef const double[:, ::1] im = np.ascontiguousarray(img, dtype=np.float64)
    cdef Py_ssize_t h = im.shape[0], w = im.shape[1]
    cdef Py_ssize_t p = len(dy)
    cdef double[::1] ddy = np.ascontiguousarray(dy, dtype=np.float64)
    cdef double[::1] ddx = np.ascontiguousarray(dx, dtype=np.float64)
    out = np.empty((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] codes = out
    cdef cnp.uint8_t[64] bits
    cdef Py_ssize_t r, c, q, r0, c0, r1, c1, ones, changes
    cdef double center, rr, cc, fr, fc, top, bottom, sample
    if p > 64:
        raise ValueError("at most 64 neighbours supported")
    with nogil:
        for r in range(h):
            for c in range(w):
                center = im[r, c]
                for q in range(p):
                    rr = r + ddy[q]
                    cc = c + ddx[q]
                    if bilinear:
                        r0 = <Py_ssize_t>floor(rr)
                        c0 = <Py_ssize_t>floor(cc)
                        r1 = <Py_ssize_t>ceil(rr)
                        c1 = <Py_ssize_t>ceil(cc)
                        fr = (margin + ddy[q]) - floor(margin + ddy[q])
                        fc = (margin + ddx[q]) - floor(margin + ddx[q])
                        top = (1 - fc) * _at(im, r0, c0) + fc * _at(im, r0, c1)
                        bottom = (1 - fc) * _at(im, r1, c0) + fc * _at(im, r1, c1)
                        sample = (1 - fr) * top + fr * bottom
                    else:
                        sample = _at(im, <Py_ssize_t>(rr), <Py_ssize_t>(cc))
                    bits[q] = 1 if sample >= center else 0
                ones = 0
                changes = 0
                for q in range(p):
                    ones += bits[q]
                    changes += bits[q] != bits[(q + 1) % p]
                codes[r, c] = <cnp.uint8_t>(ones if changes <= 2 else p + 1)
    return out
