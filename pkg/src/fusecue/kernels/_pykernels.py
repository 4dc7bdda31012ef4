"""Pure numpy implementations of the hot kernels.

These define the reference behaviour; the compiled core in ``_ckernels``
must agree with them bit for bit (the test suite checks this).
"""

import numpy as np


def im2col(x, k, pad):
    """Unfold ``x`` (N, C, H, W) for a stride-1 ``k``x``k`` convolution.

    Returns a (C*k*k, N*H_out*W_out) matrix whose rows follow the
    (C, kh, kw) order of a flattened weight tensor.
    """
    n, c, h, w = x.shape
    ho = h + 2 * pad - k + 1
    wo = w + 2 * pad - k + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((c, k, k, n, ho, wo), dtype=x.dtype)
    xt = xp.transpose(1, 0, 2, 3)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xt[:, :, i : i + ho, j : j + wo]
    return cols.reshape(c * k * k, n * ho * wo)


def col2im(cols, shape, k, pad):
    """Adjoint of :func:`im2col`: scatter-add columns back onto an image."""
    n, c, h, w = shape
    ho = h + 2 * pad - k + 1
    wo = w + 2 * pad - k + 1
    cols = cols.reshape(c, k, k, n, ho, wo)
    out = np.zeros((c, n, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + ho, j : j + wo] += cols[:, i, j]
    out = out[:, :, pad : pad + h, pad : pad + w] if pad else out
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


def maxpool2_forward(x):
    """2x2/stride-2 max pool in ceil mode.

    A trailing odd row/column forms its own (partial) window. Returns the
    pooled map and the winning position (0..3, row-major inside each
    window, first maximum wins).
    """
    n, c, h, w = x.shape
    h2, w2 = (h + 1) // 2, (w + 1) // 2
    if h % 2 or w % 2:
        x = np.pad(x, ((0, 0), (0, 0), (0, h % 2), (0, w % 2)), constant_values=-np.inf)
    win = x.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    arg = win.argmax(axis=-1).astype(np.int8)
    out = np.take_along_axis(win, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg


def maxpool2_backward(dout, arg, shape):
    n, c, h, w = shape
    h2, w2 = dout.shape[2], dout.shape[3]
    win = np.zeros((n, c, h2, w2, 4), dtype=dout.dtype)
    np.put_along_axis(win, arg[..., None].astype(np.intp), dout[..., None], axis=-1)
    dx = win.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
    return np.ascontiguousarray(dx[:, :, :h, :w])


def lbp_codes(img, dy, dx, bilinear, margin):
    """Rotation-invariant uniform LBP codes for a float64 plane.

    ``dy``/``dx`` are the per-neighbour sampling offsets, ``margin`` the
    replicate padding applied so that every sample stays inside the image.
    Codes are 0..P for uniform patterns (count of ones) and P+1 otherwise.
    """
    h, w = img.shape
    p = len(dy)
    padded = np.pad(img, margin, mode="edge")
    center = img
    bits = np.empty((p, h, w), dtype=np.uint8)
    for q in range(p):
        r = margin + dy[q]
        c = margin + dx[q]
        if bilinear:
            r0 = int(np.floor(r))
            c0 = int(np.floor(c))
            r1 = int(np.ceil(r))
            c1 = int(np.ceil(c))
            fr = r - r0
            fc = c - c0
            top = (1 - fc) * padded[r0 : r0 + h, c0 : c0 + w] + fc * padded[r0 : r0 + h, c1 : c1 + w]
            bottom = (1 - fc) * padded[r1 : r1 + h, c0 : c0 + w] + fc * padded[r1 : r1 + h, c1 : c1 + w]
            sample = (1 - fr) * top + fr * bottom
        else:
            r0 = int(r)
            c0 = int(c)
            sample = padded[r0 : r0 + h, c0 : c0 + w]
        bits[q] = sample >= center
    ones = bits.sum(axis=0, dtype=np.int64)
    changes = (bits != np.roll(bits, -1, axis=0)).sum(axis=0)
    return np.where(changes <= 2, ones, p + 1).astype(np.uint8)
