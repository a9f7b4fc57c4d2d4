"""Pure numpy implementations of the convolution and pooling kernels.

These are the reference versions; the compiled extension must produce
bitwise-identical results.
"""

import numpy as np


def im2col3x3(x):
    """Unfold ``x[N, C, H, W]`` into ``cols[N, C*9, H*W]`` with zero padding 1."""
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    cols = np.empty((n, c, 9, h, w), dtype=x.dtype)
    for ki in range(3):
        for kj in range(3):
            cols[:, :, ki * 3 + kj] = xp[:, :, ki:ki + h, kj:kj + w]
    return cols.reshape(n, c * 9, h * w)


def col2im3x3(cols, h, w):
    """Adjoint of :func:`im2col3x3`: scatter-add columns back onto the image."""
    n = cols.shape[0]
    c = cols.shape[1] // 9
    cols = cols.reshape(n, c, 9, h, w)
    xp = np.zeros((n, c, h + 2, w + 2), dtype=cols.dtype)
    for ki in range(3):
        for kj in range(3):
            xp[:, :, ki:ki + h, kj:kj + w] += cols[:, :, ki * 3 + kj]
    return np.ascontiguousarray(xp[:, :, 1:-1, 1:-1])


def maxpool2d_forward(x, ph, pw):
    """Non-overlapping max pooling; returns output and the in-window argmax.

    Ties resolve to the first position in row-major window order.
    """
    n, c, h, w = x.shape
    oh, ow = h // ph, w // pw
    win = x.reshape(n, c, oh, ph, ow, pw).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, oh, ow, ph * pw)
    arg = win.argmax(axis=-1).astype(np.int8)
    out = np.take_along_axis(win, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg


def maxpool2d_backward(gy, arg, ph, pw):
    n, c, oh, ow = gy.shape
    gwin = np.zeros((n, c, oh, ow, ph * pw), dtype=gy.dtype)
    np.put_along_axis(gwin, arg[..., None].astype(np.intp), gy[..., None], axis=-1)
    gwin = gwin.reshape(n, c, oh, ow, ph, pw).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(gwin.reshape(n, c, oh * ph, ow * pw))
