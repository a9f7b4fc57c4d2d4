# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution/pooling kernels. Same contracts as ``_pykernels``."""

import numpy as np
cimport cython

ctypedef fused real:
    float
    double


def _im2col3x3(const real[:, :, :, ::1] x, real[:, :, ::1] cols):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t b, ch, ki, kj, i, j, si, sj, row
    with nogil:
        for b in range(n):
            for ch in range(c):
                for ki in range(3):
                    for kj in range(3):
                        row = ch * 9 + ki * 3 + kj
                        for i in range(h):
                            si = i + ki - 1
                            if si < 0 or si >= h:
                                for j in range(w):
                                    cols[b, row, i * w + j] = 0
                                continue
                            for j in range(w):
                                sj = j + kj - 1
                                if sj < 0 or sj >= w:
                                    cols[b, row, i * w + j] = 0
                                else:
                                    cols[b, row, i * w + j] = x[b, ch, si, sj]


def im2col3x3(x):
    n, c, h, w = x.shape
    x = np.ascontiguousarray(x)
    cols = np.empty((n, c * 9, h * w), dtype=x.dtype)
    _im2col3x3(x, cols)
    return cols


def _col2im3x3(const real[:, :, ::1] cols, real[:, :, :, ::1] out):
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], h = out.shape[2], w = out.shape[3]
    cdef Py_ssize_t b, ch, ki, kj, i, j, si, sj, row
    # accumulation order (ki, kj) outermost matches the numpy reference
    with nogil:
        for b in range(n):
            for ch in range(c):
                for ki in range(3):
                    for kj in range(3):
                        row = ch * 9 + ki * 3 + kj
                        for i in range(h):
                            si = i + ki - 1
                            if si < 0 or si >= h:
                                continue
                            for j in range(w):
                                sj = j + kj - 1
                                if 0 <= sj < w:
                                    out[b, ch, si, sj] += cols[b, row, i * w + j]


def col2im3x3(cols, h, w):
    n = cols.shape[0]
    c = cols.shape[1] // 9
    cols = np.ascontiguousarray(cols)
    out = np.zeros((n, c, h, w), dtype=cols.dtype)
    _col2im3x3(cols, out)
    return out


def _maxpool_fwd(const real[:, :, :, ::1] x, real[:, :, :, ::1] out,
                 signed char[:, :, :, ::1] arg, Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], oh = out.shape[2], ow = out.shape[3]
    cdef Py_ssize_t b, ch, i, j, di, dj
    cdef real best, v
    cdef signed char k, bestk
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(oh):
                    for j in range(ow):
                        best = x[b, ch, i * ph, j * pw]
                        bestk = 0
                        k = 0
                        for di in range(ph):
                            for dj in range(pw):
                                v = x[b, ch, i * ph + di, j * pw + dj]
                                if v > best:
                                    best = v
                                    bestk = k
                                k += 1
                        out[b, ch, i, j] = best
                        arg[b, ch, i, j] = bestk


def maxpool2d_forward(x, ph, pw):
    n, c, h, w = x.shape
    x = np.ascontiguousarray(x)
    out = np.empty((n, c, h // ph, w // pw), dtype=x.dtype)
    arg = np.empty((n, c, h // ph, w // pw), dtype=np.int8)
    _maxpool_fwd(x, out, arg, ph, pw)
    return out, arg


def _maxpool_bwd(const real[:, :, :, ::1] gy, const signed char[:, :, :, ::1] arg,
                 real[:, :, :, ::1] gx, Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t n = gy.shape[0], c = gy.shape[1], oh = gy.shape[2], ow = gy.shape[3]
    cdef Py_ssize_t b, ch, i, j
    cdef signed char k
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(oh):
                    for j in range(ow):
                        k = arg[b, ch, i, j]
                        gx[b, ch, i * ph + k // pw, j * pw + k % pw] = gy[b, ch, i, j]


def maxpool2d_backward(gy, arg, ph, pw):
    n, c, oh, ow = gy.shape
    gy = np.ascontiguousarray(gy)
    gx = np.zeros((n, c, oh * ph, ow * pw), dtype=gy.dtype)
    _maxpool_bwd(gy, np.ascontiguousarray(arg), gx, ph, pw)
    return gx
