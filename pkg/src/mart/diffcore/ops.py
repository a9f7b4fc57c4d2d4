"""Differentiable operations over :class:`~mart.diffcore.tensor.Tensor`.

Each op computes its forward value with numpy and, when recording, registers
a closure that maps the output gradient to input gradients.
"""

import hashlib
import threading
from contextlib import contextmanager

import numpy as np

from mart import _kernels
from mart.diffcore.tensor import Tensor, make_result
from mart.errors import DegenerateVectorError, DimensionError, DomainError, NumericError


def _lift(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _pair(a, b):
    if isinstance(a, Tensor):
        return a, _lift(b, a)
    b = _lift(b)
    return _lift(a, b), b


_branch_state = threading.local()


@contextmanager
def trace_branches():
    """Digest every ReLU mask and max-pool argmax computed inside the block.

    Two evaluations with equal digests took the same side of every kink, so
    the function is smooth along the segment between them.
    """
    digest = hashlib.blake2b(digest_size=16)
    prev = getattr(_branch_state, "digest", None)
    _branch_state.digest = digest
    try:
        yield digest
    finally:
        _branch_state.digest = prev


def _note_branch(arr):
    digest = getattr(_branch_state, "digest", None)
    if digest is not None:
        digest.update(np.ascontiguousarray(arr).tobytes())


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ----------------------------------------------------------------------------
# elementwise


def add(a, b):
    a, b = _pair(a, b)
    return make_result(
        "add", a.data + b.data, (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = _pair(a, b)
    return make_result(
        "sub", a.data - b.data, (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = _pair(a, b)
    return make_result(
        "mul", a.data * b.data, (a, b),
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
    )


def div(a, b):
    a, b = _pair(a, b)
    out = a.data / b.data
    return make_result(
        "div", out, (a, b),
        lambda g: (unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)),
    )


def neg(a):
    return make_result("neg", -a.data, (a,), lambda g: (-g,))


def scale(a, c):
    """Multiply by a python scalar ``c`` (not differentiated)."""
    c = a.data.dtype.type(c)
    return make_result("scale", a.data * c, (a,), lambda g: (g * c,))


def exp(a):
    out = np.exp(a.data)
    return make_result("exp", out, (a,), lambda g: (g * out,))


def log(a):
    if np.any(a.data <= 0):
        raise DomainError("log of non-positive value")
    return make_result("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def relu(a):
    mask = a.data > 0
    _note_branch(mask)
    return make_result("relu", np.where(mask, a.data, 0).astype(a.dtype), (a,), lambda g: (g * mask,))


def sum(a, axis=None, keepdims=False):  # noqa: A001
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return make_result("sum", out, (a,), backward)


def mean(a, axis=None, keepdims=False):
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size // max(out.size, 1)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / a.dtype.type(count), a.shape),)

    return make_result("mean", out, (a,), backward)


# ----------------------------------------------------------------------------
# shape manipulation


def reshape(a, shape):
    return make_result("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return make_result("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def take_rows(a, index):
    """Gather rows ``a[index]`` along axis 0; repeated indices accumulate."""
    index = np.asarray(index, dtype=np.intp)

    def backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, index, g)
        return (ga,)

    return make_result("take_rows", a.data[index], (a,), backward)


def concat(tensors, axis=0):
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    return make_result(
        "concat", np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
        lambda g: tuple(np.split(g, bounds, axis=axis)),
    )


# ----------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    """Matrix product with numpy semantics for stacked (batched) operands."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}") from exc

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return make_result("matmul", out, (a, b), backward)


def linear(x, weight, bias=None):
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


def softmax(x, axis=-1):
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax received non-finite input")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result("softmax", out, (x,), backward)


# ----------------------------------------------------------------------------
# cosine similarity


def _norms(x, what):
    n = np.sqrt((x * x).sum(axis=-1))
    if np.any(n == 0):
        raise DegenerateVectorError(f"zero-norm {what} vector in cosine similarity")
    return n


def cosine_sim(u, v):
    """Cosine similarity of two 1-D vectors as a scalar tensor."""
    if u.ndim != 1 or u.shape != v.shape:
        raise DimensionError(f"cosine_sim expects equal 1-D shapes, got {u.shape}, {v.shape}")
    nu, nv = _norms(u.data, "first"), _norms(v.data, "second")
    dot = u.data @ v.data
    s = dot / (nu * nv)

    def backward(g):
        gu = g * (v.data / (nu * nv) - s * u.data / (nu * nu))
        gv = g * (u.data / (nu * nv) - s * v.data / (nv * nv))
        return gu, gv

    return make_result("cosine_sim", np.asarray(s, dtype=u.dtype), (u, v), backward)


def rowwise_cosine(a, b):
    """Cosine similarity between matching rows: ``out[i] = sim(a[i], b[i])``."""
    if a.ndim != 2 or a.shape != b.shape:
        raise DimensionError(f"rowwise_cosine expects equal 2-D shapes, got {a.shape}, {b.shape}")
    na, nb = _norms(a.data, "first"), _norms(b.data, "second")
    dot = (a.data * b.data).sum(axis=-1)
    s = dot / (na * nb)

    def backward(g):
        g = g[:, None]
        ga = g * (b.data / (na * nb)[:, None] - (s / (na * na))[:, None] * a.data)
        gb = g * (a.data / (na * nb)[:, None] - (s / (nb * nb))[:, None] * b.data)
        return ga, gb

    return make_result("rowwise_cosine", s, (a, b), backward)


def pairwise_cosine(a, b):
    """All-pairs cosine similarity matrix ``out[i, j] = sim(a[i], b[j])``."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"pairwise_cosine shape mismatch: {a.shape}, {b.shape}")
    na, nb = _norms(a.data, "first"), _norms(b.data, "second")
    ah = a.data / na[:, None]
    bh = b.data / nb[:, None]
    s = ah @ bh.T

    def backward(g):
        # d s_ij / d a_i = (bh_j - s_ij ah_i) / |a_i|
        ga = (g @ bh - (g * s).sum(axis=1)[:, None] * ah) / na[:, None]
        gb = (g.T @ ah - (g * s).sum(axis=0)[:, None] * bh) / nb[:, None]
        return ga, gb

    return make_result("pairwise_cosine", s, (a, b), backward)


# ----------------------------------------------------------------------------
# convolutional blocks


def conv2d(x, kernels):
    """3x3 cross-correlation with zero padding 1.

    ``x`` is ``[C_in, H, W]`` or batched ``[N, C_in, H, W]``; ``kernels`` is
    ``[C_out, C_in, 3, 3]``.
    """
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4 or kernels.ndim != 4 or kernels.shape[2:] != (3, 3):
        raise DimensionError(f"conv2d expects [N,C,H,W] x [O,C,3,3], got {x.shape}, {kernels.shape}")
    n, c, h, w = xd.shape
    o = kernels.shape[0]
    if kernels.shape[1] != c:
        raise DimensionError(f"conv2d channel mismatch: input has {c}, kernels expect {kernels.shape[1]}")
    cols = _kernels.im2col3x3(xd)
    wmat = kernels.data.reshape(o, c * 9)
    out = np.matmul(wmat, cols).reshape(n, o, h, w)
    if single:
        out = out[0]

    def backward(g):
        gm = (g[None] if single else g).reshape(n, o, h * w)
        gw = np.einsum("nop,nkp->ok", gm, cols, optimize=True).reshape(kernels.shape)
        gx = None
        if x.requires_grad:
            gcols = np.matmul(wmat.T, gm)
            gx = _kernels.col2im3x3(gcols, h, w)
            if single:
                gx = gx[0]
        return gx, gw.astype(kernels.dtype, copy=False)

    return make_result("conv2d", out, (x, kernels), backward)


def maxpool2d(x, window=2):
    """Non-overlapping max pooling; gradient flows only to each window's argmax."""
    ph, pw = (window, window) if np.isscalar(window) else window
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    h, w = xd.shape[2:]
    if ph > h or pw > w:
        raise DimensionError(f"pool window {(ph, pw)} larger than spatial dims {(h, w)}")
    if h % ph or w % pw:
        raise DimensionError(f"spatial dims {(h, w)} not divisible by pool window {(ph, pw)}")
    out, arg = _kernels.maxpool2d_forward(xd, ph, pw)
    _note_branch(arg)
    if single:
        out = out[0]

    def backward(g):
        gx = _kernels.maxpool2d_backward(g[None] if single else g, arg, ph, pw)
        return (gx[0] if single else gx,)

    return make_result("maxpool2d", out, (x,), backward)


def batchnorm(x, gamma, beta, running_mean, running_var, training, momentum=0.1, eps=1e-5):
    """Per-channel batch normalisation over all axes except channel (axis 1).

    In training mode batch statistics are used and the running buffers are
    updated in place (unbiased variance); in eval mode the buffers are used.
    """
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    axes = (0, 2, 3)
    shape = (1, -1, 1, 1)
    dt = xd.dtype.type
    if training:
        mu = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        count = xd.size // xd.shape[1]
        unbiased = var * dt(count / max(count - 1, 1))
        running_mean *= dt(1 - momentum)
        running_mean += dt(momentum) * mu.astype(running_mean.dtype)
        running_var *= dt(1 - momentum)
        running_var += dt(momentum) * unbiased.astype(running_var.dtype)
    else:
        mu = running_mean.astype(xd.dtype)
        var = running_var.astype(xd.dtype)
    inv = 1.0 / np.sqrt(var + dt(eps))
    xhat = (xd - mu.reshape(shape)) * inv.reshape(shape)
    out = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)
    if single:
        out = out[0]

    def backward(g):
        gd = g[None] if single else g
        ggamma = (gd * xhat).sum(axis=axes)
        gbeta = gd.sum(axis=axes)
        gxhat = gd * gamma.data.reshape(shape)
        if training:
            m = dt(xd.size // xd.shape[1])
            gx = (inv.reshape(shape) / m) * (
                m * gxhat
                - gxhat.sum(axis=axes, keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            gx = gxhat * inv.reshape(shape)
        return (gx[0] if single else gx), ggamma, gbeta

    return make_result("batchnorm", out, (x, gamma, beta), backward)
