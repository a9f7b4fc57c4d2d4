"""FCN-style projection encoder shared by clips at every hierarchy level."""

import numpy as np

import mart.diffcore as dc
from mart.diffcore import Tensor
from mart.errors import DimensionError

FULL_CHANNELS = (16, 32, 64, 128, 128, 256, 512)


def channel_plan(d_e, n_blocks=7):
    """Scale the 7-block plan so that the last block outputs ``d_e`` channels."""
    if n_blocks == 7 and d_e == 512:
        return FULL_CHANNELS
    ratios = [c / 512 for c in FULL_CHANNELS]
    plan = [max(4, int(round(r * d_e))) for r in ratios[-n_blocks:]]
    plan[-1] = d_e
    return tuple(plan)


def padded_size(size, n_blocks):
    """Smallest size >= ``size`` divisible by ``2**p``, ``p = min(n_blocks, ceil(log2(size)))``."""
    p = min(n_blocks, int(np.ceil(np.log2(size))) if size > 1 else 0)
    q = 2 ** p
    return -(-size // q) * q


def pool_window(h, w):
    return (2 if h >= 2 else 1, 2 if w >= 2 else 1)


class Encoder:
    """Stack of (3x3 conv, batchnorm, ReLU, 2x2 max-pool) blocks plus global average pooling."""

    def __init__(self, channels=FULL_CHANNELS, in_channels=1, rng=None, dtype=np.float32):
        rng = np.random.default_rng(0) if rng is None else rng
        self.channels = tuple(channels)
        self.weights, self.gammas, self.betas = [], [], []
        self.running_means, self.running_vars = [], []
        c_in = in_channels
        for i, c in enumerate(self.channels):
            std = np.sqrt(2.0 / (c_in * 9))
            self.weights.append(Tensor((rng.standard_normal((c, c_in, 3, 3)) * std).astype(dtype),
                                       requires_grad=True, name=f"conv{i}.weight"))
            self.gammas.append(Tensor(np.ones(c, dtype=dtype), requires_grad=True, name=f"bn{i}.gamma"))
            self.betas.append(Tensor(np.zeros(c, dtype=dtype), requires_grad=True, name=f"bn{i}.beta"))
            self.running_means.append(np.zeros(c, dtype=dtype))
            self.running_vars.append(np.ones(c, dtype=dtype))
            c_in = c

    @property
    def out_dim(self):
        return self.channels[-1]

    def named_parameters(self, prefix="encoder."):
        for i, (w, g, b) in enumerate(zip(self.weights, self.gammas, self.betas)):
            yield f"{prefix}conv{i}.weight", w
            yield f"{prefix}bn{i}.gamma", g
            yield f"{prefix}bn{i}.beta", b

    def named_buffers(self, prefix="encoder."):
        for i, (m, v) in enumerate(zip(self.running_means, self.running_vars)):
            yield f"{prefix}bn{i}.running_mean", m
            yield f"{prefix}bn{i}.running_var", v

    def prepare(self, specs):
        """Stack spectrograms into ``[K, 1, H', W']`` with repeat-edge padding."""
        if isinstance(specs, np.ndarray):
            x = specs[None] if specs.ndim == 2 else specs
        elif hasattr(specs, "matrix"):
            x = specs.matrix[None]
        else:
            x = np.stack([getattr(s, "matrix", s) for s in specs])
        if x.ndim != 3:
            raise DimensionError(f"expected [K, mel, frames] spectrograms, got shape {x.shape}")
        x = x.astype(self.weights[0].dtype, copy=False)
        n_blocks = len(self.channels)
        h, w = x.shape[1:]
        ph, pw = padded_size(h, n_blocks) - h, padded_size(w, n_blocks) - w
        if ph or pw:
            x = np.pad(x, ((0, 0), (0, ph), (0, pw)), mode="edge")
        return x[:, None]

    def __call__(self, specs, training=False):
        """Encode a spectrogram (or a batch of them) into ``[K, out_dim]`` vectors."""
        if isinstance(specs, Tensor):
            x = specs
        else:
            x = Tensor(self.prepare(specs))
        if x.ndim != 4 or x.shape[1] != self.weights[0].shape[1]:
            raise DimensionError(f"encoder expects [K, {self.weights[0].shape[1]}, H, W], got {x.shape}")
        for w, g, b, rm, rv in zip(self.weights, self.gammas, self.betas, self.running_means, self.running_vars):
            x = dc.conv2d(x, w)
            x = dc.batchnorm(x, g, b, rm, rv, training)
            x = dc.relu(x)
            x = dc.maxpool2d(x, pool_window(*x.shape[2:]))
        return dc.mean(x, axis=(2, 3))
