"""Projection head mapping representations into the contrastive space."""

import numpy as np

import mart.diffcore as dc
from mart.diffcore import Tensor
from mart.errors import DimensionError


class ProjectionHead:
    """``Linear(hidden) -> ReLU -> Linear(out_dim)``."""

    def __init__(self, in_dim=512, hidden=512, out_dim=256, rng=None, dtype=np.float32):
        rng = np.random.default_rng(0) if rng is None else rng
        self.in_dim = in_dim

        def lin(fan_in, fan_out, name):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype)
            b = rng.uniform(-bound, bound, fan_out).astype(dtype)
            return (Tensor(w, requires_grad=True, name=f"{name}.weight"),
                    Tensor(b, requires_grad=True, name=f"{name}.bias"))

        self.w1, self.b1 = lin(in_dim, hidden, "fc1")
        self.w2, self.b2 = lin(hidden, out_dim, "fc2")

    def named_parameters(self, prefix="head."):
        for t in (self.w1, self.b1, self.w2, self.b2):
            yield prefix + t.name, t

    def __call__(self, x):
        if x.shape[-1] != self.in_dim:
            raise DimensionError(f"projection head expects width {self.in_dim}, got {x.shape}")
        if x.ndim == 1:
            return self(x.reshape(1, -1)).reshape(-1)
        h = dc.relu(dc.linear(x, self.w1, self.b1))
        return dc.linear(h, self.w2, self.b2)
