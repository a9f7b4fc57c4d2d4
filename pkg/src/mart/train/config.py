"""Training configuration and its line-based ``key = value`` file format."""

import dataclasses
from dataclasses import dataclass

from mart.dsp.spectral import WINDOW_SIZE, min_span_length
from mart.errors import ConfigError, ParseError
from mart.loss import ABLATIONS


@dataclass
class TrainConfig:
    M: int = 2
    N: int = 4
    sample_rate: int = 16000
    root_seconds: float = 12.8
    frames: int = 128
    d_e: int = 512
    d_t: int = 192
    heads: int = 3
    blocks: int = 3
    contrastive_dim: int = 256
    tau: float = 0.5
    lam_down: tuple = 1.0
    lam_up: tuple = 1.0
    batch_size: int = 48
    lr: float = 3e-4
    weight_decay: float = 1e-6
    epochs: int = 300
    seed: int = 0
    ablation: str = "full"
    manifest: str = ""
    checkpoint_dir: str = ""

    @classmethod
    def desk(cls, **overrides):
        """Reduced widths and batch that train on one CPU core in minutes."""
        base = dict(d_e=64, d_t=24, frames=32, batch_size=8, epochs=20, root_seconds=3.2, lr=1e-3)
        base.update(overrides)
        return cls(**base)

    @property
    def root_len(self):
        return int(round(self.root_seconds * self.sample_rate))

    @property
    def min_leaf_len(self):
        return min_span_length(self.frames, WINDOW_SIZE)

    def validate(self):
        for name in ("M", "N", "sample_rate", "frames", "d_e", "d_t", "heads", "blocks",
                     "contrastive_dim", "batch_size", "epochs"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("root_seconds", "tau", "lr"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if self.M < 2:
            raise ConfigError("M must be at least 2")
        if self.d_t % self.heads:
            raise ConfigError(f"d_t={self.d_t} is not divisible by heads={self.heads}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}")
        for name in ("lam_down", "lam_up"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) and len(v) != self.N:
                raise ConfigError(f"{name} needs one value or {self.N} per-level values")
        leaf = self.root_len // self.M ** (self.N - 1)
        if leaf < self.min_leaf_len:
            raise ConfigError(
                f"leaf clips of {leaf} samples are shorter than the {self.min_leaf_len} needed for "
                f"{self.frames} frames; increase root_seconds or reduce N/frames"
            )
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _coerce(name, text, lineno):
    default = _FIELDS[name].default
    try:
        if name in ("lam_down", "lam_up"):
            vals = [float(v) for v in text.split(",") if v.strip()]
            return vals[0] if len(vals) == 1 else tuple(vals)
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise ParseError(f"bad value {text!r} for {name}", lineno) from exc
    return text


def parse_config(text, base=None):
    """Parse ``key = value`` lines (``#`` comments allowed) over ``base``."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw!r}", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ParseError(f"unknown config key {key!r}", lineno)
        values[key] = _coerce(key, val, lineno)
    return dataclasses.replace(base or TrainConfig(), **values)


def load_config(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def format_config(cfg):
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, (tuple, list)):
            v = ",".join(repr(float(x)) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
