"""Adam with decoupled weight decay."""

from dataclasses import dataclass, field

import numpy as np

from mart.errors import DimensionError


@dataclass
class AdamState:
    learning_rate: float = 3e-4
    weight_decay: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """Update ``params`` (name -> Tensor) in place from ``grads`` (name -> array).

    Decay is applied to the parameter first (``p -= lr * wd * p``), then the
    bias-corrected Adam update. Parameters without a gradient still decay.
    """
    state.step += 1
    t = state.step
    lr = state.learning_rate
    for name, p in params.items():
        g = grads.get(name)
        dt = p.data.dtype.type
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.data.shape:
            raise DimensionError(f"gradient for {name!r} has shape {g.shape}, parameter {p.data.shape}")
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        elif m.shape != p.data.shape:
            raise DimensionError(f"moment for {name!r} has shape {m.shape}, parameter {p.data.shape}")
        if state.weight_decay:
            p.data -= dt(lr * state.weight_decay) * p.data
        m = dt(state.beta1) * m + dt(1 - state.beta1) * g
        v = dt(state.beta2) * v + dt(1 - state.beta2) * (g * g)
        mhat = m / dt(1 - state.beta1 ** t)
        vhat = v / dt(1 - state.beta2 ** t)
        p.data -= dt(lr) * mhat / (np.sqrt(vhat) + dt(state.epsilon))
        state.first_moment[name] = m
        state.second_moment[name] = v
    return params, state
