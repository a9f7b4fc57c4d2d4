"""Central finite-difference verification of reverse-mode gradients."""

from dataclasses import dataclass, field

import numpy as np

from mart.diffcore.ops import trace_branches
from mart.diffcore.tensor import Tape
from mart.errors import NumericError


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    checked: int
    per_param: dict = field(default_factory=dict)
    worst: tuple = None  # (param index or name, flat coordinate, analytic, numeric)
    kinked: list = field(default_factory=list)  # (key, coord, analytic, numeric at h, rechecked error)

    @property
    def kink_max_error(self):
        """Worst error over kink-straddling coordinates after the smaller-step recheck."""
        return max((k[4] for k in self.kinked), default=0.0)

    @property
    def passed(self):
        return max(self.max_rel_error, self.kink_max_error) < self.tolerance


def _value(f):
    with trace_branches() as digest:
        v = f()
    val = float(np.asarray(v.data).reshape(-1)[0])
    if not np.isfinite(val):
        raise NumericError(f"gradient check aborted: loss evaluated to {val}")
    return val, digest.digest()


def _central(f, flat, i, h):
    orig = flat[i]
    flat[i] = orig + h
    fp, sp = _value(f)
    flat[i] = orig - h
    fm, sm = _value(f)
    flat[i] = orig
    return (fp - fm) / (2 * h), sp, sm


def grad_check(f, params, h=1e-5, tolerance=1e-4, max_coords=None, seed=0, floor=1e-6,
               kink_guard=False, kink_h=1e-7):
    """Compare analytic gradients of scalar ``f()`` against central differences.

    ``params`` is a list of tensors or a name -> tensor mapping; ``f`` must read
    them (in float64) on each call. The relative error for one coordinate is
    ``|a - n| / max(|a|, |n|, floor)``. ``max_coords`` caps the number of
    coordinates probed per tensor (sampled without replacement).

    With ``kink_guard`` the ReLU/max-pool branch pattern is fingerprinted at
    ``x - h``, ``x`` and ``x + h``. A stencil whose pattern changes straddles a
    point of non-differentiability; it is excluded from ``max_rel_error``,
    listed in ``kinked`` and re-measured with step ``kink_h``.
    """
    named = list(params.items()) if isinstance(params, dict) else list(enumerate(params))
    for _, p in named:
        p.grad = None
        p.requires_grad = True
    with Tape() as tape:
        loss = f()
    val = float(np.asarray(loss.data).reshape(-1)[0])
    if not np.isfinite(val):
        raise NumericError(f"gradient check aborted: loss evaluated to {val}")
    tape.backward(loss)
    tape.release()
    _, base_sig = _value(f)

    rng = np.random.default_rng(seed)
    worst_err, worst, checked, per_param, kinked = 0.0, None, 0, {}, []
    for key, p in named:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        p_err = 0.0
        for i in coords:
            num, sp, sm = _central(f, flat, i, h)
            a = float(analytic.reshape(-1)[i])
            err = abs(a - num) / max(abs(a), abs(num), floor)
            if kink_guard and not (sp == base_sig == sm):
                small, _, _ = _central(f, flat, i, kink_h)
                recheck = abs(a - small) / max(abs(a), abs(small), floor)
                kinked.append((key, int(i), a, num, recheck))
                continue
            p_err = max(p_err, err)
            if err >= worst_err:
                worst_err, worst = err, (key, int(i), a, num)
            checked += 1
        per_param[key] = p_err
    return GradCheckReport(worst_err, tolerance, checked, per_param, worst, kinked)
