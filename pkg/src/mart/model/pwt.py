"""Part-whole interaction units and the stacked part-whole transformer.

Within one interaction unit the whole clip attends over its parts and every
part attends over its whole. Both directions read the unit's input vectors,
so their order does not matter. A clip at an intermediate level receives one
residual term from its children and one from its parent.
"""

from dataclasses import dataclass

import numpy as np

import mart.diffcore as dc
from mart.diffcore import Tensor
from mart.errors import ConfigError, DimensionError

# number of cross_attend evaluations since import; lets callers verify that
# ablated runs never touch attention
attention_calls = 0


def reset_attention_counter():
    global attention_calls
    attention_calls = 0


def cross_attend(queries, keys, values, heads, out_map=None):
    """Multi-head scaled dot-product attention.

    Inputs are ``[q, D_t]`` / ``[k, D_t]`` or group-batched ``[G, q, D_t]`` /
    ``[G, k, D_t]``. Heads are concatenated back to ``D_t``; ``out_map``
    (``[D_t, D_out]``) is applied afterwards when given.
    """
    global attention_calls
    attention_calls += 1
    unbatched = queries.ndim == 2
    if unbatched:
        queries, keys, values = (t.reshape(1, *t.shape) for t in (queries, keys, values))
    g, q, d_t = queries.shape
    k = keys.shape[1]
    if d_t % heads:
        raise DimensionError(f"attention width {d_t} not divisible by {heads} heads")
    if keys.shape != (g, k, d_t) or values.shape != (g, k, d_t):
        raise DimensionError(f"attention shape mismatch: q {queries.shape}, k {keys.shape}, v {values.shape}")
    dh = d_t // heads

    def split(t, n):
        return dc.transpose(t.reshape(g, n, heads, dh), (0, 2, 1, 3))

    qh, kh, vh = split(queries, q), split(keys, k), split(values, k)
    scores = dc.scale(qh @ dc.transpose(kh, (0, 1, 3, 2)), 1.0 / np.sqrt(dh))
    att = dc.softmax(scores, axis=-1)
    out = dc.transpose(att @ vh, (0, 2, 1, 3)).reshape(g, q, d_t)
    if out_map is not None:
        out = out @ out_map
    return out.reshape(q, out.shape[-1]) if unbatched else out


class InteractionUnit:
    """Q/K/V maps for one adjacent level pair, shared by all sibling groups there."""

    NAMES = ("wq_whole", "wk_whole", "wv_whole", "wq_part", "wk_part", "wv_part", "w_out")

    def __init__(self, d_e, d_t, heads=3, rng=None, dtype=np.float32):
        if d_t % heads:
            raise ConfigError(f"D_t={d_t} must be divisible by heads={heads}")
        rng = np.random.default_rng(0) if rng is None else rng
        self.d_e, self.d_t, self.heads = d_e, d_t, heads
        for name in self.NAMES[:-1]:
            w = rng.standard_normal((d_e, d_t)) / np.sqrt(d_e)
            setattr(self, name, Tensor(w.astype(dtype), requires_grad=True, name=name))
        w = rng.standard_normal((d_t, d_e)) / np.sqrt(d_t)
        self.w_out = Tensor(w.astype(dtype), requires_grad=True, name="w_out")

    def named_parameters(self, prefix=""):
        for name in self.NAMES:
            yield prefix + name, getattr(self, name)

    def whole_update(self, wholes, parts, m):
        """Attention term for each whole from its ``m`` parts: ``[G, D_e]``."""
        g = wholes.shape[0]
        q = (wholes @ self.wq_whole).reshape(g, 1, self.d_t)
        k = (parts @ self.wk_part).reshape(g, m, self.d_t)
        v = (parts @ self.wv_part).reshape(g, m, self.d_t)
        return cross_attend(q, k, v, self.heads, self.w_out).reshape(g, self.d_e)

    def part_update(self, wholes, parts, m):
        """Attention term for each part from its whole: ``[G * m, D_e]``."""
        g = wholes.shape[0]
        q = (parts @ self.wq_part).reshape(g, m, self.d_t)
        k = (wholes @ self.wk_whole).reshape(g, 1, self.d_t)
        v = (wholes @ self.wv_whole).reshape(g, 1, self.d_t)
        return cross_attend(q, k, v, self.heads, self.w_out).reshape(g * m, self.d_e)


def interact(whole, parts, unit, lam_down=1.0, lam_up=1.0):
    """One whole ``[1, D_e]`` and its parts ``[M, D_e]`` exchange information.

    Returns ``(whole + lam_down * A_down, parts + lam_up * A_up)`` where both
    attention terms are computed from the inputs.
    """
    m = parts.shape[0]
    whole_out, parts_out = whole, parts
    if lam_down != 0:
        whole_out = whole + dc.scale(unit.whole_update(whole, parts, m), lam_down)
    if lam_up != 0:
        parts_out = parts + dc.scale(unit.part_update(whole, parts, m), lam_up)
    return whole_out, parts_out


@dataclass
class HierState:
    """Per-level vectors; level ``n`` holds ``batch * M**n`` rows.

    Row ``b * M**n + m`` is node ``m`` of instance ``b``, so the children of
    row ``r`` at level ``n`` are rows ``r*M .. r*M + M - 1`` at level ``n+1``.
    """

    levels: list
    M: int
    post_interaction: bool = False

    @property
    def N(self):
        return len(self.levels)

    @property
    def batch(self):
        return self.levels[0].shape[0]

    def validate(self):
        b = self.batch
        for n, lvl in enumerate(self.levels):
            if lvl.ndim != 2 or lvl.shape[0] != b * self.M ** n:
                raise ConfigError(f"level {n} has shape {lvl.shape}, expected ({b * self.M ** n}, D)")


def _per_level(values, n_levels, name):
    if np.isscalar(values):
        return [float(values)] * n_levels
    values = [float(v) for v in values]
    if len(values) != n_levels:
        raise ConfigError(f"{name} needs {n_levels} entries, got {len(values)}")
    return values


def pwt_block(state, units, lam_down=1.0, lam_up=1.0):
    """Apply one part-whole transformer block.

    ``units[n]`` serves level pair ``(n, n+1)``. ``lam_down[n]`` scales the term a
    level-n whole receives from its children; ``lam_up[n]`` scales the term a
    level-n part receives from its parent. A zero weight skips that attention.
    """
    state.validate()
    n_levels = state.N
    if len(units) != n_levels - 1:
        raise ConfigError(f"{len(units)} interaction units for a {n_levels}-level state")
    lam_down = _per_level(lam_down, n_levels, "lam_down")
    lam_up = _per_level(lam_up, n_levels, "lam_up")
    m = state.M
    terms = [[] for _ in range(n_levels)]
    for n, unit in enumerate(units):
        wholes, parts = state.levels[n], state.levels[n + 1]
        if lam_down[n] != 0:
            terms[n].append(dc.scale(unit.whole_update(wholes, parts, m), lam_down[n]))
        if lam_up[n + 1] != 0:
            terms[n + 1].append(dc.scale(unit.part_update(wholes, parts, m), lam_up[n + 1]))
    out = []
    for lvl, extra in zip(state.levels, terms):
        for t in extra:
            lvl = lvl + t
        out.append(lvl)
    return HierState(out, m, post_interaction=True)


def pwt_stack(state, blocks, lam_down=1.0, lam_up=1.0):
    """Apply blocks in sequence; each consumes the previous block's output."""
    if not blocks:
        raise ConfigError("pwt_stack needs at least one block")
    for units in blocks:
        state = pwt_block(state, units, lam_down, lam_up)
    return state
