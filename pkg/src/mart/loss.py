"""Hierarchical contrastive loss.

For instance ``b`` with temperature ``tau``::

    pw_b  = sum_i sum_{whole w at level i} sum_{child c of w}
                ratio(c, w) * exp(sim(z_w, z_c) / tau)
    pos_b = exp(sim(root_b, view_b) / tau)
    neg_b = sum_u exp(sim(root_b, view_u) / tau)
          + sum_{u != b} exp(sim(root_b, root_u) / tau)
    L_b   = -log((pw_b + pos_b) / (pw_b + neg_b))

``root`` are the interacted root vectors and ``view`` the encoder-only
vectors of the second augmented view, all after the projection head.
"""

from dataclasses import dataclass, field

import numpy as np

import mart.diffcore as dc
from mart.diffcore import Tensor
from mart.errors import NumericError

ABLATIONS = ("full", "no_hcl", "no_pwt", "neither")


@dataclass
class ContrastiveBatch:
    """Head outputs of one batch.

    ``z_hat[n]`` is ``[B * M**n, d]`` (row ``b * M**n + m``), ``z_tilde`` is
    ``[B, d]``, and ``ratios[n - 1]`` holds ``len(child) / len(parent)`` for the
    ``M**n`` nodes of level ``n`` of one instance's tree.
    """

    z_hat: list
    z_tilde: Tensor
    M: int
    ratios: list = field(default_factory=list)

    @property
    def B(self):
        return self.z_tilde.shape[0]


@dataclass
class LossReport:
    loss: Tensor
    pw: np.ndarray
    neg: np.ndarray
    pos: np.ndarray
    hc: np.ndarray
    level_partials: list

    @property
    def mean(self):
        return float(self.loss.item())

    def summary(self):
        return {
            "hc": self.mean,
            "pw": float(np.mean(self.pw)),
            "partials": [float(p) for p in self.level_partials],
        }


def part_whole_terms(batch, tau):
    """Per-instance part-whole sums ``[B]`` and per-level-pair batch means."""
    b = batch.B
    m = batch.M
    total = None
    partials = []
    for i in range(len(batch.z_hat) - 1):
        wholes, parts = batch.z_hat[i], batch.z_hat[i + 1]
        rows = np.repeat(np.arange(wholes.shape[0]), m)
        sims = dc.rowwise_cosine(dc.take_rows(wholes, rows), parts)
        weights = np.tile(np.asarray(batch.ratios[i], dtype=parts.dtype), b)
        terms = dc.exp(dc.scale(sims, 1.0 / tau)) * weights
        per_instance = dc.sum(terms.reshape(b, -1), axis=1)
        partials.append(float(per_instance.data.mean()))
        total = per_instance if total is None else total + per_instance
    if total is None:
        total = Tensor(np.zeros(b, dtype=batch.z_tilde.dtype))
    return total, partials


def negative_terms(batch, tau):
    """``(neg, pos)``: InfoNCE denominator and positive term per instance, each ``[B]``."""
    b = batch.B
    root = batch.z_hat[0]
    inv = 1.0 / tau
    cross = dc.exp(dc.scale(dc.pairwise_cosine(root, batch.z_tilde), inv))
    within = dc.exp(dc.scale(dc.pairwise_cosine(root, root), inv))
    eye = np.eye(b, dtype=root.dtype)
    pos = dc.sum(cross * eye, axis=1)
    neg = dc.sum(cross, axis=1) + dc.sum(within * (1 - eye), axis=1)
    return neg, pos


def hierarchical_loss(batch, tau=0.5, use_hcl=True):
    """Batch mean of the per-instance loss, with its components."""
    neg, pos = negative_terms(batch, tau)
    if use_hcl:
        pw, partials = part_whole_terms(batch, tau)
    else:
        pw, partials = Tensor(np.zeros(batch.B, dtype=batch.z_tilde.dtype)), []
    numer = pw + pos
    denom = pw + neg
    for name, t in (("numerator", numer), ("denominator", denom)):
        bad = np.flatnonzero(~np.isfinite(t.data))
        if bad.size:
            raise NumericError(f"non-finite loss {name} for instance {int(bad[0])}")
    hc = dc.log(denom) - dc.log(numer)
    return LossReport(dc.mean(hc), pw.data.copy(), neg.data.copy(), pos.data.copy(),
                      hc.data.copy(), partials)


def ablation_variants(batch, flag, tau=0.5):
    """Loss under an ablation flag.

    ``no_hcl`` drops the part-whole terms. ``no_pwt`` changes only the forward
    pass (interaction bypassed upstream), so here it equals ``full``.
    """
    if flag not in ABLATIONS:
        raise ValueError(f"unknown ablation {flag!r}; expected one of {ABLATIONS}")
    return hierarchical_loss(batch, tau, use_hcl=flag in ("full", "no_pwt"))


def uses_pwt(flag):
    return flag in ("full", "no_hcl")


def uses_hcl(flag):
    return flag in ("full", "no_pwt")
