"""End-to-end gradient check of the full model and hierarchical loss."""

import dataclasses

import numpy as np

from mart.diffcore import grad_check
from mart.hac import build_tree, level_ratios
from mart.loss import ContrastiveBatch, hierarchical_loss
from mart.model import MARTModel
from mart.train.config import TrainConfig


def model_gradcheck(cfg=None, batch=2, max_coords=6, h=1e-5, tolerance=1e-4, seed=0, kink_guard=True):
    """Finite-difference check of every parameter tensor of a float64 model.

    Inputs are random log-mel-like arrays of the configured size. At most
    ``max_coords`` coordinates are probed per tensor. Batch norm runs in
    training mode, so batch statistics are part of the checked graph.
    """
    cfg = cfg or TrainConfig.desk()
    cfg = dataclasses.replace(cfg, seed=seed)
    model = MARTModel.from_config(cfg, dtype=np.float64)
    tree = build_tree(cfg.root_len, cfg.M, cfg.N, 1)
    rng = np.random.default_rng([seed, 1])
    specs = [rng.normal(-4.0, 2.0, (batch * cfg.M ** n, 128, cfg.frames)) for n in range(cfg.N)]
    second = rng.normal(-4.0, 2.0, (batch, 128, cfg.frames))
    ratios = level_ratios(tree)

    def loss():
        z_hat, z_tilde, _ = model.forward(specs, second, training=True)
        return hierarchical_loss(ContrastiveBatch(z_hat, z_tilde, cfg.M, ratios), cfg.tau).loss

    return grad_check(loss, model.parameters(), h=h, tolerance=tolerance,
                      max_coords=max_coords, seed=seed, kink_guard=kink_guard)
