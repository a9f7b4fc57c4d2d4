"""Pretraining loop: data preparation, train step, epochs, checkpoints, loss log.

Every random draw comes from a generator seeded by ``(seed, epoch, step, b)``,
so the trajectory is a pure function of (config, corpus) and a run resumed
from any epoch checkpoint continues exactly as the unbroken run would.
"""

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

import mart.diffcore as dc
from mart.dsp.augment import AugmentationConfig, augment
from mart.dsp.spectral import logmel_for_clip
from mart.dsp.synth import read_manifest
from mart.dsp.wav import AudioBuffer
from mart.errors import NumericError
from mart.hac import build_tree, level_ratios
from mart.loss import ContrastiveBatch, hierarchical_loss, uses_hcl, uses_pwt
from mart.model import MARTModel
from mart.train.checkpoint import load_checkpoint, restore_model, save_checkpoint

log = logging.getLogger(__name__)


def fit_length(samples, length, rng=None):
    """Cyclically pad short signals; crop long ones (randomly when ``rng`` is given)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < length:
        return np.resize(x, length)
    start = 0 if rng is None or x.size == length else int(rng.integers(0, x.size - length + 1))
    return x[start:start + length]


def tree_specs(samples, tree, frames, sample_rate):
    """Log-mel matrices for every node, one ``[M**n, mel, frames]`` array per level."""
    return [
        np.stack([logmel_for_clip(samples, node.span, frames, sample_rate).matrix for node in lvl])
        for lvl in tree.levels
    ]


def step_rng(seed, epoch, step, b=None):
    key = [seed, epoch, step] if b is None else [seed, epoch, step, b]
    return np.random.default_rng(key)


def prepare_batch(waveforms, cfg, tree, epoch, step, aug_cfg):
    """Two augmented views per waveform -> (level specs, second-view root specs)."""
    levels = [[] for _ in range(cfg.N)]
    second = []
    for b, wav in enumerate(waveforms):
        rng = step_rng(cfg.seed, epoch, step, b)
        root = fit_length(wav, cfg.root_len, rng)
        buf = AudioBuffer(root, cfg.sample_rate)
        v1 = augment(buf, aug_cfg, rng).samples
        v2 = augment(buf, aug_cfg, rng).samples
        for n, arr in enumerate(tree_specs(v1, tree, cfg.frames, cfg.sample_rate)):
            levels[n].append(arr)
        second.append(logmel_for_clip(v2, None, cfg.frames, cfg.sample_rate).matrix)
    dtype = np.float32
    return [np.concatenate(lv).astype(dtype) for lv in levels], np.stack(second).astype(dtype)


def compute_loss(model, level_specs, second_view, tree, cfg, training=True):
    z_hat, z_tilde, _ = model.forward(level_specs, second_view, training=training,
                                      use_pwt=uses_pwt(cfg.ablation))
    batch = ContrastiveBatch(z_hat, z_tilde, cfg.M, level_ratios(tree))
    return hierarchical_loss(batch, cfg.tau, use_hcl=uses_hcl(cfg.ablation))


def train_step(model, opt_state, level_specs, second_view, tree, cfg, batch_seed=None):
    """Forward, backward and one Adam update. Returns the :class:`LossReport`."""
    params = model.parameters()
    model.zero_grad()
    with dc.Tape() as tape:
        report = compute_loss(model, level_specs, second_view, tree, cfg, training=True)
    if not np.isfinite(report.mean):
        raise NumericError(f"non-finite loss {report.mean} (batch seed {batch_seed})")
    tape.backward(report.loss)
    tape.release()
    grads = {name: p.grad for name, p in params.items() if p.grad is not None}
    dc.adam_step(params, grads, opt_state)
    return report


@dataclass
class TrainResult:
    model: MARTModel
    optimizer: dc.AdamState
    history: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)


def pretrain(cfg, corpus=None, resume=None, aug_cfg=None, log_path=None, stop_after_epochs=None):
    """Run ``cfg.epochs`` epochs over the corpus.

    ``corpus`` defaults to the manifest named in the config. ``resume`` is a
    checkpoint path; training continues after its last completed epoch.
    A checkpoint is written to ``cfg.checkpoint_dir`` (if set) after every
    epoch, and one JSON line per step is appended to ``log_path``.
    """
    cfg.validate()
    if corpus is None:
        corpus = read_manifest(cfg.manifest)
    aug_cfg = AugmentationConfig() if aug_cfg is None else aug_cfg
    if log_path is None and cfg.checkpoint_dir:
        log_path = os.path.join(cfg.checkpoint_dir, "loss.log")
    if cfg.checkpoint_dir:
        os.makedirs(cfg.checkpoint_dir, exist_ok=True)

    model = MARTModel.from_config(cfg)
    opt = dc.AdamState(learning_rate=cfg.lr, weight_decay=cfg.weight_decay)
    start_epoch, global_step = 0, 0
    if resume is not None:
        ckpt = load_checkpoint(resume)
        restore_model(model, ckpt)
        opt = ckpt.optimizer
        start_epoch, global_step = ckpt.epoch, ckpt.step

    tree = build_tree(cfg.root_len, cfg.M, cfg.N, cfg.min_leaf_len)
    waves = [t.samples for t in corpus.tracks]
    steps_per_epoch = max(1, len(waves) // cfg.batch_size)
    result = TrainResult(model, opt)
    end_epoch = cfg.epochs if stop_after_epochs is None else min(cfg.epochs, start_epoch + stop_after_epochs)
    for epoch in range(start_epoch, end_epoch):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(waves))
        for s in range(steps_per_epoch):
            idx = order[s * cfg.batch_size:(s + 1) * cfg.batch_size]
            if idx.size == 0:
                idx = order[: cfg.batch_size]
            specs, second = prepare_batch([waves[i] for i in idx], cfg, tree, epoch, s, aug_cfg)
            report = train_step(model, opt, specs, second, tree, cfg, batch_seed=(cfg.seed, epoch, s))
            global_step += 1
            entry = {"step": global_step, "epoch": epoch, **report.summary()}
            result.history.append(entry)
            if log_path:
                with open(log_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry) + "\n")
        log.info("epoch %d done, last loss %.5f", epoch, result.history[-1]["hc"])
        if cfg.checkpoint_dir:
            path = os.path.join(cfg.checkpoint_dir, f"epoch{epoch + 1:04d}.ckpt")
            save_checkpoint(path, model, opt, cfg, epoch + 1, global_step)
            result.checkpoints.append(path)
    return result


def read_loss_log(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
