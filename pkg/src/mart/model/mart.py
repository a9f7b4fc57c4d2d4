"""Full model: shared encoder, stacked part-whole transformer, projection head."""

import numpy as np

import mart.diffcore as dc
from mart.model.encoder import Encoder, channel_plan
from mart.model.head import ProjectionHead
from mart.model.pwt import HierState, InteractionUnit, pwt_stack


class MARTModel:
    def __init__(self, M=2, N=4, d_e=512, d_t=192, heads=3, blocks=3, contrastive_dim=256,
                 head_hidden=None, encoder_channels=None, lam_down=1.0, lam_up=1.0,
                 seed=0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.M, self.N = M, N
        self.lam_down, self.lam_up = lam_down, lam_up
        channels = encoder_channels or channel_plan(d_e)
        self.encoder = Encoder(channels, rng=rng, dtype=dtype)
        self.d_e = self.encoder.out_dim
        self.blocks = [
            [InteractionUnit(self.d_e, d_t, heads, rng=rng, dtype=dtype) for _ in range(N - 1)]
            for _ in range(blocks)
        ]
        self.head = ProjectionHead(self.d_e, head_hidden or self.d_e, contrastive_dim, rng=rng, dtype=dtype)

    @classmethod
    def from_config(cls, cfg, dtype=np.float32):
        return cls(M=cfg.M, N=cfg.N, d_e=cfg.d_e, d_t=cfg.d_t, heads=cfg.heads, blocks=cfg.blocks,
                   contrastive_dim=cfg.contrastive_dim, lam_down=cfg.lam_down, lam_up=cfg.lam_up,
                   seed=cfg.seed, dtype=dtype)

    def parameters(self):
        params = dict(self.encoder.named_parameters())
        for i, units in enumerate(self.blocks):
            for n, unit in enumerate(units):
                params.update(unit.named_parameters(f"pwt.block{i}.unit{n}."))
        params.update(self.head.named_parameters())
        return params

    def buffers(self):
        return dict(self.encoder.named_buffers())

    def astype(self, dtype):
        """Convert all parameters and buffers in place (e.g. float64 for gradient checks)."""
        for p in self.parameters().values():
            p.data = p.data.astype(dtype)
        enc = self.encoder
        enc.running_means = [b.astype(dtype) for b in enc.running_means]
        enc.running_vars = [b.astype(dtype) for b in enc.running_vars]
        return self

    def zero_grad(self):
        for p in self.parameters().values():
            p.grad = None

    def encode_tree(self, level_specs, extra_specs=None, training=False):
        """Encode every clip of the hierarchy (and optional extra clips) in one batch.

        ``level_specs[n]`` is ``[B * M**n, mel, T]``. Returns the pre-interaction
        :class:`HierState` and the encoded extras (or ``None``).
        """
        groups = list(level_specs) + ([extra_specs] if extra_specs is not None else [])
        counts = [g.shape[0] for g in groups]
        enc = self.encoder(np.concatenate(groups), training=training)
        parts, off = [], 0
        for c in counts:
            parts.append(dc.take_rows(enc, np.arange(off, off + c)) if len(counts) > 1 else enc)
            off += c
        extra = parts.pop() if extra_specs is not None else None
        return HierState(parts, self.M), extra

    def interact(self, state, use_pwt=True):
        if not use_pwt or self.N < 2:
            return HierState(list(state.levels), state.M, post_interaction=True)
        return pwt_stack(state, self.blocks, self.lam_down, self.lam_up)

    def project_levels(self, state):
        """Projection-head outputs for every level, one tensor per level."""
        counts = [lvl.shape[0] for lvl in state.levels]
        z = self.head(dc.concat(state.levels, axis=0) if len(counts) > 1 else state.levels[0])
        out, off = [], 0
        for c in counts:
            out.append(dc.take_rows(z, np.arange(off, off + c)) if len(counts) > 1 else z)
            off += c
        return out

    def forward(self, level_specs, second_view=None, training=False, use_pwt=True):
        """Full contrastive forward pass.

        Returns ``(z_hat, z_tilde, post_state)``: head outputs for every node of
        the interacted hierarchy, head outputs of the encoder-only second view
        roots (``None`` when no second view is given), and the interacted state.
        """
        pre, extra = self.encode_tree(level_specs, second_view, training)
        post = self.interact(pre, use_pwt)
        z_hat = self.project_levels(post)
        z_tilde = self.head(extra) if extra is not None else None
        return z_hat, z_tilde, post

    def embed(self, level_specs, use_pwt=True):
        """Eval-mode root representations ``[B, D_e]`` after interaction."""
        pre, _ = self.encode_tree(level_specs, None, training=False)
        return self.interact(pre, use_pwt).levels[0].data
