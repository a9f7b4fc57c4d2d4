"""Embedding extraction and the MARTEMB1 embeddings file."""

import struct
from dataclasses import dataclass

import numpy as np

from mart.errors import NumericError, ParseError
from mart.hac import build_tree
from mart.loss import uses_pwt
from mart.train.loop import fit_length, tree_specs

MAGIC = b"MARTEMB1"


@dataclass
class EmbeddingSet:
    ids: list
    vectors: np.ndarray

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self):
        return self.vectors.shape[1]


def embed(model, tracks, cfg, chunk=16):
    """Eval-mode post-interaction root vectors for each track.

    Each track is reduced deterministically to the root length (leading
    samples, cyclic padding when short); no augmentation is applied.
    """
    tree = build_tree(cfg.root_len, cfg.M, cfg.N, cfg.min_leaf_len)
    ids, rows = [], []
    for start in range(0, len(tracks), chunk):
        group = tracks[start:start + chunk]
        per_level = [[] for _ in range(cfg.N)]
        for tr in group:
            root = fit_length(tr.samples, cfg.root_len)
            for n, arr in enumerate(tree_specs(root, tree, cfg.frames, cfg.sample_rate)):
                per_level[n].append(arr)
        specs = [np.concatenate(lv).astype(np.float32) for lv in per_level]
        rows.append(model.embed(specs, use_pwt=uses_pwt(cfg.ablation)))
        ids.extend(tr.track_id for tr in group)
    vectors = np.concatenate(rows) if rows else np.zeros((0, model.d_e), dtype=np.float32)
    if not np.all(np.isfinite(vectors)):
        raise NumericError("non-finite embedding produced")
    return EmbeddingSet(ids, vectors)


def write_embeddings(path, emb):
    chunks = [MAGIC, struct.pack("<I", emb.dim)]
    data = np.ascontiguousarray(emb.vectors, dtype="<f4")
    for track_id, row in zip(emb.ids, data):
        raw = track_id.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw + row.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_embeddings(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise ParseError("not a MARTEMB1 file (bad magic)", 0)
    if len(raw) < 12:
        raise ParseError("truncated header", len(raw))
    (dim,) = struct.unpack_from("<I", raw, 8)
    pos, ids, rows = 12, [], []
    while pos < len(raw):
        if pos + 4 > len(raw):
            raise ParseError("truncated id length", pos)
        (n,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        if pos + n + 4 * dim > len(raw):
            raise ParseError("truncated record", pos)
        ids.append(raw[pos:pos + n].decode("utf-8"))
        pos += n
        rows.append(np.frombuffer(raw, dtype="<f4", count=dim, offset=pos))
        pos += 4 * dim
    vectors = np.stack(rows) if rows else np.zeros((0, dim), dtype=np.float32)
    return EmbeddingSet(ids, vectors)
