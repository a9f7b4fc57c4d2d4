"""MARTCKPT checkpoint files.

Layout (little-endian): magic ``MARTCKPT``, ``u32`` format version, then
records ``name_len:u32, name:utf8, rank:u32, dims:u32[rank], data:f32[prod(dims)]``.

Non-tensor state is stored in the same record form: the config text as
newline-padded UTF-8 bytes reinterpreted as f32 words (``meta/config``), and
counters as exact small floats.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from mart.diffcore.optim import AdamState
from mart.errors import ParseError
from mart.train.config import format_config, parse_config

MAGIC = b"MARTCKPT"
VERSION = 1


def _encode_text(text):
    raw = text.encode("utf-8")
    raw += b"\n" * (-len(raw) % 4)
    return np.frombuffer(raw, dtype="<f4")


def _decode_text(arr):
    return np.asarray(arr, dtype="<f4").tobytes().decode("utf-8")


def write_records(path, records):
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in records:
        arr = np.asarray(arr)
        data = arr if arr.dtype == np.dtype("<f4") else arr.astype("<f4")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)) + nb)
        chunks.append(struct.pack("<I", data.ndim) + struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(np.ascontiguousarray(data).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_records(path):
    """Parse every record before returning; raises :class:`ParseError` on damage."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise ParseError("not a MARTCKPT file (bad magic)", 0)
    if len(raw) < 12:
        raise ParseError("truncated header", len(raw))
    (version,) = struct.unpack_from("<I", raw, 8)
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version} (expected {VERSION})", 8)
    pos = 12
    records = {}

    def need(n, what):
        if pos + n > len(raw):
            raise ParseError(f"truncated {what}", pos)

    while pos < len(raw):
        need(4, "record name length")
        (nlen,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        need(nlen, "record name")
        try:
            name = raw[pos:pos + nlen].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("record name is not UTF-8", pos) from exc
        pos += nlen
        need(4, "rank")
        (rank,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        need(4 * rank, "dims")
        dims = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        need(4 * count, f"data of {name!r}")
        records[name] = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).reshape(dims).copy()
        pos += 4 * count
    return records


@dataclass
class Checkpoint:
    config: object
    params: dict
    buffers: dict
    optimizer: AdamState
    epoch: int  # completed epochs
    step: int  # completed optimisation steps
    extra: dict = field(default_factory=dict)


def save_checkpoint(path, model, opt_state, cfg, epoch, step):
    records = [
        ("meta/config", _encode_text(format_config(cfg))),
        ("meta/epoch", np.array([epoch], dtype="<f4")),
        ("meta/step", np.array([step], dtype="<f4")),
        ("adam/step", np.array([opt_state.step], dtype="<f4")),
    ]
    for name, p in model.parameters().items():
        records.append((f"param/{name}", p.data))
    for name, b in model.buffers().items():
        records.append((f"buffer/{name}", b))
    for name in model.parameters():
        if name in opt_state.first_moment:
            records.append((f"adam/m/{name}", opt_state.first_moment[name]))
            records.append((f"adam/v/{name}", opt_state.second_moment[name]))
    write_records(path, records)


def load_checkpoint(path):
    rec = read_records(path)
    for key in ("meta/config", "meta/epoch", "meta/step", "adam/step"):
        if key not in rec:
            raise ParseError(f"checkpoint lacks {key!r} record", None)
    cfg = parse_config(_decode_text(rec["meta/config"]))
    opt = AdamState(learning_rate=cfg.lr, weight_decay=cfg.weight_decay, step=int(rec["adam/step"][0]))
    params, buffers = {}, {}
    for name, arr in rec.items():
        if name.startswith("param/"):
            params[name[6:]] = arr
        elif name.startswith("buffer/"):
            buffers[name[7:]] = arr
        elif name.startswith("adam/m/"):
            opt.first_moment[name[7:]] = arr
        elif name.startswith("adam/v/"):
            opt.second_moment[name[7:]] = arr
    return Checkpoint(cfg, params, buffers, opt, int(rec["meta/epoch"][0]), int(rec["meta/step"][0]))


def restore_model(model, ckpt):
    """Copy checkpoint tensors into an already-built model of matching shape."""
    params = model.parameters()
    missing = set(params) - set(ckpt.params)
    if missing:
        raise ParseError(f"checkpoint is missing parameters: {sorted(missing)[:3]}", None)
    for name, p in params.items():
        src = ckpt.params[name]
        if src.shape != p.data.shape:
            raise ParseError(f"parameter {name!r} has shape {src.shape}, model expects {p.data.shape}", None)
        p.data = src.astype(p.data.dtype, copy=True)
    enc = model.encoder
    for i in range(len(enc.channels)):
        enc.running_means[i] = ckpt.buffers[f"encoder.bn{i}.running_mean"].copy()
        enc.running_vars[i] = ckpt.buffers[f"encoder.bn{i}.running_var"].copy()
    return model
