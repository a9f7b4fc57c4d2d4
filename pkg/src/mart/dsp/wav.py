"""RIFF/WAVE reading and writing (PCM16 and float32) and linear resampling."""

import struct
from dataclasses import dataclass

import numpy as np

from mart.errors import ParseError

_PCM = 1
_FLOAT = 3
_EXTENSIBLE = 0xFFFE


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ValueError("AudioBuffer needs a non-empty 1-D sample array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("AudioBuffer samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


def _parse(raw):
    if len(raw) < 12:
        raise ParseError("file shorter than RIFF header", len(raw))
    if raw[0:4] != b"RIFF":
        raise ParseError("missing RIFF magic", 0)
    if raw[8:12] != b"WAVE":
        raise ParseError("missing WAVE form type", 8)
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = pos + 8
        if body + size > len(raw):
            raise ParseError(f"chunk {cid!r} truncated", pos)
        if cid == b"fmt ":
            if size < 16:
                raise ParseError("fmt chunk too small", pos)
            tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", raw, body)
            if tag == _EXTENSIBLE and size >= 26:
                (tag,) = struct.unpack_from("<H", raw, body + 24)
            fmt = (tag, channels, rate, bits, body)
        elif cid == b"data":
            data = (body, size)
        pos = body + size + (size & 1)
    if fmt is None:
        raise ParseError("no fmt chunk", pos)
    if data is None:
        raise ParseError("no data chunk", pos)
    return fmt, data


def load_wav(path):
    """Decode a PCM16 or float32 WAV file; stereo is averaged down to mono."""
    with open(path, "rb") as fh:
        raw = fh.read()
    (tag, channels, rate, bits, fmt_off), (off, size) = _parse(raw)
    if channels < 1:
        raise ParseError("zero channels", fmt_off + 2)
    if tag == _PCM and bits == 16:
        pcm = np.frombuffer(raw, dtype="<i2", count=size // 2, offset=off).astype(np.float64) / 32768.0
    elif tag == _FLOAT and bits == 32:
        pcm = np.frombuffer(raw, dtype="<f4", count=size // 4, offset=off).astype(np.float64)
    else:
        raise ParseError(f"unsupported codec (format tag {tag}, {bits} bits)", fmt_off)
    frames = pcm.size // channels
    if frames < 1:
        raise ParseError("data chunk holds no complete frame", off)
    pcm = pcm[:frames * channels].reshape(frames, channels).mean(axis=1)
    return AudioBuffer(pcm, rate)


def write_wav(path, buf, fmt="pcm16", channels=None):
    """Write ``buf`` as PCM16 (default) or float32.

    ``channels`` may be a 2-D ``[frames, n]`` array to write multichannel data
    instead of the mono buffer.
    """
    data = np.asarray(buf.samples if channels is None else channels, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    n_ch = data.shape[1]
    if fmt == "pcm16":
        payload = np.clip(np.round(data * 32768.0), -32768, 32767).astype("<i2").tobytes()
        tag, bits = _PCM, 16
    elif fmt == "float32":
        payload = data.astype("<f4").tobytes()
        tag, bits = _FLOAT, 32
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    block = n_ch * bits // 8
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, tag, n_ch, buf.sample_rate, buf.sample_rate * block, block, bits)
    header += b"data" + struct.pack("<I", len(payload))
    with open(path, "wb") as fh:
        fh.write(header + payload)


def resample(buf, target_rate):
    """Linear-interpolation resampling to ``target_rate``."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == buf.sample_rate:
        return AudioBuffer(buf.samples.copy(), buf.sample_rate)
    out = resample_array(buf.samples, target_rate / buf.sample_rate)
    return AudioBuffer(out, int(target_rate))


def resample_array(x, ratio):
    """Resample ``x`` so the output has ``round(len(x) * ratio)`` samples."""
    n_out = max(1, int(round(x.size * ratio)))
    pos = np.arange(n_out) / ratio
    return np.interp(pos, np.arange(x.size), x)
