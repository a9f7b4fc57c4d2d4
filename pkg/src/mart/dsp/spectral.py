"""STFT, mel filterbank and fixed-size log-mel spectrograms.

Clips of any length map to the same ``(mel_bands, frames)`` shape by choosing
the hop length per clip.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from mart.errors import DimensionError, TooShortError

WINDOW_SIZE = 256
MEL_BANDS = 128
LOG_FLOOR = 1e-6


def fft(x):
    """Iterative radix-2 FFT along the last axis (length must be a power of 2)."""
    a = np.asarray(x, dtype=np.complex128)
    n = a.shape[-1]
    if n < 1 or n & (n - 1):
        raise DimensionError(f"fft length {n} is not a power of two")
    lead = a.shape[:-1]
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    a = a[..., rev]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return a


@lru_cache(maxsize=8)
def hann(n):
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def frame_signal(x, window_size, hop, n_frames=None):
    avail = 1 + (x.size - window_size) // hop
    n_frames = avail if n_frames is None else min(n_frames, avail)
    idx = np.arange(window_size)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def stft(samples, window_size=WINDOW_SIZE, hop=None, n_frames=None):
    """Hann-windowed magnitude STFT, shape ``(window_size // 2 + 1, frames)``."""
    x = np.asarray(getattr(samples, "samples", samples), dtype=np.float64)
    hop = window_size // 2 if hop is None else hop
    if hop < 1:
        raise ValueError("hop must be >= 1")
    if x.size < window_size:
        raise TooShortError(f"signal of {x.size} samples is shorter than the {window_size}-sample window")
    frames = frame_signal(x, window_size, hop, n_frames) * hann(window_size)
    spec = fft(frames)[:, : window_size // 2 + 1]
    return np.abs(spec).T


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


@lru_cache(maxsize=16)
def mel_filterbank(sample_rate=16000, n_fft=WINDOW_SIZE, mel_bands=MEL_BANDS, fmin=0.0, fmax=None):
    """Triangular mel filters (HTK scale), shape ``(mel_bands, n_fft // 2 + 1)``.

    A filter whose triangle covers no FFT bin gets weight 1 on the bin nearest
    its centre, so every row has positive area.
    """
    fmax = sample_rate / 2 if fmax is None else fmax
    n_bins = n_fft // 2 + 1
    bin_hz = np.linspace(0, sample_rate / 2, n_bins)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), mel_bands + 2))
    fb = np.zeros((mel_bands, n_bins))
    for k in range(mel_bands):
        lo, mid, hi = edges[k], edges[k + 1], edges[k + 2]
        up = (bin_hz - lo) / (mid - lo)
        down = (hi - bin_hz) / (hi - mid)
        fb[k] = np.maximum(0.0, np.minimum(up, down))
        if fb[k].sum() == 0:
            fb[k, int(np.argmin(np.abs(bin_hz - mid)))] = 1.0
    fb.setflags(write=False)
    return fb


def mel_project(magnitudes, sample_rate=16000, mel_bands=MEL_BANDS, fmin=0.0, fmax=None):
    """Apply the mel filterbank to the power spectrum ``magnitudes ** 2``."""
    magnitudes = np.asarray(magnitudes)
    n_bins = magnitudes.shape[0]
    if n_bins != WINDOW_SIZE // 2 + 1:
        raise DimensionError(f"expected {WINDOW_SIZE // 2 + 1} frequency bins, got {n_bins}")
    fb = mel_filterbank(sample_rate, WINDOW_SIZE, mel_bands, fmin, fmax)
    return fb @ (magnitudes ** 2)


@dataclass
class LogMelSpec:
    matrix: np.ndarray
    source_span: tuple
    hop: int

    @property
    def mel_bands(self):
        return self.matrix.shape[0]

    @property
    def frames(self):
        return self.matrix.shape[1]


def min_span_length(target_frames, window_size=WINDOW_SIZE):
    return window_size + max(target_frames - 1, 0)


def clip_hop(span_len, target_frames, window_size=WINDOW_SIZE):
    if target_frames <= 1:
        return max(span_len - window_size, 1)
    return (span_len - window_size) // (target_frames - 1)


def logmel_for_clip(samples, span=None, target_frames=128, sample_rate=16000, mel_bands=MEL_BANDS):
    """Exactly ``target_frames`` log-mel frames for ``samples[start:end]``.

    The hop is ``(span_len - window) // (target_frames - 1)``; trailing samples
    that do not fill a frame are dropped.
    """
    x = np.asarray(getattr(samples, "samples", samples), dtype=np.float64)
    start, end = (0, x.size) if span is None else span
    seg = x[start:end]
    need = min_span_length(target_frames)
    if seg.size < need:
        raise TooShortError(
            f"span of {seg.size} samples is too short for {target_frames} frames (minimum {need})"
        )
    hop = clip_hop(seg.size, target_frames)
    mags = stft(seg, WINDOW_SIZE, hop, n_frames=target_frames)
    mel = mel_project(mags, sample_rate, mel_bands)
    return LogMelSpec(np.log(mel + LOG_FLOOR), (start, end), hop)
