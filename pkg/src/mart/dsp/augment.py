"""Seeded waveform augmentation chain.

Transforms run in a fixed order (polarity, noise, gain, filter, delay, pitch
shift), each applied independently with its own probability.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from mart.dsp.wav import AudioBuffer, resample_array
from mart.errors import ConfigError


@dataclass
class AugmentationConfig:
    polarity_p: float = 0.8
    noise_p: float = 0.01
    gain_p: float = 0.3
    filter_p: float = 0.8
    delay_p: float = 0.3
    pitch_p: float = 0.6
    noise_snr_db: tuple = (20.0, 40.0)
    gain_db: tuple = (-6.0, 0.0)
    lowpass_hz: tuple = (2200.0, 4000.0)
    highpass_hz: tuple = (200.0, 1200.0)
    delay_ms: tuple = (50.0, 200.0)
    delay_decay: tuple = (0.3, 0.7)
    pitch_semitones: tuple = (-2.0, 2.0)

    def __post_init__(self):
        for name in ("polarity_p", "noise_p", "gain_p", "filter_p", "delay_p", "pitch_p"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name}={p} is not a probability")
        for name in ("noise_snr_db", "gain_db", "lowpass_hz", "highpass_hz", "delay_ms",
                     "delay_decay", "pitch_semitones"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} range {lo}..{hi} is not ordered")

    @classmethod
    def disabled(cls):
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def add_noise(x, snr_db, rng):
    power = np.mean(x * x)
    if power == 0:
        return x.copy()
    noise = rng.standard_normal(x.size)
    noise *= np.sqrt(power / 10 ** (snr_db / 10) / np.mean(noise * noise))
    return x + noise


def one_pole(x, cutoff, sample_rate, kind):
    alpha = 1.0 - np.exp(-2.0 * np.pi * cutoff / sample_rate)
    low = lfilter([alpha], [1.0, alpha - 1.0], x)
    return low if kind == "low" else x - low


def echo(x, delay_samples, decay):
    y = x.copy()
    if 0 < delay_samples < x.size:
        y[delay_samples:] += decay * x[:-delay_samples]
    return y


def pitch_shift(x, semitones):
    """Resample by ``2**(semitones/12)`` and pad/trim back to the input length."""
    ratio = 2.0 ** (semitones / 12.0)
    y = resample_array(x, 1.0 / ratio)
    if y.size >= x.size:
        return y[: x.size]
    return np.concatenate([y, np.zeros(x.size - y.size)])


def augment(buf, cfg, rng):
    x = buf.samples.copy()
    sr = buf.sample_rate
    if rng.random() < cfg.polarity_p:
        x = -x
    if rng.random() < cfg.noise_p:
        x = add_noise(x, rng.uniform(*cfg.noise_snr_db), rng)
    if rng.random() < cfg.gain_p:
        x = x * 10 ** (rng.uniform(*cfg.gain_db) / 20)
    if rng.random() < cfg.filter_p:
        if rng.random() < 0.5:
            x = one_pole(x, rng.uniform(*cfg.lowpass_hz), sr, "low")
        else:
            x = one_pole(x, rng.uniform(*cfg.highpass_hz), sr, "high")
    if rng.random() < cfg.delay_p:
        delay = int(round(rng.uniform(*cfg.delay_ms) * sr / 1000))
        x = echo(x, delay, rng.uniform(*cfg.delay_decay))
    if rng.random() < cfg.pitch_p:
        x = pitch_shift(x, rng.uniform(*cfg.pitch_semitones))
    return AudioBuffer(np.clip(x, -1.0, 1.0), sr)
