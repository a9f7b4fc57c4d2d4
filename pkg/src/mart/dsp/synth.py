"""Synthetic tagged corpus with cover cliques for desk-scale experiments.

Each tag owns a disjoint frequency band. A base track plays harmonic notes
inside the bands of its tags over band-limited noise, in a style of its own
(harmonic profile, note length, articulation, decay). The other members of
its clique are transposed (which also changes tempo) and re-gained copies.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from mart.dsp.wav import AudioBuffer, load_wav, resample_array, write_wav
from mart.errors import ConfigError, ParseError


@dataclass
class SynthConfig:
    n_tracks: int = 100
    n_classes: int = 4
    n_cliques: int = 25
    duration: float = 4.0
    sample_rate: int = 16000
    multi_tag_prob: float = 0.3
    band_range: tuple = (250.0, 6000.0)
    max_shift_semitones: float = 1.0
    seed: int = 0


@dataclass
class Track:
    track_id: str
    samples: np.ndarray
    tags: list
    clique: int
    sample_rate: int = 16000
    path: str = None

    @property
    def buffer(self):
        return AudioBuffer(self.samples, self.sample_rate)


@dataclass
class Corpus:
    tracks: list
    tag_names: list
    bands: list = field(default_factory=list)

    def tag_matrix(self):
        """Multi-hot ``[n_tracks, n_tags]`` label matrix."""
        y = np.zeros((len(self.tracks), len(self.tag_names)), dtype=np.int8)
        col = {t: i for i, t in enumerate(self.tag_names)}
        for r, tr in enumerate(self.tracks):
            for t in tr.tags:
                y[r, col[t]] = 1
        return y

    def cliques(self):
        return np.array([t.clique for t in self.tracks])


def class_bands(n_classes, lo, hi):
    """Disjoint log-spaced bands; each keeps the inner 70% of its slot."""
    edges = np.geomspace(lo, hi, n_classes + 1)
    bands = []
    for a, b in zip(edges[:-1], edges[1:]):
        la, lb = np.log(a), np.log(b)
        pad = 0.15 * (lb - la)
        bands.append((float(np.exp(la + pad)), float(np.exp(lb - pad))))
    return bands


def _style(rng):
    """Per-song traits that survive transposition."""
    harmonics = rng.uniform(0.05, 1.0, 4)
    harmonics[0] = 1.0
    if rng.random() < 0.5:
        harmonics[1::2] *= 0.1  # hollow, odd-harmonic timbre
    return {
        "harmonics": harmonics,
        "note_len": rng.uniform(0.08, 0.45),
        "legato": rng.uniform(0.3, 1.0),
        "decay": rng.uniform(1.0, 8.0),
        "noise": rng.uniform(0.05, 0.3),
    }


def _note(freq, n, sr, style, rng):
    t = np.arange(n) / sr
    tone = np.zeros(n)
    for h, amp in enumerate(style["harmonics"], start=1):
        tone += amp * np.sin(2 * np.pi * freq * h * t + rng.uniform(0, 2 * np.pi))
    attack = min(n, int(0.01 * sr))
    env = np.exp(-style["decay"] * t / max(t[-1], 1e-3))
    env[:attack] *= np.linspace(0, 1, attack)
    return tone * env


def _band_noise(n, band, sr, rng):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1 / sr)
    spec[(f < band[0]) | (f > band[1])] = 0
    y = np.fft.irfft(spec, n)
    return y / (np.abs(y).max() + 1e-12)


def _base_track(tags, bands, n, sr, margin, style, rng):
    x = np.zeros(n)
    for tag in tags:
        lo, hi = bands[tag]
        # keep notes far enough inside the band to survive the clique re-pitching
        lo, hi = lo * margin, hi / margin
        top = hi / 3.0 if hi / 3.0 > lo else hi
        pos = 0
        while pos < n:
            length = max(1, int(style["note_len"] * rng.uniform(0.85, 1.15) * sr))
            sounding = max(1, int(length * style["legato"]))
            freq = np.exp(rng.uniform(np.log(lo), np.log(top)))
            seg = _note(freq, min(sounding, n - pos), sr, style, rng)
            x[pos:pos + seg.size] += seg
            pos += length
        x += style["noise"] * _band_noise(n, (lo, hi), sr, rng)
    return 0.5 * x / (np.abs(x).max() + 1e-12)


def _cover(base, n, max_shift, rng):
    shift = rng.uniform(-max_shift, max_shift)
    y = resample_array(base, 2.0 ** (-shift / 12.0))
    if y.size < n:
        y = np.resize(y, n)
    y = y[:n] * 10 ** (rng.uniform(-6.0, 0.0) / 20)
    return np.clip(y, -1.0, 1.0)


def synth_corpus(cfg=SynthConfig(), rng=None):
    """Generate ``cfg.n_tracks`` tracks spread round-robin over ``cfg.n_cliques`` cliques."""
    if cfg.n_classes < 2:
        raise ConfigError("synth_corpus needs at least 2 classes")
    if cfg.n_cliques < 2 or cfg.n_cliques > cfg.n_tracks:
        raise ConfigError("synth_corpus needs 2 <= n_cliques <= n_tracks")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    sr = cfg.sample_rate
    n = int(round(cfg.duration * sr))
    bands = class_bands(cfg.n_classes, *cfg.band_range)
    margin = 2.0 ** (cfg.max_shift_semitones / 12.0) * 1.02
    tag_names = [f"band{i}" for i in range(cfg.n_classes)]

    clique_tags, bases = [], []
    for c in range(cfg.n_cliques):
        primary = c % cfg.n_classes
        tags = [primary]
        if rng.random() < cfg.multi_tag_prob:
            tags.append(int(rng.choice([k for k in range(cfg.n_classes) if k != primary])))
        clique_tags.append(sorted(tags))
        bases.append(_base_track(sorted(tags), bands, n, sr, margin, _style(rng), rng))

    tracks = []
    for i in range(cfg.n_tracks):
        c = i % cfg.n_cliques
        samples = bases[c] if i < cfg.n_cliques else _cover(bases[c], n, cfg.max_shift_semitones, rng)
        tracks.append(Track(f"track{i:04d}", samples, [tag_names[k] for k in clique_tags[c]], c, sr))
    return Corpus(tracks, tag_names, bands)


def write_corpus(corpus, out_dir):
    """Write every track as PCM16 WAV plus ``manifest.tsv``; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    lines = []
    for tr in corpus.tracks:
        path = os.path.join(out_dir, f"{tr.track_id}.wav")
        write_wav(path, tr.buffer)
        tr.path = path
        lines.append(f"{tr.track_id}.wav\t{','.join(tr.tags)}\t{tr.clique}")
    manifest = os.path.join(out_dir, "manifest.tsv")
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest


def read_manifest(path):
    """Parse ``track_path<TAB>tags<TAB>clique`` lines into a :class:`Corpus`.

    Relative track paths resolve against the manifest's directory.
    """
    root = os.path.dirname(os.path.abspath(path))
    tracks, tag_names = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"{path}: expected 3 tab-separated fields", lineno)
            rel, tags, clique = parts
            try:
                clique = int(clique)
            except ValueError as exc:
                raise ParseError(f"{path}: clique id {clique!r} is not an integer", lineno) from exc
            tags = [t for t in tags.split(",") if t]
            for t in tags:
                if t not in tag_names:
                    tag_names.append(t)
            full = rel if os.path.isabs(rel) else os.path.join(root, rel)
            buf = load_wav(full)
            track_id = os.path.splitext(os.path.basename(rel))[0]
            tracks.append(Track(track_id, buf.samples, tags, clique, buf.sample_rate, full))
    return Corpus(tracks, sorted(tag_names))
