"""Audio I/O, augmentation, spectral front-end and synthetic corpus."""

from mart.dsp.augment import AugmentationConfig, augment
from mart.dsp.spectral import (
    LOG_FLOOR,
    MEL_BANDS,
    WINDOW_SIZE,
    LogMelSpec,
    fft,
    logmel_for_clip,
    mel_filterbank,
    mel_project,
    stft,
)
from mart.dsp.synth import Corpus, SynthConfig, Track, read_manifest, synth_corpus, write_corpus
from mart.dsp.wav import AudioBuffer, load_wav, resample, write_wav

__all__ = [
    "AudioBuffer", "AugmentationConfig", "Corpus", "LOG_FLOOR", "LogMelSpec", "MEL_BANDS",
    "SynthConfig", "Track", "WINDOW_SIZE", "augment", "fft", "load_wav", "logmel_for_clip",
    "mel_filterbank", "mel_project", "read_manifest", "resample", "stft", "synth_corpus",
    "write_corpus", "write_wav",
]
