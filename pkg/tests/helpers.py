"""Synthetic signals, corpora, and reduced model configs shared by the tests."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from dpccn.audio import Waveform, write_wav
from dpccn.dsp import StftConfig
from dpccn.model import DpccnConfig

RATE = 8000


def speaker_wave(speaker: int, utt: int, n: int, rate: int = RATE) -> np.ndarray:
    """Deterministic harmonic-stack 'speaker': fundamental grows with the
    speaker index, phases and AM envelope vary per utterance."""
    rng = np.random.default_rng([97, speaker, utt])
    f0 = 110.0 * (1.6 ** speaker)
    t = np.arange(n) / rate
    x = np.zeros(n)
    for k in range(1, 5):
        amp = rng.uniform(0.4, 1.0) / k
        phase = rng.uniform(0.0, 2.0 * np.pi)
        x += amp * np.sin(2.0 * np.pi * k * f0 * t + phase)
    rate_hz = rng.uniform(1.0, 3.0)
    x *= 0.6 + 0.4 * np.sin(2.0 * np.pi * rate_hz * t + rng.uniform(0.0, 2.0 * np.pi))
    return 0.1 * x / np.sqrt(np.mean(x ** 2))


def random_wave(rng: np.random.Generator, n: int, rate: int = RATE,
                amplitude: float = 0.1) -> Waveform:
    return Waveform(amplitude * rng.standard_normal(n), rate)


def tiny_config(num_sources: int = 2, seed: int = 7, **overrides) -> DpccnConfig:
    """Width-reduced model that trains in seconds on one CPU core."""
    kwargs = dict(
        num_sources=num_sources,
        stft=StftConfig(fft_size=128, hop_size=64),
        encoder_channels=(8, 12, 16),
        encoder_freq_strides=(1, 2, 2),
        dense_layers=2,
        tcn_layers=1,
        tcn_blocks_per_layer=3,
        pyramid_scales=(1, 2, 3, 6),
        pyramid_branch_channels=8,
        output_channels=32,
        init_seed=seed,
    )
    kwargs.update(overrides)
    return DpccnConfig(**kwargs)


def micro_config(num_sources: int = 2, seed: int = 3) -> DpccnConfig:
    """Smallest valid model; used for finite-difference gradient checks."""
    return DpccnConfig(
        num_sources=num_sources,
        stft=StftConfig(fft_size=64, hop_size=16),
        encoder_channels=(4, 8),
        encoder_freq_strides=(1, 2),
        dense_layers=1,
        tcn_layers=1,
        tcn_blocks_per_layer=2,
        pyramid_scales=(1, 2),
        pyramid_branch_channels=4,
        output_channels=8,
        init_seed=seed,
    )


def write_speech_corpus(root: Path, num_speakers: int = 3, utts_per_speaker: int = 3,
                        duration_s: float = 1.0, rate: int = RATE) -> Path:
    """root/<speaker>/<utt>.wav tree of synthetic speakers."""
    n = int(duration_s * rate)
    for spk in range(num_speakers):
        for utt in range(utts_per_speaker):
            wave = Waveform(speaker_wave(spk, utt, n, rate), rate)
            write_wav(root / f"spk{spk}" / f"utt{utt}.wav", wave)
    return root


def write_mixture_dir(root: Path, count: int = 4, duration_s: float = 1.0,
                      rate: int = RATE) -> Path:
    """Flat directory of stand-in unsupervised two-speaker mixtures."""
    n = int(duration_s * rate)
    for i in range(count):
        x = speaker_wave(10 + i, 0, n, rate) + speaker_wave(20 + i, 1, n, rate)
        write_wav(root / f"mix{i}.wav", Waveform(x, rate))
    return root
