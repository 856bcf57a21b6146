"""STFT analysis/synthesis and global mean-variance normalization.

The analysis and synthesis windows are both the square root of a
periodic Hann window, so the squared-window overlap-add is constant
(exactly 2 at 75% overlap) and inversion is exact. Signals are
reflect-padded by ``fft_size // 2`` on both ends so frame centers align
with sample times; the synthesis side trims back to the original
length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import torch

from .audio import Waveform

MVN_VARIANCE_FLOOR = 1e-8


def sqrt_hann_window(size: int, dtype=torch.float64) -> torch.Tensor:
    """Square root of the periodic (DFT-even) Hann window.

    w[n] = sqrt(0.5 * (1 - cos(2*pi*n/size))) for n in [0, size).
    """
    if size < 2 or size % 2 != 0:
        raise ValueError(f"window size must be even and >= 2, got {size}")
    n = torch.arange(size, dtype=torch.float64)
    w = torch.sqrt(0.5 * (1.0 - torch.cos(2.0 * math.pi * n / size)))
    return w.to(dtype)


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    hop_size: int = 128

    def __post_init__(self):
        if self.fft_size < 2 or (self.fft_size & (self.fft_size - 1)) != 0:
            raise ValueError(f"fft_size must be a power of two >= 2, got {self.fft_size}")
        if self.hop_size <= 0 or self.fft_size % self.hop_size != 0:
            raise ValueError(
                f"hop_size must divide fft_size, got hop={self.hop_size} fft={self.fft_size}"
            )

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def min_input_length(self) -> int:
        # reflect padding of fft_size//2 samples needs at least this many
        return self.fft_size // 2 + 1

    def window(self, dtype=torch.float64) -> torch.Tensor:
        return sqrt_hann_window(self.fft_size, dtype=dtype)

    def frame_count(self, length: int) -> int:
        return length // self.hop_size + 1


@dataclass
class Spectrogram:
    """Complex STFT stored as separate real/imaginary grids.

    Layout is frame-major, bin-minor: shape (frames, bins). The length
    of the analyzed signal is kept so inversion restores it exactly.
    """

    real: np.ndarray
    imag: np.ndarray
    original_length: int
    sample_rate: int = 0

    def __post_init__(self):
        self.real = np.asarray(self.real, dtype=np.float64)
        self.imag = np.asarray(self.imag, dtype=np.float64)
        if self.real.shape != self.imag.shape:
            raise ValueError(
                f"real/imag shape mismatch: {self.real.shape} vs {self.imag.shape}"
            )
        if self.real.ndim != 2:
            raise ValueError(f"expected (frames, bins) grids, got ndim={self.real.ndim}")

    @property
    def frame_count(self) -> int:
        return self.real.shape[0]

    @property
    def bins(self) -> int:
        return self.real.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)


def stft_tensor(x: torch.Tensor, cfg: StftConfig) -> torch.Tensor:
    """STFT of a batch of signals (B, L) -> complex (B, bins, frames).

    Differentiable; used directly inside the network forward pass.
    """
    if x.shape[-1] < cfg.min_input_length:
        raise ValueError(
            f"signal length {x.shape[-1]} too short for reflect padding "
            f"(need >= {cfg.min_input_length})"
        )
    window = cfg.window(dtype=x.dtype).to(x.device)
    return torch.stft(
        x,
        cfg.fft_size,
        hop_length=cfg.hop_size,
        win_length=cfg.fft_size,
        window=window,
        center=True,
        pad_mode="reflect",
        return_complex=True,
    )


def istft_tensor(spec: torch.Tensor, cfg: StftConfig, length: int) -> torch.Tensor:
    """Inverse of :func:`stft_tensor`: complex (B, bins, frames) -> (B, length).

    Overlap-add with the same sqrt-Hann window, normalized by the
    squared-window overlap sum.
    """
    if spec.shape[-2] != cfg.bins:
        raise ValueError(f"expected {cfg.bins} bins, got {spec.shape[-2]}")
    window = cfg.window(dtype=spec.real.dtype).to(spec.device)
    return torch.istft(
        spec,
        cfg.fft_size,
        hop_length=cfg.hop_size,
        win_length=cfg.fft_size,
        window=window,
        center=True,
        length=length,
    )


def stft(wave: Waveform, cfg: StftConfig) -> Spectrogram:
    """Analyze a waveform into a (frames, bins) complex spectrogram."""
    if len(wave) < 1:
        raise ValueError("cannot analyze an empty waveform")
    x = torch.from_numpy(wave.samples)
    spec = stft_tensor(x.unsqueeze(0), cfg).squeeze(0)  # (bins, frames)
    return Spectrogram(
        real=spec.real.numpy().T,
        imag=spec.imag.numpy().T,
        original_length=len(wave),
        sample_rate=wave.sample_rate,
    )


def istft(spec: Spectrogram, cfg: StftConfig, sample_rate: int | None = None) -> Waveform:
    """Synthesize a waveform from a spectrogram, trimmed to its original length."""
    if spec.bins != cfg.bins:
        raise ValueError(f"spectrogram has {spec.bins} bins but config expects {cfg.bins}")
    z = torch.complex(
        torch.from_numpy(spec.real.T.copy()), torch.from_numpy(spec.imag.T.copy())
    )
    x = istft_tensor(z.unsqueeze(0), cfg, spec.original_length).squeeze(0)
    rate = sample_rate if sample_rate is not None else spec.sample_rate
    if rate <= 0:
        raise ValueError("sample rate unknown; pass sample_rate explicitly")
    return Waveform(x.numpy(), rate)


def spectrogram_features(spec: Spectrogram) -> np.ndarray:
    """Stack RI planes into the network input layout (2, frames, bins)."""
    return np.stack([spec.real, spec.imag], axis=0)


@dataclass
class MvnStats:
    """Per-feature mean/variance with the variance floored."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.variance = np.asarray(self.variance, dtype=np.float64)
        if self.mean.shape != self.variance.shape:
            raise ValueError("mean/variance shape mismatch")
        if np.any(self.variance < MVN_VARIANCE_FLOOR):
            raise ValueError(f"variance entries must be >= {MVN_VARIANCE_FLOOR}")

    @property
    def feature_shape(self) -> tuple:
        return self.mean.shape

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "variance": self.variance.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MvnStats":
        return cls(np.array(d["mean"]), np.array(d["variance"]))

    @classmethod
    def identity(cls, feature_shape: tuple) -> "MvnStats":
        return cls(np.zeros(feature_shape), np.ones(feature_shape))


class MvnAccumulator:
    """Streaming count/sum/sum-of-squares accumulator for MVN stats.

    Partial accumulators computed on independent shards merge exactly,
    so corpus statistics can be gathered by parallel workers.
    """

    def __init__(self, feature_shape: tuple):
        self.feature_shape = tuple(feature_shape)
        self.count = 0
        self._sum = np.zeros(self.feature_shape, dtype=np.float64)
        self._sumsq = np.zeros(self.feature_shape, dtype=np.float64)

    def add_frames(self, frames: np.ndarray) -> None:
        """Accumulate an array of per-frame features, shape (T, *feature_shape)."""
        frames = np.asarray(frames, dtype=np.float64)
        if frames.shape[1:] != self.feature_shape:
            raise ValueError(
                f"feature layout mismatch: got {frames.shape[1:]}, "
                f"expected {self.feature_shape}"
            )
        self.count += frames.shape[0]
        self._sum += frames.sum(axis=0)
        self._sumsq += (frames ** 2).sum(axis=0)

    def add_spectrogram(self, spec: Spectrogram) -> None:
        """Accumulate RI features of one spectrogram; feature shape (2, bins)."""
        self.add_frames(np.stack([spec.real, spec.imag], axis=1))

    def merge(self, other: "MvnAccumulator") -> "MvnAccumulator":
        if other.feature_shape != self.feature_shape:
            raise ValueError("cannot merge accumulators with different layouts")
        self.count += other.count
        self._sum += other._sum
        self._sumsq += other._sumsq
        return self

    def finalize(self) -> MvnStats:
        if self.count < 1:
            raise ValueError("no frames observed; cannot compute MVN stats")
        mean = self._sum / self.count
        var = self._sumsq / self.count - mean ** 2
        var = np.maximum(var, MVN_VARIANCE_FLOOR)
        return MvnStats(mean, var)


def compute_mvn(specs: Iterable[Spectrogram]) -> MvnStats:
    """One-pass MVN stats over a stream of spectrograms (RI feature layout)."""
    acc: MvnAccumulator | None = None
    for spec in specs:
        if acc is None:
            acc = MvnAccumulator((2, spec.bins))
        acc.add_spectrogram(spec)
    if acc is None:
        raise ValueError("empty spectrogram stream")
    return acc.finalize()


def apply_mvn(features: np.ndarray, stats: MvnStats) -> np.ndarray:
    """Normalize per-frame features: (x - mean) / sqrt(variance)."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[1:] != stats.feature_shape:
        raise ValueError(
            f"feature layout mismatch: got {features.shape[1:]}, "
            f"expected {stats.feature_shape}"
        )
    return (features - stats.mean) / np.sqrt(stats.variance)


def invert_mvn(features: np.ndarray, stats: MvnStats) -> np.ndarray:
    """Undo :func:`apply_mvn`."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[1:] != stats.feature_shape:
        raise ValueError(
            f"feature layout mismatch: got {features.shape[1:]}, "
            f"expected {stats.feature_shape}"
        )
    return features * np.sqrt(stats.variance) + stats.mean
