"""Mono waveform container and WAV file I/O.

WAV support is limited to what the toolkit needs: mono, 16-bit PCM or
32-bit float, 8 or 16 kHz. Samples are handled internally as float64
amplitudes nominally in [-1, 1].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import decimate as _fir_decimate

logger = logging.getLogger(__name__)

INT16_FULL_SCALE = 32768.0


@dataclass
class Waveform:
    """Mono audio: sample amplitudes plus their sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"waveform must be mono 1-D, got shape {self.samples.shape}")
        if self.samples.size < 1:
            raise ValueError("waveform must contain at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    def energy(self) -> float:
        """Sum of squared samples."""
        return float(np.sum(self.samples ** 2))


def read_wav(path) -> Waveform:
    """Read a mono WAV file into amplitudes in [-1, 1].

    16-bit PCM is scaled by 1/32768; 32-bit float (and 64-bit float)
    data is taken as-is.
    """
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.ndim} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / INT16_FULL_SCALE
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    else:
        raise ValueError(f"{path}: unsupported WAV sample format {data.dtype}")
    return Waveform(samples, int(rate))


def write_wav(path, wave: Waveform, subtype: str = "float32") -> None:
    """Write a mono WAV file.

    ``float32`` stores samples verbatim (values outside [-1, 1] are
    representable and kept). ``pcm16`` clips to the integer range with a
    logged warning; quantization is within +-1 LSB.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if subtype == "float32":
        wavfile.write(str(path), wave.sample_rate, wave.samples.astype(np.float32))
    elif subtype == "pcm16":
        scaled = wave.samples * (INT16_FULL_SCALE - 1)
        clipped = np.clip(scaled, -INT16_FULL_SCALE, INT16_FULL_SCALE - 1)
        n_clipped = int(np.count_nonzero(clipped != scaled))
        if n_clipped:
            logger.warning("%s: clipped %d samples on 16-bit export", path, n_clipped)
        wavfile.write(str(path), wave.sample_rate, np.round(clipped).astype(np.int16))
    else:
        raise ValueError(f"unsupported subtype {subtype!r}, use 'float32' or 'pcm16'")


def decimate(wave: Waveform, target_rate: int) -> Waveform:
    """Integer-factor FIR decimation to ``target_rate``.

    Only integer factors are supported; arbitrary resampling is out of
    scope for this toolkit.
    """
    if wave.sample_rate == target_rate:
        return wave
    if wave.sample_rate % target_rate != 0:
        raise ValueError(
            f"cannot decimate {wave.sample_rate} Hz to {target_rate} Hz: "
            "non-integer factor"
        )
    factor = wave.sample_rate // target_rate
    out = _fir_decimate(wave.samples, factor, ftype="fir")
    return Waveform(out, target_rate)
