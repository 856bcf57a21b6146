"""Speech separation and target speech extraction with DPCCN.

Complex-spectrum separation (DPCCN), speaker-conditioned extraction
(sDPCCN), SISNR/uPIT objectives, corpus simulation with Mixture-Remix
fine-tuning data generation, and training/evaluation harnesses.
"""

from .audio import Waveform, read_wav, write_wav
from .dsp import MvnStats, Spectrogram, StftConfig, istft, sqrt_hann_window, stft
from .errors import DataError, TrainingDivergedError, ZeroReferenceError
from .losses import neg_sisnr, tse_loss, upit_loss
from .metrics import ScoreReport, score_separation, sisnr, sisnri, st_gap
from .model import DPCCN, DpccnConfig
from .speaker import SDPCCN, SpeakerEncoder, SpeakerEncoderConfig

__version__ = "0.1.0"

__all__ = [
    "DPCCN",
    "DpccnConfig",
    "DataError",
    "MvnStats",
    "SDPCCN",
    "ScoreReport",
    "SpeakerEncoder",
    "SpeakerEncoderConfig",
    "Spectrogram",
    "StftConfig",
    "TrainingDivergedError",
    "Waveform",
    "ZeroReferenceError",
    "istft",
    "neg_sisnr",
    "read_wav",
    "score_separation",
    "sisnr",
    "sisnri",
    "sqrt_hann_window",
    "st_gap",
    "stft",
    "tse_loss",
    "upit_loss",
    "write_wav",
]
