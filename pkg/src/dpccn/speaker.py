"""Speaker encoder and speaker-conditioned DPCCN for target speech extraction.

The encoder turns the magnitude spectrum of an enrollment utterance
into a single conditioning vector whose length equals the flattened
channel x frequency width at the codec midpoint. The vector multiplies
the encoder output element-by-element (broadcast over time) before the
TCN, steering the network toward the enrolled speaker.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .audio import Waveform
from .dsp import stft_tensor
from .model import Conv2dBlock, DPCCN, DpccnConfig, init_parameters


@dataclass(frozen=True)
class SpeakerEncoderConfig:
    """Widths of the enrollment stack; enrollment features stay unnormalized."""

    conv_channels: int = 256
    pre_kernel: int = 5
    block_kernel: int = 3
    map_channels: int = 16

    def __post_init__(self):
        if self.conv_channels % self.map_channels != 0:
            raise ValueError(
                f"conv_channels ({self.conv_channels}) must be divisible by "
                f"map_channels ({self.map_channels}) for the 4-D reshape"
            )

    @property
    def map_bins(self) -> int:
        return self.conv_channels // self.map_channels


class ChannelwiseLayerNorm(nn.Module):
    """Layer normalization over the channel dimension at each time step."""

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(1, channels, 1))
        self.bias = nn.Parameter(torch.zeros(1, channels, 1))

    def forward(self, x):  # (B, C, T)
        mean = x.mean(dim=1, keepdim=True)
        var = x.var(dim=1, unbiased=False, keepdim=True)
        return self.weight * (x - mean) / torch.sqrt(var + self.eps) + self.bias


class SpeakerEncoder(nn.Module):
    """Enrollment magnitude spectrum -> conditioning vector.

    1-D conv + ReLU, then a 1-D conv block with channel-wise layer
    normalization, a reshape to a 4-D (channels, time, bins) map, a 2-D
    conv block, average pooling along time, and a final projection to
    the conditioning width.
    """

    def __init__(self, freq_bins: int, embedding_dim: int,
                 cfg: SpeakerEncoderConfig | None = None):
        super().__init__()
        cfg = cfg or SpeakerEncoderConfig()
        self.cfg = cfg
        self.embedding_dim = embedding_dim
        c = cfg.conv_channels
        self.pre = nn.Conv1d(freq_bins, c, cfg.pre_kernel, padding=cfg.pre_kernel // 2)
        self.block_conv = nn.Conv1d(c, c, cfg.block_kernel, padding=cfg.block_kernel // 2)
        self.block_norm = ChannelwiseLayerNorm(c)
        self.conv2d = Conv2dBlock(cfg.map_channels, cfg.map_channels)
        self.project = nn.Linear(c, embedding_dim)

    def forward(self, magnitude: torch.Tensor) -> torch.Tensor:
        """(B, F, T) magnitude frames -> (B, embedding_dim)."""
        x = F.relu(self.pre(magnitude))
        x = F.relu(self.block_norm(self.block_conv(x)))
        b = x.shape[0]
        x = x.reshape(b, self.cfg.map_channels, self.cfg.map_bins, -1)
        x = x.permute(0, 1, 3, 2)  # (B, c, T, f)
        x = self.conv2d(x)
        x = x.mean(dim=2)  # average pool along time
        return self.project(x.flatten(1))


class SDPCCN(nn.Module):
    """DPCCN plus speaker encoder (single-output extraction model)."""

    def __init__(self, cfg: DpccnConfig, speaker_cfg: SpeakerEncoderConfig | None = None):
        super().__init__()
        if cfg.num_sources != 1:
            raise ValueError("target speech extraction requires num_sources == 1")
        self.cfg = cfg
        self.dpccn = DPCCN(cfg)
        self.speaker_encoder = SpeakerEncoder(cfg.stft.bins, cfg.bottleneck_width,
                                              speaker_cfg)
        # distinct stream from the main network's initialization
        init_parameters(self.speaker_encoder, cfg.init_seed + 1)

    def embed(self, enroll: torch.Tensor) -> torch.Tensor:
        """Enrollment waveforms (B, L) -> conditioning vectors (B, D)."""
        if enroll.dim() == 1:
            enroll = enroll.unsqueeze(0)
        if enroll.shape[-1] < self.cfg.stft.fft_size:
            raise ValueError(
                f"enrollment length {enroll.shape[-1]} shorter than one FFT frame "
                f"({self.cfg.stft.fft_size})"
            )
        spec = stft_tensor(enroll.to(self.project_dtype), self.cfg.stft)
        return self.speaker_encoder(spec.abs())

    @property
    def project_dtype(self) -> torch.dtype:
        return self.speaker_encoder.project.weight.dtype

    def forward(self, mix: torch.Tensor, enroll: torch.Tensor) -> torch.Tensor:
        """Extract the enrolled speaker: (B, L) mixtures -> (B, L) estimates."""
        squeeze = mix.dim() == 1
        if squeeze:
            mix = mix.unsqueeze(0)
        embedding = self.embed(enroll)
        out = self.dpccn(mix, embedding=embedding)[:, 0]
        return out.squeeze(0) if squeeze else out

    @torch.no_grad()
    def extract(self, mix: Waveform, enroll: Waveform) -> Waveform:
        """Extract the target speaker from one mixture."""
        if enroll is None:
            raise ValueError("target speech extraction requires an enrollment waveform")
        was_training = self.training
        self.eval()
        try:
            out = self.forward(
                torch.from_numpy(mix.samples).to(self.project_dtype),
                torch.from_numpy(enroll.samples).to(self.project_dtype),
            )
        finally:
            self.train(was_training)
        return Waveform(out.double().numpy(), mix.sample_rate)
