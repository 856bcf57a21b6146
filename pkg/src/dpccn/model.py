"""DPCCN: densely-connected pyramid complex convolutional network.

The network maps the real/imaginary planes of a mixture STFT through a
U-Net style codec (each stage a Conv2dBlock followed by a DenseBlock),
a dilated TCN bottleneck operating on the flattened channel-frequency
axis, a mirrored transposed-convolution decoder with skip
concatenation, and a pyramid pooling layer, then regresses per-source
RI planes that are synthesized back to waveforms. Time resolution is
never downsampled; only the frequency axis is strided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .audio import Waveform
from .dsp import MvnStats, StftConfig, istft_tensor, stft_tensor

INSTANCE_NORM_EPS = 1e-5


def init_parameters(module: nn.Module, seed: int) -> None:
    """Deterministic re-initialization of all learnable parameters.

    Convolution and linear weights/biases draw from a fan-in-scaled
    uniform distribution using a private generator, so the same seed
    always yields bit-identical parameters. Normalization gains reset
    to 1 and offsets to 0.
    """
    gen = torch.Generator().manual_seed(seed)
    for m in module.modules():
        if isinstance(m, (nn.Conv1d, nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            fan_in = m.weight.numel() // m.weight.shape[0]
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                m.weight.uniform_(-bound, bound, generator=gen)
                if m.bias is not None:
                    m.bias.uniform_(-bound, bound, generator=gen)
        elif isinstance(m, (nn.InstanceNorm1d, nn.InstanceNorm2d)) and m.affine:
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.fill_(0.0)


@dataclass(frozen=True)
class DpccnConfig:
    """Architecture hyperparameters; the defaults are the full-size model.

    ``encoder_channels`` / ``encoder_freq_strides`` define the codec
    stage table; the decoder mirrors it. ``output_channels`` is the
    width handed to the pyramid layer, whose branch arithmetic must
    satisfy len(pyramid_scales) * pyramid_branch_channels ==
    output_channels so that concatenation doubles the width and the
    final projection halves it back.
    """

    num_sources: int = 2
    stft: StftConfig = field(default_factory=StftConfig)
    encoder_channels: tuple[int, ...] = (16, 32, 32, 64, 64, 128, 128)
    encoder_freq_strides: tuple[int, ...] = (1, 2, 2, 2, 2, 2, 2)
    dense_layers: int = 3
    dense_growth: int | None = None  # None: half the stage width
    tcn_layers: int = 2
    tcn_blocks_per_layer: int = 10
    tcn_kernel: int = 3
    pyramid_scales: tuple[int, ...] = (1, 2, 3, 6)
    pyramid_branch_channels: int = 8
    output_channels: int = 32
    init_seed: int = 0

    def __post_init__(self):
        if self.num_sources not in (1, 2, 3):
            raise ValueError(f"num_sources must be 1, 2, or 3, got {self.num_sources}")
        if len(self.encoder_channels) != len(self.encoder_freq_strides):
            raise ValueError("encoder_channels and encoder_freq_strides lengths differ")
        if len(self.encoder_channels) < 1:
            raise ValueError("at least one encoder stage is required")
        if any(s not in (1, 2) for s in self.encoder_freq_strides):
            raise ValueError("frequency strides must be 1 or 2")
        if self.tcn_kernel % 2 != 1:
            raise ValueError("TCN kernel must be odd to preserve time length")
        if self.tcn_layers < 1 or self.tcn_blocks_per_layer < 1:
            raise ValueError("TCN needs at least one layer and one block")
        if len(self.pyramid_scales) * self.pyramid_branch_channels != self.output_channels:
            raise ValueError(
                "pyramid arithmetic violated: branches * branch_channels "
                f"({len(self.pyramid_scales)} * {self.pyramid_branch_channels}) "
                f"must equal output_channels ({self.output_channels})"
            )
        # every stride-2 stage needs at least 2 frequency bins to halve
        f = self.stft.bins
        for i, stride in enumerate(self.encoder_freq_strides):
            if stride == 2 and f < 2:
                raise ValueError(
                    f"frequency dimension too small for stride at stage {i}: {f} bins"
                )
            f = _strided_freq(f, stride)

    @property
    def tcn_dilations(self) -> tuple[int, ...]:
        return tuple(2 ** i for i in range(self.tcn_blocks_per_layer))

    def freq_path(self) -> list[int]:
        """Frequency size after each encoder stage, starting from the STFT bins."""
        path = []
        f = self.stft.bins
        for stride in self.encoder_freq_strides:
            f = _strided_freq(f, stride)
            path.append(f)
        return path

    @property
    def bottleneck_channels(self) -> int:
        return self.encoder_channels[-1]

    @property
    def bottleneck_freq(self) -> int:
        return self.freq_path()[-1]

    @property
    def bottleneck_width(self) -> int:
        """Flattened channel x frequency width seen by the TCN (and the
        speaker-conditioning site)."""
        return self.bottleneck_channels * self.bottleneck_freq

    def stage_growth(self, channels: int) -> int:
        return self.dense_growth if self.dense_growth is not None else max(channels // 2, 1)

    def receptive_field(self) -> int:
        """TCN receptive field along time, in frames."""
        per_layer = sum((self.tcn_kernel - 1) * d for d in self.tcn_dilations)
        return 1 + self.tcn_layers * per_layer

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stft"] = {"fft_size": self.stft.fft_size, "hop_size": self.stft.hop_size}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DpccnConfig":
        d = dict(d)
        d["stft"] = StftConfig(**d["stft"])
        for key in ("encoder_channels", "encoder_freq_strides", "pyramid_scales"):
            d[key] = tuple(d[key])
        return cls(**d)


def _strided_freq(f: int, stride: int) -> int:
    # kernel 3, padding 1
    return (f - 1) // stride + 1


class Conv2dBlock(nn.Module):
    """2-D convolution, ELU, instance normalization."""

    def __init__(self, in_channels: int, out_channels: int, freq_stride: int = 1,
                 kernel: tuple[int, int] = (3, 3)):
        super().__init__()
        padding = (kernel[0] // 2, kernel[1] // 2)
        self.conv = nn.Conv2d(in_channels, out_channels, kernel,
                              stride=(1, freq_stride), padding=padding)
        self.norm = nn.InstanceNorm2d(out_channels, eps=INSTANCE_NORM_EPS, affine=True)

    def forward(self, x):
        return self.norm(F.elu(self.conv(x)))


class Deconv2dBlock(nn.Module):
    """2-D transposed convolution, ELU, instance normalization.

    ``output_size`` pins the frequency size so the decoder exactly
    mirrors the encoder for any input shape.
    """

    def __init__(self, in_channels: int, out_channels: int, freq_stride: int = 1,
                 kernel: tuple[int, int] = (3, 3)):
        super().__init__()
        padding = (kernel[0] // 2, kernel[1] // 2)
        self.deconv = nn.ConvTranspose2d(in_channels, out_channels, kernel,
                                         stride=(1, freq_stride), padding=padding)
        self.norm = nn.InstanceNorm2d(out_channels, eps=INSTANCE_NORM_EPS, affine=True)

    def forward(self, x, output_size=None):
        return self.norm(F.elu(self.deconv(x, output_size=output_size)))


class DenseBlock(nn.Module):
    """Concatenative-growth convolutional block with a 1x1 transition.

    Each layer sees the concatenation of the block input and all
    previous layer outputs; the transition projects back to the input
    width so the block is shape-preserving.
    """

    def __init__(self, channels: int, num_layers: int, growth: int):
        super().__init__()
        self.layers = nn.ModuleList(
            Conv2dBlock(channels + i * growth, growth) for i in range(num_layers)
        )
        self.transition = nn.Conv2d(channels + num_layers * growth, channels, 1)

    def forward(self, x):
        feats = [x]
        for layer in self.layers:
            feats.append(layer(torch.cat(feats, dim=1)))
        return self.transition(torch.cat(feats, dim=1))


class TcnBlock(nn.Module):
    """Residual dilated block: x + conv1d(elu(instancenorm(x)))."""

    def __init__(self, width: int, kernel: int, dilation: int):
        super().__init__()
        self.norm = nn.InstanceNorm1d(width, eps=INSTANCE_NORM_EPS, affine=True)
        self.conv = nn.Conv1d(width, width, kernel, dilation=dilation,
                              padding=dilation * (kernel - 1) // 2)

    def forward(self, x):
        return x + self.conv(F.elu(self.norm(x)))


class TcnStack(nn.Module):
    """Stacked TCN layers, each running the full dilation schedule."""

    def __init__(self, width: int, num_layers: int, dilations: tuple[int, ...], kernel: int):
        super().__init__()
        self.blocks = nn.ModuleList(
            TcnBlock(width, kernel, d) for _ in range(num_layers) for d in dilations
        )

    def forward(self, x):
        for block in self.blocks:
            x = block(x)
        return x


def pool_to_scale(x: torch.Tensor, scale: int) -> torch.Tensor:
    """Average-pool a (B, C, T, F) map to (scale, scale), clamped to the map size."""
    t, f = x.shape[-2:]
    return F.adaptive_avg_pool2d(x, (min(scale, t), min(scale, f)))


class PyramidPooling(nn.Module):
    """Multi-scale global context: pool, 1x1 conv, bilinear upsample, concat.

    Branch outputs are concatenated with the input (doubling the
    channel count) and projected back down with a final 1x1 conv.
    """

    def __init__(self, channels: int, scales: tuple[int, ...], branch_channels: int):
        super().__init__()
        self.scales = tuple(scales)
        self.branch_convs = nn.ModuleList(
            nn.Conv2d(channels, branch_channels, 1) for _ in scales
        )
        self.project = nn.Conv2d(channels + len(scales) * branch_channels, channels, 1)

    def forward(self, x):
        t, f = x.shape[-2:]
        outs = [x]
        for scale, conv in zip(self.scales, self.branch_convs):
            pooled = conv(pool_to_scale(x, scale))
            outs.append(F.interpolate(pooled, size=(t, f), mode="bilinear", align_corners=False))
        return self.project(torch.cat(outs, dim=1))


class DPCCN(nn.Module):
    """Complex-spectrum separation network; see the module docstring.

    ``forward`` takes mixture waveforms (B, L) and returns (B, S, L)
    estimates of exactly the input length. An optional conditioning
    embedding of ``cfg.bottleneck_width`` entries multiplies the
    flattened encoder output before the TCN (used for target speech
    extraction).
    """

    def __init__(self, cfg: DpccnConfig):
        super().__init__()
        self.cfg = cfg
        in_ch = 2
        self.encoder_convs = nn.ModuleList()
        self.encoder_dense = nn.ModuleList()
        for out_ch, stride in zip(cfg.encoder_channels, cfg.encoder_freq_strides):
            self.encoder_convs.append(Conv2dBlock(in_ch, out_ch, freq_stride=stride))
            self.encoder_dense.append(
                DenseBlock(out_ch, cfg.dense_layers, cfg.stage_growth(out_ch))
            )
            in_ch = out_ch

        self.tcn = TcnStack(cfg.bottleneck_width, cfg.tcn_layers,
                            cfg.tcn_dilations, cfg.tcn_kernel)

        self.decoder_deconvs = nn.ModuleList()
        self.decoder_dense = nn.ModuleList()
        n = len(cfg.encoder_channels)
        for i in reversed(range(n)):
            out_ch = cfg.encoder_channels[i - 1] if i > 0 else cfg.output_channels
            self.decoder_deconvs.append(
                Deconv2dBlock(2 * cfg.encoder_channels[i], out_ch,
                              freq_stride=cfg.encoder_freq_strides[i])
            )
            self.decoder_dense.append(
                DenseBlock(out_ch, cfg.dense_layers, cfg.stage_growth(out_ch))
            )

        self.pyramid = PyramidPooling(cfg.output_channels, cfg.pyramid_scales,
                                      cfg.pyramid_branch_channels)
        self.head = nn.Conv2d(cfg.output_channels, 2 * cfg.num_sources, 1)

        bins = cfg.stft.bins
        self.register_buffer("mvn_mean", torch.zeros(2, bins))
        self.register_buffer("mvn_var", torch.ones(2, bins))

        init_parameters(self, cfg.init_seed)

    # -- normalization statistics ------------------------------------------

    def set_mvn(self, stats: MvnStats) -> None:
        if stats.feature_shape != (2, self.cfg.stft.bins):
            raise ValueError(
                f"MVN layout {stats.feature_shape} does not match "
                f"(2, {self.cfg.stft.bins})"
            )
        with torch.no_grad():
            self.mvn_mean.copy_(torch.from_numpy(stats.mean))
            self.mvn_var.copy_(torch.from_numpy(stats.variance))

    def get_mvn(self) -> MvnStats:
        return MvnStats(self.mvn_mean.detach().cpu().numpy().astype(np.float64),
                        self.mvn_var.detach().cpu().numpy().astype(np.float64))

    # -- forward pieces ----------------------------------------------------

    def mixture_features(self, mix: torch.Tensor) -> torch.Tensor:
        """STFT + MVN: (B, L) waveforms to (B, 2, T, F) normalized RI planes."""
        spec = stft_tensor(mix, self.cfg.stft)  # (B, F, T) complex
        feats = torch.stack([spec.real, spec.imag], dim=1).transpose(-2, -1)
        mean = self.mvn_mean.to(feats.dtype).view(1, 2, 1, -1)
        var = self.mvn_var.to(feats.dtype).view(1, 2, 1, -1)
        return (feats - mean) / torch.sqrt(var)

    def encode(self, feats: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        if feats.shape[1] != 2:
            raise ValueError(f"expected 2 RI input channels, got {feats.shape[1]}")
        if feats.shape[-1] != self.cfg.stft.bins:
            raise ValueError(
                f"expected {self.cfg.stft.bins} frequency bins, got {feats.shape[-1]}"
            )
        x = feats
        skips = []
        for conv, dense in zip(self.encoder_convs, self.encoder_dense):
            x = dense(conv(x))
            skips.append(x)
        return x, skips

    def tcn_bottleneck(self, x: torch.Tensor,
                       embedding: torch.Tensor | None = None) -> torch.Tensor:
        """Flatten channels x frequency, condition, run the TCN, restore shape."""
        b, c, t, f = x.shape
        flat = x.permute(0, 1, 3, 2).reshape(b, c * f, t)
        if embedding is not None:
            if embedding.shape[-1] != c * f:
                raise ValueError(
                    f"embedding length {embedding.shape[-1]} does not match "
                    f"conditioning width {c * f}"
                )
            flat = flat * embedding.reshape(b, c * f, 1)
        flat = self.tcn(flat)
        return flat.reshape(b, c, f, t).permute(0, 1, 3, 2)

    def decode(self, x: torch.Tensor, skips: list[torch.Tensor]) -> torch.Tensor:
        n = len(self.decoder_deconvs)
        if len(skips) != n:
            raise ValueError(f"expected {n} skip maps, got {len(skips)}")
        freq_in = [self.cfg.stft.bins] + self.cfg.freq_path()[:-1]
        for step, (deconv, dense) in enumerate(zip(self.decoder_deconvs, self.decoder_dense)):
            idx = n - 1 - step
            skip = skips[idx]
            if skip.shape != x.shape:
                raise ValueError(
                    f"skip map {idx} shape {tuple(skip.shape)} does not match "
                    f"decoder state {tuple(x.shape)}"
                )
            x = deconv(torch.cat([x, skip], dim=1),
                       output_size=(x.shape[-2], freq_in[idx]))
            x = dense(x)
        return x

    def forward(self, mix: torch.Tensor,
                embedding: torch.Tensor | None = None) -> torch.Tensor:
        squeeze = mix.dim() == 1
        if squeeze:
            mix = mix.unsqueeze(0)
        if mix.shape[-1] < self.cfg.stft.fft_size:
            raise ValueError(
                f"mixture length {mix.shape[-1]} shorter than one FFT frame "
                f"({self.cfg.stft.fft_size})"
            )
        dtype = self.head.weight.dtype
        mix = mix.to(dtype)
        length = mix.shape[-1]

        feats = self.mixture_features(mix)
        x, skips = self.encode(feats)
        x = self.tcn_bottleneck(x, embedding)
        x = self.decode(x, skips)
        x = self.pyramid(x)
        x = self.head(x)  # (B, 2S, T, F)

        b, _, t, f = x.shape
        s = self.cfg.num_sources
        ri = x.reshape(b, s, 2, t, f)
        spec = torch.complex(ri[:, :, 0], ri[:, :, 1]).transpose(-2, -1)  # (B, S, F, T)
        waves = istft_tensor(spec.reshape(b * s, f, t), self.cfg.stft, length)
        out = waves.reshape(b, s, length)
        return out.squeeze(0) if squeeze else out

    # -- inference convenience ----------------------------------------------

    @torch.no_grad()
    def separate(self, wave: Waveform) -> list[Waveform]:
        """Separate one mixture waveform into ``num_sources`` waveforms."""
        was_training = self.training
        self.eval()
        try:
            mix = torch.from_numpy(wave.samples).to(self.head.weight.dtype)
            out = self.forward(mix.unsqueeze(0))[0]
        finally:
            self.train(was_training)
        return [Waveform(out[i].double().numpy(), wave.sample_rate)
                for i in range(out.shape[0])]
