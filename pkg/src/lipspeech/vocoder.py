"""GAN waveform generator and discriminators.

The generator projects acoustic features to 80 dims and upsamples them by
a stack of transposed convolutions with multi-kernel residual blocks; the
stride product equals the mel hop (200), so every mel frame becomes exactly
200 samples. Multi-period and multi-scale discriminators are used only in
stage-2 adversarial training.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import DiscriminatorConfig, GeneratorConfig

LRELU_SLOPE = 0.1


@dataclass
class DiscriminatorOutput:
    scores: list[torch.Tensor]                 # one score map per sub-discriminator
    feature_maps: list[list[torch.Tensor]]     # per sub-discriminator, per layer
    padded_lengths: list[int]                  # input length each sub-D actually saw


class ResBlock(nn.Module):
    """Dilated + plain conv pairs with residual connections (one kernel size)."""

    def __init__(self, channels: int, kernel: int, dilations: tuple[int, ...]):
        super().__init__()
        self.dilated = nn.ModuleList(
            nn.Conv1d(channels, channels, kernel, dilation=d,
                      padding=(kernel - 1) * d // 2)
            for d in dilations)
        self.plain = nn.ModuleList(
            nn.Conv1d(channels, channels, kernel, padding=(kernel - 1) // 2)
            for _ in dilations)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv_d, conv_p in zip(self.dilated, self.plain):
            h = conv_d(F.leaky_relu(x, LRELU_SLOPE))
            h = conv_p(F.leaky_relu(h, LRELU_SLOPE))
            x = x + h
        return x


class WaveformGenerator(nn.Module):
    """(B, L_mel, d_in) -> (B, L_mel * 200) samples in [-1, 1]."""

    def __init__(self, cfg: GeneratorConfig, d_in: int):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.mel_proj = nn.Linear(d_in, cfg.mel_dim)
        self.conv_pre = nn.Conv1d(cfg.mel_dim, cfg.base_channels, 7, padding=3)
        ups, mrfs = [], []
        ch = cfg.base_channels
        for k, u in zip(cfg.upsample_kernels, cfg.upsample_strides):
            ups.append(nn.ConvTranspose1d(ch, ch // 2, k, stride=u,
                                          padding=(k - u) // 2))
            ch //= 2
            mrfs.append(nn.ModuleList(
                ResBlock(ch, kr, cfg.resblock_dilations)
                for kr in cfg.resblock_kernels))
        self.upsamples = nn.ModuleList(ups)
        self.mrfs = nn.ModuleList(mrfs)
        self.conv_post = nn.Conv1d(ch, 1, 7, padding=3)

    def forward(self, acoustic: torch.Tensor) -> torch.Tensor:
        x = self.mel_proj(acoustic).transpose(1, 2)  # (B, 80, L_mel)
        x = self.conv_pre(x)
        for up, mrf in zip(self.upsamples, self.mrfs):
            x = up(F.leaky_relu(x, LRELU_SLOPE))
            x = torch.stack([block(x) for block in mrf]).mean(dim=0)
        x = self.conv_post(F.leaky_relu(x, LRELU_SLOPE))
        return torch.tanh(x).squeeze(1)

    def receptive_field(self) -> int:
        """Output-sample radius influenced by one input frame (documented bound)."""
        radius = 3  # conv_pre, in input frames
        for k, u in zip(self.cfg.upsample_kernels, self.cfg.upsample_strides):
            radius = radius * u + k
            for kr in self.cfg.resblock_kernels:
                for d in self.cfg.resblock_dilations:
                    radius += (kr - 1) * d // 2 + (kr - 1) // 2
        return radius + 3  # conv_post


def _pad_to_multiple(audio: torch.Tensor, period: int) -> torch.Tensor:
    n = audio.shape[-1]
    remainder = n % period
    if remainder:
        audio = F.pad(audio, (0, period - remainder), mode="reflect")
    return audio


class PeriodDiscriminator(nn.Module):
    """Views the waveform as a (length/p, p) image; strided 2-D convs."""

    def __init__(self, period: int, cfg: DiscriminatorConfig):
        super().__init__()
        self.period = period
        chs = [1]
        ch = cfg.channels
        for _ in range(4):
            chs.append(min(ch, cfg.max_channels))
            ch *= 4
        self.convs = nn.ModuleList(
            nn.Conv2d(chs[i], chs[i + 1], (5, 1), stride=(3, 1), padding=(2, 0))
            for i in range(4))
        self.conv_post = nn.Conv2d(chs[-1], 1, (3, 1), padding=(1, 0))

    def forward(self, audio: torch.Tensor):
        x = _pad_to_multiple(audio, self.period)
        padded_len = x.shape[-1]
        b = x.shape[0]
        x = x.reshape(b, 1, -1, self.period)
        feats = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
            feats.append(x)
        score = self.conv_post(x)
        feats.append(score)
        return score.flatten(1), feats, padded_len


class ScaleDiscriminator(nn.Module):
    """Strided grouped 1-D convs on a (possibly pooled) waveform."""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        ch = cfg.channels
        c1 = min(ch * 4, cfg.max_channels)
        c2 = min(ch * 16, cfg.max_channels)
        self.convs = nn.ModuleList([
            nn.Conv1d(1, ch, 15, stride=1, padding=7),
            nn.Conv1d(ch, c1, 41, stride=4, groups=4, padding=20),
            nn.Conv1d(c1, c2, 41, stride=4, groups=16, padding=20),
            nn.Conv1d(c2, c2, 41, stride=4, groups=16, padding=20),
            nn.Conv1d(c2, c2, 5, stride=1, padding=2),
        ])
        self.conv_post = nn.Conv1d(c2, 1, 3, padding=1)

    def forward(self, audio: torch.Tensor):
        x = audio.unsqueeze(1)
        feats = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
            feats.append(x)
        score = self.conv_post(x)
        feats.append(score)
        return score.flatten(1), feats


class DiscriminatorEnsemble(nn.Module):
    """Multi-period + multi-scale families behind one forward call."""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        self.period_ds = nn.ModuleList(
            PeriodDiscriminator(p, cfg) for p in cfg.periods)
        self.scale_ds = nn.ModuleList(
            ScaleDiscriminator(cfg) for _ in range(cfg.scales))
        self.min_length = self.minimum_input_length()

    def minimum_input_length(self) -> int:
        # each scale halves the input; the deepest stack needs ~256 samples
        return 256 * 2 ** (self.cfg.scales - 1)

    def forward(self, audio: torch.Tensor) -> DiscriminatorOutput:
        """audio: (B, L). Raises on inputs shorter than the receptive minimum."""
        if audio.shape[-1] < self.min_length:
            raise ValueError(
                f"audio length {audio.shape[-1]} below discriminator minimum "
                f"{self.min_length}"
            )
        scores, feats, padded = [], [], []
        for d in self.period_ds:
            s, f, plen = d(audio)
            scores.append(s)
            feats.append(f)
            padded.append(plen)
        x = audio
        for i, d in enumerate(self.scale_ds):
            if i > 0:
                x = F.avg_pool1d(x.unsqueeze(1), 4, stride=2, padding=2).squeeze(1)
            s, f = d(x)
            scores.append(s)
            feats.append(f)
            padded.append(x.shape[-1])
        return DiscriminatorOutput(scores, feats, padded)
