"""Non-autoregressive acoustic conditional module.

A transformer over the mel-rate sequence whose feed-forward is replaced by
a two-layer 1-D convolution block over time, plus the auxiliary linear mel
head used only during stage-1 training.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import SoftmaxMultiHeadAttention, sinusoidal_encoding
from .config import DecoderConfig


class ConvFeedForward(nn.Module):
    """Two 1-D convolutions over time, d -> d_ff -> d, GELU between."""

    def __init__(self, dim: int, d_ff: int, kernel: int, padding_mode: str):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.Conv1d(dim, d_ff, kernel, padding=pad,
                               padding_mode=padding_mode)
        self.conv2 = nn.Conv1d(d_ff, dim, kernel, padding=pad,
                               padding_mode=padding_mode)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = x.transpose(1, 2)
        h = self.conv2(F.gelu(self.conv1(h)))
        return h.transpose(1, 2)


class DecoderBlock(nn.Module):
    def __init__(self, cfg: DecoderConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_t)
        self.attn = SoftmaxMultiHeadAttention(cfg.d_t, cfg.heads)
        self.norm2 = nn.LayerNorm(cfg.d_t)
        self.conv_ff = ConvFeedForward(cfg.d_t, cfg.d_ff, cfg.conv_kernel,
                                       cfg.conv_padding_mode)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.conv_ff(self.norm2(x))


class AcousticDecoder(nn.Module):
    """(B, L_mel, d_t) aligned visual features -> acoustic features, same shape.

    The duplicated input is step-wise constant, so a sinusoidal positional
    encoding is added to break ties within each duplicated span.
    """

    def __init__(self, cfg: DecoderConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.blocks = nn.ModuleList(DecoderBlock(cfg) for _ in range(cfg.layers))

    def forward(self, aligned: torch.Tensor) -> torch.Tensor:
        if aligned.shape[-1] != self.cfg.d_t:
            raise ValueError(
                f"feature dim {aligned.shape[-1]} != configured d_t {self.cfg.d_t}"
            )
        x = aligned
        if self.cfg.use_positional_encoding:
            x = x + sinusoidal_encoding(x.shape[1], x.shape[-1],
                                        x.dtype).to(x.device)
        for block in self.blocks:
            x = block(x)
        return x


class AuxMelHead(nn.Module):
    """Single linear projection to 80 mel bins; stage-1 training only."""

    def __init__(self, d_t: int, n_mels: int = 80):
        super().__init__()
        self.proj = nn.Linear(d_t, n_mels)

    def forward(self, acoustic: torch.Tensor) -> torch.Tensor:
        return self.proj(acoustic)
