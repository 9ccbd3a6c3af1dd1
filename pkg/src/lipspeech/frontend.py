"""Transformer visual frontend: tokenization, per-frame spatial transformer
with linear attention and locally-enhanced feed-forward, concat-projection,
and a temporal transformer over frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import (LinearMultiHeadAttention, SoftmaxMultiHeadAttention,
                        sinusoidal_encoding)
from .config import FrontendConfig
from .media import VideoClip


@dataclass
class TokenGrid:
    """Per-frame spatial tokens: (T, N_s, d) with N_s = rows * cols."""
    tokens: torch.Tensor
    grid_shape: tuple[int, int]

    def __post_init__(self):
        rows, cols = self.grid_shape
        if self.tokens.shape[-2] != rows * cols:
            raise RuntimeError(
                f"token count {self.tokens.shape[-2]} != grid {rows}x{cols}"
            )


def clip_to_tensor(clip: VideoClip, dtype=torch.float32) -> torch.Tensor:
    """(T, H, W, 3) uint8 -> (1, 3, T, H, W) float in [0, 1]."""
    frames = torch.from_numpy(np.ascontiguousarray(clip.frames)).to(dtype) / 255.0
    return frames.permute(3, 0, 1, 2).unsqueeze(0)


class Tokenizer(nn.Module):
    """3D conv + layer norm + spatial max-pool, then learned positional embedding.

    Stride (t, 2, 2) with padding 2 keeps the temporal length and gives
    overlapping tokens; the 2x2 pool brings a 96px frame to a 24x24 grid.
    """

    def __init__(self, cfg: FrontendConfig):
        super().__init__()
        kt, kh, kw = cfg.conv_kernel
        self.conv = nn.Conv3d(3, cfg.d_token, (kt, kh, kw),
                              stride=(cfg.conv_time_stride, 2, 2),
                              padding=(kt // 2, kh // 2, kw // 2))
        self.norm = nn.LayerNorm(cfg.d_token)
        self.pool = nn.MaxPool3d((1, 2, 2))
        self.grid = cfg.grid_size
        if cfg.shared_spatial_pos_embedding:
            self.pos = nn.Parameter(torch.zeros(cfg.n_spatial_tokens, cfg.d_token))
        else:
            self.pos = None

    def forward(self, video: torch.Tensor) -> torch.Tensor:
        """(B, 3, T, H, W) -> (B, T, N_s, d_token)."""
        x = self.conv(video)
        x = self.norm(x.permute(0, 2, 3, 4, 1)).permute(0, 4, 1, 2, 3)
        x = self.pool(x)  # (B, d, T, g, g)
        b, d, t, gh, gw = x.shape
        x = x.permute(0, 2, 3, 4, 1).reshape(b, t, gh * gw, d)
        if self.pos is not None:
            x = x + self.pos
        return x


class LocallyEnhancedFeedForward(nn.Module):
    """Pointwise expand + GELU, depthwise 3x3 conv on the token grid, project back."""

    def __init__(self, dim: int, grid: int, expansion: int = 4):
        super().__init__()
        hidden = expansion * dim
        self.grid = grid
        self.expand = nn.Linear(dim, hidden)
        self.depthwise = nn.Conv2d(hidden, hidden, 3, padding=1, groups=hidden)
        self.project = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, N_s, dim) with N_s = grid * grid."""
        b, n, _ = x.shape
        h = F.gelu(self.expand(x))
        h = h.transpose(1, 2).reshape(b, -1, self.grid, self.grid)
        h = F.gelu(self.depthwise(h))
        h = h.reshape(b, h.shape[1], n).transpose(1, 2)
        return self.project(h)


class SpatialBlock(nn.Module):
    """Pre-norm linear-attention block + locally-enhanced feed-forward."""

    def __init__(self, cfg: FrontendConfig, layer_index: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_s)
        self.attn = LinearMultiHeadAttention(cfg.d_s, cfg.h_s,
                                             cfg.attention_features,
                                             seed=cfg.feature_seed + layer_index)
        self.norm2 = nn.LayerNorm(cfg.d_s)
        self.ff = LocallyEnhancedFeedForward(cfg.d_s, cfg.grid_size)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.ff(self.norm2(x))


class SpatialTransformer(nn.Module):
    """Attention strictly within each frame: time is folded into the batch."""

    def __init__(self, cfg: FrontendConfig):
        super().__init__()
        self.blocks = nn.ModuleList(
            SpatialBlock(cfg, i) for i in range(cfg.spatial_layers))

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        """(B, T, N_s, d_s) -> same shape, no cross-time mixing."""
        b, t, n, d = tokens.shape
        x = tokens.reshape(b * t, n, d)
        for block in self.blocks:
            x = block(x)
        return x.reshape(b, t, n, d)


class TemporalBlock(nn.Module):
    """Pre-norm full softmax attention + MLP feed-forward over frames."""

    def __init__(self, dim: int, heads: int, d_ff: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SoftmaxMultiHeadAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, d_ff), nn.GELU(),
                                nn.Linear(d_ff, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.ff(self.norm2(x))


class VisualFrontend(nn.Module):
    """Video (B, 3, T, H, W) in [0, 1] -> per-frame features (B, T, d_t)."""

    def __init__(self, cfg: FrontendConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.tokenizer = Tokenizer(cfg)
        self.token_proj = nn.Linear(cfg.d_token, cfg.d_s)
        self.spatial = SpatialTransformer(cfg)
        self.concat_proj = nn.Linear(cfg.n_spatial_tokens * cfg.d_s, cfg.d_t)
        self.temporal = nn.ModuleList(
            TemporalBlock(cfg.d_t, cfg.h_t, cfg.d_ff)
            for _ in range(cfg.temporal_layers))

    def tokenize(self, video: torch.Tensor) -> TokenGrid:
        if video.shape[-1] != self.cfg.frame_size or video.shape[-2] != self.cfg.frame_size:
            raise ValueError(
                f"expected {self.cfg.frame_size}x{self.cfg.frame_size} frames, "
                f"got {video.shape[-2]}x{video.shape[-1]}"
            )
        tokens = self.tokenizer(video)
        g = self.cfg.grid_size
        return TokenGrid(tokens, (g, g))

    def spatial_encode(self, grid: TokenGrid) -> TokenGrid:
        return TokenGrid(self.spatial(grid.tokens), grid.grid_shape)

    def forward(self, video: torch.Tensor) -> torch.Tensor:
        grid = self.tokenize(video)
        x = self.token_proj(grid.tokens)
        x = self.spatial_encode(TokenGrid(x, grid.grid_shape)).tokens
        b, t, n, d = x.shape
        x = self.concat_proj(x.reshape(b, t, n * d))
        x = x + sinusoidal_encoding(t, x.shape[-1], x.dtype).to(x.device)
        for block in self.temporal:
            x = block(x)
        return x

    def spatial_only(self, video: torch.Tensor) -> torch.Tensor:
        """Features before the temporal transformer (for isolation tests)."""
        grid = self.tokenize(video)
        x = self.token_proj(grid.tokens)
        x = self.spatial_encode(TokenGrid(x, grid.grid_shape)).tokens
        b, t, n, d = x.shape
        return self.concat_proj(x.reshape(b, t, n * d))


def encode(clip: VideoClip, frontend: VisualFrontend) -> np.ndarray:
    """Convenience wrapper: VideoClip -> (T, d_t) numpy features."""
    with torch.no_grad():
        feats = frontend(clip_to_tensor(clip))
    return feats.squeeze(0).numpy()
