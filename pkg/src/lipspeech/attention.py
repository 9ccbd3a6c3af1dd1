"""Random-feature linear approximation of softmax attention.

Positive random features phi(x) = exp(w^T x - |x|^2 / 2) / sqrt(m) with
orthogonal w blocks; attention cost is linear in sequence length. Feature
matrices are drawn once (per layer / per call seed) and never redrawn, so
outputs are deterministic.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn


def orthogonal_random_matrix(m: int, d: int,
                             generator: torch.Generator) -> torch.Tensor:
    """(m, d) Gaussian-like matrix with orthogonal row blocks.

    Rows within each d-block are orthogonal and rescaled to chi(d) norms,
    matching the row-norm distribution of an iid Gaussian matrix.
    """
    blocks = []
    remaining = m
    while remaining > 0:
        g = torch.randn(d, d, generator=generator, dtype=torch.float64)
        q, _ = torch.linalg.qr(g)
        blocks.append(q.T[:remaining])
        remaining -= d
    w = torch.cat(blocks, dim=0)
    norms = torch.randn(m, d, generator=generator, dtype=torch.float64).norm(dim=1)
    return w * norms[:, None]


def positive_random_features(x: torch.Tensor, w: torch.Tensor,
                             shift: torch.Tensor | None = None) -> torch.Tensor:
    """phi(x): (..., n, d) -> (..., n, m). `shift` stabilizes the exp."""
    proj = x @ w.transpose(-2, -1)
    sq = x.pow(2).sum(dim=-1, keepdim=True) / 2
    if shift is None:
        shift = proj.detach().max()
    return torch.exp(proj - sq - shift) / math.sqrt(w.shape[-2])


def linear_attention_with_features(q: torch.Tensor, k: torch.Tensor,
                                   v: torch.Tensor,
                                   w: torch.Tensor) -> torch.Tensor:
    """Approximate softmax(q k^T / sqrt(d)) v using feature matrix w."""
    d = q.shape[-1]
    scale = d ** -0.25
    shift = (k * scale @ w.transpose(-2, -1)).detach().max()
    q_feat = positive_random_features(q * scale, w)  # per-call shift, cancels
    k_feat = positive_random_features(k * scale, w, shift=shift)
    kv = k_feat.transpose(-2, -1) @ v                       # (..., m, d)
    numer = q_feat @ kv                                     # (..., n, d)
    denom = q_feat @ k_feat.sum(dim=-2, keepdim=True).transpose(-2, -1)
    return numer / denom.clamp_min(1e-30)


def linear_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
                     m: int, seed: int = 0) -> torch.Tensor:
    """One-shot functional form; the feature matrix is drawn from `seed`."""
    if m < 1:
        raise ValueError("m must be >= 1")
    gen = torch.Generator().manual_seed(seed)
    w = orthogonal_random_matrix(m, q.shape[-1], gen).to(q.dtype)
    return linear_attention_with_features(q, k, v, w)


def exact_attention(q: torch.Tensor, k: torch.Tensor,
                    v: torch.Tensor) -> torch.Tensor:
    """Reference softmax attention; the oracle the approximation is tested against."""
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    return torch.softmax(scores, dim=-1) @ v


class LinearMultiHeadAttention(nn.Module):
    """Multi-head attention with the random-feature kernel, fixed at init."""

    def __init__(self, dim: int, heads: int, num_features: int, seed: int = 0):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)
        gen = torch.Generator().manual_seed(seed)
        w = torch.stack([
            orthogonal_random_matrix(num_features, self.head_dim, gen)
            for _ in range(heads)
        ]).float()
        self.register_buffer("features", w)  # (heads, m, head_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, dim = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)  # each (b, heads, n, head_dim)
        w = self.features.to(x.dtype)[None]   # (1, heads, m, head_dim)
        out = linear_attention_with_features(q, k, v, w)
        return self.out(out.permute(0, 2, 1, 3).reshape(b, n, dim))


class SoftmaxMultiHeadAttention(nn.Module):
    """Standard full softmax attention (temporal transformer, decoder)."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, dim = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        out = exact_attention(q, k, v)
        return self.out(out.permute(0, 2, 1, 3).reshape(b, n, dim))


def sinusoidal_encoding(length: int, dim: int,
                        dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Fixed sin/cos positional table, (length, dim)."""
    pos = torch.arange(length, dtype=torch.float64)[:, None]
    idx = torch.arange(0, dim, 2, dtype=torch.float64)[None, :]
    angle = pos / torch.pow(10000.0, idx / dim)
    enc = torch.zeros(length, dim, dtype=torch.float64)
    enc[:, 0::2] = torch.sin(angle)
    enc[:, 1::2] = torch.cos(angle[:, : (dim - dim // 2)])
    return enc.to(dtype)
