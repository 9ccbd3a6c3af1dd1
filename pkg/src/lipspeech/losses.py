"""Training objectives.

Stage 1: per-frame SSIM + L1 against the normalized target mel.
Stage 2: least-squares adversarial losses, waveform mel loss on raw
log-mels, and layer-normalized feature matching.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

from .config import LossWeights, MelConfig
from .media import mel_filterbank

SSIM_C1 = 0.01 ** 2  # (0.01 * D)^2 with dynamic range D = 1
SSIM_C2 = 0.03 ** 2


def ssim_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean over frames of 1 - SSIM between 80-bin frame pairs.

    SSIM uses global per-frame statistics (no sliding window); inputs are
    normalized mels so the dynamic range is 1.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    mu_p = pred.mean(dim=-1)
    mu_t = target.mean(dim=-1)
    var_p = pred.var(dim=-1, unbiased=False)
    var_t = target.var(dim=-1, unbiased=False)
    cov = ((pred - mu_p[..., None]) * (target - mu_t[..., None])).mean(dim=-1)
    ssim = ((2 * mu_p * mu_t + SSIM_C1) * (2 * cov + SSIM_C2)) / (
        (mu_p ** 2 + mu_t ** 2 + SSIM_C1) * (var_p + var_t + SSIM_C2))
    return (1.0 - ssim).mean()


def l1_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean over frames of the frame-wise 1-norm."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return (pred - target).abs().sum(dim=-1).mean()


def stage1_loss(pred: torch.Tensor, target: torch.Tensor,
                weights: LossWeights) -> tuple[torch.Tensor, dict[str, float]]:
    ssim = ssim_loss(pred, target)
    l1 = l1_loss(pred, target)
    total = weights.lambda_ssim * ssim + weights.lambda_l1 * l1
    return total, {"ssim": ssim.item(), "l1": l1.item(), "total": total.item()}


def adversarial_losses(real_scores: list[torch.Tensor],
                       fake_scores: list[torch.Tensor]
                       ) -> tuple[torch.Tensor, torch.Tensor]:
    """Least-squares GAN losses, averaged over sub-discriminators.

    Returns (discriminator loss, generator loss). The discriminator term is
    (D(x)-1)^2 + D(G(s))^2; the generator term is (D(G(s))-1)^2.
    """
    d_terms, g_terms = [], []
    for real, fake in zip(real_scores, fake_scores):
        d_terms.append(((real - 1.0) ** 2).mean() + (fake ** 2).mean())
        g_terms.append(((fake - 1.0) ** 2).mean())
    n = len(d_terms)
    return sum(d_terms) / n, sum(g_terms) / n


class MelTransform(torch.nn.Module):
    """Differentiable waveform -> raw log-mel, matching media.log_mel_raw."""

    def __init__(self, cfg: MelConfig):
        super().__init__()
        self.cfg = cfg
        self.register_buffer("window", torch.hann_window(cfg.win_length,
                                                         periodic=False))
        self.register_buffer("mel_fb",
                             torch.from_numpy(mel_filterbank(cfg)).float())

    def forward(self, audio: torch.Tensor) -> torch.Tensor:
        """(B, L) -> (B, ceil(L/hop), n_mels)."""
        cfg = self.cfg
        n_frames = -(-audio.shape[-1] // cfg.hop)
        half = cfg.win_length // 2
        padded = F.pad(audio, (half, half + cfg.win_length), mode="reflect")
        frames = padded.unfold(-1, cfg.win_length, cfg.hop)[..., :n_frames, :]
        window = self.window.to(audio.dtype)
        spec = torch.fft.rfft(frames * window, n=cfg.n_fft, dim=-1)
        # |.| with an epsilon so the gradient is finite at exact zeros
        mag = torch.sqrt(spec.real ** 2 + spec.imag ** 2 + 1e-12)
        mel = mag @ self.mel_fb.to(audio.dtype).T
        return torch.log(torch.clamp(mel, min=cfg.log_floor))


def mel_loss(generated: torch.Tensor, reference: torch.Tensor,
             transform: MelTransform) -> torch.Tensor:
    """L1 distance between raw log-mels of two waveforms (element mean)."""
    if generated.shape != reference.shape:
        raise ValueError(
            f"waveform length mismatch: {generated.shape} vs {reference.shape}"
        )
    return (transform(generated) - transform(reference)).abs().mean()


def feature_matching_loss(real_features: list[list[torch.Tensor]],
                          fake_features: list[list[torch.Tensor]]
                          ) -> torch.Tensor:
    """Sum over layers of element-count-normalized L1, mean over sub-Ds."""
    if len(real_features) != len(fake_features):
        raise ValueError("sub-discriminator count mismatch")
    per_d = []
    for real_layers, fake_layers in zip(real_features, fake_features):
        if len(real_layers) != len(fake_layers):
            raise ValueError("discriminator layer count mismatch")
        total = sum((r - f).abs().sum() / r.numel()
                    for r, f in zip(real_layers, fake_layers))
        per_d.append(total)
    return sum(per_d) / len(per_d)


def stage2_generator_loss(fake_scores, real_features, fake_features,
                          generated: torch.Tensor, reference: torch.Tensor,
                          transform: MelTransform, weights: LossWeights
                          ) -> tuple[torch.Tensor, dict[str, float]]:
    """Total generator objective: weighted adversarial + mel + feature matching."""
    g_adv = sum(((s - 1.0) ** 2).mean() for s in fake_scores) / len(fake_scores)
    mel = mel_loss(generated, reference, transform)
    fm = feature_matching_loss(real_features, fake_features)
    total = (weights.lambda_adv * g_adv + weights.lambda_mel * mel
             + weights.lambda_fm * fm)
    return total, {"adv_g": g_adv.item(), "mel": mel.item(), "fm": fm.item(),
                   "total_g": total.item()}


def stage2_discriminator_loss(real_scores, fake_scores
                              ) -> tuple[torch.Tensor, dict[str, float]]:
    """Discriminator objective: the adversarial term only."""
    d_loss, _ = adversarial_losses(real_scores, fake_scores)
    return d_loss, {"adv_d": d_loss.item(), "total_d": d_loss.item()}
