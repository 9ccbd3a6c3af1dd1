"""Full pipeline assembly and end-to-end synthesis.

The model is a pure function of (weights, input): video frames are encoded
per frame, duplicated up to the mel rate, decoded to acoustic features and
upsampled to a waveform in a single parallel pass.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from . import alignment
from .config import ABLATION_MODES, PipelineConfig
from .decoder import AcousticDecoder, AuxMelHead
from .frontend import VisualFrontend, clip_to_tensor
from .media import MelSpectrogram, VideoClip, Waveform, griffin_lim
from .vocoder import WaveformGenerator


class LipToSpeech(nn.Module):
    """Visual frontend -> duplication alignment -> acoustic decoder -> generator."""

    def __init__(self, cfg: PipelineConfig, ablation: str = "none"):
        super().__init__()
        if ablation not in ABLATION_MODES:
            raise ValueError(f"unknown ablation mode {ablation!r}")
        cfg.validate()
        self.cfg = cfg
        self.ablation = ablation
        self.frontend = VisualFrontend(cfg.frontend)
        if ablation != "no_conditional_module":
            self.decoder = AcousticDecoder(cfg.decoder)
            self.aux_mel = AuxMelHead(cfg.decoder.d_t, cfg.mel.n_mels)
        else:
            self.decoder = None
            self.aux_mel = None
        if ablation != "no_waveform_generator":
            self.generator = WaveformGenerator(cfg.generator, cfg.frontend.d_t)
        else:
            self.generator = None

    # ---- pipeline stages -------------------------------------------------

    def encode_video(self, video: torch.Tensor) -> torch.Tensor:
        return self.frontend(video)

    def align_features(self, features: torch.Tensor) -> torch.Tensor:
        """(B, T, d) -> (B, L_mel, d) by per-frame duplication."""
        plan = alignment.duplication_counts(
            features.shape[1], self.cfg.fps, self.cfg.mel.frames_per_second)
        counts = torch.as_tensor(plan.counts, device=features.device)
        return torch.repeat_interleave(features, counts, dim=1)

    def acoustic_features(self, video: torch.Tensor) -> torch.Tensor:
        aligned = self.align_features(self.encode_video(video))
        if self.decoder is None:
            return aligned
        return self.decoder(aligned)

    def predicted_mel(self, video: torch.Tensor) -> torch.Tensor:
        """Auxiliary normalized mel output (stage-1 training / ablation path)."""
        if self.aux_mel is None:
            raise RuntimeError("model built without the conditional module")
        return self.aux_mel(self.acoustic_features(video))

    def forward(self, video: torch.Tensor) -> torch.Tensor:
        """(B, 3, T, H, W) in [0, 1] -> (B, L_mel * hop) waveform."""
        if self.generator is None:
            raise RuntimeError(
                "no_waveform_generator ablation: use predicted_mel + Griffin-Lim"
            )
        return self.generator(self.acoustic_features(video))

    # ---- parameter bookkeeping --------------------------------------------

    def upstream_parameters(self):
        """Parameters frozen in stage 2 on large datasets."""
        params = list(self.frontend.parameters())
        if self.decoder is not None:
            params += list(self.decoder.parameters())
        return params

    def generator_parameters(self):
        if self.generator is None:
            return []
        return list(self.generator.parameters())


def synthesize(clip: VideoClip, model: LipToSpeech,
               griffin_lim_iters: int = 60) -> Waveform:
    """One-shot parallel synthesis from a preprocessed face-crop clip."""
    model.eval()
    video = clip_to_tensor(clip)
    with torch.no_grad():
        if model.generator is not None:
            samples = model(video).squeeze(0).numpy()
            return Waveform(samples.astype(np.float32), model.cfg.mel.sample_rate)
        mel = model.predicted_mel(video).squeeze(0).clamp(0, 1).numpy()
        spec = MelSpectrogram(mel, hop=model.cfg.mel.hop,
                              window=model.cfg.mel.win_length,
                              sample_rate=model.cfg.mel.sample_rate)
        return griffin_lim(spec, griffin_lim_iters, model.cfg.mel)


def expected_output_samples(num_frames: int, cfg: PipelineConfig) -> int:
    plan = alignment.duplication_counts(num_frames, cfg.fps,
                                        cfg.mel.frames_per_second)
    return plan.total * cfg.mel.hop


# ---- checkpoints ----------------------------------------------------------

def save_checkpoint(path, model: LipToSpeech, step: int = 0,
                    stage: int = 0, extra: dict | None = None) -> None:
    """Archive of hierarchical parameter names -> tensors, plus config."""
    payload = {
        "state": model.state_dict(),
        "config": model.cfg.to_dict(),
        "ablation": model.ablation,
        "step": step,
        "stage": stage,
    }
    if extra:
        payload.update(extra)
    torch.save(payload, path)


def load_checkpoint(path, cfg: PipelineConfig | None = None
                    ) -> tuple[LipToSpeech, dict]:
    payload = torch.load(path, weights_only=False)
    if cfg is None:
        cfg = PipelineConfig.from_dict(payload["config"])
    model = LipToSpeech(cfg, ablation=payload.get("ablation", "none"))
    own = model.state_dict()
    saved = payload["state"]
    mismatched = sorted(
        set(own) ^ set(saved)
        | {k for k in set(own) & set(saved) if own[k].shape != saved[k].shape})
    if mismatched:
        raise ValueError(
            "checkpoint does not match the configured model; mismatched "
            f"parameters: {mismatched[:10]}{' ...' if len(mismatched) > 10 else ''}"
        )
    model.load_state_dict(saved)
    return model, payload
