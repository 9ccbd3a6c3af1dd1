"""Two-stage training orchestration.

Stage 1 trains the visual encoder and the acoustic conditional module on
SSIM + L1 against target mels, through the auxiliary mel head. Stage 2
plugs in the waveform generator and trains adversarially on 1.2 s sampling
windows, freezing the upstream modules by default.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import losses
from .config import PipelineConfig, TrainPlan
from .frontend import clip_to_tensor
from .media import TrainingSample
from .model import LipToSpeech, load_checkpoint, save_checkpoint
from .vocoder import DiscriminatorEnsemble

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    checkpoint_path: Path
    loss_curve: list[dict[str, float]] = field(default_factory=list)


class LossLog:
    """Append-only CSV of (step, component, value) records."""

    def __init__(self, path: Path):
        self.path = path
        self._file = open(path, "a", newline="")
        self._writer = csv.writer(self._file)
        if path.stat().st_size == 0:
            self._writer.writerow(["step", "component", "value"])

    def write(self, step: int, components: dict[str, float]) -> None:
        for name, value in components.items():
            self._writer.writerow([step, name, f"{value:.6g}"])
        self._file.flush()

    def close(self) -> None:
        self._file.close()


def parameter_hash(params) -> str:
    h = hashlib.sha256()
    for p in params:
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def _batch_tensors(samples: list[TrainingSample]):
    video = torch.cat([clip_to_tensor(s.clip) for s in samples])
    mel = torch.stack([torch.from_numpy(s.mel.values) for s in samples])
    audio = torch.stack([torch.from_numpy(s.audio.samples) for s in samples])
    return video, mel, audio


def _make_optimizer(plan: TrainPlan, params):
    if plan.optimizer_name == "adam":
        return torch.optim.Adam(params, lr=plan.lr, betas=plan.betas,
                                weight_decay=plan.weight_decay)
    if plan.optimizer_name == "adamw":
        return torch.optim.AdamW(params, lr=plan.lr, betas=plan.betas,
                                 weight_decay=plan.weight_decay)
    raise ValueError(f"unknown optimizer {plan.optimizer_name!r}")


def _batches(data: list[TrainingSample], plan: TrainPlan, step: int):
    rng = np.random.default_rng(plan.seed + step)
    idx = rng.choice(len(data), size=min(plan.batch_size, len(data)),
                     replace=len(data) < plan.batch_size)
    return [data[i] for i in idx]


def train_stage1(data: list[TrainingSample], cfg: PipelineConfig,
                 plan: TrainPlan, out_dir: str | Path,
                 model: LipToSpeech | None = None,
                 stop_below_l1: float | None = None) -> TrainResult:
    """Optimize encoder + conditional module on the stage-1 objective.

    The waveform generator is absent from the optimized parameter set.
    """
    if not data:
        raise RuntimeError("stage-1 training started with an empty dataset")
    plan.validate(cfg.mel)
    if plan.stage != 1:
        raise ValueError("train_stage1 called with a stage-2 plan")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(plan.seed)
    if model is None:
        model = LipToSpeech(cfg, ablation=plan.ablation)
    model.train()

    params = (list(model.frontend.parameters())
              + list(model.decoder.parameters())
              + list(model.aux_mel.parameters()))
    opt = _make_optimizer(plan, params)
    loss_log = LossLog(out_dir / "stage1_losses.csv")
    curve = []
    ckpt_path = out_dir / "stage1.pt"
    try:
        for step in range(plan.steps):
            video, mel, _ = _batch_tensors(_batches(data, plan, step))
            pred = model.predicted_mel(video)
            if pred.shape[1] != mel.shape[1]:  # ceil-total vs mel framing
                n = min(pred.shape[1], mel.shape[1])
                log.debug("truncating mel target %d/%d", pred.shape[1], mel.shape[1])
                pred, mel = pred[:, :n], mel[:, :n]
            total, components = losses.stage1_loss(pred, mel, cfg.loss_weights)
            opt.zero_grad()
            total.backward()
            opt.step()
            curve.append({"step": step, **components})
            if step % plan.log_every == 0:
                loss_log.write(step, components)
                log.info("stage1 step %d: total=%.4f l1=%.4f ssim=%.4f",
                         step, components["total"], components["l1"],
                         components["ssim"])
            if step % plan.checkpoint_every == plan.checkpoint_every - 1:
                save_checkpoint(ckpt_path, model, step=step, stage=1)
            if stop_below_l1 is not None and components["l1"] < stop_below_l1:
                log.info("stage1 early stop at step %d (l1=%.4f)",
                         step, components["l1"])
                break
    finally:
        loss_log.close()
    save_checkpoint(ckpt_path, model, step=plan.steps, stage=1)
    return TrainResult(ckpt_path, curve)


def sample_window(acoustic: torch.Tensor, audio: torch.Tensor,
                  window_seconds: float, rng: np.random.Generator,
                  hop: int = 200, sample_rate: int = 16000):
    """Slice a random acoustic window and its exactly corresponding audio.

    acoustic: (L_mel, d) or (B, L_mel, d); audio: (L,) or (B, L) with
    L = L_mel * hop. Audio indices are mel indices times hop. Inputs shorter
    than the window fall back to the full sequence.
    """
    frames = int(round(window_seconds * sample_rate / hop))
    length = acoustic.shape[-2]
    if frames >= length:
        if frames > length:
            log.warning("sequence of %d frames shorter than %d-frame window; "
                        "using full sequence", length, frames)
        return acoustic, audio, 0
    start = int(rng.integers(0, length - frames + 1))
    ac = acoustic[..., start:start + frames, :]
    au = audio[..., start * hop:(start + frames) * hop]
    return ac, au, start


def train_stage2(data: list[TrainingSample], cfg: PipelineConfig,
                 plan: TrainPlan, out_dir: str | Path,
                 stage1_checkpoint: str | Path | None = None,
                 stop_at_mel_ratio: float | None = None) -> TrainResult:
    """Adversarial stage: alternating discriminator / generator updates on
    sampled windows. freeze_upstream keeps encoder + conditional module
    bit-identical.
    """
    if not data:
        raise RuntimeError("stage-2 training started with an empty dataset")
    plan.validate(cfg.mel)
    if plan.stage != 2:
        raise ValueError("train_stage2 called with a stage-1 plan")
    if stage1_checkpoint is None and plan.ablation not in (
            "skip_stage1", "no_conditional_module"):
        raise RuntimeError("stage 2 requires a stage-1 checkpoint "
                           "(or an ablation that removes stage 1)")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(plan.seed)

    if stage1_checkpoint is not None:
        stage1_model, _ = load_checkpoint(stage1_checkpoint, cfg)
        model = LipToSpeech(cfg, ablation=plan.ablation)
        # carry over every upstream parameter that exists in this topology
        own = model.state_dict()
        carried = {k: v for k, v in stage1_model.state_dict().items()
                   if k in own and own[k].shape == v.shape}
        own.update(carried)
        model.load_state_dict(own)
    else:
        model = LipToSpeech(cfg, ablation=plan.ablation)
    model.train()
    disc = DiscriminatorEnsemble(cfg.discriminator)
    mel_transform = losses.MelTransform(cfg.mel)

    if plan.freeze_upstream:
        for p in model.upstream_parameters():
            p.requires_grad_(False)
        g_params = model.generator_parameters()
    else:
        g_params = model.generator_parameters() + model.upstream_parameters()
    g_opt = _make_optimizer(plan, g_params)
    d_opt = _make_optimizer(plan, list(disc.parameters()))
    g_sched = torch.optim.lr_scheduler.ExponentialLR(g_opt, plan.lr_decay_per_epoch)
    d_sched = torch.optim.lr_scheduler.ExponentialLR(d_opt, plan.lr_decay_per_epoch)

    loss_log = LossLog(out_dir / "stage2_losses.csv")
    curve = []
    ckpt_path = out_dir / "stage2.pt"
    mel_history: list[float] = []
    baseline: float | None = None
    steps_per_epoch = max(1, len(data) // max(1, plan.batch_size))
    try:
        for step in range(plan.steps):
            rng = np.random.default_rng(plan.seed + step)
            video, _, audio = _batch_tensors(_batches(data, plan, step))
            with torch.set_grad_enabled(not plan.freeze_upstream):
                acoustic = model.acoustic_features(video)
            n = min(acoustic.shape[1] * cfg.mel.hop, audio.shape[-1])
            acoustic = acoustic[:, : n // cfg.mel.hop]
            audio = audio[..., :n]
            ac_win, au_win, _ = sample_window(acoustic, audio,
                                              plan.window_seconds, rng,
                                              cfg.mel.hop, cfg.mel.sample_rate)
            fake = model.generator(ac_win)

            # discriminator step (adversarial term only)
            d_opt.zero_grad()
            real_out = disc(au_win)
            fake_out = disc(fake.detach())
            d_loss, d_comp = losses.stage2_discriminator_loss(
                real_out.scores, fake_out.scores)
            d_loss.backward()
            d_opt.step()

            # generator step
            g_opt.zero_grad()
            fake_out = disc(fake)
            with torch.no_grad():
                real_out = disc(au_win)
            g_loss, g_comp = losses.stage2_generator_loss(
                fake_out.scores, real_out.feature_maps, fake_out.feature_maps,
                fake, au_win, mel_transform, cfg.loss_weights)
            g_loss.backward()
            g_opt.step()
            if step and step % steps_per_epoch == 0:
                g_sched.step()
                d_sched.step()

            components = {**d_comp, **g_comp, "step": step}
            curve.append(components)
            mel_history.append(g_comp["mel"])
            if step % plan.log_every == 0:
                loss_log.write(step, {**d_comp, **g_comp})
                log.info("stage2 step %d: G=%.4f D=%.4f mel=%.4f",
                         step, g_comp["total_g"], d_comp["total_d"],
                         g_comp["mel"])
            if step % plan.checkpoint_every == plan.checkpoint_every - 1:
                save_checkpoint(ckpt_path, model, step=step, stage=2,
                                extra={"discriminator": disc.state_dict()})
            if stop_at_mel_ratio is not None and step >= 100:
                if baseline is None:
                    baseline = float(np.mean(mel_history[max(0, step - 20):]))
                recent = float(np.mean(mel_history[-10:]))
                if recent <= stop_at_mel_ratio * baseline:
                    log.info("stage2 early stop at step %d (mel %.4f <= "
                             "%.2f x baseline %.4f)", step, recent,
                             stop_at_mel_ratio, baseline)
                    break
    finally:
        loss_log.close()
    save_checkpoint(ckpt_path, model, step=plan.steps, stage=2,
                    extra={"discriminator": disc.state_dict()})
    return TrainResult(ckpt_path, curve)


def apply_ablation(cfg: PipelineConfig, mode: str) -> LipToSpeech:
    """Construct the model variant for an ablation study."""
    return LipToSpeech(cfg, ablation=mode)
