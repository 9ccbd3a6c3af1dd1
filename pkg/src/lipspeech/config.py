"""Configuration dataclasses for the whole pipeline.

Every hyperparameter lives here, is JSON-serializable and versioned.
Loading rejects unknown keys so stale config files fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

CONFIG_VERSION = 1

LOG_FLOOR = 1e-5


@dataclass
class MelConfig:
    sample_rate: int = 16000
    n_fft: int = 1024
    win_length: int = 800
    hop: int = 200
    n_mels: int = 80
    fmin: float = 55.0
    fmax: float = 7600.0
    log_floor: float = LOG_FLOOR
    # corpus-level min/max of the log-mel values, used for [0, 1] normalization
    norm_min: float = math.log(LOG_FLOOR)
    norm_max: float = 5.0

    @property
    def frames_per_second(self) -> float:
        return self.sample_rate / self.hop


@dataclass
class AugmentPolicy:
    flip_prob: float = 0.4
    crop_prob: float = 0.4
    max_crop_fraction: float = 0.072

    def validate(self) -> None:
        if not (0.0 <= self.flip_prob <= 1.0 and 0.0 <= self.crop_prob <= 1.0):
            raise ValueError("augment probabilities must lie in [0, 1]")
        if not (0.0 <= self.max_crop_fraction <= 0.072):
            raise ValueError(
                f"max_crop_fraction {self.max_crop_fraction} outside [0, 0.072]"
            )


@dataclass
class FrontendConfig:
    frame_size: int = 96
    conv_kernel: tuple[int, int, int] = (5, 5, 5)
    conv_time_stride: int = 1
    d_token: int = 32
    spatial_layers: int = 4
    d_s: int = 36
    h_s: int = 6
    temporal_layers: int = 4
    h_t: int = 8
    d_t: int = 384
    attention_features: int = 256
    shared_spatial_pos_embedding: bool = True
    feature_seed: int = 0

    @property
    def d_ff(self) -> int:
        return 4 * self.d_t

    @property
    def grid_size(self) -> int:
        # conv stride 2 halves, max-pool 2x2 halves again
        return self.frame_size // 4

    @property
    def n_spatial_tokens(self) -> int:
        return self.grid_size * self.grid_size

    def validate(self) -> None:
        if self.d_s % self.h_s != 0:
            raise ValueError(f"d_s={self.d_s} not divisible by h_s={self.h_s}")
        if self.d_t % self.h_t != 0:
            raise ValueError(f"d_t={self.d_t} not divisible by h_t={self.h_t}")
        if self.frame_size % 4 != 0:
            raise ValueError("frame_size must be divisible by 4")


@dataclass
class DecoderConfig:
    layers: int = 4
    d_t: int = 384
    heads: int = 8
    conv_kernel: int = 9
    use_positional_encoding: bool = True
    conv_padding_mode: str = "zeros"

    @property
    def d_ff(self) -> int:
        return 4 * self.d_t

    def validate(self) -> None:
        if self.d_t % self.heads != 0:
            raise ValueError(f"d_t={self.d_t} not divisible by heads={self.heads}")
        if self.conv_kernel % 2 != 1:
            raise ValueError("conv_kernel must be odd")


@dataclass
class GeneratorConfig:
    upsample_kernels: tuple[int, ...] = (9, 9, 8, 4)
    upsample_strides: tuple[int, ...] = (5, 5, 4, 2)
    resblock_kernels: tuple[int, ...] = (3, 7, 11)
    resblock_dilations: tuple[int, ...] = (1, 3, 5)
    base_channels: int = 512
    mel_dim: int = 80

    @property
    def total_upsample(self) -> int:
        return math.prod(self.upsample_strides)

    def validate(self, hop: int = 200) -> None:
        if len(self.upsample_kernels) != len(self.upsample_strides):
            raise ValueError("kernel/stride lists must have equal length")
        if self.total_upsample != hop:
            raise ValueError(
                f"product of upsample strides {self.total_upsample} != hop {hop}"
            )
        for k, u in zip(self.upsample_kernels, self.upsample_strides):
            if k < u:
                raise ValueError(f"upsample kernel {k} smaller than stride {u}")
            if (k - u) % 2 != 0:
                raise ValueError(f"kernel {k} / stride {u} need (k-u) even padding")


@dataclass
class DiscriminatorConfig:
    periods: tuple[int, ...] = (2, 3, 5, 7, 11)
    scales: int = 3
    channels: int = 32
    max_channels: int = 1024


ABLATION_MODES = ("none", "no_waveform_generator", "no_conditional_module", "skip_stage1")


@dataclass
class TrainPlan:
    stage: int = 1
    optimizer_name: str = "adam"
    lr: float = 2e-3
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.0
    lr_decay_per_epoch: float = 1.0
    window_seconds: float = 1.2
    freeze_upstream: bool = True
    ablation: str = "none"
    seed: int = 0
    steps: int = 1000
    batch_size: int = 1
    checkpoint_every: int = 1000
    log_every: int = 10

    def validate(self, mel: MelConfig) -> None:
        if self.stage not in (1, 2):
            raise ValueError(f"stage must be 1 or 2, got {self.stage}")
        if self.ablation not in ABLATION_MODES:
            raise ValueError(f"unknown ablation mode {self.ablation!r}")
        frames = self.window_seconds * mel.frames_per_second
        if abs(frames - round(frames)) > 1e-9:
            raise ValueError(
                f"window_seconds={self.window_seconds} is not an integer number "
                f"of mel frames at {mel.frames_per_second} frames/s"
            )

    @property
    def window_frames_at(self) -> float:
        return self.window_seconds

    @staticmethod
    def for_stage(stage: int, **overrides) -> "TrainPlan":
        """Per-stage defaults: Adam/2e-3 for stage 1, AdamW/2e-4 for stage 2."""
        if stage == 1:
            base = dict(stage=1, optimizer_name="adam", lr=2e-3,
                        betas=(0.9, 0.999), weight_decay=0.0)
        else:
            base = dict(stage=2, optimizer_name="adamw", lr=2e-4,
                        betas=(0.8, 0.99), weight_decay=0.01,
                        lr_decay_per_epoch=0.999)
        base.update(overrides)
        return TrainPlan(**base)


@dataclass
class LossWeights:
    lambda_ssim: float = 1.0
    lambda_l1: float = 1.0
    lambda_adv: float = 1.0
    lambda_mel: float = 45.0
    lambda_fm: float = 2.0


@dataclass
class PipelineConfig:
    version: int = CONFIG_VERSION
    fps: float = 30.0
    mel: MelConfig = field(default_factory=MelConfig)
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    train: TrainPlan = field(default_factory=TrainPlan)

    def validate(self) -> None:
        self.augment.validate()
        self.frontend.validate()
        self.decoder.validate()
        self.generator.validate(self.mel.hop)
        self.train.validate(self.mel)
        if self.decoder.d_t != self.frontend.d_t:
            raise ValueError(
                f"decoder d_t {self.decoder.d_t} != frontend d_t {self.frontend.d_t}"
            )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        cfg = _build_dataclass(cls, data, "config")
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def grid_config() -> PipelineConfig:
    """Small-dataset configuration (d_t = 160)."""
    cfg = PipelineConfig()
    cfg.frontend.d_t = 160
    cfg.decoder.d_t = 160
    return cfg


def toy_config(frame_size: int = 32, d_t: int = 64, layers: int = 2,
               base_channels: int = 32, attention_features: int = 64) -> PipelineConfig:
    """Desk-scale configuration for smoke tests and benchmarks."""
    cfg = PipelineConfig()
    cfg.frontend = FrontendConfig(
        frame_size=frame_size, d_token=16, spatial_layers=layers, d_s=16, h_s=4,
        temporal_layers=layers, h_t=4, d_t=d_t,
        attention_features=attention_features,
    )
    cfg.decoder = DecoderConfig(layers=layers, d_t=d_t, heads=4)
    cfg.generator = GeneratorConfig(base_channels=base_channels)
    cfg.discriminator = DiscriminatorConfig(periods=(2, 3, 5), scales=2,
                                            channels=8, max_channels=64)
    return cfg


def _build_dataclass(cls: type, data: Any, where: str):
    """Recursively build a dataclass, rejecting unknown keys."""
    if not dataclasses.is_dataclass(cls):
        # leaf: tuples arrive as lists from JSON
        return data
    if not isinstance(data, dict):
        raise ValueError(f"{where}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        ftype = f.type if isinstance(f.type, type) else None
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default  # type: ignore[misc]
        target = type(default) if dataclasses.is_dataclass(default) else ftype
        if dataclasses.is_dataclass(target):
            kwargs[name] = _build_dataclass(target, value, f"{where}.{name}")
        elif isinstance(default, tuple) and isinstance(value, list):
            kwargs[name] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            kwargs[name] = value
    return cls(**kwargs)
