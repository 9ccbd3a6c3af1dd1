"""Non-autoregressive end-to-end lip-to-speech synthesis pipeline."""

from .config import PipelineConfig, TrainPlan, toy_config, grid_config
from .media import (VideoClip, Waveform, MelSpectrogram, TrainingSample,
                    load_clip, augment, extract_mel, griffin_lim,
                    window_dataset)
from .alignment import DuplicationPlan, duplication_counts, align
from .model import LipToSpeech, synthesize, save_checkpoint, load_checkpoint

__all__ = [
    "PipelineConfig", "TrainPlan", "toy_config", "grid_config",
    "VideoClip", "Waveform", "MelSpectrogram", "TrainingSample",
    "load_clip", "augment", "extract_mel", "griffin_lim", "window_dataset",
    "DuplicationPlan", "duplication_counts", "align",
    "LipToSpeech", "synthesize", "save_checkpoint", "load_checkpoint",
]

__version__ = "0.1.0"
