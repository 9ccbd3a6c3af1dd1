"""Video-rate to mel-rate alignment by per-frame duplication.

Each visual feature is held for floor(d) or ceil(d) mel frames, where
d = mel frame rate / video frame rate. The cumulative-ceiling scheme
interleaves the two counts so the total always equals ceil(T * d).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class DuplicationPlan:
    counts: list[int]
    rate: float  # the duplication factor d

    @property
    def total(self) -> int:
        return sum(self.counts)

    def __len__(self) -> int:
        return len(self.counts)


def duplication_counts(num_frames: int, fps: float,
                       mel_rate: float) -> DuplicationPlan:
    """counts[i] = ceil((i+1)*d) - ceil(i*d) with d = mel_rate / fps.

    Integer d gives constant counts; otherwise counts alternate between
    floor(d) and ceil(d) (e.g. d = 8/3 -> 3, 3, 2, 3, 3, 2, ...).
    """
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    if fps <= 0 or mel_rate <= 0:
        raise ValueError(f"rates must be positive: fps={fps}, mel_rate={mel_rate}")
    d = mel_rate / fps
    bounds = [math.ceil(i * d) for i in range(num_frames + 1)]
    counts = [bounds[i + 1] - bounds[i] for i in range(num_frames)]
    return DuplicationPlan(counts=counts, rate=d)


def align(features: np.ndarray, plan: DuplicationPlan) -> np.ndarray:
    """Repeat feature rows per the plan. (T, d) -> (plan.total, d)."""
    if features.shape[0] != len(plan):
        raise RuntimeError(
            f"plan length {len(plan)} != feature count {features.shape[0]}"
        )
    return np.repeat(features, plan.counts, axis=0)


def source_indices(plan: DuplicationPlan) -> np.ndarray:
    """For each output row, the input frame it was copied from."""
    return np.repeat(np.arange(len(plan)), plan.counts)
