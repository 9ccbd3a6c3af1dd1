"""Inference latency benchmark and parameter counting.

Compares the parallel pipeline against an autoregressive reference decoder
whose only purpose is to exhibit O(L) sequential latency at a per-frame
cost comparable to one conditional-module layer. Absolute speedups are
machine-dependent; only the scaling shape is asserted.
"""

from __future__ import annotations

import csv
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .config import DecoderConfig, PipelineConfig
from .media import MelSpectrogram, griffin_lim
from .model import LipToSpeech

log = logging.getLogger(__name__)

BENCH_CSV_HEADER = ["input_seconds", "stage", "decoder", "mean_ms", "std_ms",
                    "trials"]


@dataclass
class LatencyRow:
    input_seconds: float
    stage: str       # "mel" | "waveform"
    decoder: str     # "parallel" | "autoregressive"
    mean_ms: float
    std_ms: float
    trials: int
    failed: bool = False


@dataclass
class LatencyReport:
    rows: list[LatencyRow] = field(default_factory=list)
    environment: str = ""
    batch_size: int = 1

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(BENCH_CSV_HEADER)
            for r in self.rows:
                w.writerow([r.input_seconds, r.stage, r.decoder,
                            f"{r.mean_ms:.3f}", f"{r.std_ms:.3f}", r.trials])


class AutoregressiveReference(nn.Module):
    """Frame-by-frame mel decoder with a causal recurrence.

    Each output frame is computed from the aligned feature at that position
    and the previously emitted frame, through a bottleneck comparable in
    cost to one conditional-module layer. A step counter records the
    sequential step count.
    """

    def __init__(self, cfg: DecoderConfig, n_mels: int = 80):
        super().__init__()
        self.prenet = nn.Linear(n_mels, cfg.d_t)
        self.cell = nn.GRUCell(2 * cfg.d_t, cfg.d_t)
        self.ff = nn.Sequential(nn.Linear(cfg.d_t, cfg.d_ff), nn.Tanh(),
                                nn.Linear(cfg.d_ff, cfg.d_t))
        self.mel_out = nn.Linear(cfg.d_t, n_mels)
        self.n_mels = n_mels
        self.d_t = cfg.d_t
        self.steps_taken = 0

    def forward(self, aligned: torch.Tensor) -> torch.Tensor:
        """(B, L_mel, d_t) -> (B, L_mel, n_mels), one step per output frame."""
        b, length, _ = aligned.shape
        h = aligned.new_zeros(b, self.d_t)
        prev = aligned.new_zeros(b, self.n_mels)
        frames = []
        self.steps_taken = 0
        for i in range(length):
            x = torch.cat([aligned[:, i], self.prenet(prev)], dim=-1)
            h = self.cell(x, h)
            frame = self.mel_out(self.ff(h))
            frames.append(frame)
            prev = frame
            self.steps_taken += 1
        return torch.stack(frames, dim=1)


def _time_call(fn, trials: int, warmup: int = 3) -> tuple[float, float]:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(trials):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    return float(np.mean(times)), float(np.std(times))


def synthetic_video(seconds: float, cfg: PipelineConfig,
                    seed: int = 0) -> torch.Tensor:
    """Random-noise clip tensor; content does not affect timing."""
    t = int(round(seconds * cfg.fps))
    gen = torch.Generator().manual_seed(seed)
    size = cfg.frontend.frame_size
    return torch.rand(1, 3, t, size, size, generator=gen)


def run_benchmark(lengths: list[float], trials: int, model: LipToSpeech,
                  griffin_lim_iters: int = 30) -> LatencyReport:
    """Time the mel path and the waveform path for both decoders.

    The parallel mel path is encoder + alignment + conditional module + aux
    head; the autoregressive mel path swaps in the sequential reference.
    Waveform paths append the GAN generator (parallel) or Griffin-Lim
    (autoregressive two-stage baseline). Timing excludes preprocessing.
    """
    if sorted(lengths) != list(lengths):
        raise ValueError("lengths must be sorted ascending")
    model.eval()
    cfg = model.cfg
    ar = AutoregressiveReference(cfg.decoder, cfg.mel.n_mels)
    ar.eval()
    report = LatencyReport(environment=f"{platform.processor() or 'cpu'} "
                                       f"{platform.platform()}",
                           batch_size=1)
    for seconds in lengths:
        video = synthetic_video(seconds, cfg)
        try:
            with torch.no_grad():
                aligned = model.align_features(model.encode_video(video))

                def mel_parallel():
                    with torch.no_grad():
                        model.aux_mel(model.decoder(
                            model.align_features(model.encode_video(video))))

                def mel_ar():
                    with torch.no_grad():
                        ar(model.align_features(model.encode_video(video)))

                def wav_parallel():
                    with torch.no_grad():
                        model.generator(model.decoder(
                            model.align_features(model.encode_video(video))))

                with torch.no_grad():
                    ar_mel = ar(aligned).squeeze(0).clamp(0, 1).numpy()
                ar_spec = MelSpectrogram(ar_mel, hop=cfg.mel.hop,
                                         window=cfg.mel.win_length,
                                         sample_rate=cfg.mel.sample_rate)

                def wav_ar():
                    # the two-stage baseline: AR mel, then Griffin-Lim
                    with torch.no_grad():
                        ar(model.align_features(model.encode_video(video)))
                    griffin_lim(ar_spec, griffin_lim_iters, cfg.mel)

                for stage, decoder, fn in [("mel", "parallel", mel_parallel),
                                           ("mel", "autoregressive", mel_ar),
                                           ("waveform", "parallel", wav_parallel),
                                           ("waveform", "autoregressive", wav_ar)]:
                    mean, std = _time_call(fn, trials)
                    report.rows.append(LatencyRow(seconds, stage, decoder,
                                                  mean, std, trials))
        except (RuntimeError, MemoryError) as exc:
            log.error("benchmark failed at %.1f s: %s", seconds, exc)
            for stage in ("mel", "waveform"):
                for decoder in ("parallel", "autoregressive"):
                    report.rows.append(LatencyRow(seconds, stage, decoder,
                                                  float("nan"), float("nan"),
                                                  0, failed=True))
    return report


def fit_latency_slope(report: LatencyReport, stage: str,
                      decoder: str) -> float:
    """Least-squares slope of mean latency vs input length (ms per second)."""
    pts = [(r.input_seconds, r.mean_ms) for r in report.rows
           if r.stage == stage and r.decoder == decoder and not r.failed]
    if len(pts) < 2:
        raise ValueError("need at least two successful rows to fit a slope")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class ParamReport:
    module_counts: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.module_counts.values())

    def format(self) -> str:
        lines = [f"{name:24s} {count:>12,d}"
                 for name, count in self.module_counts.items()]
        lines.append(f"{'total':24s} {self.total:>12,d} "
                     f"({self.total / 1e6:.2f}M)")
        return "\n".join(lines)


def count_params(model: nn.Module) -> ParamReport:
    """Exact per-submodule parameter counts (trainable and not)."""
    counts: dict[str, int] = {}
    for name, child in model.named_children():
        counts[name] = sum(p.numel() for p in child.parameters())
    direct = sum(p.numel() for p in model.parameters(recurse=False))
    if direct:
        counts["(direct)"] = direct
    return ParamReport(counts)
