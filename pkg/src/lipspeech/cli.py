"""Command-line entry point.

Subcommands: preprocess, train, synthesize, benchmark, count-params.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import media, training
from .bench import count_params, run_benchmark
from .config import PipelineConfig, TrainPlan
from .model import LipToSpeech, load_checkpoint, synthesize

log = logging.getLogger("lipspeech")


def _load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return PipelineConfig.from_json(path)


def cmd_preprocess(args) -> int:
    cfg = _load_config(args.config)
    frames = media.load_frame_dir(args.video)
    boxes = media.read_crop_boxes(args.boxes)
    clip = media.load_clip(frames, boxes, target_size=cfg.frontend.frame_size,
                           fps=cfg.fps, source_id=Path(args.video).name)
    audio = media.read_wav(args.audio, cfg.mel.sample_rate)
    samples = media.window_dataset(clip, audio, mel_cfg=cfg.mel)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, s in enumerate(samples):
        np.savez_compressed(out / f"sample_{i:05d}.npz",
                            frames=s.clip.frames, fps=s.clip.fps,
                            audio=s.audio.samples, mel=s.mel.values)
    log.info("wrote %d training samples to %s", len(samples), out)
    return 0


def load_sample_dir(path: str | Path, cfg: PipelineConfig
                    ) -> list[media.TrainingSample]:
    samples = []
    for f in sorted(Path(path).glob("sample_*.npz")):
        z = np.load(f)
        clip = media.VideoClip(z["frames"], fps=float(z["fps"]),
                               source_id=f.stem)
        audio = media.Waveform(z["audio"], cfg.mel.sample_rate)
        mel = media.MelSpectrogram(z["mel"], hop=cfg.mel.hop,
                                   window=cfg.mel.win_length,
                                   sample_rate=cfg.mel.sample_rate)
        samples.append(media.TrainingSample(clip, audio, mel))
    return samples


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    plan = TrainPlan.for_stage(args.stage, ablation=args.ablation,
                               steps=args.steps)
    data = load_sample_dir(args.data, cfg)
    out_dir = Path(args.out)
    if args.stage == 1:
        result = training.train_stage1(data, cfg, plan, out_dir)
    else:
        result = training.train_stage2(data, cfg, plan, out_dir,
                                       stage1_checkpoint=args.resume)
    log.info("training done; checkpoint at %s", result.checkpoint_path)
    return 0


def cmd_synthesize(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    frames = media.load_frame_dir(args.input)
    full = [(0, 0, f.shape[1], f.shape[0]) for f in frames]
    clip = media.load_clip(frames, full,
                           target_size=model.cfg.frontend.frame_size,
                           fps=model.cfg.fps)
    audio = synthesize(clip, model)
    media.write_wav(args.out, audio)
    log.info("wrote %s (%.2f s)", args.out, audio.duration)
    return 0


def cmd_benchmark(args) -> int:
    lengths = sorted(float(x) for x in args.lengths.split(","))
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
    else:
        model = LipToSpeech(_load_config(args.config))
    report = run_benchmark(lengths, args.trials, model)
    report.write_csv(args.out)
    log.info("benchmark written to %s (%d rows)", args.out, len(report.rows))
    return 0


def cmd_count_params(args) -> int:
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
    else:
        model = LipToSpeech(_load_config(args.config))
    report = count_params(model)
    print(report.format())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lipspeech",
                                description="lip-to-speech synthesis pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    pre = sub.add_parser("preprocess", help="cut video+audio into samples")
    pre.add_argument("--video", required=True,
                     help="frame image directory (pre-extracted)")
    pre.add_argument("--audio", required=True, help="WAV file")
    pre.add_argument("--boxes", required=True, help="crop-box sidecar file")
    pre.add_argument("--out", required=True)
    pre.add_argument("--config")
    pre.set_defaults(func=cmd_preprocess)

    tr = sub.add_parser("train", help="run one training stage")
    tr.add_argument("--stage", type=int, choices=(1, 2), required=True)
    tr.add_argument("--config")
    tr.add_argument("--data", required=True, help="preprocessed sample dir")
    tr.add_argument("--out", default="runs")
    tr.add_argument("--resume", help="stage-1 checkpoint (stage 2)")
    tr.add_argument("--ablation", default="none")
    tr.add_argument("--steps", type=int, default=1000)
    tr.set_defaults(func=cmd_train)

    syn = sub.add_parser("synthesize", help="video frames -> WAV")
    syn.add_argument("--input", required=True, help="clip frame directory")
    syn.add_argument("--checkpoint", required=True)
    syn.add_argument("--out", required=True)
    syn.set_defaults(func=cmd_synthesize)

    be = sub.add_parser("benchmark", help="latency benchmark")
    be.add_argument("--lengths", default="1,2,3,5,8")
    be.add_argument("--trials", type=int, default=10)
    be.add_argument("--checkpoint")
    be.add_argument("--config")
    be.add_argument("--out", required=True)
    be.set_defaults(func=cmd_benchmark)

    cp = sub.add_parser("count-params", help="parameter report")
    cp.add_argument("--config")
    cp.add_argument("--checkpoint")
    cp.set_defaults(func=cmd_count_params)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
