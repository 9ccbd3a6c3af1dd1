"""End-to-end smoke test of the command-line interface.

Runs preprocess -> train (both stages) -> synthesize -> benchmark ->
count-params on a tiny synthetic clip with a desk-scale configuration.
"""

import dataclasses
import json

import cv2
import numpy as np
import pytest

from lipspeech.cli import main
from lipspeech.config import toy_config
from lipspeech.media import read_wav, write_wav, Waveform


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Frame directory, WAV, sidecar and config for a 3 s synthetic clip."""
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(0)

    frame_dir = root / "frames"
    frame_dir.mkdir()
    n_frames = 90  # 3 s at 30 fps
    for i in range(n_frames):
        img = rng.integers(0, 256, size=(48, 64, 3), dtype=np.uint8)
        cv2.imwrite(str(frame_dir / f"frame_{i:04d}.png"), img)

    boxes = root / "boxes.txt"
    boxes.write_text("# idx x0 y0 x1 y1\n" + "\n".join(
        f"{i} 8 4 56 44" for i in range(n_frames)))

    wav = root / "audio.wav"
    write_wav(wav, Waveform(
        (rng.standard_normal(48000) * 0.1).astype(np.float32), 16000))

    cfg = toy_config(frame_size=16, d_t=32, layers=1, base_channels=16,
                     attention_features=16)
    cfg.train = dataclasses.replace(cfg.train, steps=2, batch_size=1)
    cfg_path = root / "config.json"
    cfg.to_json(cfg_path)
    return root


def test_full_pipeline(workspace):
    root = workspace
    cfg = str(root / "config.json")

    assert main(["preprocess", "--video", str(root / "frames"),
                 "--audio", str(root / "audio.wav"),
                 "--boxes", str(root / "boxes.txt"),
                 "--out", str(root / "data"), "--config", cfg]) == 0
    data_files = sorted((root / "data").glob("sample_*.npz"))
    assert data_files, "preprocess produced no samples"

    assert main(["train", "--stage", "1", "--config", cfg,
                 "--data", str(root / "data"),
                 "--out", str(root / "run"), "--steps", "2"]) == 0
    assert (root / "run" / "stage1.pt").exists()

    assert main(["train", "--stage", "2", "--config", cfg,
                 "--data", str(root / "data"),
                 "--out", str(root / "run"),
                 "--resume", str(root / "run" / "stage1.pt"),
                 "--steps", "2"]) == 0
    assert (root / "run" / "stage2.pt").exists()

    out_wav = root / "synth.wav"
    assert main(["synthesize", "--input", str(root / "frames"),
                 "--checkpoint", str(root / "run" / "stage2.pt"),
                 "--out", str(out_wav)]) == 0
    audio = read_wav(out_wav)
    # 90 frames at 30 fps duplicate to 240 mel frames of 200 samples
    assert audio.num_samples == 240 * 200

    csv_path = root / "latency.csv"
    assert main(["benchmark", "--lengths", "0.2,0.4", "--trials", "1",
                 "--config", cfg, "--out", str(csv_path)]) == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("input_seconds,")
    assert len(lines) == 9  # 2 lengths x 4 combinations + header


def test_count_params_prints_report(workspace, capsys):
    assert main(["count-params", "--config",
                 str(workspace / "config.json")]) == 0
    out = capsys.readouterr().out
    assert "total" in out and "frontend" in out
