"""Media ingestion: face-crop clips, waveforms, log-mel spectrograms.

Also provides Griffin-Lim phase reconstruction as a debugging vocoder and
the 3-second training-sample windower.
"""

from __future__ import annotations

import logging
import wave
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .config import AugmentPolicy, MelConfig

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class VideoClip:
    """Cropped face frame sequence. frames: (T, H, W, 3) uint8."""
    frames: np.ndarray
    fps: float
    source_id: str = ""

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames)
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise ValueError(f"frames must be (T, H, W, 3), got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise ValueError("clip must contain at least one frame")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def duration(self) -> float:
        return self.num_frames / self.fps


@dataclass
class Waveform:
    """Mono audio samples in [-1, 1]."""
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise ValueError("waveform must be mono (1-D)")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate

    def normalized(self) -> "Waveform":
        peak = np.max(np.abs(self.samples))
        if peak > 1.0:
            return Waveform(self.samples / peak, self.sample_rate)
        return self


@dataclass
class MelSpectrogram:
    """Frame-major log-mel matrix, values normalized to [0, 1]."""
    values: np.ndarray
    hop: int
    window: int
    sample_rate: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2 or self.values.shape[1] != 80:
            raise ValueError(f"mel must be (frames, 80), got {self.values.shape}")

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]


@dataclass
class TrainingSample:
    clip: VideoClip
    audio: Waveform
    mel: MelSpectrogram

    def __post_init__(self):
        t, sr = self.clip.num_frames, self.audio.sample_rate
        l, fps = self.audio.num_samples, self.clip.fps
        slack = sr / fps  # one video frame of audio
        if abs(t * sr - l * fps) > slack * fps + 1e-6:
            raise ValueError(
                f"video/audio length mismatch: {t} frames at {fps} fps vs "
                f"{l} samples at {sr} Hz"
            )


# ---------------------------------------------------------------------------
# Clip loading and augmentation
# ---------------------------------------------------------------------------

def load_clip(frames, crop_boxes, target_size: int = 96, fps: float = 30.0,
              source_id: str = "") -> VideoClip:
    """Crop each frame to its box and resize to target_size x target_size.

    crop_boxes: one (x0, y0, x1, y1) per frame, zero-based, exclusive end.
    """
    frames = [np.asarray(f) for f in frames]
    if len(crop_boxes) != len(frames):
        raise ValueError(
            f"got {len(crop_boxes)} crop boxes for {len(frames)} frames"
        )
    out = []
    for i, (frame, box) in enumerate(zip(frames, crop_boxes)):
        x0, y0, x1, y1 = (int(v) for v in box)
        h, w = frame.shape[:2]
        if x1 <= x0 or y1 <= y0:
            raise ValueError(f"degenerate crop box at frame {i}: {box}")
        if x0 < 0 or y0 < 0 or x1 > w or y1 > h:
            raise ValueError(f"crop box at frame {i} outside frame bounds: {box}")
        crop = frame[y0:y1, x0:x1]
        if crop.shape[0] == target_size and crop.shape[1] == target_size:
            out.append(crop.copy())
        else:
            out.append(cv2.resize(crop, (target_size, target_size),
                                  interpolation=cv2.INTER_LINEAR))
    return VideoClip(np.stack(out), fps=fps, source_id=source_id)


def read_crop_boxes(path: str | Path) -> list[tuple[int, int, int, int]]:
    """Parse the crop-box sidecar: one line per frame, 'idx x0 y0 x1 y1'."""
    boxes: dict[int, tuple[int, int, int, int]] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"bad sidecar line: {line!r}")
        idx, x0, y0, x1, y1 = (int(p) for p in parts)
        boxes[idx] = (x0, y0, x1, y1)
    return [boxes[i] for i in sorted(boxes)]


def augment(clip: VideoClip, rng: np.random.Generator,
            policy: AugmentPolicy) -> VideoClip:
    """Per-clip horizontal flip and per-clip random edge crop, then re-resize.

    Deterministic under a fixed rng state; zero-probability policy is the
    identity (bit-exact).
    """
    policy.validate()
    frames = clip.frames
    size = frames.shape[1]

    if policy.flip_prob > 0 and rng.random() < policy.flip_prob:
        frames = frames[:, :, ::-1, :]

    if policy.crop_prob > 0 and rng.random() < policy.crop_prob:
        frac = rng.uniform(0.0, policy.max_crop_fraction)
        horizontal = rng.random() < 0.5
        cut = int(round(frac * size))
        if cut > 0:
            left = rng.integers(0, cut + 1)
            if horizontal:
                frames = frames[:, :, left:size - (cut - left), :]
            else:
                frames = frames[:, left:size - (cut - left), :, :]
            frames = np.stack([
                cv2.resize(f, (size, size), interpolation=cv2.INTER_LINEAR)
                for f in frames
            ])

    if frames is clip.frames:
        return clip
    return VideoClip(np.ascontiguousarray(frames), fps=clip.fps,
                     source_id=clip.source_id)


# ---------------------------------------------------------------------------
# Mel analysis
# ---------------------------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular mel filterbank, (n_mels, n_fft//2 + 1), peak amplitude 1."""
    n_bins = cfg.n_fft // 2 + 1
    fft_freqs = np.linspace(0.0, cfg.sample_rate / 2.0, n_bins)
    mel_pts = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    fb = np.zeros((cfg.n_mels, n_bins))
    for i in range(cfg.n_mels):
        lo, ctr, hi = hz_pts[i], hz_pts[i + 1], hz_pts[i + 2]
        up = (fft_freqs - lo) / (ctr - lo)
        down = (hi - fft_freqs) / (hi - ctr)
        fb[i] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def mel_center_frequencies(cfg: MelConfig) -> np.ndarray:
    """Center frequency (Hz) of each mel filter; independent oracle hook."""
    mel_pts = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return mel_to_hz(mel_pts)[1:-1]


def _frame_signal(samples: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Centered framing with reflect padding; n_frames = ceil(L / hop)."""
    n_frames = -(-len(samples) // cfg.hop)
    half = cfg.win_length // 2
    padded = np.pad(samples, (half, half + cfg.win_length), mode="reflect")
    idx = np.arange(cfg.win_length)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    return padded[idx]


def stft_magnitude(samples: np.ndarray, cfg: MelConfig) -> np.ndarray:
    frames = _frame_signal(np.asarray(samples, dtype=np.float64), cfg)
    window = np.hanning(cfg.win_length)
    return np.abs(np.fft.rfft(frames * window, n=cfg.n_fft, axis=1))


def extract_mel(audio: Waveform, cfg: MelConfig) -> MelSpectrogram:
    """Waveform -> normalized log-mel. ceil(L/hop) frames x 80 bins."""
    if audio.num_samples == 0:
        raise ValueError("cannot extract mel from empty audio")
    if audio.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"audio sample rate {audio.sample_rate} != config {cfg.sample_rate}"
        )
    log_mel = log_mel_raw(audio.samples, cfg)
    return MelSpectrogram(normalize_mel(log_mel, cfg), hop=cfg.hop,
                          window=cfg.win_length, sample_rate=cfg.sample_rate)


def log_mel_raw(samples: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Un-normalized log-mel matrix (used for the stage-2 mel loss)."""
    mag = stft_magnitude(samples, cfg)
    mel = mag @ mel_filterbank(cfg).T
    return np.log(np.maximum(mel, cfg.log_floor))


def normalize_mel(log_mel: np.ndarray, cfg: MelConfig) -> np.ndarray:
    scaled = (log_mel - cfg.norm_min) / (cfg.norm_max - cfg.norm_min)
    return np.clip(scaled, 0.0, 1.0)


def denormalize_mel(values: np.ndarray, cfg: MelConfig) -> np.ndarray:
    return values * (cfg.norm_max - cfg.norm_min) + cfg.norm_min


# ---------------------------------------------------------------------------
# Griffin-Lim
# ---------------------------------------------------------------------------

def _istft(spec: np.ndarray, phase: np.ndarray, cfg: MelConfig,
           out_len: int) -> np.ndarray:
    """Overlap-add inverse of stft_magnitude's framing convention."""
    frames = np.fft.irfft(spec * np.exp(1j * phase), n=cfg.n_fft, axis=1)
    frames = frames[:, :cfg.win_length]
    window = np.hanning(cfg.win_length)
    half = cfg.win_length // 2
    buf_len = out_len + 2 * half + cfg.win_length
    buf = np.zeros(buf_len)
    norm = np.zeros(buf_len)
    for i in range(spec.shape[0]):
        start = i * cfg.hop
        buf[start:start + cfg.win_length] += frames[i] * window
        norm[start:start + cfg.win_length] += window ** 2
    buf /= np.maximum(norm, 1e-10)
    return buf[half:half + out_len]


def griffin_lim(mel: MelSpectrogram, iterations: int = 60,
                cfg: MelConfig | None = None) -> Waveform:
    """Phase reconstruction from a normalized log-mel; debugging vocoder."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if cfg is None:
        cfg = MelConfig(hop=mel.hop, win_length=mel.window,
                        sample_rate=mel.sample_rate)
    log_mel = denormalize_mel(mel.values.astype(np.float64), cfg)
    mel_mag = np.exp(log_mel)
    inv_fb = np.linalg.pinv(mel_filterbank(cfg))
    mag = np.clip(mel_mag @ inv_fb.T, 0.0, None)  # (frames, n_fft//2+1)

    out_len = mel.num_frames * cfg.hop
    rng = np.random.default_rng(0)
    phase = rng.uniform(-np.pi, np.pi, size=mag.shape)
    signal = _istft(mag, phase, cfg, out_len)
    for _ in range(iterations - 1):
        phase = np.angle(np.fft.rfft(
            _frame_signal(signal, cfg) * np.hanning(cfg.win_length),
            n=cfg.n_fft, axis=1))[:mag.shape[0]]
        signal = _istft(mag, phase, cfg, out_len)
    peak = np.max(np.abs(signal))
    if peak > 1.0:
        signal = signal / peak
    return Waveform(signal.astype(np.float32), cfg.sample_rate)


def spectral_error(signal: np.ndarray, target_mag: np.ndarray,
                   cfg: MelConfig) -> float:
    """Relative STFT-magnitude error, for convergence checks."""
    mag = stft_magnitude(signal, cfg)[:target_mag.shape[0]]
    return float(np.linalg.norm(mag - target_mag) / np.linalg.norm(target_mag))


# ---------------------------------------------------------------------------
# Training-sample windowing
# ---------------------------------------------------------------------------

def window_dataset(clip: VideoClip, audio: Waveform,
                   window_seconds: float = 3.0, stride_seconds: float = 3.0,
                   mel_cfg: MelConfig | None = None,
                   shard: tuple[int, int] = (0, 1)) -> list[TrainingSample]:
    """Cut (clip, audio) into aligned fixed-length training samples.

    Video and audio window boundaries correspond exactly:
    sample offset = frame offset * sr / fps. shard=(k, n) keeps every n-th
    window starting at k, for deterministic multi-worker loading.
    """
    mel_cfg = mel_cfg or MelConfig(sample_rate=audio.sample_rate)
    fps, sr = clip.fps, audio.sample_rate
    win_frames = int(round(window_seconds * fps))
    stride_frames = max(1, int(round(stride_seconds * fps)))
    if win_frames > clip.num_frames:
        log.warning("clip %s shorter than window (%d < %d frames); no samples",
                    clip.source_id, clip.num_frames, win_frames)
        return []
    samples_per_frame = sr / fps
    out = []
    starts = range(0, clip.num_frames - win_frames + 1, stride_frames)
    k, n = shard
    for j, f0 in enumerate(starts):
        if j % n != k:
            continue
        a0 = int(round(f0 * samples_per_frame))
        a1 = a0 + int(round(win_frames * samples_per_frame))
        if a1 > audio.num_samples:
            break
        sub_clip = VideoClip(clip.frames[f0:f0 + win_frames].copy(), fps=fps,
                             source_id=f"{clip.source_id}[{f0}]")
        sub_audio = Waveform(audio.samples[a0:a1].copy(), sr)
        out.append(TrainingSample(sub_clip, sub_audio,
                                  extract_mel(sub_audio, mel_cfg)))
    return out


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------

def read_wav(path: str | Path, target_rate: int = 16000) -> Waveform:
    """Read a 16-bit PCM or float32 WAV, downmix to mono, resample."""
    with wave.open(str(path), "rb") as wf:
        rate = wf.getframerate()
        n_ch = wf.getnchannels()
        width = wf.getsampwidth()
        raw = wf.readframes(wf.getnframes())
    if width == 2:
        data = np.frombuffer(raw, dtype=np.int16).astype(np.float32) / 32768.0
    elif width == 4:
        data = np.frombuffer(raw, dtype=np.float32)
    else:
        raise ValueError(f"unsupported WAV sample width: {width} bytes")
    if n_ch > 1:
        data = data.reshape(-1, n_ch).mean(axis=1)
    if rate != target_rate:
        data = _resample(data, rate, target_rate)
    return Waveform(data, target_rate).normalized()


def write_wav(path: str | Path, audio: Waveform) -> None:
    pcm = np.clip(audio.samples, -1.0, 1.0)
    pcm = (pcm * 32767.0).astype(np.int16)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate)
        wf.writeframes(pcm.tobytes())


def _resample(data: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    n_out = int(round(len(data) * dst_rate / src_rate))
    t_out = np.arange(n_out) * (src_rate / dst_rate)
    return np.interp(t_out, np.arange(len(data)), data).astype(np.float32)


def load_frame_dir(path: str | Path) -> list[np.ndarray]:
    """Read a pre-extracted frame image directory, sorted by filename."""
    files = sorted(p for p in Path(path).iterdir()
                   if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"))
    if not files:
        raise ValueError(f"no frame images found in {path}")
    frames = []
    for f in files:
        img = cv2.imread(str(f), cv2.IMREAD_COLOR)
        if img is None:
            raise ValueError(f"failed to decode frame {f}")
        frames.append(cv2.cvtColor(img, cv2.COLOR_BGR2RGB))
    return frames
