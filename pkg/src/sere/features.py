"""Per-clip feature extraction and the on-disk embedding format.

Clips become T x D frame matrices either by computing a log-Mel
spectrogram here (22050 Hz, window 4096, hop 2048, 128 HTK mel bands,
giving 108x128 for a 10 s clip) or by loading embeddings exported by an
external model (128-D per one-second excerpt, 10x128 for 10 s).

Embedding files (`<clip_id>.sere`, little-endian): magic "SERE",
version u32 = 1, T u32, D u32, then T*D float32 row-major.
"""

from __future__ import annotations

import enum
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 22050
WINDOW = 4096
HOP = 2048
N_MELS = 128
CLIP_SECONDS = 10.0
LOG_FLOOR = 1e-10

SERE_MAGIC = b"SERE"
SERE_VERSION = 1
_HEADER = struct.Struct("<4sIII")  # magic, version, T, D


class FeatureError(ValueError):
    """Bad audio input or malformed embedding file."""


class EmbeddingKind(enum.Enum):
    LOG_MEL = "logmel"
    VGGISH = "vggish"


@dataclass(frozen=True)
class AudioClip:
    clip_id: str
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise FeatureError(f"samples must be 1-D, got shape {samples.shape}")
        if samples.size == 0:
            raise FeatureError("empty audio")
        if not np.all(np.isfinite(samples)):
            raise FeatureError("audio has non-finite samples")
        if self.sample_rate <= 0:
            raise FeatureError("sample rate must be positive")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class EmbeddingSequence:
    """T x D frame features for one clip; kind is None when unknown.

    The file format does not record the feature kind, so embeddings read
    back from disk carry whatever kind the caller supplies.
    """

    clip_id: str
    frames: np.ndarray
    kind: EmbeddingKind | None = None

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise FeatureError(f"frames must be a T x D matrix with T,D >= 1, got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise FeatureError("embedding has non-finite values")
        if self.kind is not None and frames.shape[1] != 128:
            raise FeatureError(f"{self.kind.value} embeddings are 128-D, got D={frames.shape[1]}")
        object.__setattr__(self, "frames", frames)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape


def read_wav(path: str | Path, clip_id: str | None = None) -> AudioClip:
    """Read a PCM16 or float32 RIFF/WAVE file; stereo is averaged to mono."""
    rate, data = wavfile.read(os.fspath(path))
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise FeatureError(f"unsupported WAV sample format {data.dtype} in {path}")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if clip_id is None:
        clip_id = Path(path).stem
    return AudioClip(clip_id, samples, int(rate))


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Linear-interpolation resampling; duration kept within one sample period."""
    if target_rate <= 0:
        raise FeatureError("target rate must be positive")
    if target_rate == clip.sample_rate:
        return clip
    n_in = clip.samples.size
    n_out = max(1, round(n_in * target_rate / clip.sample_rate))
    # output sample i sits at i * in_rate/out_rate in input index space
    positions = np.arange(n_out) * (clip.sample_rate / target_rate)
    out = np.interp(positions, np.arange(n_in), clip.samples)
    return AudioClip(clip.clip_id, out, target_rate)


def fit_duration(clip: AudioClip, seconds: float = CLIP_SECONDS) -> AudioClip:
    """Truncate or zero-pad to an exact duration (the network needs fixed T)."""
    n_target = round(seconds * clip.sample_rate)
    n = clip.samples.size
    if n == n_target:
        return clip
    if n > n_target:
        samples = clip.samples[:n_target]
    else:
        samples = np.concatenate([clip.samples, np.zeros(n_target - n)])
    return AudioClip(clip.clip_id, samples, clip.sample_rate)


def mel_frequency(hz: np.ndarray | float) -> np.ndarray | float:
    """HTK mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters (peak 1) on the HTK mel scale, 0 to sample_rate/2.

    Returns (n_mels, n_fft//2 + 1).
    """
    n_bins = n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * (sample_rate / n_fft)
    edges_mel = np.linspace(mel_frequency(0.0), mel_frequency(sample_rate / 2.0), n_mels + 2)
    edges_hz = np.asarray(mel_to_hz(edges_mel))
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, center, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        up = (bin_hz - lo) / max(center - lo, 1e-12)
        down = (hi - bin_hz) / max(hi - center, 1e-12)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def _frame_centered(samples: np.ndarray, window: int, hop: int) -> np.ndarray:
    """Frames centered at t*hop for t = 0 .. ceil(len/hop) - 1, zero padded."""
    n = samples.size
    n_frames = math.ceil(n / hop)
    half = window // 2
    pad_right = max(0, (n_frames - 1) * hop + (window - half) - n)
    padded = np.concatenate([np.zeros(half), samples, np.zeros(pad_right)])
    starts = np.arange(n_frames) * hop
    idx = starts[:, None] + np.arange(window)[None, :]
    return padded[idx]


def log_mel(
    clip: AudioClip,
    window: int = WINDOW,
    hop: int = HOP,
    n_mels: int = N_MELS,
) -> EmbeddingSequence:
    """Log mel spectrogram of a clip, frames along the first axis.

    Hann-windowed STFT magnitudes with center padding (T = ceil(len/hop)),
    projected onto triangular mel filters and floored at 1e-10 before the
    natural log. A 10 s clip at 22050 Hz yields 108 x n_mels.
    """
    if clip.samples.size < hop:
        raise FeatureError("clip too short")
    frames = _frame_centered(clip.samples, window, hop)
    hann = np.hanning(window)
    spectrum = np.abs(np.fft.rfft(frames * hann, axis=1))
    fb = mel_filterbank(n_mels, window, clip.sample_rate)
    mel = spectrum @ fb.T
    out = np.log(np.maximum(mel, LOG_FLOOR))
    # the tagged kinds imply 128-D frames; other band counts stay untagged
    kind = EmbeddingKind.LOG_MEL if n_mels == N_MELS else None
    return EmbeddingSequence(clip.clip_id, out.astype(np.float32), kind)


def store_embedding(e: EmbeddingSequence, path: str | Path) -> None:
    """Write the embedding file; loading it back is bit-exact."""
    t, d = e.frames.shape
    payload = _HEADER.pack(SERE_MAGIC, SERE_VERSION, t, d) + e.frames.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(payload)


def load_embedding(path: str | Path, kind: EmbeddingKind | None = None) -> EmbeddingSequence:
    """Read an embedding file; clip_id is the file stem, kind the caller's."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FeatureError(f"truncated embedding file {path}")
    magic, version, t, d = _HEADER.unpack_from(raw)
    if magic != SERE_MAGIC:
        raise FeatureError(f"bad magic in {path}: {magic!r}")
    if version != SERE_VERSION:
        raise FeatureError(f"unsupported embedding format version {version}")
    if t == 0 or d == 0:
        raise FeatureError(f"empty embedding in {path}")
    expected = _HEADER.size + t * d * 4
    if len(raw) != expected:
        raise FeatureError(f"truncated embedding file {path}: {len(raw)} bytes, expected {expected}")
    frames = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(t, d)
    if not np.all(np.isfinite(frames)):
        raise FeatureError(f"non-finite values in {path}")
    return EmbeddingSequence(Path(path).stem, frames.copy(), kind)


class EmbeddingStore:
    """Directory of `<clip_id>.sere` files with an in-memory cache."""

    def __init__(self, directory: str | Path, kind: EmbeddingKind | None = None):
        self.directory = Path(directory)
        self.kind = kind
        self._cache: dict[str, EmbeddingSequence] = {}

    def path_for(self, clip_id: str) -> Path:
        return self.directory / f"{clip_id}.sere"

    def get(self, clip_id: str) -> EmbeddingSequence:
        if clip_id not in self._cache:
            path = self.path_for(clip_id)
            if not path.exists():
                raise FeatureError(f"missing embedding for clip {clip_id!r} ({path})")
            self._cache[clip_id] = load_embedding(path, self.kind)
        return self._cache[clip_id]

    def put(self, e: EmbeddingSequence) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path_for(e.clip_id)
        store_embedding(e, path)
        self._cache[e.clip_id] = e
        return path

    def __contains__(self, clip_id: str) -> bool:
        return clip_id in self._cache or self.path_for(clip_id).exists()
