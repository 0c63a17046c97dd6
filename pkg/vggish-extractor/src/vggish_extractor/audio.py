"""WAV loading and conditioning for the embedding frontend.

Everything downstream assumes 16 kHz mono float64 in [-1, 1], zero
padded at the tail to a whole number of seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

SAMPLE_RATE = 16000


class AudioError(ValueError):
    """Unreadable or unusable audio input."""


@dataclass(frozen=True)
class Waveform:
    clip_id: str
    samples: np.ndarray
    sample_rate: int

    @property
    def seconds(self) -> float:
        return self.samples.size / self.sample_rate


def _to_float(samples: np.ndarray) -> np.ndarray:
    if samples.dtype == np.int16:
        return samples / 32768.0
    if samples.dtype == np.int32:
        return samples / 2147483648.0
    if samples.dtype == np.uint8:
        # 8-bit wav is unsigned with a 128 bias
        return (samples.astype(np.float64) - 128.0) / 128.0
    if samples.dtype in (np.float32, np.float64):
        return samples.astype(np.float64)
    raise AudioError(f"unsupported wav sample format {samples.dtype}")


def read_wav(path: str | Path, clip_id: str | None = None) -> Waveform:
    """Load a RIFF/WAVE file as mono float64; stereo is averaged."""
    path = Path(path)
    try:
        rate, samples = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise AudioError(f"unreadable wav {path}: {exc}") from None
    if samples.size == 0:
        raise AudioError(f"empty audio in {path}")
    floats = _to_float(samples)
    if floats.ndim == 2:
        floats = floats.mean(axis=1)
    return Waveform(clip_id or path.stem, floats, int(rate))


def resample(w: Waveform, target_rate: int = SAMPLE_RATE) -> Waveform:
    if w.sample_rate == target_rate:
        return w
    g = math.gcd(w.sample_rate, target_rate)
    out = resample_poly(w.samples, target_rate // g, w.sample_rate // g)
    return Waveform(w.clip_id, out, target_rate)


def pad_to_whole_seconds(w: Waveform) -> Waveform:
    """Zero pad the tail so the duration is a whole second count >= 1."""
    n_seconds = max(1, math.ceil(w.samples.size / w.sample_rate))
    target = n_seconds * w.sample_rate
    if w.samples.size == target:
        return w
    padded = np.zeros(target)
    padded[: w.samples.size] = w.samples
    return Waveform(w.clip_id, padded, w.sample_rate)
