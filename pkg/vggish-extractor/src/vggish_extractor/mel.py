"""Log-mel example frontend matching the embedding network's input.

A 512-point Hann STFT (25 ms window, 10 ms hop) at 16 kHz feeds a
64-band HTK-scale mel filterbank spanning 125-7500 Hz; log compression
adds 0.01 before the log. The frame sequence is cut into 96-frame
examples, one starting on every whole second, so audio padded to n
whole seconds yields exactly n examples of shape 96 x 64.
"""

from __future__ import annotations

import numpy as np

from vggish_extractor.audio import SAMPLE_RATE, AudioError

STFT_WINDOW = 400
STFT_HOP = 160
FFT_LENGTH = 512
N_MELS = 64
MEL_MIN_HZ = 125.0
MEL_MAX_HZ = 7500.0
LOG_OFFSET = 0.01
EXAMPLE_FRAMES = 96
EXAMPLE_HOP = 100  # STFT frames per second at the 10 ms hop


def hz_to_mel(hz: np.ndarray | float) -> np.ndarray | float:
    return 1127.0 * np.log(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_matrix(
    n_mels: int = N_MELS,
    fft_length: int = FFT_LENGTH,
    sample_rate: int = SAMPLE_RATE,
    fmin: float = MEL_MIN_HZ,
    fmax: float = MEL_MAX_HZ,
) -> np.ndarray:
    """Triangular mel weights, shape (fft_length // 2 + 1, n_mels).

    Triangles are linear in mel space between adjacent band edges; the
    DC bin gets zero weight in every band.
    """
    bin_hz = np.linspace(0.0, sample_rate / 2.0, fft_length // 2 + 1)
    spec_mel = hz_to_mel(bin_hz)[:, None]
    edges = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    lower, center, upper = edges[None, :-2], edges[None, 1:-1], edges[None, 2:]
    rising = (spec_mel - lower) / (center - lower)
    falling = (upper - spec_mel) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    weights[0, :] = 0.0
    return weights


def _frame(samples: np.ndarray, window: int, hop: int) -> np.ndarray:
    if samples.size < window:
        raise AudioError("audio shorter than one analysis window")
    n_frames = 1 + (samples.size - window) // hop
    idx = np.arange(n_frames)[:, None] * hop + np.arange(window)[None, :]
    return samples[idx]


def log_mel_frames(samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Log-mel spectrogram frames of 16 kHz mono audio, shape (F, 64)."""
    frames = _frame(samples, STFT_WINDOW, STFT_HOP)
    spectrum = np.abs(np.fft.rfft(frames * np.hanning(STFT_WINDOW), FFT_LENGTH, axis=1))
    mel = spectrum @ mel_matrix(sample_rate=sample_rate)
    return np.log(mel + LOG_OFFSET)


def examples(samples: np.ndarray) -> np.ndarray:
    """One 96 x 64 example per whole second, shape (n, 96, 64) float32.

    Expects audio already padded to n whole seconds; example k covers
    the 0.96 s of frames starting at second k, which always fits
    because n seconds give 100n - 2 frames.
    """
    if samples.size % SAMPLE_RATE != 0:
        raise AudioError("examples need audio padded to whole seconds")
    n_seconds = samples.size // SAMPLE_RATE
    frames = log_mel_frames(samples)
    out = np.stack(
        [frames[k * EXAMPLE_HOP : k * EXAMPLE_HOP + EXAMPLE_FRAMES] for k in range(n_seconds)]
    )
    return out.astype(np.float32)
