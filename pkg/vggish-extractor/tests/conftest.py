"""Shared fixtures: synthetic wavs, manifests, and a seeded weights file."""

import wave

import numpy as np
import pytest
import torch

from vggish_extractor.model import make_test_weights

CATEGORIES = (
    "engine", "machinery-impact", "non-machinery-impact", "powered-saw",
    "alert-signal", "music", "human-voice", "dog",
)


def make_wav(path, seconds=3.0, rate=22050, freq=440.0, stereo=False):
    t = np.arange(int(rate * seconds)) / rate
    x = (0.4 * np.sin(2 * np.pi * freq * t) * 32767).astype("<i2")
    data = np.stack([x, x], axis=1).tobytes() if stereo else x.tobytes()
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(2 if stereo else 1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(data)


def write_manifest(path, rows):
    """rows: (clip_id, split, relative audio path, label string)."""
    lines = ["#categories:" + "\t".join(CATEGORIES)]
    lines += ["\t".join(row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@pytest.fixture(scope="session")
def weights_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("weights") / "vggish.pth"
    torch.save(make_test_weights(seed=0), str(path))
    return path
