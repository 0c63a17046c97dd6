"""Embedding file writer for the `.sere` interchange format.

Little-endian container: magic `SERE`, format version u32 = 1, T u32,
D u32, then T x D float32 row-major. One file per clip, named
`<clip_id>.sere`. Writes go to a temp file in the target directory and
land via rename, so readers never observe a partial file.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

SERE_MAGIC = b"SERE"
SERE_VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_sere(frames: np.ndarray, path: str | Path) -> None:
    """Atomically write a (T, D) float array as a `.sere` file."""
    path = Path(path)
    t, d = frames.shape
    payload = _HEADER.pack(SERE_MAGIC, SERE_VERSION, t, d) + frames.astype("<f4").tobytes()
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        tmp.write_bytes(payload)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def read_sere(path: str | Path) -> np.ndarray:
    """Parse a `.sere` file back to (T, D) float32, for self checks."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"truncated embedding file {path}")
    magic, version, t, d = _HEADER.unpack_from(raw)
    if magic != SERE_MAGIC or version != SERE_VERSION:
        raise ValueError(f"not a version {SERE_VERSION} SERE file: {path}")
    if len(raw) != _HEADER.size + t * d * 4:
        raise ValueError(f"truncated embedding file {path}")
    return np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(t, d).copy()
