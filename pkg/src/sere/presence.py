"""Pairwise presence matrices over the 8 coarse sound categories.

For a pair of clips, each category is in one of three states: present in
both, present in neither, or present in exactly one. An 8x3 row-stochastic
matrix encodes those states (one-hot for ground truth, probabilities for
model output), and summing its first two columns gives the level of
similarity between the two clips.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

N_CATEGORIES = 8
N_STATUSES = 3

# column layout, fixed across the whole package
COL_BOTH = 0
COL_NEITHER = 1
COL_ONE_ONLY = 2

_ROW_SUM_TOL = 1e-6


class MatrixMode(enum.Enum):
    ONE_HOT = "one_hot"
    PROBABILISTIC = "probabilistic"


@dataclass(frozen=True)
class LabelVector:
    """Ground-truth presence bits for one clip, in canonical category order."""

    bits: tuple[bool, ...]

    def __post_init__(self):
        if len(self.bits) != N_CATEGORIES:
            raise ValueError(f"label vector needs {N_CATEGORIES} bits, got {len(self.bits)}")
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))

    @classmethod
    def from_string(cls, s: str) -> "LabelVector":
        """Parse an 8-character 0/1 string (manifest label column)."""
        if len(s) != N_CATEGORIES or set(s) - {"0", "1"}:
            raise ValueError(f"bad label string {s!r}")
        return cls(tuple(c == "1" for c in s))

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def cardinality(self) -> int:
        return sum(self.bits)

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=bool)


@dataclass(frozen=True)
class PresenceMatrix:
    """8x3 per-category pairwise status matrix; every row sums to 1."""

    rows: np.ndarray
    mode: MatrixMode = MatrixMode.PROBABILISTIC

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)  # own the data: instances may be shared
        if rows.shape != (N_CATEGORIES, N_STATUSES):
            raise ValueError(f"presence matrix must be {N_CATEGORIES}x{N_STATUSES}, got {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValueError("presence matrix has non-finite entries")
        if np.any(rows < -_ROW_SUM_TOL) or np.any(rows > 1 + _ROW_SUM_TOL):
            raise ValueError("presence matrix entries outside [0,1]")
        if np.max(np.abs(rows.sum(axis=1) - 1.0)) > _ROW_SUM_TOL:
            raise ValueError("presence matrix rows must sum to 1")
        if self.mode is MatrixMode.ONE_HOT:
            if not np.all(np.isin(rows, (0.0, 1.0))):
                raise ValueError("one-hot matrix must contain only 0 and 1")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def __eq__(self, other):
        if not isinstance(other, PresenceMatrix):
            return NotImplemented
        return self.mode is other.mode and np.array_equal(self.rows, other.rows)

    def to_report_lines(self) -> list[str]:
        """8 lines of 3 space-separated decimals (report serialization)."""
        return [" ".join(f"{v:.6f}" for v in row) for row in self.rows]


# one-hot matrices form a small finite family; encode returns interned
# immutable instances so bulk encoding (all 65536 label pairs) stays cheap
_ONE_HOT_CACHE: dict[tuple[int, ...], PresenceMatrix] = {}


def encode(a: LabelVector, b: LabelVector) -> PresenceMatrix:
    """One-hot encode the pairwise status of every category for clips a, b."""
    statuses = tuple(
        COL_BOTH if (x and y) else COL_NEITHER if not (x or y) else COL_ONE_ONLY
        for x, y in zip(a.bits, b.bits)
    )
    cached = _ONE_HOT_CACHE.get(statuses)
    if cached is None:
        rows = np.zeros((N_CATEGORIES, N_STATUSES), dtype=np.float64)
        rows[np.arange(N_CATEGORIES), statuses] = 1.0
        cached = _ONE_HOT_CACHE.setdefault(statuses, PresenceMatrix(rows, MatrixMode.ONE_HOT))
    return cached


def similarity_level(m: PresenceMatrix) -> float:
    """Sum of the both-present and neither-present columns, in [0, 8].

    For one-hot matrices this is the integer count of categories the two
    clips agree on; for probabilistic matrices it is the continuous
    analogue used as the retrieval ranking score.
    """
    return float(m.rows[:, COL_BOTH].sum() + m.rows[:, COL_NEITHER].sum())


def ground_truth_agreement(a: LabelVector, b: LabelVector) -> int:
    """Number of categories (out of 8) with identical presence in a and b."""
    return int(round(similarity_level(encode(a, b))))
