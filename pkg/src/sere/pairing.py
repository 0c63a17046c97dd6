"""Training pair generation with per-category status balance.

For every category in turn, each clip carrying that category serves as a
target and receives an equal number of same-status partners (clips that
also carry it) and opposite-status partners (clips that lack it), sampled
without replacement. Centering the draws on the carriers keeps rare
categories represented instead of drowning them in neither-present pairs.
Unordered duplicates are merged in a final pass and the surviving pairs
are canonicalized by id.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import presence
from .presence import LabelVector, PresenceMatrix

log = logging.getLogger(__name__)

DEFAULT_PER_SIDE = 30


@dataclass(frozen=True)
class PairRecord:
    """Unordered clip pair with its one-hot presence target (id_a < id_b)."""

    id_a: str
    id_b: str
    target: PresenceMatrix

    def __post_init__(self):
        if self.id_a == self.id_b:
            raise ValueError(f"self-pair {self.id_a!r}")


def _check_train_set(train_set: Sequence[tuple[str, LabelVector]], per_side: int) -> None:
    if per_side < 1:
        raise ValueError("per_side must be >= 1")
    if len(train_set) < 2:
        raise ValueError("need at least 2 clips to form pairs")
    ids = [cid for cid, _ in train_set]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate clip ids in training set")


def _draw_pairs(
    labels: np.ndarray, per_side: int, rng: np.random.Generator
) -> dict[tuple[int, int], set[tuple[int, bool]]]:
    """Map of unordered index pair -> {(category, drawn-as-same)} provenance."""
    n = labels.shape[0]
    indices = np.arange(n)
    chosen: dict[tuple[int, int], set[tuple[int, bool]]] = {}
    warned: set[tuple[int, bool]] = set()
    for k in range(presence.N_CATEGORIES):
        carriers = indices[labels[:, k] == 1]
        non_carriers = indices[labels[:, k] == 0]
        if carriers.size == 0:
            log.warning("category %d: no clips carry it, emitting no pairs", k)
            continue
        for i in carriers:
            pools = ((carriers[carriers != i], True), (non_carriers, False))
            for pool, is_same in pools:
                if pool.size == 0:
                    if (k, is_same) not in warned:
                        side = "same" if is_same else "opposite"
                        log.warning(
                            "category %d: empty %s-status pool, emitting no pairs for that side",
                            k,
                            side,
                        )
                        warned.add((k, is_same))
                    continue
                take = min(per_side, pool.size)
                draw = rng.choice(pool, size=take, replace=False)
                for j in draw:
                    key = (int(i), int(j)) if i < j else (int(j), int(i))
                    chosen.setdefault(key, set()).add((k, is_same))
    return chosen


def generate_training_pairs(
    train_set: Sequence[tuple[str, LabelVector]],
    per_side: int = DEFAULT_PER_SIDE,
    seed: int = 0,
) -> list[PairRecord]:
    """Balanced pair list over a labeled training split.

    Iterates categories in canonical order and that category's carrier
    clips in input order, drawing up to per_side same-status and per_side
    opposite-status partners per target (whole pool when smaller, zero
    with a warning when empty). Output is deduplicated and sorted by
    (id_a, id_b).
    """
    _check_train_set(train_set, per_side)
    labels = np.array([vec.as_array() for _, vec in train_set])  # (n, 8)
    chosen = _draw_pairs(labels, per_side, np.random.default_rng(seed))
    records = []
    for i, j in chosen:
        id_i, lab_i = train_set[i]
        id_j, lab_j = train_set[j]
        if id_i < id_j:
            records.append(PairRecord(id_i, id_j, presence.encode(lab_i, lab_j)))
        else:
            records.append(PairRecord(id_j, id_i, presence.encode(lab_j, lab_i)))
    records.sort(key=lambda rec: (rec.id_a, rec.id_b))
    return records


def status_draw_counts(
    train_set: Sequence[tuple[str, LabelVector]],
    per_side: int = DEFAULT_PER_SIDE,
    seed: int = 0,
) -> dict[int, tuple[int, int]]:
    """Per-category (same, opposite) pair counts behind generate_training_pairs.

    Counts the deduplicated pairs each category drew on each side; a pair
    drawn for several categories is tallied once per drawing category.
    Equal draw quotas make the two sides near-balanced, up to dedup and
    pool exhaustion.
    """
    _check_train_set(train_set, per_side)
    labels = np.array([vec.as_array() for _, vec in train_set])
    chosen = _draw_pairs(labels, per_side, np.random.default_rng(seed))
    counts = {k: [0, 0] for k in range(presence.N_CATEGORIES)}
    for provenance in chosen.values():
        for k, is_same in provenance:
            counts[k][0 if is_same else 1] += 1
    return {k: (same, opp) for k, (same, opp) in counts.items()}


def generate_eval_pairs(queries: Sequence[str], database: Sequence[str]) -> list[tuple[str, str]]:
    """Full query x database cross product, query-major order."""
    if not queries or not database:
        raise ValueError("queries and database must be non-empty")
    return [(q, d) for q in queries for d in database]


def save_pair_list(pairs: Iterable[PairRecord], path: str | Path) -> None:
    """TSV with id columns only; targets are recomputed from labels on load."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id_a\tid_b\n")
        for rec in pairs:
            fh.write(f"{rec.id_a}\t{rec.id_b}\n")


def load_pair_list(path: str | Path, labels: Mapping[str, LabelVector]) -> list[PairRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "id_a\tid_b":
            raise ValueError(f"bad pair list header {header!r} in {path}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns")
            id_a, id_b = parts
            try:
                target = presence.encode(labels[id_a], labels[id_b])
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: unknown clip id {exc.args[0]!r}") from None
            records.append(PairRecord(id_a, id_b, target))
    return records
