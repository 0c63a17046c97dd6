"""Retrieval evaluation: mAP_s@K over agreement-thresholded hits.

A retrieved item is a positive hit when its ground-truth label agreement r
with the query (0..8 identical categories) is at least the threshold s.
Average precision is accumulated over the top K ranks and averaged over
the query set; a random-permutation baseline provides the reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .presence import LabelVector, ground_truth_agreement
from .retrieval import RetrievalResult

DEFAULT_THRESHOLDS = (7, 8)
DEFAULT_KS = (1, 5, 10, 30, 50, 100)


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple[int, ...] = DEFAULT_THRESHOLDS
    ks: tuple[int, ...] = DEFAULT_KS
    baseline_seed: int = 0
    baseline_trials: int = 10

    def __post_init__(self):
        if not self.thresholds or not self.ks:
            raise ValueError("thresholds and ks must be non-empty")


def average_precision(r_list: Sequence[int], s: int, k: int) -> float:
    """AP over the top-k ranks of one query.

    r_list holds the ground-truth agreement at ranks 1..len(r_list); it is
    truncated to k (or used whole if shorter). Zero positive hits in the
    window yields 0 by convention.
    """
    hits = [1 if r >= s else 0 for r in r_list[:k]]
    positives = sum(hits)
    if positives == 0:
        return 0.0
    total = 0.0
    seen = 0
    for n, hit in enumerate(hits, start=1):
        seen += hit
        if hit:
            total += seen / n
    return total / positives


def map_at_k(results: Sequence[RetrievalResult], s: int, k: int) -> float:
    """Unweighted mean of per-query average precision."""
    if not results:
        raise ValueError("empty query set")
    aps = [average_precision([entry.agreement for entry in res.ranked], s, k) for res in results]
    # fsum: exact rounding, so the mean is independent of query order
    return math.fsum(aps) / len(aps)


def _map_grid(results: Sequence[RetrievalResult], cfg: EvalConfig) -> dict[tuple[int, int], float]:
    return {(s, k): map_at_k(results, s, k) for s in cfg.thresholds for k in cfg.ks}


def random_baseline(
    queries: Sequence[str],
    database: Sequence[str],
    labels: Mapping[str, LabelVector],
    cfg: EvalConfig,
) -> dict[tuple[int, int], float]:
    """mAP_s@K of uniformly random rankings, averaged over seeded trials.

    Each trial draws one independent permutation of the database per query;
    agreement r comes from the ground-truth labels.
    """
    rng = np.random.default_rng(cfg.baseline_seed)
    max_k = max(cfg.ks)
    n = len(database)
    # agreement only depends on the permutation through the first max_k slots
    agreements = {
        q: np.array([ground_truth_agreement(labels[q], labels[d]) for d in database]) for q in queries
    }
    sums = {key: 0.0 for key in ((s, k) for s in cfg.thresholds for k in cfg.ks)}
    for _ in range(cfg.baseline_trials):
        for q in queries:
            perm = rng.permutation(n)[:max_k]
            r_list = agreements[q][perm].tolist()
            for s in cfg.thresholds:
                for k in cfg.ks:
                    sums[(s, k)] += average_precision(r_list, s, k)
    trials_q = cfg.baseline_trials * len(queries)
    return {key: val / trials_q for key, val in sums.items()}


@dataclass
class EvalReport:
    """Full evaluation grid: query class x threshold x K, system and baseline."""

    rows: list[tuple[str, int, int, str, float]] = field(default_factory=list)

    def add(self, query_class: str, s: int, k: int, system: str, value: float) -> None:
        self.rows.append((query_class, s, k, system, value))

    def lookup(self, query_class: str, s: int, k: int, system: str = "model") -> float:
        for qc, s_, k_, sys_, v in self.rows:
            if (qc, s_, k_, sys_) == (query_class, s, k, system):
                return v
        raise KeyError((query_class, s, k, system))

    def to_tsv(self) -> str:
        lines = ["query_class\ts\tK\tsystem\tmAP"]
        lines += [f"{qc}\t{s}\t{k}\t{sys_}\t{v:.6f}" for qc, s, k, sys_, v in self.rows]
        return "\n".join(lines) + "\n"

    def to_summary(self) -> str:
        """Human-readable table, one block per query class."""
        out = []
        classes = []
        for qc, *_ in self.rows:
            if qc not in classes:
                classes.append(qc)
        systems = []
        for _, _, _, sys_, _ in self.rows:
            if sys_ not in systems:
                systems.append(sys_)
        for qc in classes:
            out.append(f"== {qc} queries ==")
            header = "system    s | " + "  ".join(f"K={k:<4d}" for k in self._ks())
            out.append(header)
            for sys_ in systems:
                for s in self._thresholds():
                    vals = []
                    for k in self._ks():
                        try:
                            vals.append(f"{self.lookup(qc, s, k, sys_):.4f}")
                        except KeyError:
                            vals.append("  -   ")
                    out.append(f"{sys_:<9s} {s} | " + "  ".join(vals))
            out.append("")
        return "\n".join(out)

    def _ks(self) -> list[int]:
        ks = sorted({k for _, _, k, _, _ in self.rows})
        return ks

    def _thresholds(self) -> list[int]:
        return sorted({s for _, s, _, _, _ in self.rows})


def _classify(labels: Mapping[str, LabelVector], query_id: str) -> str:
    card = labels[query_id].cardinality()
    if card == 1:
        return "single"
    if card >= 2:
        return "multi"
    return "unlabeled"


def evaluate(
    results: Sequence[RetrievalResult],
    labels: Mapping[str, LabelVector],
    cfg: EvalConfig,
    database: Sequence[str] | None = None,
) -> EvalReport:
    """Evaluate ranked results over the (query class) x s x K grid.

    Query classes are all / single-label / multi-label, classified by the
    ground-truth cardinality of each query (zero-label queries count only
    under "all"). When a database id list is given, seeded random-retrieval
    baseline rows are appended for the same grid.
    """
    report = EvalReport()
    splits: dict[str, list[RetrievalResult]] = {"all": list(results)}
    for res in results:
        splits.setdefault(_classify(labels, res.query_id), []).append(res)
    for qc in ("all", "single", "multi"):
        subset = splits.get(qc)
        if not subset:
            continue
        grid = _map_grid(subset, cfg)
        for (s, k), v in sorted(grid.items()):
            report.add(qc, s, k, "model", v)
        if database is not None:
            base = random_baseline([r.query_id for r in subset], database, labels, cfg)
            for (s, k), v in sorted(base.items()):
                report.add(qc, s, k, "baseline", v)
    return report
