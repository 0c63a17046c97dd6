"""Similarity-ranked retrieval of database clips against a query.

Every database clip is paired with the query and scored with a trained
comparison network in inference mode; the predicted similarity is the
sum of the both-present and neither-present columns of the predicted
presence matrix, a soft value in [0, 8]. Clips are ranked by descending
score and the top K returned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .features import EmbeddingSequence
from .network import NetworkConfig, NetworkParams, forward_batch
from .presence import COL_ONE_ONLY, LabelVector, ground_truth_agreement

DEFAULT_CHUNK = 256


class RetrievalError(ValueError):
    """Missing embeddings or mismatched feature kinds."""


@dataclass(frozen=True)
class RankedEntry:
    db_id: str
    score: float
    agreement: int | None  # ground-truth similarity level, when labels are known


@dataclass(frozen=True)
class RetrievalResult:
    """Top-K database clips for one query.

    ranked is sorted by descending predicted similarity, ties broken by
    ascending db_id; its length is min(k, database size).
    """

    query_id: str
    ranked: tuple[RankedEntry, ...]
    k: int

    def to_tsv(self) -> str:
        lines = ["rank\tdb_id\tpredicted_similarity\tr"]
        for rank, entry in enumerate(self.ranked, start=1):
            r = "-" if entry.agreement is None else str(entry.agreement)
            lines.append(f"{rank}\t{entry.db_id}\t{entry.score:.6f}\t{r}")
        return "\n".join(lines) + "\n"


def _check_kinds(query: EmbeddingSequence, db: EmbeddingSequence) -> None:
    if query.kind is not None and db.kind is not None and query.kind != db.kind:
        raise RetrievalError(
            f"feature kind mismatch: query {query.clip_id} is {query.kind.value}, "
            f"database clip {db.clip_id} is {db.kind.value}"
        )


def _batch_scores(
    params: NetworkParams,
    cfg: NetworkConfig,
    query_frames: np.ndarray,
    db_frames: Sequence[np.ndarray],
    hard: bool,
) -> np.ndarray:
    ea = np.broadcast_to(query_frames, (len(db_frames),) + query_frames.shape)
    eb = np.stack(db_frames)
    pooled = forward_batch(params, cfg, ea, eb, training=False).pooled
    if hard:
        return (pooled.argmax(axis=2) != COL_ONE_ONLY).sum(axis=1).astype(np.float64)
    return pooled[:, :, :COL_ONE_ONLY].sum(axis=(1, 2))


def score_pair(
    params: NetworkParams,
    cfg: NetworkConfig,
    query: EmbeddingSequence,
    db: EmbeddingSequence,
    hard: bool = False,
) -> float:
    """Predicted similarity level for one pair, in [0, 8].

    Inference mode throughout: no dropout, running batch-norm stats, so
    the score is a pure function of the inputs. With hard=True the score
    counts categories whose most likely status is an agreement instead
    of summing probabilities.
    """
    _check_kinds(query, db)
    return float(_batch_scores(params, cfg, query.frames, [db.frames], hard)[0])


def retrieve(
    params: NetworkParams,
    cfg: NetworkConfig,
    query_id: str,
    database: Sequence[str],
    embeddings,
    k: int,
    labels: Mapping[str, LabelVector] | None = None,
    hard: bool = False,
    chunk: int = DEFAULT_CHUNK,
) -> RetrievalResult:
    """Score the query against every database clip and keep the top k.

    The query is never scored against itself: occurrences of query_id in
    the database list are skipped. Ground-truth agreement levels are
    attached when both clips have labels.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    query_emb = embeddings.get(query_id)
    db_ids = [d for d in database if d != query_id]
    scores: list[float] = []
    for start in range(0, len(db_ids), chunk):
        ids = db_ids[start : start + chunk]
        embs = [embeddings.get(d) for d in ids]
        for e in embs:
            _check_kinds(query_emb, e)
        scores.extend(_batch_scores(params, cfg, query_emb.frames, [e.frames for e in embs], hard))

    def agreement(db_id: str) -> int | None:
        if labels is None or query_id not in labels or db_id not in labels:
            return None
        return ground_truth_agreement(labels[query_id], labels[db_id])

    order = sorted(range(len(db_ids)), key=lambda i: (-scores[i], db_ids[i]))[:k]
    ranked = tuple(RankedEntry(db_ids[i], float(scores[i]), agreement(db_ids[i])) for i in order)
    return RetrievalResult(query_id=query_id, ranked=ranked, k=k)


def save_results(results: Sequence[RetrievalResult], path) -> None:
    """One TSV block per query, separated by a `# query <id>` line."""
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            fh.write(f"# query {res.query_id}\n")
            fh.write(res.to_tsv())
