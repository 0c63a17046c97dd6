"""Batch export of manifest clips to embedding files.

Reads the pipeline manifest (TSV with a `#categories:` header; rows of
clip_id, split, audio path, labels), runs every clip of every split
through the network, and writes one `.sere` file per clip. Per-clip
failures are logged and collected; the batch keeps going.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from vggish_extractor.audio import AudioError, pad_to_whole_seconds, read_wav, resample
from vggish_extractor.mel import examples
from vggish_extractor.model import LoadedWeights, WeightsError, embed, load_weights, postprocess
from vggish_extractor.serefile import write_sere

log = logging.getLogger("vggish_extractor")


class ManifestError(ValueError):
    """Malformed manifest file."""


@dataclass(frozen=True)
class ExtractionJob:
    manifest: Path
    out_dir: Path
    weights: Path
    postprocess: bool = False


@dataclass(frozen=True)
class ClipFailure:
    clip_id: str
    error: str
    numeric: bool = False


@dataclass
class ExtractionReport:
    written: int = 0
    failures: list[ClipFailure] = field(default_factory=list)


def read_manifest_clips(path: str | Path) -> list[tuple[str, Path]]:
    """Clip ids and audio paths from a manifest, paths made absolute."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ManifestError(f"unreadable manifest {path}: {exc}") from None
    clips: list[tuple[str, Path]] = []
    seen: set[str] = set()
    header_seen = False
    for ln, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if not header_seen:
            if not stripped.startswith("#categories:"):
                raise ManifestError(f"{path}: first line must start with '#categories:'")
            header_seen = True
            continue
        if stripped.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ManifestError(f"{path}:{ln}: expected 4 tab-separated fields")
        clip_id, _, audio_path, _ = fields
        if clip_id in seen:
            raise ManifestError(f"{path}:{ln}: duplicate clip id {clip_id!r}")
        seen.add(clip_id)
        clips.append((clip_id, path.parent / audio_path))
    if not header_seen:
        raise ManifestError(f"{path}: first line must start with '#categories:'")
    return clips


def _extract_clip(weights: LoadedWeights, job: ExtractionJob,
                  clip_id: str, audio_path: Path) -> ClipFailure | None:
    try:
        w = pad_to_whole_seconds(resample(read_wav(audio_path, clip_id)))
        emb = embed(weights.model, examples(w.samples))
        if job.postprocess:
            emb = postprocess(emb, weights.pca_eigen_vectors, weights.pca_means)
    except (AudioError, OSError, ValueError) as exc:
        return ClipFailure(clip_id, str(exc))
    if not np.all(np.isfinite(emb)):
        return ClipFailure(clip_id, f"non-finite embedding for clip {clip_id!r}", numeric=True)
    write_sere(emb, job.out_dir / f"{clip_id}.sere")
    return None


def batch_extract(job: ExtractionJob) -> ExtractionReport:
    """Extract every manifest clip; failures are logged, not raised."""
    clips = read_manifest_clips(job.manifest)
    weights = load_weights(job.weights)
    if job.postprocess and (weights.pca_eigen_vectors is None or weights.pca_means is None):
        raise WeightsError(f"weights file {job.weights} has no PCA parameters")
    job.out_dir.mkdir(parents=True, exist_ok=True)
    torch.set_num_threads(1)  # fixed reduction order, bit-identical reruns
    report = ExtractionReport()
    for clip_id, audio_path in clips:
        failure = _extract_clip(weights, job, clip_id, audio_path)
        if failure is None:
            report.written += 1
        else:
            report.failures.append(failure)
            log.error("clip %s: %s", clip_id, failure.error)
    return report


def extract_all(job: ExtractionJob) -> int:
    """Run the batch and return how many files were written."""
    return batch_extract(job).written
