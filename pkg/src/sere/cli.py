"""Pipeline orchestration: ingest, features, pairs, train, retrieve, evaluate.

Each subcommand reads a manifest (TSV with a `#categories:` header line),
delegates to one module, and writes its artifacts plus a run summary to
an output directory. Summaries carry the effective config and content
hashes of all inputs and outputs, never timestamps, so a rerun with
identical inputs is bit-identical.

Exit codes: 0 success, 1 usage, 2 data problem, 3 numeric problem.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import features as feat
from . import metrics as met
from . import network as net
from . import pairing
from . import retrieval as ret
from .presence import LabelVector, N_CATEGORIES

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

MANIFEST_HEADER_PREFIX = "#categories:"
SPLITS = ("train", "test")

# DCASE 2019 urban sound tagging coarse taxonomy, in column order
COARSE_CATEGORIES = (
    "engine",
    "machinery-impact",
    "non-machinery-impact",
    "powered-saw",
    "alert-signal",
    "music",
    "human-voice",
    "dog",
)


class ManifestError(ValueError):
    """Structurally invalid manifest or annotation data."""


@dataclass(frozen=True)
class ManifestRow:
    clip_id: str
    split: str
    path: str
    labels: LabelVector


@dataclass
class Manifest:
    categories: tuple[str, ...]
    rows: list[ManifestRow]

    def __post_init__(self):
        if len(self.categories) != N_CATEGORIES:
            raise ManifestError(f"expected {N_CATEGORIES} category names, got {len(self.categories)}")
        seen = set()
        for row in self.rows:
            if row.clip_id in seen:
                raise ManifestError(f"duplicate clip_id {row.clip_id!r}")
            seen.add(row.clip_id)
            if row.split not in SPLITS:
                raise ManifestError(f"clip {row.clip_id!r}: unknown split {row.split!r}")

    def split_rows(self, split: str) -> list[ManifestRow]:
        return [r for r in self.rows if r.split == split]

    def clip_ids(self, split: str | None = None) -> list[str]:
        return [r.clip_id for r in self.rows if split is None or r.split == split]

    def labels_map(self) -> dict[str, LabelVector]:
        return {r.clip_id: r.labels for r in self.rows}

    def labelled_clips(self, split: str) -> list[tuple[str, LabelVector]]:
        return [(r.clip_id, r.labels) for r in self.rows if r.split == split]


def read_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(MANIFEST_HEADER_PREFIX):
        raise ManifestError(f"{path}: first line must start with {MANIFEST_HEADER_PREFIX!r}")
    categories = tuple(lines[0][len(MANIFEST_HEADER_PREFIX) :].strip().split("\t"))
    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ManifestError(f"{path}:{ln}: expected 4 tab-separated fields, got {len(parts)}")
        clip_id, split, clip_path, label_str = parts
        try:
            labels = LabelVector.from_string(label_str)
        except ValueError as exc:
            raise ManifestError(f"{path}:{ln}: {exc}") from exc
        rows.append(ManifestRow(clip_id, split, clip_path, labels))
    try:
        return Manifest(categories, rows)
    except ManifestError as exc:
        raise ManifestError(f"{path}: {exc}") from exc


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    lines = [MANIFEST_HEADER_PREFIX + "\t".join(manifest.categories)]
    for r in manifest.rows:
        lines.append(f"{r.clip_id}\t{r.split}\t{r.path}\t{r.labels.to_string()}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def resolve_clip_path(manifest_path: Path, clip_path: str) -> Path:
    p = Path(clip_path)
    return p if p.is_absolute() else manifest_path.parent / p


# ---------------------------------------------------------------------------
# annotation ingestion

_COARSE_COL = re.compile(r"^([1-8])_([a-z0-9-]+)_presence$")
_SPLIT_NAMES = {"train": "train", "validate": "test", "test": "test"}


def ingest(annotations_path: str | Path, min_annotators: int = 1, audio_dir: str = "audio") -> Manifest:
    """Aggregate per-annotator coarse labels into one binary row per clip.

    A category counts as present when at least min_annotators annotators
    marked it with a positive value; negative sentinel values mean the
    clip was not reviewed and are ignored.
    """
    annotations_path = Path(annotations_path)
    with open(annotations_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ManifestError(f"{annotations_path}: empty annotation file")
        coarse_cols: dict[int, str] = {}
        for col in reader.fieldnames:
            m = _COARSE_COL.match(col.strip())
            if m:
                idx = int(m.group(1)) - 1
                if idx in coarse_cols:
                    raise ManifestError(
                        f"{annotations_path}: two coarse columns for category {idx + 1}: "
                        f"{coarse_cols[idx]!r} and {col!r}"
                    )
                coarse_cols[idx] = col
        if sorted(coarse_cols) != list(range(N_CATEGORIES)):
            raise ManifestError(
                f"{annotations_path}: expected coarse presence columns 1..8, found {sorted(c + 1 for c in coarse_cols)}"
            )
        for required in ("split", "audio_filename"):
            if required not in reader.fieldnames:
                raise ManifestError(f"{annotations_path}: missing column {required!r}")

        votes: dict[str, np.ndarray] = {}
        splits: dict[str, str] = {}
        order: list[str] = []
        for ln, row in enumerate(reader, start=2):
            fname = row["audio_filename"]
            if not fname:
                raise ManifestError(f"{annotations_path}:{ln}: empty audio_filename")
            split_raw = row["split"].strip().lower()
            if split_raw not in _SPLIT_NAMES:
                raise ManifestError(f"{annotations_path}:{ln}: unknown split {row['split']!r}")
            split = _SPLIT_NAMES[split_raw]
            if fname not in votes:
                votes[fname] = np.zeros(N_CATEGORIES, dtype=int)
                splits[fname] = split
                order.append(fname)
            elif splits[fname] != split:
                raise ManifestError(f"{annotations_path}:{ln}: clip {fname!r} appears in two splits")
            for idx, col in coarse_cols.items():
                raw = row[col].strip()
                try:
                    value = float(raw) if raw else 0.0
                except ValueError as exc:
                    raise ManifestError(f"{annotations_path}:{ln}: bad value {raw!r} in {col}") from exc
                if value >= 1.0:
                    votes[fname][idx] += 1

    rows = []
    for fname in order:
        bits = "".join("1" if votes[fname][k] >= min_annotators else "0" for k in range(N_CATEGORIES))
        clip_id = Path(fname).stem
        rows.append(ManifestRow(clip_id, splits[fname], f"{audio_dir}/{fname}", LabelVector.from_string(bits)))
    return Manifest(tuple(COARSE_CATEGORIES), rows)


# ---------------------------------------------------------------------------
# config handling

CONFIG_DEFAULTS = {
    "variant": "single",
    "siamese": True,
    "attention": True,
    "branch_layers": (128, 128, 128),
    "mlp_layers": (256, 128),
    "dropout_rate": 0.5,
    "categories": 8,
    "statuses": 3,
    "learning_rate": 1e-3,
    "batch_size": 128,
    "max_epochs": 50,
    "validation_fraction": 0.10,
    "seed": 0,
    "rms_decay": 0.9,
    "rms_eps": 1e-8,
    "thresholds": (7, 8),
    "ks": (1, 5, 10, 30, 50, 100),
    "baseline_seed": 0,
    "baseline_trials": 10,
    "per_side": 30,
    "k": 100,
    "hard": False,
    "features": "logmel",
    "min_annotators": 1,
}

_BOOL_KEYS = {"siamese", "attention", "hard"}
_INT_TUPLE_KEYS = {"branch_layers", "mlp_layers", "thresholds", "ks"}
_INT_KEYS = {"categories", "statuses", "batch_size", "max_epochs", "seed", "baseline_seed",
             "baseline_trials", "per_side", "k", "min_annotators"}
_FLOAT_KEYS = {"dropout_rate", "learning_rate", "validation_fraction", "rms_decay", "rms_eps"}


def _parse_config_value(key: str, raw: str):
    raw = raw.strip()
    if key in _BOOL_KEYS:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {key}: expected a boolean, got {raw!r}")
    if key in _INT_TUPLE_KEYS:
        return tuple(int(p) for p in raw.split(",") if p.strip())
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    return raw


def load_config(path: str | Path | None) -> dict:
    """Flat key=value file; unknown keys rejected, '#' starts a comment."""
    cfg = dict(CONFIG_DEFAULTS)
    if path is None:
        return cfg
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{ln}: expected key=value")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in CONFIG_DEFAULTS:
            raise ValueError(f"{path}:{ln}: unknown config key {key!r}")
        cfg[key] = _parse_config_value(key, raw)
    return cfg


def apply_flag_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "variant", None) is not None:
        cfg["variant"] = args.variant
    if getattr(args, "no_siamese", False):
        cfg["siamese"] = False
    if getattr(args, "no_attention", False):
        cfg["attention"] = False
    if getattr(args, "features", None) is not None:
        cfg["features"] = args.features
    if getattr(args, "k", None) is not None:
        cfg["k"] = args.k
    if getattr(args, "s", None) is not None:
        cfg["thresholds"] = tuple(args.s)
    if getattr(args, "per_side", None) is not None:
        cfg["per_side"] = args.per_side
    if getattr(args, "min_annotators", None) is not None:
        cfg["min_annotators"] = args.min_annotators
    if getattr(args, "max_epochs", None) is not None:
        cfg["max_epochs"] = args.max_epochs
    if getattr(args, "hard", False):
        cfg["hard"] = True
    return cfg


def network_config(cfg: dict) -> net.NetworkConfig:
    return net.NetworkConfig(
        variant=net.Variant(cfg["variant"]),
        siamese=cfg["siamese"],
        attention=cfg["attention"],
        branch_layers=tuple(cfg["branch_layers"]),
        mlp_layers=tuple(cfg["mlp_layers"]),
        dropout_rate=cfg["dropout_rate"],
        categories=cfg["categories"],
        statuses=cfg["statuses"],
    )


def train_config(cfg: dict) -> net.TrainConfig:
    return net.TrainConfig(
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        max_epochs=cfg["max_epochs"],
        validation_fraction=cfg["validation_fraction"],
        seed=cfg["seed"],
        rms_decay=cfg["rms_decay"],
        rms_eps=cfg["rms_eps"],
    )


def eval_config(cfg: dict) -> met.EvalConfig:
    return met.EvalConfig(
        thresholds=tuple(cfg["thresholds"]),
        ks=tuple(cfg["ks"]),
        baseline_seed=cfg["baseline_seed"],
        baseline_trials=cfg["baseline_trials"],
    )


def embedding_kind(cfg: dict) -> feat.EmbeddingKind:
    return feat.EmbeddingKind(cfg["features"])


# ---------------------------------------------------------------------------
# run summaries

def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_target(path: Path) -> str:
    if path.is_dir():
        h = hashlib.sha256()
        for f in sorted(path.rglob("*")):
            if f.is_file():
                h.update(f.relative_to(path).as_posix().encode())
                h.update(bytes.fromhex(_sha256_file(f)))
        return h.hexdigest()
    return _sha256_file(path)


def write_run_summary(out_dir: Path, command: str, cfg: dict,
                      inputs: Mapping[str, Path], outputs: Mapping[str, Path]) -> Path:
    lines = [f"command: {command}", f"config: {json.dumps(cfg, sort_keys=True)}"]
    for name in sorted(inputs):
        lines.append(f"input {name}: sha256 {_hash_target(Path(inputs[name]))}")
    for name in sorted(outputs):
        lines.append(f"output {name}: sha256 {_hash_target(Path(outputs[name]))}")
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = out_dir / f"run_summary_{command}.txt"
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return summary


# ---------------------------------------------------------------------------
# subcommands

def cmd_ingest(args) -> int:
    cfg = apply_flag_overrides(load_config(args.config), args)
    manifest = ingest(args.annotations, cfg["min_annotators"], args.audio_dir)
    write_manifest(manifest, args.out_manifest)
    n_train = len(manifest.split_rows("train"))
    n_test = len(manifest.split_rows("test"))
    print(f"wrote {args.out_manifest}: {n_train} train + {n_test} test clips")
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = apply_flag_overrides(load_config(args.config), args)
    if cfg["features"] != "logmel":
        raise ValueError(
            f"features command extracts log-mel only; {cfg['features']} embeddings "
            "come from their own extraction tool"
        )
    manifest_path = Path(args.manifest)
    manifest = read_manifest(manifest_path)
    out_dir = Path(args.out_dir)
    store = feat.EmbeddingStore(out_dir, feat.EmbeddingKind.LOG_MEL)
    for row in manifest.rows:
        wav = resolve_clip_path(manifest_path, row.path)
        clip = feat.read_wav(wav, clip_id=row.clip_id)
        clip = feat.resample(clip, feat.SAMPLE_RATE)
        clip = feat.fit_duration(clip, feat.CLIP_SECONDS)
        store.put(feat.log_mel(clip))
    write_run_summary(out_dir, "features", cfg, {"manifest": manifest_path}, {"embeddings": out_dir})
    print(f"wrote {len(manifest.rows)} embedding files to {out_dir}")
    return EXIT_OK


def cmd_pairs(args) -> int:
    cfg = apply_flag_overrides(load_config(args.config), args)
    manifest = read_manifest(args.manifest)
    train_set = manifest.labelled_clips("train")
    records = pairing.generate_training_pairs(train_set, per_side=cfg["per_side"], seed=cfg["seed"])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pairing.save_pair_list(records, out)
    print(f"wrote {len(records)} pairs to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = apply_flag_overrides(load_config(args.config), args)
    manifest_path = Path(args.manifest)
    manifest = read_manifest(manifest_path)
    pairs = pairing.load_pair_list(args.pairs, manifest.labels_map())
    store = feat.EmbeddingStore(args.embeddings, embedding_kind(cfg))
    ncfg, tcfg = network_config(cfg), train_config(cfg)
    params, report = net.train(pairs, store, ncfg, tcfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = out_dir / "checkpoint.serm"
    net.save_checkpoint(params, ncfg, checkpoint)
    report_path = out_dir / "train_report.txt"
    report_path.write_text(report.to_text(), encoding="utf-8")
    write_run_summary(
        out_dir, "train", cfg,
        {"manifest": manifest_path, "pairs": Path(args.pairs), "embeddings": Path(args.embeddings)},
        {"checkpoint": checkpoint, "train_report": report_path},
    )
    print(f"trained {ncfg.variant.value} model, best epoch {report.best_epoch}; wrote {checkpoint}")
    return EXIT_OK


def cmd_retrieve(args) -> int:
    cfg = apply_flag_overrides(load_config(args.config), args)
    manifest_path = Path(args.manifest)
    manifest = read_manifest(manifest_path)
    params, ncfg = net.load_checkpoint(args.checkpoint)
    store = feat.EmbeddingStore(args.embeddings, embedding_kind(cfg))
    labels = manifest.labels_map()
    database = manifest.clip_ids("train")
    queries = manifest.clip_ids("test")
    if not queries:
        raise ManifestError("manifest has no test-split queries")
    results = [
        ret.retrieve(params, ncfg, q, database, store, cfg["k"], labels=labels, hard=cfg["hard"])
        for q in queries
    ]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / "retrieval.tsv"
    ret.save_results(results, results_path)
    write_run_summary(
        out_dir, "retrieve", cfg,
        {"manifest": manifest_path, "checkpoint": Path(args.checkpoint), "embeddings": Path(args.embeddings)},
        {"retrieval": results_path},
    )
    print(f"retrieved top-{cfg['k']} for {len(queries)} queries; wrote {results_path}")
    return EXIT_OK


def load_results(path: str | Path) -> list[ret.RetrievalResult]:
    """Parse a retrieval report back into result objects."""
    results: list[ret.RetrievalResult] = []
    query_id: str | None = None
    entries: list[ret.RankedEntry] = []

    def flush():
        if query_id is not None:
            results.append(ret.RetrievalResult(query_id, tuple(entries), len(entries)))

    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("# query "):
            flush()
            query_id = line[len("# query "):].strip()
            entries = []
            continue
        if line.startswith("rank\t"):
            continue
        if query_id is None:
            raise ValueError(f"{path}:{ln}: row before any '# query' header")
        parts = line.split("\t")
        if len(parts) != 4:
            raise ValueError(f"{path}:{ln}: expected 4 fields, got {len(parts)}")
        _, db_id, score, agreement = parts
        entries.append(ret.RankedEntry(db_id, float(score), None if agreement == "-" else int(agreement)))
    flush()
    if not results:
        raise ValueError(f"{path}: no retrieval results found")
    return results


def cmd_evaluate(args) -> int:
    cfg = apply_flag_overrides(load_config(args.config), args)
    if args.k is not None:
        cfg["ks"] = (args.k,)
    manifest_path = Path(args.manifest)
    manifest = read_manifest(manifest_path)
    results = load_results(args.retrieval)
    labels = manifest.labels_map()
    ecfg = eval_config(cfg)
    database = None if args.no_baseline else manifest.clip_ids("train")
    report = met.evaluate(results, labels, ecfg, database=database)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table_path = out_dir / "metrics.tsv"
    table_path.write_text(report.to_tsv(), encoding="utf-8")
    summary_path = out_dir / "metrics_summary.txt"
    summary_path.write_text(report.to_summary(), encoding="utf-8")
    write_run_summary(
        out_dir, "evaluate", cfg,
        {"manifest": manifest_path, "retrieval": Path(args.retrieval)},
        {"metrics": table_path, "metrics_summary": summary_path},
    )
    print(summary_path.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = apply_flag_overrides(load_config(args.config), args)
    ncfg = network_config(cfg)
    rng = np.random.default_rng(cfg["seed"])
    params = net.init_params(ncfg, rng, input_dim=128)
    ea, eb = rng.normal(size=(3, 128)), rng.normal(size=(3, 128))
    target = np.zeros((ncfg.categories, ncfg.statuses))
    target[np.arange(ncfg.categories), rng.integers(0, ncfg.statuses, ncfg.categories)] = 1.0
    errors = net.gradient_check(
        params, ncfg, ea, eb, target, seed=cfg["seed"], perturb=args.perturb
    )
    worst = max(errors.values())
    for name in sorted(errors):
        print(f"{name}\t{errors[name]:.3e}")
    print(f"worst relative error: {worst:.3e} (tolerance 1e-3)")
    if worst >= 1e-3:
        print("gradient check FAILED", file=sys.stderr)
        return EXIT_NUMERIC
    print("gradient check passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, help="overrides the config seed")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", choices=["single", "multi"])
    p.add_argument("--no-siamese", action="store_true")
    p.add_argument("--no-attention", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sere", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="aggregate annotator CSV into a manifest")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out-manifest", required=True)
    p.add_argument("--audio-dir", default="audio", help="path prefix for audio files in the manifest")
    p.add_argument("--min-annotators", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("features", help="extract log-mel embeddings for every manifest clip")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--features", choices=["logmel", "vggish"])
    _add_common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("pairs", help="generate balanced training pairs from the train split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-side", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("train", help="train a comparison network on generated pairs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--features", choices=["logmel", "vggish"])
    p.add_argument("--max-epochs", type=int)
    _add_model_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("retrieve", help="rank the train split against every test query")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--features", choices=["logmel", "vggish"])
    p.add_argument("--k", type=int)
    p.add_argument("--hard", action="store_true", help="rank by argmax status counts instead of probability sums")
    _add_common(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("evaluate", help="score retrieval results with mAP at thresholds")
    p.add_argument("--manifest", required=True)
    p.add_argument("--retrieval", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--s", type=int, action="append", help="similarity threshold (repeatable)")
    p.add_argument("--k", type=int)
    p.add_argument("--no-baseline", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the configured variant")
    p.add_argument("--perturb", type=float, default=0.0,
                   help="scale analytic gradients by (1 + perturb); nonzero values must fail")
    _add_model_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except net.NetworkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
