"""Command line entry point: export manifest clips as embedding files.

Exit codes: 0 success, 1 usage error, 2 bad data (manifest, weights,
audio), 3 numeric failure (non-finite embeddings).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from vggish_extractor.extract import ExtractionJob, ManifestError, batch_extract
from vggish_extractor.model import WeightsError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="extract", description=__doc__.splitlines()[0])
    parser.add_argument("--manifest", required=True, help="clip manifest TSV")
    parser.add_argument("--out", required=True, help="output directory for .sere files")
    parser.add_argument("--weights", default="vggish.pth",
                        help="model checkpoint (default: vggish.pth)")
    parser.add_argument("--postprocess", action="store_true",
                        help="apply the release PCA/quantization, kept as floats")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    job = ExtractionJob(
        manifest=Path(args.manifest),
        out_dir=Path(args.out),
        weights=Path(args.weights),
        postprocess=args.postprocess,
    )
    try:
        report = batch_extract(job)
    except (ManifestError, WeightsError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    total = report.written + len(report.failures)
    print(f"wrote {report.written} of {total} embeddings to {job.out_dir}")
    if any(f.numeric for f in report.failures):
        return EXIT_NUMERIC
    if report.failures:
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
