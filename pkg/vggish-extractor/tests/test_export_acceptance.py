"""Acceptance gate: the cross-package export guarantee, one verdict line.

A 10 s clip must come out as a T=10, D=128 embedding in a file the
retrieval package reads back bit-exactly, and reruns must be
byte-identical.
"""

import struct

import numpy as np

from conftest import make_wav, write_manifest
from vggish_extractor.cli import EXIT_OK, main


def verdict(name, ok, detail=""):
    line = f"[acceptance] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def test_vggish_export_roundtrip(tmp_path, weights_file):
    audio = tmp_path / "audio"
    audio.mkdir()
    # 22050 Hz input exercises the resampling path
    make_wav(audio / "clip.wav", seconds=10.0, rate=22050, freq=440.0)
    manifest = tmp_path / "manifest.tsv"
    write_manifest(manifest, [("clip", "test", "audio/clip.wav", "-")])

    def run(out_name):
        code = main(["--manifest", str(manifest), "--out", str(tmp_path / out_name),
                     "--weights", str(weights_file)])
        assert code == EXIT_OK
        return (tmp_path / out_name / "clip.sere").read_bytes()

    raw = run("out1")
    magic, version, t, d = struct.unpack_from("<4sIII", raw)
    shape_ok = magic == b"SERE" and version == 1 and (t, d) == (10, 128)

    from sere.features import EmbeddingKind, load_embedding

    loaded = load_embedding(tmp_path / "out1" / "clip.sere", kind=EmbeddingKind.VGGISH)
    payload = np.frombuffer(raw, dtype="<f4", offset=16).reshape(10, 128)
    bit_exact = (
        np.array_equal(loaded.frames, payload)
        and loaded.frames.dtype == np.float32
        and loaded.kind is EmbeddingKind.VGGISH
    )

    rerun_identical = run("out2") == raw

    verdict(
        "vggish export roundtrip",
        shape_ok and bit_exact and rerun_identical,
        f"T={t} D={d}, retrieval package read bit-exact={bit_exact}, "
        f"rerun identical={rerun_identical}",
    )
