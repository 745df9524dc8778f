import filecmp
import json

import numpy as np
import pytest

from helpers import au_stream, hand_stream, head_stream, ratings, session
from lowrapport.errors import MissingFile, ParseError, SchemaViolation
from lowrapport.io import AU_HEADER, load_corpus, write_manifest, write_session
from lowrapport.model import validate_session
from lowrapport.synth import GenConfig, generate_corpus

PIDS = ("A", "B", "C")


def _write_minimal(tmp_path, **streams):
    t = np.arange(0, 20, 0.5)
    s = session(PIDS, 20.0, [("A", 0, 5), ("B", 5, 12), ("C", 12, 19)], **streams)
    entry = write_session(tmp_path, s, ratings(PIDS, 5.0))
    write_manifest(tmp_path / "manifest.json", [entry])
    return tmp_path / "manifest.json", s, t


def test_roundtrip_minimal_session(tmp_path):
    t = np.arange(0, 20, 0.5)
    left = np.column_stack([np.linspace(0.1, 0.2, len(t)), np.full(len(t), 0.5)])
    right = left.copy()
    right[3] = np.nan
    manifest, s, _ = _write_minimal(
        tmp_path,
        au={p: au_stream(t, 1.25, 1, confidence=0.95) for p in PIDS},
        head={p: head_stream(t, [k, 0, 1], [1, 0.2, 0]) for k, p in enumerate(PIDS)},
        hands={p: hand_stream(t, left, right) for p in PIDS})
    corpus = load_corpus(manifest)
    assert len(corpus) == 1
    got, r = corpus[0]
    assert got.participants == PIDS and len(got.turns) == 3
    np.testing.assert_allclose(got.streams["A"].au.intensity, 1.25)
    np.testing.assert_allclose(got.streams["B"].head.facing, s.streams["B"].head.facing, atol=1e-9)
    assert not got.streams["C"].hands.both[3] and got.streams["C"].hands.both.sum() == len(t) - 1
    assert r.directed[("A", "B")]["rapport"] == 5.0


def test_missing_modality_is_allowed(tmp_path):
    manifest, _, _ = _write_minimal(tmp_path)
    (got, _), = load_corpus(manifest)
    assert not got.has_modality("au") and not got.has_modality("prosody")


def test_au_row_with_16_intensity_columns(tmp_path):
    t = np.arange(0, 20, 0.5)
    manifest, _, _ = _write_minimal(tmp_path, au={p: au_stream(t) for p in PIDS})
    path = tmp_path / "S1" / "A_au.csv"
    lines = path.read_text().splitlines()
    header = AU_HEADER[:]
    drop = header.index("AU45_r")
    rows = [",".join(c for k, c in enumerate(line.split(",")) if k != drop) for line in lines]
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(SchemaViolation):
        load_corpus(manifest)


def test_missing_files_are_all_named(tmp_path):
    t = np.arange(0, 20, 0.5)
    manifest, _, _ = _write_minimal(tmp_path, au={p: au_stream(t) for p in PIDS})
    (tmp_path / "S1" / "A_au.csv").unlink()
    (tmp_path / "S1" / "C_au.csv").unlink()
    with pytest.raises(MissingFile) as exc:
        load_corpus(manifest)
    msg = str(exc.value)
    assert "A_au.csv" in msg and "C_au.csv" in msg


def test_parse_error_reports_line(tmp_path):
    manifest, _, _ = _write_minimal(tmp_path)
    path = tmp_path / "S1" / "turns.csv"
    lines = path.read_text().splitlines()
    lines[2] = "B,five,12.0"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as exc:
        load_corpus(manifest)
    assert exc.value.line == 3


def test_invalid_session_rejected(tmp_path):
    s = session(PIDS, 20.0, [("A", 0, 25)])
    entry = write_session(tmp_path, s, ratings(PIDS))
    write_manifest(tmp_path / "m.json", [entry])
    with pytest.raises(SchemaViolation, match=r"turns\[0\]"):
        load_corpus(tmp_path / "m.json")


def test_confidence_filter_keeps_97_percent(tmp_path):
    rng = np.random.default_rng(3)
    t = np.arange(0, 600, 0.1)
    conf = np.where(rng.random(len(t)) < 0.03, 0.5, 0.95)
    streams = {p: au_stream(t, 1.0, 0) for p in PIDS}
    streams = {p: type(a)(a.t, conf, a.intensity, a.active) for p, a in streams.items()}
    s = session(PIDS, 600.0, [("A", 0, 5)], au=streams)
    entry = write_session(tmp_path, s, ratings(PIDS))
    write_manifest(tmp_path / "m.json", [entry], confidence_threshold=0.8)
    (got, _), = load_corpus(tmp_path / "m.json")
    kept = len(got.streams["A"].au) / len(t)
    assert abs(kept - 0.97) <= 0.01


def test_generated_corpus_validates(small_corpus, small_cfg):
    assert len(small_corpus) == small_cfg.sessions
    for s, _ in small_corpus:
        assert validate_session(s) == []


def test_generation_is_byte_identical(tmp_path):
    cfg = GenConfig(sessions=2, four_person_sessions=1, duration=40.0, frame_rate=4.0, seed=5)
    a = generate_corpus(cfg, tmp_path / "a").parent
    b = generate_corpus(cfg, tmp_path / "b").parent
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for f in files:
        assert filecmp.cmp(a / f, b / f, shallow=False), f
    truth = json.loads((a / "ground_truth.json").read_text())
    assert set(truth) >= {"latent", "low", "planted"}
