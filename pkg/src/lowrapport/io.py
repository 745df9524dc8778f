"""Manifest and stream-file reading/writing.

Manifest layout (JSON)::

    {"confidence_threshold": 0.8,            # optional
     "sessions": [{"id": ..., "duration_s": ..., "participants": [...],
                   "turns_csv": path, "ratings_json": path,
                   "au_csv": {pid: path}, "head_csv": {pid: path},
                   "hands_csv": {pid: path}, "prosody_csv": {pid: path}}]}

Paths are resolved relative to the manifest's directory. Any of the four
per-participant stream maps may be omitted; the modality is then absent.
"""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import pandas as pd

from .errors import MissingFile, ParseError, SchemaViolation
from .model import (
    ATTRIBUTES,
    AU_NAMES,
    PROSODY_DIM,
    TRAITS,
    AUStream,
    HandStream,
    HeadStream,
    ParticipantStreams,
    ProsodyTable,
    RatingsRecord,
    SessionRecord,
    TurnSegment,
    validate_ratings,
    validate_session,
)

Corpus = list[tuple[SessionRecord, RatingsRecord]]

DEFAULT_CONFIDENCE = 0.8

TURNS_HEADER = ["speaker", "start_s", "end_s"]
AU_HEADER = (["t_s", "confidence"] + [f"{n}_r" for n in AU_NAMES] + [f"{n}_c" for n in AU_NAMES])
HEAD_HEADER = ["t_s", "px", "py", "pz", "dx", "dy", "dz"]
HANDS_HEADER = ["t_s", "lx", "ly", "rx", "ry", "both"]
PROSODY_HEADER = ["turn_index"] + [f"v{k:03d}" for k in range(1, PROSODY_DIM + 1)]

STREAM_KEYS = {"au": "au_csv", "head": "head_csv", "hands": "hands_csv", "prosody": "prosody_csv"}


def _read_numeric(path: Path, header: list[str], allow_empty: Iterable[str] = ()) -> np.ndarray:
    try:
        df = pd.read_csv(path, skipinitialspace=True)
    except pd.errors.ParserError as exc:
        raise ParseError(path, 0, str(exc)) from None
    except pd.errors.EmptyDataError:
        raise ParseError(path, 1, "empty file") from None
    cols = list(df.columns)
    if cols != header:
        raise SchemaViolation(
            f"{path}: expected {len(header)} columns {header[:3]}...{header[-1:]}, "
            f"got {len(cols)} columns")
    allow = set(allow_empty)
    for name in header:
        col = df[name]
        if col.dtype.kind not in "fiub":
            num = pd.to_numeric(col, errors="coerce")
            bad = num.isna() & col.notna()
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise ParseError(path, row + 2, f"column {name!r}: cannot parse {col.iloc[row]!r}")
        if name not in allow and col.isna().any():
            row = int(np.flatnonzero(col.isna().to_numpy())[0])
            raise ParseError(path, row + 2, f"column {name!r}: empty cell")
    return df.to_numpy(dtype=float)


def read_turns(path: Path) -> list[TurnSegment]:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise ParseError(path, 1, "empty file") from None
    if list(df.columns) != TURNS_HEADER:
        raise SchemaViolation(f"{path}: expected header {TURNS_HEADER}, got {list(df.columns)}")
    turns = []
    for row, (spk, a, b) in enumerate(df.itertuples(index=False, name=None)):
        try:
            turns.append(TurnSegment(spk.strip(), float(a), float(b)))
        except ValueError:
            raise ParseError(path, row + 2, f"bad turn row {(spk, a, b)!r}") from None
    return turns


def read_au(path: Path, threshold: float) -> AUStream:
    a = _read_numeric(path, AU_HEADER)
    keep = a[:, 1] >= threshold
    a = a[keep]
    k = len(AU_NAMES)
    return AUStream(a[:, 0], a[:, 1], a[:, 2:2 + k], a[:, 2 + k:].astype(np.int8))


def read_head(path: Path) -> HeadStream:
    a = _read_numeric(path, HEAD_HEADER)
    return HeadStream(a[:, 0], a[:, 1:4], a[:, 4:7])


def read_hands(path: Path) -> HandStream:
    a = _read_numeric(path, HANDS_HEADER, allow_empty=("lx", "ly", "rx", "ry"))
    return HandStream(a[:, 0], a[:, 1:3], a[:, 3:5], a[:, 5].astype(bool))


def read_prosody(path: Path) -> ProsodyTable:
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, nrows=0)
    except pd.errors.EmptyDataError:
        raise ParseError(path, 1, "empty file") from None
    if len(raw.columns) != PROSODY_DIM + 1 or raw.columns[0] != "turn_index":
        raise SchemaViolation(
            f"{path}: expected turn_index plus {PROSODY_DIM} values, got {len(raw.columns)} columns")
    a = _read_numeric(path, list(raw.columns))
    return ProsodyTable(a[:, 0].astype(int), a[:, 1:])


def read_ratings(path: Path) -> RatingsRecord:
    try:
        doc = json.loads(Path(path).read_text())
        directed = {}
        for entry in doc["directed"]:
            key = (str(entry["rater"]), str(entry["ratee"]))
            if key in directed:
                raise SchemaViolation(f"{path}: duplicate rating {key[0]}->{key[1]}")
            directed[key] = {a: float(entry[a]) for a in ATTRIBUTES}
        personality = {str(p): {t: float(v[t]) for t in TRAITS}
                       for p, v in doc["personality"].items()}
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"{path}: malformed ratings ({exc!r})") from None
    return RatingsRecord(directed, personality)


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def load_corpus(manifest_path, confidence_threshold: Optional[float] = None,
                validate: bool = True) -> Corpus:
    """Parse a manifest and all files it references.

    AU frames with confidence below the threshold are dropped at load time.
    All missing files are reported together in one :class:`MissingFile`.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise MissingFile(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(manifest_path, exc.lineno, exc.msg) from None
    if confidence_threshold is None:
        confidence_threshold = float(doc.get("confidence_threshold", DEFAULT_CONFIDENCE))
    base = manifest_path.parent
    try:
        entries = doc["sessions"]
    except (KeyError, TypeError):
        raise SchemaViolation(f"{manifest_path}: no 'sessions' list") from None

    missing = []
    for e in entries:
        for key in ("turns_csv", "ratings_json"):
            if key not in e:
                raise SchemaViolation(f"{manifest_path}: session {e.get('id')!r} lacks {key}")
            if not _resolve(base, e[key]).is_file():
                missing.append(_resolve(base, e[key]))
        for key in STREAM_KEYS.values():
            for pid, p in e.get(key, {}).items():
                if not _resolve(base, p).is_file():
                    missing.append(_resolve(base, p))
    if missing:
        raise MissingFile(missing)

    corpus: Corpus = []
    seen: set[str] = set()
    problems: list[str] = []
    for e in entries:
        try:
            sid = str(e["id"])
            participants = tuple(str(p) for p in e["participants"])
            duration = float(e["duration_s"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"{manifest_path}: malformed session entry ({exc!r})") from None
        turns = read_turns(_resolve(base, e["turns_csv"]))
        streams = {}
        for pid in participants:
            parts = {}
            for name, key in STREAM_KEYS.items():
                block = e.get(key)
                if block is None:
                    continue
                if pid not in block:
                    raise SchemaViolation(f"{manifest_path}: session {sid} {key} lacks {pid}")
                path = _resolve(base, block[pid])
                if name == "au":
                    parts[name] = read_au(path, confidence_threshold)
                elif name == "head":
                    parts[name] = read_head(path)
                elif name == "hands":
                    parts[name] = read_hands(path)
                else:
                    parts[name] = read_prosody(path)
            streams[pid] = ParticipantStreams(**parts)
        session = SessionRecord(sid, participants, duration, tuple(turns), streams)
        ratings = read_ratings(_resolve(base, e["ratings_json"]))
        dup = seen.intersection(participants)
        if dup:
            problems.append(f"{sid}: participant ids reused across sessions: {sorted(dup)}")
        seen.update(participants)
        if validate:
            problems += [f"{sid}: {v}" for v in validate_session(session)]
            problems += [f"{sid}: {v}" for v in validate_ratings(ratings, participants)]
        corpus.append((session, ratings))
    if problems:
        raise SchemaViolation("; ".join(problems[:20]) +
                              (f" (+{len(problems) - 20} more)" if len(problems) > 20 else ""))
    return corpus


# --- writers --------------------------------------------------------------------

def _fmt_rows(a: np.ndarray, fmt: str) -> str:
    lines = [",".join(fmt % v for v in row) for row in a]
    return "\n".join(lines) + ("\n" if lines else "")


def write_turns(path, turns: Iterable[TurnSegment]) -> None:
    rows = [",".join(TURNS_HEADER)] + [f"{t.speaker},{t.start:.3f},{t.end:.3f}" for t in turns]
    Path(path).write_text("\n".join(rows) + "\n")


def write_au(path, au: AUStream) -> None:
    a = np.column_stack([au.t, au.confidence, au.intensity])
    body = [",".join(AU_HEADER)]
    for row, act in zip(a, au.active):
        body.append(f"{row[0]:.3f},{row[1]:.3f}," + ",".join(f"{v:.3f}" for v in row[2:]) +
                    "," + ",".join(str(int(x)) for x in act))
    Path(path).write_text("\n".join(body) + "\n")


def write_head(path, head: HeadStream) -> None:
    body = [",".join(HEAD_HEADER)]
    for t, p, d in zip(head.t, head.position, head.facing):
        body.append(f"{t:.3f},{p[0]:.4f},{p[1]:.4f},{p[2]:.4f},{d[0]:.9f},{d[1]:.9f},{d[2]:.9f}")
    Path(path).write_text("\n".join(body) + "\n")


def write_hands(path, hands: HandStream) -> None:
    def cell(v):
        return "" if np.isnan(v) else f"{v:.4f}"

    body = [",".join(HANDS_HEADER)]
    for t, lft, rgt, both in zip(hands.t, hands.left, hands.right, hands.both):
        body.append(f"{t:.3f},{cell(lft[0])},{cell(lft[1])},{cell(rgt[0])},{cell(rgt[1])},{int(both)}")
    Path(path).write_text("\n".join(body) + "\n")


def write_prosody(path, table: ProsodyTable) -> None:
    body = [",".join(PROSODY_HEADER)]
    for k, row in zip(table.turn_index, table.values):
        body.append(f"{int(k)}," + ",".join(f"{v:.5f}" for v in row))
    Path(path).write_text("\n".join(body) + "\n")


def write_ratings(path, r: RatingsRecord) -> None:
    doc = {
        "directed": [dict(rater=a, ratee=b, **{k: round(float(v[k]), 6) for k in ATTRIBUTES})
                     for (a, b), v in sorted(r.directed.items())],
        "personality": {p: {t: round(float(v[t]), 4) for t in TRAITS}
                        for p, v in sorted(r.personality.items())},
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def write_session(directory, session: SessionRecord, ratings: RatingsRecord) -> dict:
    """Write one session's files under ``directory`` and return its manifest entry."""
    directory = Path(directory)
    sdir = directory / session.session_id
    sdir.mkdir(parents=True, exist_ok=True)
    rel = lambda p: os.path.relpath(p, directory)  # noqa: E731
    entry = {"id": session.session_id, "duration_s": session.duration,
             "participants": list(session.participants)}
    write_turns(sdir / "turns.csv", session.turns)
    entry["turns_csv"] = rel(sdir / "turns.csv")
    write_ratings(sdir / "ratings.json", ratings)
    entry["ratings_json"] = rel(sdir / "ratings.json")
    writers = {"au": write_au, "head": write_head, "hands": write_hands, "prosody": write_prosody}
    for name, key in STREAM_KEYS.items():
        if not session.has_modality(name):
            continue
        entry[key] = {}
        for pid in session.participants:
            p = sdir / f"{pid}_{name}.csv"
            writers[name](p, getattr(session.streams[pid], name))
            entry[key][pid] = rel(p)
    return entry


def write_manifest(path, entries: list[dict], confidence_threshold: float = DEFAULT_CONFIDENCE) -> None:
    doc = {"confidence_threshold": confidence_threshold, "sessions": entries}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")
