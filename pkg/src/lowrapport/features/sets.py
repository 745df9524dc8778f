"""Feature-set taxonomy, per-participant assembly and feature-matrix export."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import MissingModality, UnknownFeatureSet
from ..model import AU_NAMES, TRAITS, RatingsRecord, SessionRecord, clip_segment
from .relational import CROSS_CONDITIONS, SyncConfig, crossmodal_au_features, hand_speech_feature, sync_features
from .unimodal import (
    MISSING,
    PROSODY_NAMES,
    au_stats,
    facing_features,
    hand_features,
    posiface_series,
    posiface_stats,
    prosody_features,
    speech_activity_features,
)


@dataclass(frozen=True)
class FeatureConfig:
    facing_angle_deg: float = 30.0
    facing_match_tol: float = 0.2
    hand_max_gap: float = 0.5
    early_window: float = 200.0
    sync: SyncConfig = field(default_factory=SyncConfig)


@dataclass(frozen=True)
class FeatureVector:
    session_id: str
    participant: str
    segment: str
    values: dict[str, float]

    def __post_init__(self):
        object.__setattr__(self, "values", dict(sorted(self.values.items())))

    @property
    def names(self) -> list[str]:
        return list(self.values)


# --- block name lists -------------------------------------------------------------

SPEECH_NAMES = ("TimeSpeak", "TimeTurn", "RateTurn", "ProbTurnTrans")
FACE_STATIC_NAMES = (("PosiFace_mean", "PosiFace_std", "Facing", "MutualFacing")
                     + AU_NAMES + tuple("Prob" + n for n in AU_NAMES))
FACE_EARLY_NAMES = (("PosiFace_mean_200s", "PosiFace_std_200s")
                    + tuple(n + "_200s" for n in AU_NAMES) + tuple(f"Prob{n}_200s" for n in AU_NAMES))
FACE_SYNC_NAMES = (("PosiFace_sync", "AU_sync", "ProbAU_sync")
                   + tuple(n + "_sync" for n in AU_NAMES) + tuple(f"Prob{n}_sync" for n in AU_NAMES))
HAND_NAMES = ("VelHand", "VelHand_sync")
PERSONALITY_NAMES = tuple(f"NEO_{t}" for t in TRAITS)
CROSS_FACE_NAMES = tuple(f"{p}{n}_{c}" for c in CROSS_CONDITIONS for p in ("", "Prob") for n in AU_NAMES)
CROSS_HAND_NAMES = ("VelHand_target|targetSpeak",)

BLOCK_NAMES: dict[str, tuple[str, ...]] = {
    "speech_act": SPEECH_NAMES,
    "prosody": PROSODY_NAMES,
    "face_static": FACE_STATIC_NAMES,
    "face_early": FACE_EARLY_NAMES,
    "face_sync": FACE_SYNC_NAMES,
    "hand": HAND_NAMES,
    "personality": PERSONALITY_NAMES,
    "cross_face_speech": CROSS_FACE_NAMES,
    "cross_hand_speech": CROSS_HAND_NAMES,
}

BLOCK_MODALITIES: dict[str, tuple[str, ...]] = {
    "speech_act": (),
    "prosody": ("prosody",),
    "face_static": ("au", "head"),
    "face_early": ("au",),
    "face_sync": ("au",),
    "hand": ("hands",),
    "personality": (),
    "cross_face_speech": ("au",),
    "cross_hand_speech": ("hands",),
}

BASE_SETS: dict[str, tuple[str, ...]] = {
    "speech_act": ("speech_act",),
    "prosody": ("prosody",),
    "face": ("face_static", "face_early", "face_sync"),
    "face_nosync": ("face_static", "face_early"),
    "face_synconly": ("face_sync",),
    "face_no200s": ("face_static", "face_sync"),
    "face_200sonly": ("face_early",),
    "hand": ("hand",),
    "personality": ("personality",),
}
FACE_SETS = ("face", "face_nosync", "face_synconly", "face_no200s", "face_200sonly")


def resolve_blocks(feature_set: str, segment: str = "full") -> tuple[str, ...]:
    """Blocks making up a (possibly '+'-joined) feature set for one segment.

    Joining a face set or hand with speech_act also adds the corresponding
    speech-conditioned cross-modal block. Early-window (200 s) blocks exist
    only for the full interaction and its first third.
    """
    parts = [p.strip() for p in feature_set.split("+")]
    blocks: list[str] = []
    for p in parts:
        if p not in BASE_SETS:
            raise UnknownFeatureSet(f"unknown feature set {p!r}; known: {sorted(BASE_SETS)}")
        blocks += [b for b in BASE_SETS[p] if b not in blocks]
    if "speech_act" in parts:
        if any(p in FACE_SETS for p in parts):
            blocks.append("cross_face_speech")
        if "hand" in parts:
            blocks.append("cross_hand_speech")
    if segment not in ("full", "first"):
        blocks = [b for b in blocks if b != "face_early"]
    if not blocks:
        raise UnknownFeatureSet(f"feature set {feature_set!r} is empty for segment {segment!r}")
    return tuple(blocks)


def feature_names(feature_set: str, segment: str = "full") -> list[str]:
    return sorted(n for b in resolve_blocks(feature_set, segment) for n in BLOCK_NAMES[b])


def required_modalities(feature_set: str, segment: str = "full") -> set[str]:
    return {m for b in resolve_blocks(feature_set, segment) for m in BLOCK_MODALITIES[b]}


# --- extraction -------------------------------------------------------------------

def _suffix(d: dict[str, float], suffix: str) -> dict[str, float]:
    return {k + suffix: v for k, v in d.items()}


def extract_blocks(s: SessionRecord, ratings: Optional[RatingsRecord], blocks,
                   cfg: FeatureConfig = FeatureConfig()) -> dict[str, dict[str, float]]:
    """Compute the named blocks for every participant of an (already clipped) session."""
    blocks = set(blocks)
    for b in blocks:
        for m in BLOCK_MODALITIES[b]:
            if not s.has_modality(m):
                raise MissingModality(f"session {s.session_id}: feature block {b} needs {m} streams")
    out: dict[str, dict[str, float]] = {p: {} for p in s.participants}
    if blocks & {"face_sync", "hand"}:
        mods = tuple(m for m, b in (("au", "face_sync"), ("hands", "hand")) if b in blocks)
        sync = sync_features(s, cfg.sync, cfg.hand_max_gap, mods)
    early = (0.0, min(cfg.early_window, s.duration))
    for pid in s.participants:
        f = out[pid]
        if "speech_act" in blocks:
            f.update(speech_activity_features(s, pid))
        if "prosody" in blocks:
            f.update(prosody_features(s, pid))
        if "face_static" in blocks or "face_early" in blocks:
            pf = posiface_series(s.streams[pid].au)
        if "face_static" in blocks:
            f.update(posiface_stats(pf))
            f.update(au_stats(s, pid))
            f.update(facing_features(s, pid, cfg.facing_angle_deg, cfg.facing_match_tol))
        if "face_early" in blocks:
            f.update(_suffix(posiface_stats(pf, early), "_200s"))
            f.update(_suffix(au_stats(s, pid, early), "_200s"))
        if "face_sync" in blocks:
            f.update({k: v for k, v in sync[pid].items() if k in FACE_SYNC_NAMES})
        if "hand" in blocks:
            f.update(hand_features(s, pid, cfg.hand_max_gap))
            f["VelHand_sync"] = sync[pid]["VelHand_sync"]
        if "personality" in blocks:
            if ratings is None or pid not in ratings.personality:
                raise MissingModality(f"no personality scores for {pid}")
            f.update({f"NEO_{t}": float(ratings.personality[pid][t]) for t in TRAITS})
        if "cross_face_speech" in blocks:
            f.update(crossmodal_au_features(s, pid))
        if "cross_hand_speech" in blocks:
            f.update(hand_speech_feature(s, pid, cfg.hand_max_gap))
    return out


def assemble_features(s: SessionRecord, pid: str, feature_set: str, segment: str = "full",
                      ratings: Optional[RatingsRecord] = None,
                      cfg: FeatureConfig = FeatureConfig()) -> FeatureVector:
    blocks = resolve_blocks(feature_set, segment)
    clipped = clip_segment(s, segment)
    values = extract_blocks(clipped, ratings, blocks, cfg)[pid]
    names = feature_names(feature_set, segment)
    return FeatureVector(s.session_id, pid, segment, {n: values.get(n, MISSING) for n in names})


class FeatureCache:
    """Memoises per-(session, segment, block) features across experiments.

    Block values depend only on one session's streams, never on labels or
    other sessions, so sharing them between folds does not leak.
    """

    def __init__(self, corpus, cfg: FeatureConfig = FeatureConfig(), jobs: int = 1):
        self.corpus = corpus
        self.cfg = cfg
        self.jobs = max(1, int(jobs))
        self._store: dict[tuple[str, str, str], dict[str, dict[str, float]]] = {}

    def _session_blocks(self, idx: int, segment: str, blocks) -> None:
        s, r = self.corpus[idx]
        todo = [b for b in blocks if (s.session_id, segment, b) not in self._store]
        if not todo:
            return
        res = extract_blocks(clip_segment(s, segment), r, todo, self.cfg)
        for b in todo:
            names = BLOCK_NAMES[b]
            self._store[(s.session_id, segment, b)] = {
                p: {n: res[p].get(n, MISSING) for n in names} for p in s.participants}

    def matrix(self, feature_set: str, segment: str = "full"):
        """Return (row ids, feature names, X) with rows in corpus order."""
        blocks = resolve_blocks(feature_set, segment)
        names = feature_names(feature_set, segment)
        idxs = range(len(self.corpus))
        if self.jobs > 1:
            with ThreadPoolExecutor(self.jobs) as ex:
                list(ex.map(lambda i: self._session_blocks(i, segment, blocks), idxs))
        else:
            for i in idxs:
                self._session_blocks(i, segment, blocks)
        rows, data = [], []
        for s, _ in self.corpus:
            for p in s.participants:
                merged = {}
                for b in blocks:
                    merged.update(self._store[(s.session_id, segment, b)][p])
                rows.append((s.session_id, p))
                data.append([merged[n] for n in names])
        X = np.array(data, dtype=float).reshape(len(rows), len(names))
        return rows, names, X


def write_feature_csv(path, rows, names, X, segment: str) -> None:
    """One row per (session, participant, segment); MISSING written as an empty cell."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["session_id", "participant", "segment"] + list(names))
        for (sid, pid), vals in zip(rows, X):
            w.writerow([sid, pid, segment] + ["" if math.isnan(v) else repr(float(v)) for v in vals])


def read_feature_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows, data = [], []
        for line in r:
            rows.append((line[0], line[1]))
            data.append([float(v) if v != "" else MISSING for v in line[3:]])
    names = header[3:]
    return rows, names, np.array(data, dtype=float).reshape(len(rows), len(names))
