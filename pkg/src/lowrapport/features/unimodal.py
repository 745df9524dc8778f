"""Single-modality per-participant features: speech activity, prosody, face, hands."""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import MissingModality
from ..model import (
    AU_INDEX,
    AU_NAMES,
    PROSODY_DIM,
    AUStream,
    FrameSeries,
    HandStream,
    SessionRecord,
    nearest_index,
)

MISSING = float("nan")


def _stream(s: SessionRecord, pid: str, name: str):
    st = s.streams.get(pid)
    value = None if st is None else getattr(st, name)
    if value is None:
        raise MissingModality(f"session {s.session_id}: no {name} stream for {pid}")
    return value


# --- speech activity ------------------------------------------------------------

def turn_transitions(s: SessionRecord) -> list[tuple[str, str]]:
    """Consecutive (previous, next) speaker pairs, turns ordered by start time."""
    ordered = sorted(s.turns, key=lambda tr: (tr.start, tr.end, tr.speaker))
    return [(a.speaker, b.speaker) for a, b in zip(ordered, ordered[1:]) if a.speaker != b.speaker]


def speech_activity_features(s: SessionRecord, pid: str) -> dict[str, float]:
    own = s.turns_of(pid)
    lengths = [tr.length for tr in own]
    trans = [(a, b) for a, b in turn_transitions(s) if a != pid]
    taken = sum(1 for _, b in trans if b == pid)
    return {
        "TimeSpeak": float(sum(lengths)) / s.duration,
        "TimeTurn": float(np.mean(lengths)) if lengths else MISSING,
        "RateTurn": len(own) / (s.duration / 60.0),
        "ProbTurnTrans": taken / len(trans) if trans else MISSING,
    }


# --- prosody --------------------------------------------------------------------

PROSODY_NAMES: tuple[str, ...] = tuple(f"PRS{k:03d}" for k in range(1, 2 * PROSODY_DIM + 1))


def prosody_features(s: SessionRecord, pid: str) -> dict[str, float]:
    """Per-dimension mean then population std over the participant's turn vectors."""
    table = _stream(s, pid, "prosody")
    own = {k for k, tr in enumerate(s.turns) if tr.speaker == pid}
    rows = [m for m, k in enumerate(table.turn_index) if int(k) in own]
    if not rows:
        return dict.fromkeys(PROSODY_NAMES, MISSING)
    v = table.values[rows]
    stats = np.concatenate([v.mean(axis=0), v.std(axis=0)])
    return dict(zip(PROSODY_NAMES, stats.tolist()))


# --- facial action units ----------------------------------------------------------

def au_window_mask(t: np.ndarray, window: Optional[tuple[float, float]]) -> np.ndarray:
    if window is None:
        return np.ones(len(t), dtype=bool)
    return (t >= window[0]) & (t < window[1])


def au_stats(s: SessionRecord, pid: str, window: Optional[tuple[float, float]] = None
             ) -> dict[str, float]:
    au: AUStream = _stream(s, pid, "au")
    keep = au_window_mask(au.t, window)
    out = {}
    if not keep.any():
        for name in AU_NAMES:
            out[name] = MISSING
            out["Prob" + name] = MISSING
        return out
    mean_int = au.intensity[keep].mean(axis=0)
    prob = au.active[keep].mean(axis=0)
    for k, name in enumerate(AU_NAMES):
        out[name] = float(mean_int[k])
        out["Prob" + name] = float(prob[k])
    return out


def posiface_values(active: np.ndarray) -> np.ndarray:
    """Per-frame positivity indicator from an (n, 17) activation matrix."""
    act = active.astype(bool)
    pos = act[:, AU_INDEX[12]]
    neg = act[:, AU_INDEX[15]] & (act[:, AU_INDEX[1]] | act[:, AU_INDEX[4]])
    return np.where(pos & ~neg, 1, np.where(neg & ~pos, -1, 0)).astype(np.int8)


def posiface_series(au: AUStream) -> FrameSeries:
    return FrameSeries(au.t, posiface_values(au.active), nearest=True)


def posiface_stats(series: FrameSeries, window: Optional[tuple[float, float]] = None
                   ) -> dict[str, float]:
    v = series.values[au_window_mask(series.t, window), 0]
    if v.size == 0:
        return {"PosiFace_mean": MISSING, "PosiFace_std": MISSING}
    return {"PosiFace_mean": float(v.mean()), "PosiFace_std": float(v.std())}


# --- head orientation ---------------------------------------------------------------

def facing_flags(facing_dir: np.ndarray, own_pos: np.ndarray, other_pos: np.ndarray,
                 max_angle_deg: float) -> np.ndarray:
    """Whether each frame's facing direction points within the angle of the other seat."""
    to_other = other_pos - own_pos
    norm = np.linalg.norm(to_other, axis=1) * np.linalg.norm(facing_dir, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.einsum("ij,ij->i", facing_dir, to_other) / norm
    cos = np.clip(np.nan_to_num(cos, nan=-1.0), -1.0, 1.0)
    return np.degrees(np.arccos(cos)) <= max_angle_deg + 1e-9


def facing_features(s: SessionRecord, pid: str, max_angle_deg: float = 30.0,
                    match_tol: float = 0.2) -> dict[str, float]:
    """Fraction of time others face the target, and fraction of mutual facing.

    Partner frames are matched to the target's frames by nearest timestamp
    within ``match_tol`` seconds; each partner contributes the mean over its
    matched frames and partners are averaged.
    """
    heads = {p: _stream(s, p, "head") for p in s.participants}
    if any(len(h) == 0 for h in heads.values()):
        return {"Facing": MISSING, "MutualFacing": MISSING}
    me = heads[pid]
    facing, mutual = [], []
    for j in s.others(pid):
        other = heads[j]
        idx = nearest_index(other.t, me.t)
        ok = np.abs(other.t[idx] - me.t) <= match_tol + 1e-12
        if not ok.any():
            continue
        idx = idx[ok]
        my_pos, my_dir = me.position[ok], me.facing[ok]
        j_pos, j_dir = other.position[idx], other.facing[idx]
        j_to_me = facing_flags(j_dir, j_pos, my_pos, max_angle_deg)
        me_to_j = facing_flags(my_dir, my_pos, j_pos, max_angle_deg)
        facing.append(j_to_me.mean())
        mutual.append((j_to_me & me_to_j).mean())
    if not facing:
        return {"Facing": MISSING, "MutualFacing": MISSING}
    return {"Facing": float(np.mean(facing)), "MutualFacing": float(np.mean(mutual))}


# --- hands ------------------------------------------------------------------------

def hand_velocity_series(hands: HandStream, max_gap: float = 0.5) -> FrameSeries:
    """Mean hand speed on consecutive both-detected frame pairs, stamped at the pair midpoint."""
    if len(hands) < 2:
        return FrameSeries(np.empty(0), np.empty((0, 1)))
    dt = np.diff(hands.t)
    ok = hands.both[:-1] & hands.both[1:] & (dt <= max_gap + 1e-12)
    dl = np.linalg.norm(np.diff(hands.left, axis=0), axis=1)
    dr = np.linalg.norm(np.diff(hands.right, axis=0), axis=1)
    v = (dl[ok] + dr[ok]) / (2.0 * dt[ok])
    mid = 0.5 * (hands.t[:-1] + hands.t[1:])[ok]
    return FrameSeries(mid, v)


def hand_features(s: SessionRecord, pid: str, max_gap: float = 0.5) -> dict[str, float]:
    vel = hand_velocity_series(_stream(s, pid, "hands"), max_gap)
    return {"VelHand": float(vel.values[:, 0].mean()) if len(vel) else MISSING}
