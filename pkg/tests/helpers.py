"""Small builders for hand-made sessions."""
import numpy as np

from lowrapport.model import (
    AU_CODES,
    AUStream,
    HandStream,
    HeadStream,
    ParticipantStreams,
    RatingsRecord,
    SessionRecord,
    TurnSegment,
)

N_AU = len(AU_CODES)


def au_stream(t, intensity=0.0, active=0, confidence=1.0):
    t = np.asarray(t, dtype=float)
    n = len(t)
    inten = np.broadcast_to(np.asarray(intensity, dtype=float), (n, N_AU)).copy() \
        if np.ndim(intensity) < 2 else np.asarray(intensity, dtype=float)
    act = np.broadcast_to(np.asarray(active, dtype=np.int8), (n, N_AU)).copy() \
        if np.ndim(active) < 2 else np.asarray(active, dtype=np.int8)
    return AUStream(t, np.full(n, float(confidence)), inten, act)


def head_stream(t, position, facing):
    t = np.asarray(t, dtype=float)
    n = len(t)
    pos = np.broadcast_to(np.asarray(position, dtype=float), (n, 3)).copy()
    f = np.broadcast_to(np.asarray(facing, dtype=float), (n, 3)).copy()
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    return HeadStream(t, pos, f)


def hand_stream(t, left, right):
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    both = ~np.isnan(left).any(axis=1) & ~np.isnan(right).any(axis=1)
    return HandStream(np.asarray(t, dtype=float), left, right, both)


def session(pids, duration, turns=(), sid="S1", **streams):
    """``streams`` maps modality name -> {pid: stream}."""
    st = {}
    for p in pids:
        st[p] = ParticipantStreams(**{m: v.get(p) for m, v in streams.items()})
    return SessionRecord(sid, tuple(pids), float(duration),
                         tuple(TurnSegment(*tr) for tr in turns), st)


def ratings(pids, value=4.0, per_target=None):
    directed = {}
    for a in pids:
        for b in pids:
            if a != b:
                v = per_target[b] if per_target else value
                directed[(a, b)] = {k: v for k in ("rapport", "leadership", "dominance",
                                                   "competence", "liking")}
    pers = {p: {t: 30.0 for t in "OCEAN"} for p in pids}
    return RatingsRecord(directed, pers)
