"""Session data model, invariant checks, resampling and temporal segmentation.

Streams are stored column-wise (one array per channel) rather than as lists of
per-frame records; a 20-minute session at 10 Hz has 12k frames per participant
and all feature code is vectorised over frames.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import EmptySeries, UnknownParticipant

AU_CODES: tuple[int, ...] = (1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 45)
AU_NAMES: tuple[str, ...] = tuple(f"AU{c:02d}" for c in AU_CODES)
AU_INDEX: dict[int, int] = {c: i for i, c in enumerate(AU_CODES)}

ATTRIBUTES: tuple[str, ...] = ("rapport", "leadership", "dominance", "competence", "liking")
TRAITS: tuple[str, ...] = ("O", "C", "E", "A", "N")
PROSODY_DIM = 384
SEGMENTS: tuple[str, ...] = ("full", "first", "middle", "last")


@dataclass(frozen=True, eq=False)
class FrameSeries:
    """Generic timestamped multichannel series.

    ``nearest`` flags channels that are indicators and must be resampled by
    nearest neighbour instead of linear interpolation.
    """

    t: np.ndarray
    values: np.ndarray
    nearest: np.ndarray = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        nearest = self.nearest
        if nearest is None:
            nearest = np.zeros(v.shape[1], dtype=bool)
        else:
            nearest = np.broadcast_to(np.asarray(nearest, dtype=bool), (v.shape[1],)).copy()
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "nearest", nearest)

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True, eq=False)
class AUStream:
    t: np.ndarray
    confidence: np.ndarray
    intensity: np.ndarray  # (n, 17)
    active: np.ndarray  # (n, 17) of 0/1

    def __len__(self) -> int:
        return len(self.t)

    def take(self, mask: np.ndarray) -> "AUStream":
        return AUStream(self.t[mask], self.confidence[mask], self.intensity[mask], self.active[mask])

    def shifted(self, offset: float) -> "AUStream":
        return replace(self, t=self.t - offset)


@dataclass(frozen=True, eq=False)
class HeadStream:
    t: np.ndarray
    position: np.ndarray  # (n, 3) metres, room frame
    facing: np.ndarray  # (n, 3) unit vectors

    def __len__(self) -> int:
        return len(self.t)

    def take(self, mask: np.ndarray) -> "HeadStream":
        return HeadStream(self.t[mask], self.position[mask], self.facing[mask])

    def shifted(self, offset: float) -> "HeadStream":
        return replace(self, t=self.t - offset)


@dataclass(frozen=True, eq=False)
class HandStream:
    t: np.ndarray
    left: np.ndarray  # (n, 2), NaN where undetected
    right: np.ndarray  # (n, 2)
    both: np.ndarray  # (n,) bool

    def __len__(self) -> int:
        return len(self.t)

    def take(self, mask: np.ndarray) -> "HandStream":
        return HandStream(self.t[mask], self.left[mask], self.right[mask], self.both[mask])

    def shifted(self, offset: float) -> "HandStream":
        return replace(self, t=self.t - offset)


@dataclass(frozen=True, eq=False)
class ProsodyTable:
    turn_index: np.ndarray  # (m,) index into SessionRecord.turns
    values: np.ndarray  # (m, 384)

    def __len__(self) -> int:
        return len(self.turn_index)


@dataclass(frozen=True, eq=False)
class ParticipantStreams:
    au: Optional[AUStream] = None
    head: Optional[HeadStream] = None
    hands: Optional[HandStream] = None
    prosody: Optional[ProsodyTable] = None


@dataclass(frozen=True)
class TurnSegment:
    speaker: str
    start: float
    end: float

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True, eq=False)
class SessionRecord:
    session_id: str
    participants: tuple[str, ...]
    duration: float
    turns: tuple[TurnSegment, ...]
    streams: Mapping[str, ParticipantStreams] = field(default_factory=dict)

    def others(self, pid: str) -> list[str]:
        if pid not in self.participants:
            raise UnknownParticipant(pid)
        return [p for p in self.participants if p != pid]

    def turns_of(self, pid: str) -> list[TurnSegment]:
        return [tr for tr in self.turns if tr.speaker == pid]

    def has_modality(self, name: str) -> bool:
        return all(getattr(self.streams.get(p, ParticipantStreams()), name) is not None
                   for p in self.participants)


@dataclass(frozen=True, eq=False)
class RatingsRecord:
    directed: Mapping[tuple[str, str], Mapping[str, float]]
    personality: Mapping[str, Mapping[str, float]]

    def raters_of(self, target: str) -> list[str]:
        return sorted(r for (r, e) in self.directed if e == target)


def speaking_mask(turns: Sequence[TurnSegment], t: np.ndarray) -> np.ndarray:
    """True where ``t`` falls inside any of ``turns`` (half-open [start, end))."""
    mask = np.zeros(len(t), dtype=bool)
    for tr in turns:
        lo, hi = np.searchsorted(t, [tr.start, tr.end], side="left")
        mask[lo:hi] = True
    return mask


# --- validation -----------------------------------------------------------------

def _check_times(t: np.ndarray, duration: float, where: str, out: list[str]) -> None:
    if len(t) == 0:
        return
    steps = np.diff(t)
    bad = np.flatnonzero(steps <= 0)
    if len(bad):
        out.append(f"{where}.t[{bad[0] + 1}]: timestamps must be strictly increasing")
    if t[0] < 0 or t[-1] > duration:
        idx = int(np.argmax((t < 0) | (t > duration)))
        out.append(f"{where}.t[{idx}]: timestamp outside [0, {duration}]")


def validate_session(s: SessionRecord) -> list[str]:
    """Return every invariant violation as ``"<field>[<index>]: <rule>"``; empty if valid."""
    out: list[str] = []
    n = len(s.participants)
    if not 3 <= n <= 4:
        out.append(f"participants: group size {n} not in {{3, 4}}")
    if len(set(s.participants)) != n:
        out.append("participants: ids must be distinct")
    if not s.duration > 0:
        out.append(f"duration: must be > 0 (got {s.duration})")

    by_speaker: dict[str, list[tuple[int, TurnSegment]]] = {}
    for k, tr in enumerate(s.turns):
        if tr.speaker not in s.participants:
            out.append(f"turns[{k}].speaker: {tr.speaker!r} is not a participant")
        if not 0 <= tr.start < tr.end <= s.duration:
            out.append(f"turns[{k}]: requires 0 <= start < end <= duration "
                       f"(got {tr.start}, {tr.end})")
        by_speaker.setdefault(tr.speaker, []).append((k, tr))
    for spk, items in by_speaker.items():
        items.sort(key=lambda kt: (kt[1].start, kt[1].end))
        for (_, a), (kb, b) in zip(items, items[1:]):
            if b.start < a.end:
                out.append(f"turns[{kb}]: overlaps an earlier turn of the same speaker {spk!r}")

    for pid in s.participants:
        st = s.streams.get(pid)
        if st is None:
            out.append(f"streams[{pid}]: missing")
            continue
        if st.au is not None:
            w = f"streams[{pid}].au"
            au = st.au
            _check_times(au.t, s.duration, w, out)
            if au.intensity.ndim != 2 or au.intensity.shape[1] != len(AU_CODES):
                out.append(f"{w}.intensity: expected {len(AU_CODES)} AU columns")
            elif len(au):
                if np.any((au.intensity < 0) | (au.intensity > 5)):
                    idx = int(np.argmax(np.any((au.intensity < 0) | (au.intensity > 5), axis=1)))
                    out.append(f"{w}.intensity[{idx}]: outside [0, 5]")
            if au.active.ndim != 2 or au.active.shape[1] != len(AU_CODES):
                out.append(f"{w}.active: expected {len(AU_CODES)} AU columns")
            elif len(au) and not np.all((au.active == 0) | (au.active == 1)):
                idx = int(np.argmax(np.any((au.active != 0) & (au.active != 1), axis=1)))
                out.append(f"{w}.active[{idx}]: must be 0 or 1")
            if len(au) and np.any((au.confidence < 0) | (au.confidence > 1)):
                idx = int(np.argmax((au.confidence < 0) | (au.confidence > 1)))
                out.append(f"{w}.confidence[{idx}]: outside [0, 1]")
        if st.head is not None:
            w = f"streams[{pid}].head"
            _check_times(st.head.t, s.duration, w, out)
            if len(st.head):
                norms = np.linalg.norm(st.head.facing, axis=1)
                bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-6)
                if len(bad):
                    out.append(f"{w}.facing[{bad[0]}]: not a unit vector (norm {norms[bad[0]]:.8f})")
        if st.hands is not None:
            w = f"streams[{pid}].hands"
            h = st.hands
            _check_times(h.t, s.duration, w, out)
            if len(h):
                present = ~np.isnan(h.left).any(axis=1) & ~np.isnan(h.right).any(axis=1)
                bad = np.flatnonzero(present != h.both)
                if len(bad):
                    out.append(f"{w}.both[{bad[0]}]: must hold exactly when both hands are present")
                coords = np.concatenate([h.left, h.right], axis=1)
                outside = np.nan_to_num(coords, nan=0.5)
                bad = np.flatnonzero(np.any((outside < 0) | (outside > 1), axis=1))
                if len(bad):
                    out.append(f"{w}[{bad[0]}]: hand coordinates outside [0, 1]")
        if st.prosody is not None:
            w = f"streams[{pid}].prosody"
            pr = st.prosody
            if pr.values.ndim != 2 or (len(pr) and pr.values.shape[1] != PROSODY_DIM):
                out.append(f"{w}.values: expected dimension {PROSODY_DIM}")
            for m, k in enumerate(pr.turn_index):
                k = int(k)
                if not 0 <= k < len(s.turns):
                    out.append(f"{w}.turn_index[{m}]: {k} is not a turn index")
                elif s.turns[k].speaker != pid:
                    out.append(f"{w}.turn_index[{m}]: turn {k} belongs to {s.turns[k].speaker!r}")
    return out


def validate_ratings(r: RatingsRecord, participants: Sequence[str]) -> list[str]:
    out = []
    expected = {(a, b) for a in participants for b in participants if a != b}
    got = set(r.directed)
    for a, b in sorted(got - expected):
        out.append(f"ratings.directed[{a}->{b}]: " +
                   ("self-rating" if a == b else "unexpected pair"))
    for a, b in sorted(expected - got):
        out.append(f"ratings.directed[{a}->{b}]: missing")
    for (a, b), vals in sorted(r.directed.items()):
        for attr in ATTRIBUTES:
            v = vals.get(attr)
            if v is None or not 1 <= v <= 7:
                out.append(f"ratings.directed[{a}->{b}].{attr}: must be in [1, 7] (got {v})")
    for pid in participants:
        traits = r.personality.get(pid)
        if traits is None or any(k not in traits for k in TRAITS):
            out.append(f"ratings.personality[{pid}]: requires traits {''.join(TRAITS)}")
    return out


# --- resampling -----------------------------------------------------------------

def resample(series: FrameSeries, rate: float) -> FrameSeries:
    """Resample onto a uniform grid at ``rate`` Hz spanning first to last timestamp."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    if len(series) == 0:
        raise EmptySeries("cannot resample an empty series")
    t = series.t
    n = int(np.floor((t[-1] - t[0]) * rate + 1e-9)) + 1
    grid = t[0] + np.arange(n) / rate
    out = np.empty((n, series.values.shape[1]))
    lin = ~series.nearest
    for c in np.flatnonzero(lin):
        out[:, c] = np.interp(grid, t, series.values[:, c])
    if series.nearest.any():
        idx = nearest_index(t, grid)
        out[:, series.nearest] = series.values[idx][:, series.nearest]
    return FrameSeries(grid, out, series.nearest)


def nearest_index(t: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Index of the nearest timestamp in sorted ``t`` for each query; ties go to the earlier one."""
    hi = np.clip(np.searchsorted(t, query, side="left"), 1, max(len(t) - 1, 1))
    lo = hi - 1
    if len(t) == 1:
        return np.zeros(len(query), dtype=int)
    pick_hi = (t[hi] - query) < (query - t[lo])
    return np.where(pick_hi, hi, lo)


# --- temporal segments ----------------------------------------------------------

def segment_bounds(duration: float, segment: str) -> tuple[float, float]:
    if segment == "full":
        return 0.0, duration
    try:
        k = ("first", "middle", "last").index(segment)
    except ValueError:
        raise ValueError(f"unknown segment {segment!r}; expected one of {SEGMENTS}") from None
    return duration * k / 3.0, duration * (k + 1) / 3.0


def _in_segment(t: np.ndarray, lo: float, hi: float, closed: bool) -> np.ndarray:
    return (t >= lo) & ((t <= hi) if closed else (t < hi))


def clip_segment(s: SessionRecord, segment: str) -> SessionRecord:
    """Restrict a session to one third of its duration, re-basing time to zero.

    Samples fall in [lo, hi); the last third also keeps samples at exactly the
    session end so the three thirds partition every in-bounds sample.
    """
    if segment == "full":
        return s
    lo, hi = segment_bounds(s.duration, segment)
    closed = segment == "last"

    new_turns: list[TurnSegment] = []
    remap: dict[int, int] = {}
    for k, tr in enumerate(s.turns):
        a, b = max(tr.start, lo), min(tr.end, hi)
        if b > a:
            remap[k] = len(new_turns)
            new_turns.append(TurnSegment(tr.speaker, a - lo, b - lo))

    streams = {}
    for pid, st in s.streams.items():
        au = head = hands = prosody = None
        if st.au is not None:
            au = st.au.take(_in_segment(st.au.t, lo, hi, closed)).shifted(lo)
        if st.head is not None:
            head = st.head.take(_in_segment(st.head.t, lo, hi, closed)).shifted(lo)
        if st.hands is not None:
            hands = st.hands.take(_in_segment(st.hands.t, lo, hi, closed)).shifted(lo)
        if st.prosody is not None:
            keep = [m for m, k in enumerate(st.prosody.turn_index) if int(k) in remap]
            prosody = ProsodyTable(
                np.array([remap[int(st.prosody.turn_index[m])] for m in keep], dtype=int),
                st.prosody.values[keep].reshape(len(keep), st.prosody.values.shape[1]),
            )
        streams[pid] = ParticipantStreams(au, head, hands, prosody)
    return SessionRecord(s.session_id, s.participants, hi - lo, tuple(new_turns), streams)
