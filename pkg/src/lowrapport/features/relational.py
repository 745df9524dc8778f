"""Group-relational features: DTW synchrony and speech-conditioned cross-modal statistics."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ..dtw import dtw_distance
from ..errors import Infeasible, InvalidConfig
from ..model import AU_CODES, AU_INDEX, AU_NAMES, FrameSeries, SessionRecord, resample, speaking_mask
from .unimodal import MISSING, _stream, hand_velocity_series, posiface_series


@dataclass(frozen=True)
class SyncConfig:
    band: float = 5.0  # seconds
    rate: float = 5.0  # Hz
    normalize_by_length: bool = True
    average_over_partners: bool = True

    def __post_init__(self):
        if not (self.band > 0 and self.rate > 0):
            raise InvalidConfig("sync band and rate must be positive")

    @property
    def band_samples(self) -> int:
        return int(round(self.band * self.rate))


SIGNALS = (("posiface",) + tuple(f"au_intensity:{c}" for c in AU_CODES)
           + tuple(f"au_activation:{c}" for c in AU_CODES) + ("hand_velocity",))


def signal_series(s: SessionRecord, pid: str, signal: str, hand_max_gap: float = 0.5) -> FrameSeries:
    """Raw (not yet resampled) series for one synchrony signal."""
    if signal == "posiface":
        return posiface_series(_stream(s, pid, "au"))
    if signal == "hand_velocity":
        return hand_velocity_series(_stream(s, pid, "hands"), hand_max_gap)
    kind, _, code = signal.partition(":")
    au = _stream(s, pid, "au")
    k = AU_INDEX[int(code)]
    if kind == "au_intensity":
        return FrameSeries(au.t, au.intensity[:, k])
    if kind == "au_activation":
        return FrameSeries(au.t, au.active[:, k], nearest=True)
    raise ValueError(f"unknown synchrony signal {signal!r}")


def _pair_distance(a: np.ndarray, b: np.ndarray, cfg: SyncConfig) -> float:
    try:
        return dtw_distance(a, b, cfg.band_samples, cfg.normalize_by_length)
    except Infeasible:
        return MISSING


def _combine(dists: list[float], cfg: SyncConfig) -> float:
    if not dists or any(np.isnan(d) for d in dists):
        return MISSING
    return float(np.mean(dists) if cfg.average_over_partners else np.sum(dists))


def sync_score(s: SessionRecord, pid: str, signal: str, cfg: SyncConfig = SyncConfig()) -> float:
    """Mean (or sum) DTW distance from ``pid``'s signal to each partner's; larger = less in sync."""
    series = {}
    for p in s.participants:
        raw = signal_series(s, p, signal)
        if len(raw) == 0:
            return MISSING
        series[p] = resample(raw, cfg.rate).values[:, 0]
    return _combine([_pair_distance(series[pid], series[j], cfg) for j in s.others(pid)], cfg)


def _resampled_channels(s: SessionRecord, cfg: SyncConfig, hand_max_gap: float):
    """Per participant: {signal: resampled 1-D array or None}, sharing AU resampling."""
    out = {}
    for p in s.participants:
        st = s.streams.get(p)
        chans: dict[str, np.ndarray | None] = {}
        if st is not None and st.au is not None:
            au = st.au
            if len(au):
                inten = resample(FrameSeries(au.t, au.intensity), cfg.rate).values
                act = resample(FrameSeries(au.t, au.active, nearest=True), cfg.rate).values
                pf = resample(posiface_series(au), cfg.rate).values[:, 0]
            chans["posiface"] = pf if len(au) else None
            for k, c in enumerate(AU_CODES):
                chans[f"au_intensity:{c}"] = inten[:, k] if len(au) else None
                chans[f"au_activation:{c}"] = act[:, k] if len(au) else None
        if st is not None and st.hands is not None:
            vel = hand_velocity_series(st.hands, hand_max_gap)
            chans["hand_velocity"] = resample(vel, cfg.rate).values[:, 0] if len(vel) else None
        out[p] = chans
    return out


def sync_features(s: SessionRecord, cfg: SyncConfig = SyncConfig(), hand_max_gap: float = 0.5,
                  modalities: tuple[str, ...] = ("au", "hands")) -> dict[str, dict[str, float]]:
    """All synchrony features for every participant, computing each pair's DTW once."""
    chans = _resampled_channels(s, cfg, hand_max_gap)
    signals = []
    if "au" in modalities and s.has_modality("au"):
        signals += [sig for sig in SIGNALS if sig != "hand_velocity"]
    if "hands" in modalities and s.has_modality("hands"):
        signals.append("hand_velocity")
    pair: dict[tuple[str, str, str], float] = {}
    for sig in signals:
        for a, b in combinations(s.participants, 2):
            x, y = chans[a].get(sig), chans[b].get(sig)
            d = MISSING if x is None or y is None else _pair_distance(x, y, cfg)
            pair[(sig, a, b)] = pair[(sig, b, a)] = d

    out = {}
    for pid in s.participants:
        score = {sig: _combine([pair[(sig, pid, j)] for j in s.others(pid)], cfg) for sig in signals}
        feats: dict[str, float] = {}
        if "posiface" in score:
            feats["PosiFace_sync"] = score["posiface"]
            ints = [score[f"au_intensity:{c}"] for c in AU_CODES]
            acts = [score[f"au_activation:{c}"] for c in AU_CODES]
            for name, vi, va in zip(AU_NAMES, ints, acts):
                feats[f"{name}_sync"] = vi
                feats[f"Prob{name}_sync"] = va
            feats["AU_sync"] = MISSING if np.isnan(ints).any() else float(np.mean(ints))
            feats["ProbAU_sync"] = MISSING if np.isnan(acts).any() else float(np.mean(acts))
        if "hand_velocity" in score:
            feats["VelHand_sync"] = score["hand_velocity"]
        out[pid] = feats
    return out


# --- cross-modal ----------------------------------------------------------------

CROSS_CONDITIONS = ("target|targetSpeak", "target|targetNotSpeak",
                    "other|targetSpeak", "target|otherSpeak")


def _masked_stats(intensity: np.ndarray, active: np.ndarray, mask: np.ndarray):
    if not mask.any():
        return None
    return intensity[mask].mean(axis=0), active[mask].mean(axis=0)


def _average(stats: list) -> tuple[np.ndarray, np.ndarray] | None:
    stats = [x for x in stats if x is not None]
    if not stats:
        return None
    return (np.mean([x[0] for x in stats], axis=0), np.mean([x[1] for x in stats], axis=0))


def crossmodal_au_features(s: SessionRecord, pid: str) -> dict[str, float]:
    """AU intensity/activation statistics conditioned on who is speaking.

    ``other`` variants compute the conditioned statistic per partner and
    average over the partners for which the condition selects any frame.
    """
    me = _stream(s, pid, "au")
    my_turns = s.turns_of(pid)
    mine = speaking_mask(my_turns, me.t)
    blocks = {
        "target|targetSpeak": _masked_stats(me.intensity, me.active, mine),
        "target|targetNotSpeak": _masked_stats(me.intensity, me.active, ~mine),
        "other|targetSpeak": _average([
            _masked_stats(o.intensity, o.active, speaking_mask(my_turns, o.t))
            for o in (_stream(s, j, "au") for j in s.others(pid))]),
        "target|otherSpeak": _average([
            _masked_stats(me.intensity, me.active, speaking_mask(s.turns_of(j), me.t))
            for j in s.others(pid)]),
    }
    out = {}
    for cond in CROSS_CONDITIONS:
        stats = blocks[cond]
        for k, name in enumerate(AU_NAMES):
            out[f"{name}_{cond}"] = MISSING if stats is None else float(stats[0][k])
            out[f"Prob{name}_{cond}"] = MISSING if stats is None else float(stats[1][k])
    return out


def hand_speech_feature(s: SessionRecord, pid: str, max_gap: float = 0.5) -> dict[str, float]:
    vel = hand_velocity_series(_stream(s, pid, "hands"), max_gap)
    mask = speaking_mask(s.turns_of(pid), vel.t)
    return {"VelHand_target|targetSpeak": float(vel.values[mask, 0].mean()) if mask.any() else MISSING}
