"""Seeded synthetic corpus generator with planted low-rapport effects.

Marginals follow the published dataset statistics: group composition (12
four-person and 10 three-person sessions), aggregated rating means/SDs and
inter-attribute correlations, and per-AU activation rates while not speaking.
Participants below the rapport quartile get behaviour shifts whose directions
match the reported t-score signs (more AU9/AU23/AU25/AU14, more early AU2,
more mutual facing, less variable facial positivity).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.signal import lfilter
from scipy.stats import norm

from .errors import InvalidConfig
from .io import write_manifest, write_session
from .labels import aggregate_received_score, label_low_rapport
from .model import (
    ATTRIBUTES,
    AU_CODES,
    AU_INDEX,
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
    speaking_mask,
)

# mean / std of per-participant AU activation rate while not speaking
TABLE3_AU_STATS: tuple[tuple[float, float], ...] = (
    (0.18, 0.08), (0.25, 0.10), (0.36, 0.26), (0.53, 0.25), (0.34, 0.26), (0.43, 0.27),
    (0.07, 0.06), (0.70, 0.24), (0.44, 0.25), (0.59, 0.26), (0.27, 0.10), (0.39, 0.12),
    (0.20, 0.10), (0.47, 0.22), (0.20, 0.08), (0.15, 0.07), (0.21, 0.07),
)
ATTRIBUTE_STATS = {"rapport": (5.41, 0.46), "leadership": (3.71, 0.94), "dominance": (4.14, 0.96),
                   "competence": (5.22, 0.87), "liking": (5.81, 0.56)}
# lower triangle over (leadership, dominance, competence, liking, rapport, O, C, E, A, N)
_ATTR_ORDER = ("leadership", "dominance", "competence", "liking", "rapport")
_CORR_ATTR = {("leadership", "dominance"): 0.80, ("leadership", "competence"): 0.41,
              ("leadership", "liking"): 0.01, ("leadership", "rapport"): 0.39,
              ("dominance", "competence"): 0.50, ("dominance", "liking"): 0.08,
              ("dominance", "rapport"): 0.52, ("competence", "liking"): 0.31,
              ("competence", "rapport"): 0.70, ("liking", "rapport"): 0.52}
_CORR_TRAIT = {"O": (0.01, 0.10, 0.21, 0.02, 0.15), "C": (-0.09, -0.13, -0.06, -0.04, -0.13),
               "E": (0.12, 0.12, -0.00, 0.17, 0.16), "A": (-0.22, -0.11, -0.07, 0.30, 0.04),
               "N": (-0.25, -0.32, -0.18, 0.10, -0.21)}
TRAIT_STATS = (30.0, 6.0)  # NEO-FFI scale sums, 0..48

FAMILIES = ("face", "speech", "hand", "prosody", "personality", "sync")
FACE_UP_AUS = (9, 23, 25, 14)


@dataclass(frozen=True)
class PlantedEffect:
    family: str
    direction: int = 1
    size: float = 1.0


@dataclass(frozen=True)
class GenConfig:
    sessions: int = 22
    four_person_sessions: int = 12
    duration: float = 1200.0
    frame_rate: float = 10.0
    planted_effects: tuple[PlantedEffect, ...] = ()
    base_au_stats: tuple[tuple[float, float], ...] = TABLE3_AU_STATS
    seed: int = 0
    low_confidence_rate: float = 0.03
    hand_dropout: float = 0.23
    coupling: float = 0.3  # share of AU dynamics driven by a group-wide signal
    rating_noise: float = 0.5
    attribute_correlation: Optional[dict] = None  # overrides for (attr, attr) pairs
    modalities: tuple[str, ...] = ("au", "head", "hands", "prosody")

    def validate(self) -> None:
        if self.sessions < 1 or not 0 <= self.four_person_sessions <= self.sessions:
            raise InvalidConfig("four_person_sessions must lie in [0, sessions]")
        if self.duration <= 0 or self.frame_rate <= 0:
            raise InvalidConfig("duration and frame_rate must be positive")
        if len(self.base_au_stats) != len(AU_CODES):
            raise InvalidConfig(f"base_au_stats needs {len(AU_CODES)} entries")
        for e in self.planted_effects:
            if e.family not in FAMILIES:
                raise InvalidConfig(f"unknown effect family {e.family!r}")
            if e.size < 0:
                raise InvalidConfig("effect sizes must be non-negative")
            if e.direction not in (-1, 1):
                raise InvalidConfig("effect direction must be +1 or -1")
        unknown = set(self.modalities) - {"au", "head", "hands", "prosody"}
        if unknown:
            raise InvalidConfig(f"unknown modalities {sorted(unknown)}")

    @property
    def n_participants(self) -> int:
        return 4 * self.four_person_sessions + 3 * (self.sessions - self.four_person_sessions)

    def effect(self, family: str) -> float:
        """Signed total planted size for one family."""
        return float(sum(e.direction * e.size for e in self.planted_effects if e.family == family))


def _correlation_matrix(overrides: Optional[dict]) -> np.ndarray:
    names = _ATTR_ORDER + TRAITS
    R = np.eye(len(names))
    pairs = dict(_CORR_ATTR)
    for (a, b), v in (overrides or {}).items():
        pairs[(a, b) if (a, b) in pairs else (b, a)] = v
    for (a, b), v in pairs.items():
        i, j = names.index(a), names.index(b)
        R[i, j] = R[j, i] = v
    for t, row in _CORR_TRAIT.items():
        i = names.index(t)
        for a, v in zip(_ATTR_ORDER, row):
            j = names.index(a)
            R[i, j] = R[j, i] = v
    w, V = np.linalg.eigh(R)
    if w.min() < 1e-6:
        R = V @ np.diag(np.maximum(w, 1e-6)) @ V.T
        d = np.sqrt(np.diag(R))
        R = R / d[:, None] / d[None, :]
    return R


def _ou(rng: np.random.Generator, n: int, k: int, rho: float) -> np.ndarray:
    """(n, k) stationary unit-variance AR(1) processes."""
    b = np.sqrt(1.0 - rho * rho)
    eps = rng.standard_normal((n, k))
    eps[0] /= b
    return lfilter([b], [1.0, -rho], eps, axis=0)


def _stratified(rng: np.random.Generator, n: int) -> np.ndarray:
    """n standard-normal quantiles at stratified probabilities, randomly ordered."""
    return norm.ppf((rng.permutation(n) + 0.5) / n)


def generate_ratings(cfg: GenConfig, rng: np.random.Generator, sessions: list[list[str]]):
    pids = [p for ps in sessions for p in ps]
    R = _correlation_matrix(cfg.attribute_correlation)
    L = np.linalg.cholesky(R)
    z = rng.standard_normal((len(pids), R.shape[0])) @ L.T
    latent = {}
    for k, pid in enumerate(pids):
        vals = {}
        for j, a in enumerate(_ATTR_ORDER):
            mu, sd = ATTRIBUTE_STATS[a]
            vals[a] = float(np.clip(mu + sd * z[k, j], 1.0, 7.0))
        for j, t in enumerate(TRAITS):
            vals[t] = float(np.clip(TRAIT_STATS[0] + TRAIT_STATS[1] * z[k, 5 + j], 0.0, 48.0))
        latent[pid] = vals
    shift = cfg.effect("personality")
    records = []
    for ps in sessions:
        directed = {}
        for target in ps:
            raters = [p for p in ps if p != target]
            per_attr = {}
            for a in ATTRIBUTES:
                mu = latent[target][a]
                e = rng.normal(0.0, cfg.rating_noise, len(raters))
                e -= e.mean()
                span = np.max(np.abs(e)) if len(e) else 0.0
                room = min(7.0 - mu, mu - 1.0)
                if span > room:
                    e *= room / span
                per_attr[a] = np.round(mu + e, 6)
            for m, r in enumerate(raters):
                directed[(r, target)] = {a: float(per_attr[a][m]) for a in ATTRIBUTES}
        personality = {p: {t: latent[p][t] for t in TRAITS} for p in ps}
        records.append(RatingsRecord(directed, personality))
    return latent, records, shift


def _turns(cfg, rng, pids, talk):
    turns = []
    t = float(rng.exponential(1.0))
    prev = None
    while True:
        cand = [p for p in pids if p != prev]
        w = np.array([talk[p] for p in cand])
        spk = cand[int(rng.choice(len(cand), p=w / w.sum()))]
        length = float(rng.exponential(5.0 * np.sqrt(talk[spk]))) + 0.5
        if t + length > cfg.duration:
            break
        turns.append(TurnSegment(spk, round(t, 3), round(t + length, 3)))
        t = round(t + length, 3) + float(rng.exponential(0.8)) + 0.001
        prev = spk
    return turns


def _current_speaker(turns, pids, t):
    out = np.full(len(t), -1)
    for tr in turns:
        lo, hi = np.searchsorted(t, [tr.start, tr.end], side="left")
        out[lo:hi] = pids.index(tr.speaker)
    return out


def generate_session(cfg: GenConfig, rng: np.random.Generator, sid: str, pids: list[str],
                     low: dict[str, int], au_rates: dict) -> SessionRecord:
    n_frames = int(np.floor(cfg.duration * cfg.frame_rate + 1e-9)) + 1
    t = np.round(np.arange(n_frames) / cfg.frame_rate, 3)
    dt = 1.0 / cfg.frame_rate
    face = cfg.effect("face")
    speech = cfg.effect("speech")
    hand = cfg.effect("hand")
    prosody = cfg.effect("prosody")
    sync = cfg.effect("sync")

    talk = {p: float(np.exp(rng.normal(0.0, 0.5) + 0.5 * speech * low[p])) for p in pids}
    turns = _turns(cfg, rng, pids, talk)
    current = _current_speaker(turns, pids, t)

    streams = {}
    group_au = _ou(rng, n_frames, len(AU_CODES), np.exp(-dt / 3.0))
    angles = 2 * np.pi * np.arange(len(pids)) / len(pids) + rng.uniform(0, 2 * np.pi)
    seats = np.column_stack([1.2 * np.cos(angles), 1.2 * np.sin(angles), np.full(len(pids), 1.2)])

    for k, pid in enumerate(pids):
        lowp = low[pid]
        own_turns = [tr for tr in turns if tr.speaker == pid]
        speaking = speaking_mask(own_turns, t)
        parts = {}

        # facial action units
        kappa = float(np.clip(cfg.coupling * (1.0 + sync * lowp), 0.0, 1.0))
        z = np.sqrt(1 - kappa) * _ou(rng, n_frames, len(AU_CODES), np.exp(-dt / 3.0)) \
            + np.sqrt(kappa) * group_au
        rates = np.array(au_rates[pid])
        offset = rng.normal(1.2, 0.3, len(AU_CODES))
        if lowp and face:
            for c in FACE_UP_AUS:
                i = AU_INDEX[c]
                rates[i] += face * cfg.base_au_stats[i][1]
                offset[i] += face * 0.3
            rates[AU_INDEX[12]] -= 0.5 * face * cfg.base_au_stats[AU_INDEX[12]][1]
        rates = np.clip(rates, 0.01, 0.99)
        thr = norm.ppf(1.0 - rates)
        for c in (25, 26):
            z[speaking, AU_INDEX[c]] += 1.5
        if lowp and face:
            z[t < 200.0, AU_INDEX[2]] += 0.5 * face
        active = (z > thr[None, :]).astype(np.int8)
        intensity = np.clip(offset[None, :] + 0.8 * z, 0.0, 5.0)
        intensity = np.where(active == 1, np.maximum(intensity, 0.5), intensity)
        conf = 0.9 + 0.1 * rng.random(n_frames)
        bad = rng.random(n_frames) < cfg.low_confidence_rate
        conf[bad] = rng.uniform(0.3, 0.79, int(bad.sum()))
        if "au" in cfg.modalities:
            parts["au"] = AUStream(t, np.round(conf, 3), np.round(intensity, 3), active)

        # head: look at the current speaker, otherwise at a slowly switching partner
        others = [j for j in range(len(pids)) if j != k]
        switch = np.cumsum(rng.random(n_frames) < dt / 4.0)
        idle_target = np.array(others)[rng.integers(0, len(others), switch[-1] + 1)][switch]
        target = np.where((current >= 0) & (current != k), current, idle_target)
        to_target = seats[target] - seats[k]
        to_target /= np.linalg.norm(to_target, axis=1, keepdims=True)
        noise_sd = np.radians(22.0) * np.exp(-0.5 * face * lowp)
        jitter = _ou(rng, n_frames, 3, np.exp(-dt / 1.5)) * np.tan(noise_sd)
        facing = to_target + jitter
        facing /= np.linalg.norm(facing, axis=1, keepdims=True)
        pos = seats[k][None, :] + 0.01 * _ou(rng, n_frames, 3, np.exp(-dt / 5.0))
        if "head" in cfg.modalities:
            parts["head"] = HeadStream(t, np.round(pos, 4), facing)

        # hands: mean-reverting walk, faster while speaking, 23% frames with a hand lost
        speed = float(np.exp(np.log(0.05) + rng.normal(0.0, 0.4) + 0.4 * hand * lowp))
        step_sd = speed * dt * np.where(speaking, 2.0, 1.0)
        rest = np.array([0.35, 0.65, 0.65, 0.65])
        steps = rng.standard_normal((n_frames, 4)) * step_sd[:, None]
        steps[0] = 0.0
        walk = np.clip(rest + lfilter([1.0], [1.0, -0.98], steps, axis=0), 0.0, 1.0)
        lost = rng.random(n_frames) < cfg.hand_dropout
        which = rng.integers(0, 3, n_frames)
        left = np.round(walk[:, :2], 4)
        right = np.round(walk[:, 2:], 4)
        left[lost & (which != 1)] = np.nan
        right[lost & (which != 0)] = np.nan
        if "hands" in cfg.modalities:
            parts["hands"] = HandStream(t, left, right, ~lost)

        # prosody: one vector per own turn around a personal profile
        base = rng.standard_normal(PROSODY_DIM)
        if lowp and prosody:
            base[:24] += prosody
        idx = [m for m, tr in enumerate(turns) if tr.speaker == pid]
        vals = base[None, :] + 0.5 * rng.standard_normal((len(idx), PROSODY_DIM))
        if "prosody" in cfg.modalities:
            parts["prosody"] = ProsodyTable(np.array(idx, dtype=int),
                                            np.round(vals, 5).reshape(len(idx), PROSODY_DIM))
        streams[pid] = ParticipantStreams(**parts)
    return SessionRecord(sid, tuple(pids), float(cfg.duration), tuple(turns), streams)


def generate(cfg: GenConfig = GenConfig()):
    """Build the corpus in memory: (corpus, ground-truth dict)."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    sizes = [4] * cfg.four_person_sessions + [3] * (cfg.sessions - cfg.four_person_sessions)
    sizes = [sizes[i] for i in rng.permutation(len(sizes))]
    sessions = [[f"S{s + 1:02d}P{k + 1}" for k in range(n)] for s, n in enumerate(sizes)]
    latent, records, pers_shift = generate_ratings(cfg, rng, sessions)

    scores = {p: aggregate_received_score(r, "rapport", p) for ps, r in zip(sessions, records) for p in ps}
    labels = label_low_rapport(scores)
    if pers_shift:
        for ps, r in zip(sessions, records):
            for p in ps:
                if labels.low[p]:
                    r.personality[p]["N"] = float(np.clip(r.personality[p]["N"] + 6.0 * pers_shift, 0, 48))

    pids = [p for ps in sessions for p in ps]
    strat = np.column_stack([_stratified(rng, len(pids)) for _ in AU_CODES])
    au_rates = {p: [mu + sd * strat[k, i] for i, (mu, sd) in enumerate(cfg.base_au_stats)]
                for k, p in enumerate(pids)}

    corpus = []
    for s, (ps, r) in enumerate(zip(sessions, records)):
        sess = generate_session(cfg, rng, f"S{s + 1:02d}", ps, labels.low, au_rates)
        corpus.append((sess, r))
    truth = {
        "config": _config_dict(cfg),
        "latent": latent,
        "rapport_score": scores,
        "low": labels.low,
        "boundary": labels.boundary,
        "planted": sorted(p for p, v in labels.low.items() if v),
        "au_activation_rates": au_rates,
    }
    return corpus, truth


def _config_dict(cfg: GenConfig) -> dict:
    d = asdict(cfg)
    if d["attribute_correlation"]:
        d["attribute_correlation"] = {f"{a}:{b}": v for (a, b), v in cfg.attribute_correlation.items()}
    return d


def generate_corpus(cfg: GenConfig, out_dir) -> Path:
    """Write manifest, per-session stream files and ground_truth.json; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus, truth = generate(cfg)
    entries = [write_session(out_dir, s, r) for s, r in corpus]
    manifest = out_dir / "manifest.json"
    write_manifest(manifest, entries)
    (out_dir / "ground_truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True) + "\n")
    return manifest
