import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import au_stream, hand_stream, ratings, session
from lowrapport.errors import InvalidConfig, UnknownFeatureSet
from lowrapport.features.relational import (
    SIGNALS,
    SyncConfig,
    crossmodal_au_features,
    hand_speech_feature,
    sync_features,
    sync_score,
)
from lowrapport.features.sets import (
    BLOCK_NAMES,
    FACE_SETS,
    FeatureCache,
    assemble_features,
    feature_names,
    read_feature_csv,
    resolve_blocks,
    write_feature_csv,
)
from lowrapport.features.unimodal import au_stats, hand_features
from lowrapport.model import AU_NAMES, resample, FrameSeries
from oracles import dtw_full_table

P4 = ("A", "B", "C", "D")


def _au_session(pids, signals, duration, turns=()):
    """signals[pid] -> (t, intensity (n,17), active (n,17))."""
    return session(pids, duration, turns,
                   au={p: au_stream(*signals[p]) for p in pids})


def _random_au(rng, n=120, dt=0.2):
    t = np.arange(n) * dt
    return t, np.round(rng.uniform(0, 5, (n, 17)), 3), (rng.random((n, 17)) < 0.4).astype(np.int8)


# --- synchrony ----------------------------------------------------------------------

def test_sync_config_validation():
    assert SyncConfig().band_samples == 25
    with pytest.raises(InvalidConfig):
        SyncConfig(band=0)


def test_identical_signals_sync_zero():
    t, inten, act = _random_au(np.random.default_rng(0))
    s = _au_session(P4, {p: (t, inten, act) for p in P4}, 30.0)
    for sig in ("posiface", "au_intensity:12", "au_activation:6"):
        assert sync_score(s, "A", sig) == 0.0


def test_constant_signals():
    t = np.arange(0, 20, 0.2)
    c = {"A": 1.0, "B": 2.5, "C": 4.0}
    s = _au_session(tuple(c), {p: (t, v, 0) for p, v in c.items()}, 20.0)
    want = (abs(1.0 - 2.5) + abs(1.0 - 4.0)) / 2
    assert sync_score(s, "A", "au_intensity:1") == pytest.approx(want)
    summed = sync_score(s, "A", "au_intensity:1", SyncConfig(average_over_partners=False))
    assert summed == pytest.approx(2 * want)


def test_random_session_matches_bruteforce():
    rng = np.random.default_rng(7)
    sig = {p: _random_au(rng, n=100 + 3 * k) for k, p in enumerate(P4)}
    s = _au_session(P4, sig, 30.0)
    cfg = SyncConfig(band=2.0, rate=5.0)
    feats = sync_features(s, cfg)
    for pid in P4:
        for code, name in ((12, "AU12"), (25, "AU25")):
            k = AU_NAMES.index(name)
            series = {p: resample(FrameSeries(sig[p][0], sig[p][1][:, k]), 5.0).values[:, 0]
                      for p in P4}
            dists = []
            for j in P4:
                if j == pid:
                    continue
                cost, length = dtw_full_table(series[pid], series[j], 10)
                dists.append(cost / length)
            want = sum(dists) / len(dists)
            assert sync_score(s, pid, f"au_intensity:{code}", cfg) == pytest.approx(want, abs=1e-9)
            assert feats[pid][f"{name}_sync"] == pytest.approx(want, abs=1e-9)


@given(st.floats(-3, 3))
def test_sync_shift_invariant(c):
    rng = np.random.default_rng(3)
    sig = {p: _random_au(rng, n=60) for p in P4[:3]}
    a = _au_session(P4[:3], sig, 15.0)
    b = _au_session(P4[:3], {p: (t, i + c, x) for p, (t, i, x) in sig.items()}, 15.0)
    for pid in P4[:3]:
        assert sync_score(a, pid, "au_intensity:4") == pytest.approx(
            sync_score(b, pid, "au_intensity:4"), abs=1e-9)


def test_sync_features_agree_with_sync_score():
    rng = np.random.default_rng(11)
    sig = {p: _random_au(rng, n=80) for p in P4[:3]}
    t = sig["A"][0]
    walk = {p: np.clip(0.5 + np.cumsum(rng.normal(0, 0.01, (len(t), 2)), axis=0), 0, 1)
            for p in P4[:3]}
    s = session(P4[:3], 16.0, au={p: au_stream(*sig[p]) for p in P4[:3]},
                hands={p: hand_stream(t, walk[p], walk[p][::-1]) for p in P4[:3]})
    feats = sync_features(s)
    assert set(feats["A"]) == set(BLOCK_NAMES["face_sync"]) | {"VelHand_sync"}
    for sig_name, feat in (("posiface", "PosiFace_sync"), ("au_activation:9", "ProbAU09_sync"),
                           ("hand_velocity", "VelHand_sync")):
        assert feats["B"][feat] == pytest.approx(sync_score(s, "B", sig_name), abs=1e-12)
    ints = [feats["C"][f"{n}_sync"] for n in AU_NAMES]
    assert feats["C"]["AU_sync"] == pytest.approx(np.mean(ints))
    assert len(SIGNALS) == 36


def test_sync_missing_when_partner_empty():
    rng = np.random.default_rng(1)
    sig = {p: _random_au(rng, n=50) for p in P4[:3]}
    sig["C"] = (np.empty(0), np.empty((0, 17)), np.empty((0, 17)))
    s = _au_session(P4[:3], sig, 10.0)
    assert math.isnan(sync_score(s, "A", "posiface"))


# --- cross-modal ----------------------------------------------------------------------

def test_crossmodal_never_speaking():
    rng = np.random.default_rng(4)
    sig = {p: _random_au(rng) for p in P4[:3]}
    s = _au_session(P4[:3], sig, 24.0, [("B", 0, 10)])
    f = crossmodal_au_features(s, "A")
    unc = au_stats(s, "A")
    for n in AU_NAMES:
        assert math.isnan(f[f"{n}_target|targetSpeak"]) and math.isnan(f[f"Prob{n}_other|targetSpeak"])
        assert f[f"{n}_target|targetNotSpeak"] == pytest.approx(unc[n])
        assert f[f"Prob{n}_target|targetNotSpeak"] == pytest.approx(unc["Prob" + n])


def test_crossmodal_constant_intensity():
    t = np.arange(0, 24, 0.2)
    s = _au_session(P4[:3], {p: (t, 1.0, 1) for p in P4[:3]}, 24.0,
                    [("A", 0, 8), ("B", 8, 16), ("C", 16, 24)])
    f = crossmodal_au_features(s, "A")
    for k, v in f.items():
        if not k.startswith("Prob"):
            assert v == pytest.approx(1.0)


@given(st.integers(0, 2 ** 31 - 1))
def test_crossmodal_mask_oracle_and_recombination(seed):
    rng = np.random.default_rng(seed)
    sig = {p: _random_au(rng) for p in P4}
    turns = sorted(((p, float(a), float(a + rng.uniform(0.5, 3)))
                    for a in rng.uniform(0, 20, 8) for p in [rng.choice(P4)]), key=lambda x: x[1])
    turns = [tr for k, tr in enumerate(turns)
             if all(not (o[0] == tr[0] and o[1] < tr[2] and tr[1] < o[2]) for o in turns[:k])]
    s = _au_session(P4, sig, 24.0, turns)
    f = crossmodal_au_features(s, "A")

    def speaking(pid, t):
        return np.array([any(a <= x < b for p, a, b in turns if p == pid) for x in t])

    t, inten, act = sig["A"]
    mine = speaking("A", t)
    k = AU_NAMES.index("AU06")
    if mine.any():
        assert f["AU06_target|targetSpeak"] == pytest.approx(inten[mine, k].mean(), abs=1e-9)
    if (~mine).any():
        assert f["ProbAU06_target|targetNotSpeak"] == pytest.approx(act[~mine, k].mean(), abs=1e-9)
    others = [sig[j][1][speaking("A", sig[j][0]), k] for j in P4[1:]]
    others = [o.mean() for o in others if len(o)]
    if others:
        assert f["AU06_other|targetSpeak"] == pytest.approx(np.mean(others), abs=1e-9)
    per = [inten[speaking(j, t), k] for j in P4[1:]]
    per = [x.mean() for x in per if len(x)]
    if per:
        assert f["AU06_target|otherSpeak"] == pytest.approx(np.mean(per), abs=1e-9)
    if mine.any() and (~mine).any():
        n1, n0 = mine.sum(), (~mine).sum()
        for name in AU_NAMES:
            comb = (n1 * f[f"{name}_target|targetSpeak"] + n0 * f[f"{name}_target|targetNotSpeak"]) / (n1 + n0)
            assert comb == pytest.approx(au_stats(s, "A")[name], abs=1e-9)


def _hand_session(turns):
    rng = np.random.default_rng(5)
    t = np.arange(0, 30, 0.2)
    walk = np.clip(0.5 + np.cumsum(rng.normal(0, 0.01, (len(t), 4)), axis=0), 0, 1)
    walk[rng.random(len(t)) < 0.2, :2] = np.nan
    return session(P4[:3], 30.0, turns, hands={"A": hand_stream(t, walk[:, :2], walk[:, 2:])})


def test_hand_speech_full_and_never():
    s = _hand_session([("A", 0, 30)])
    assert hand_speech_feature(s, "A")["VelHand_target|targetSpeak"] == pytest.approx(
        hand_features(s, "A")["VelHand"])
    s = _hand_session([("B", 0, 30)])
    assert math.isnan(hand_speech_feature(s, "A")["VelHand_target|targetSpeak"])


def test_hand_speech_masked_mean():
    from lowrapport.features.unimodal import hand_velocity_series
    turns = [("A", 1.3, 6.1), ("A", 12.0, 17.7), ("B", 6.1, 11.0)]
    s = _hand_session(turns)
    v = hand_velocity_series(s.streams["A"].hands)
    mask = [any(a <= x < b for p, a, b in turns if p == "A") for x in v.t]
    assert hand_speech_feature(s, "A")["VelHand_target|targetSpeak"] == pytest.approx(
        v.values[mask, 0].mean(), abs=1e-12)


# --- feature sets -------------------------------------------------------------------

def test_set_cardinalities():
    assert len(feature_names("speech_act")) == 4
    assert len(feature_names("prosody")) == 768
    assert len(feature_names("personality")) == 5
    assert len(feature_names("hand")) == 2


def test_face_partitions():
    face = set(feature_names("face"))
    nosync, synconly = set(feature_names("face_nosync")), set(feature_names("face_synconly"))
    no200, only200 = set(feature_names("face_no200s")), set(feature_names("face_200sonly"))
    assert nosync | synconly == face and not nosync & synconly
    assert no200 | only200 == face and not no200 & only200


def test_resolve_combinations():
    assert resolve_blocks("face+personality") == ("face_static", "face_early", "face_sync", "personality")
    assert "cross_face_speech" in resolve_blocks("speech_act+face")
    assert "cross_hand_speech" in resolve_blocks("hand+speech_act")
    assert "face_early" not in resolve_blocks("face", "middle")
    with pytest.raises(UnknownFeatureSet):
        resolve_blocks("face+smell")
    with pytest.raises(UnknownFeatureSet):
        resolve_blocks("face_200sonly", "last")


def test_assemble_constant_length(small_corpus):
    for fs in ("face", "speech_act+hand", "personality", "prosody"):
        for seg in ("full", "last"):
            lengths = set()
            for s, r in small_corpus[:3]:
                for pid in s.participants:
                    v = assemble_features(s, pid, fs, seg, r)
                    assert v.names == sorted(v.names) == feature_names(fs, seg)
                    lengths.add(len(v.values))
            assert len(lengths) == 1


def test_matrix_matches_assembly_and_csv_roundtrip(small_corpus, tmp_path):
    cache = FeatureCache(small_corpus)
    rows, names, X = cache.matrix("face+speech_act", "first")
    s, r = small_corpus[1]
    pid = s.participants[2]
    v = assemble_features(s, pid, "face+speech_act", "first", r)
    k = rows.index((s.session_id, pid))
    np.testing.assert_allclose(X[k], list(v.values.values()), atol=1e-12, equal_nan=True)
    path = tmp_path / "f.csv"
    write_feature_csv(path, rows, names, X, "first")
    rows2, names2, X2 = read_feature_csv(path)[:3]
    assert names2 == names and [tuple(r_) for r_ in rows2] == rows
    np.testing.assert_allclose(X2, X, equal_nan=True)


def test_personality_and_face_sets_listed():
    assert FACE_SETS == ("face", "face_nosync", "face_synconly", "face_no200s", "face_200sonly")
    s = session(("A", "B", "C"), 10.0)
    v = assemble_features(s, "B", "personality", "full", ratings(("A", "B", "C")))
    assert v.values == {f"NEO_{t}": 30.0 for t in "ACENO"}
