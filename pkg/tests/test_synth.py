import numpy as np
import pytest

from lowrapport.errors import InvalidConfig
from lowrapport.io import load_corpus
from lowrapport.labels import aggregate_received_score, corpus_labels
from lowrapport.model import AU_INDEX, speaking_mask
from lowrapport.synth import GenConfig, PlantedEffect, generate, generate_corpus

SHORT = GenConfig(duration=120.0, frame_rate=5.0, seed=4)


@pytest.mark.parametrize("cfg", [
    GenConfig(sessions=3, four_person_sessions=5),
    GenConfig(duration=0.0),
    GenConfig(frame_rate=-1.0),
    GenConfig(base_au_stats=((0.1, 0.1),)),
    GenConfig(planted_effects=(PlantedEffect("smell", 1, 1.0),)),
    GenConfig(planted_effects=(PlantedEffect("face", 1, -1.0),)),
    GenConfig(planted_effects=(PlantedEffect("face", 2, 1.0),)),
    GenConfig(modalities=("au", "eeg")),
])
def test_invalid_configs(cfg):
    with pytest.raises(InvalidConfig):
        generate(cfg)


@pytest.fixture(scope="module")
def short_corpus():
    return generate(SHORT)


def test_default_structure(short_corpus):
    corpus, truth = short_corpus
    sizes = sorted(len(s.participants) for s, _ in corpus)
    assert len(corpus) == 22 and sizes.count(4) == 12 and sizes.count(3) == 10
    assert sum(sizes) == 78
    assert corpus_labels(corpus).n_low == 19 == len(truth["planted"])


def test_rating_marginals(short_corpus):
    corpus, _ = short_corpus
    scores = [aggregate_received_score(r, "rapport", p) for s, r in corpus for p in s.participants]
    assert np.mean(scores) == pytest.approx(5.41, abs=0.2)
    for s, r in corpus:
        for (rater, target), att in r.directed.items():
            assert rater != target and rater in s.participants
            assert all(1 <= v <= 7 for v in att.values())


def test_au10_rate_while_not_speaking(short_corpus):
    corpus, _ = short_corpus
    k = AU_INDEX[10]
    rates = []
    for s, _ in corpus:
        for p in s.participants:
            au = s.streams[p].au
            quiet = ~speaking_mask([tr for tr in s.turns if tr.speaker == p], au.t)
            rates.append(au.active[quiet, k].mean())
    assert np.mean(rates) == pytest.approx(0.70, abs=0.05)


def test_seed_determinism():
    a, ta = generate(GenConfig(sessions=3, four_person_sessions=1, duration=40.0, seed=9))
    b, tb = generate(GenConfig(sessions=3, four_person_sessions=1, duration=40.0, seed=9))
    c, _ = generate(GenConfig(sessions=3, four_person_sessions=1, duration=40.0, seed=10))
    assert ta == tb
    np.testing.assert_array_equal(a[0][0].streams["S01P1"].au.intensity, b[0][0].streams["S01P1"].au.intensity)
    assert not np.array_equal(a[0][0].streams["S01P1"].au.intensity, c[0][0].streams["S01P1"].au.intensity)


def test_dropped_modality(tmp_path):
    cfg = GenConfig(sessions=2, four_person_sessions=0, duration=30.0, modalities=("au", "head"))
    corpus = load_corpus(generate_corpus(cfg, tmp_path))
    st = corpus[0][0].streams["S01P1"]
    assert st.au is not None and st.hands is None and st.prosody is None


def test_planted_face_shift_direction():
    cfg = GenConfig(duration=200.0, frame_rate=5.0, seed=4, planted_effects=(PlantedEffect("face", 1, 1.5),))
    corpus, truth = generate(cfg)
    k = AU_INDEX[9]
    low, high = [], []
    for s, _ in corpus:
        for p in s.participants:
            (low if truth["low"][p] else high).append(s.streams[p].au.active[:, k].mean())
    assert np.mean(low) > np.mean(high)
