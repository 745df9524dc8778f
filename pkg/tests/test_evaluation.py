import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from sklearn.metrics import average_precision_score

from lowrapport.errors import DegenerateClass, DegenerateVariance, NoPositives, TooFewSessions
from lowrapport.evaluation import (
    EvalReport,
    attribute_correlations,
    face_ablation,
    feature_tscores,
    format_table,
    loio_folds,
    permuted_labels,
    read_reports,
    run_experiment,
    top_tscores,
    write_reports,
)
from lowrapport.features.sets import FACE_SETS, FeatureCache
from lowrapport.labels import corpus_labels
from lowrapport.metrics import average_precision, pearson, pooled_t
from lowrapport.svm import LearnerConfig
from oracles import ap_direct, textbook_pooled_t

FAST = LearnerConfig(members=15, seed=2, c_grid=(0.125, 2.0))


# --- average precision ---------------------------------------------------------------

def test_ap_perfect_ranking():
    assert average_precision([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0


def test_ap_alternating():
    assert average_precision([4, 3, 2, 1], [1, 0, 1, 0]) == pytest.approx((1 + 2 / 3) / 2)


def test_ap_needs_positive():
    with pytest.raises(NoPositives):
        average_precision([0.1, 0.2], [0, 0])


def test_ap_ties_broken_by_id():
    # equal scores: ascending id decides who is ranked first
    assert average_precision([0.5, 0.5], [1, 0], ids=["a", "b"]) == 1.0
    assert average_precision([0.5, 0.5], [1, 0], ids=["b", "a"]) == 0.5


labelled = st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=1, max_size=60).filter(
    lambda xs: any(lab for _, lab in xs))


@given(labelled)
def test_ap_matches_direct_formula(xs):
    scores = [s for s, _ in xs]
    labels = [lab for _, lab in xs]
    ids = [f"p{k:03d}" for k in range(len(xs))]
    ap = average_precision(scores, labels, ids)
    assert 0 <= ap <= 1
    assert ap == pytest.approx(ap_direct(scores, labels, ids), abs=1e-12)
    if len(set(scores)) == len(scores):
        assert ap == pytest.approx(average_precision_score(labels, scores), abs=1e-12)
    # scaling by a power of two is exact in floating point, so the ranking is unchanged
    assert average_precision([4.0 * s for s in scores], labels, ids) == ap
    assert average_precision([float(v) for v in labels], labels, ids) == 1.0


# --- t-scores and correlations ------------------------------------------------------------

def test_t_identical_samples_zero():
    x = [1.0, 2.0, 3.0, 4.0]
    assert pooled_t(x, x) == 0.0
    assert pooled_t([2.0, 2.0], [2.0, 2.0, 2.0]) == 0.0


@given(st.integers(0, 2 ** 31 - 1), st.integers(2, 30), st.integers(2, 60))
def test_t_matches_textbook_and_scipy(seed, n1, n2):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(1.0, 1.0, n1), rng.normal(0.0, 1.0, n2)
    t = pooled_t(a, b)
    assert t == pytest.approx(textbook_pooled_t(a, b), abs=1e-9)
    assert t == pytest.approx(stats.ttest_ind(a, b).statistic, abs=1e-9)
    assert pooled_t(b, a) == pytest.approx(-t, abs=1e-12)
    welch = stats.ttest_ind(a, b, equal_var=False).statistic
    assert pooled_t(a, b, equal_var=False) == pytest.approx(welch, abs=1e-9)


def test_t_needs_two_per_class():
    with pytest.raises(DegenerateClass):
        pooled_t([1.0], [1.0, 2.0])


def test_feature_tscores_signs():
    rng = np.random.default_rng(0)
    lab = np.r_[np.ones(20, bool), np.zeros(60, bool)]
    X = rng.standard_normal((80, 3))
    X[lab, 0] += 1.0
    X[lab, 1] -= 1.0
    X[:, 2] = 5.0
    t = feature_tscores(X, lab, ["up", "down", "flat"])
    assert t["up"] > 0 and t["down"] < 0 and t["flat"] == 0.0
    assert t["up"] == pytest.approx(textbook_pooled_t(X[lab, 0], X[~lab, 0]), abs=1e-9)
    swapped = feature_tscores(X, ~lab, ["up", "down", "flat"])
    assert all(swapped[k] == pytest.approx(-t[k]) for k in t)
    assert [k for k, _ in top_tscores(t, 2)] == sorted(["up", "down"], key=lambda k: -abs(t[k]))


def test_pearson_trivial():
    x = np.arange(10.0)
    assert pearson(x, x)[0] == pytest.approx(1.0)
    assert pearson(x, -x)[0] == pytest.approx(-1.0)
    with pytest.raises(DegenerateVariance):
        pearson(x, np.ones(10))


@given(st.integers(0, 2 ** 31 - 1), st.floats(0.1, 10), st.floats(-5, 5))
def test_pearson_matches_scipy_and_affine(seed, scale, shift):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(40)
    y = 0.5 * x + rng.standard_normal(40)
    r, p = pearson(x, y)
    ref = stats.pearsonr(x, y)
    assert r == pytest.approx(ref[0], abs=1e-12) and p == pytest.approx(ref[1], rel=1e-6, abs=1e-12)
    assert pearson(scale * x + shift, y)[0] == pytest.approx(r, abs=1e-12)
    assert pearson(-x, y)[0] == pytest.approx(-r, abs=1e-12)


def test_attribute_correlation_matrix(small_corpus):
    res = attribute_correlations(small_corpus)
    R = np.array(res["r"])
    assert res["variables"][:5] == ["leadership", "dominance", "competence", "liking", "rapport"]
    np.testing.assert_allclose(np.diag(R), 1.0)
    np.testing.assert_allclose(R, R.T)
    assert res["n"] == sum(len(s.participants) for s, _ in small_corpus)


# --- folds and experiments ---------------------------------------------------------------

class _S:
    def __init__(self, sid):
        self.session_id = sid


def test_folds():
    corpus = [(_S(f"S{k:02d}"), None) for k in range(22)]
    folds = loio_folds(corpus)
    assert len(folds) == 22
    assert sorted(t for _, t in folds) == [s.session_id for s, _ in corpus]
    for train, test in folds:
        assert test not in train and len(train) == 21
    two = loio_folds(corpus[:2])
    assert two == [(["S01"], "S00"), (["S00"], "S01")]
    with pytest.raises(TooFewSessions):
        loio_folds(corpus[:1])


@pytest.fixture(scope="module")
def small_cache(small_corpus):
    return FeatureCache(small_corpus)


def test_experiment_report_structure(small_corpus, small_cache):
    rep = run_experiment(small_corpus, "face", "full", FAST, features=small_cache)
    pids = [p for f in rep.folds for p in f.participants]
    assert sorted(pids) == sorted(p for s, _ in small_corpus for p in s.participants)
    assert len(set(pids)) == len(pids)
    assert 0 <= rep.pooled_ap <= 1
    assert rep.chance_ap == pytest.approx(corpus_labels(small_corpus).n_low / len(pids))
    assert rep.n_features == 111 and not rep.skipped_folds
    assert all(f.cost in FAST.c_grid for f in rep.folds)


def test_experiment_deterministic_across_jobs(small_corpus, small_cache):
    a = run_experiment(small_corpus, "speech_act+hand", "middle", FAST, features=small_cache)
    b = run_experiment(small_corpus, "speech_act+hand", "middle", FAST, features=small_cache, jobs=3)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


def test_true_label_scores_give_ap_one(small_corpus):
    lab = corpus_labels(small_corpus)
    ids = sorted(lab.low)
    assert average_precision([lab.low[p] for p in ids], [lab.low[p] for p in ids], ids) == 1.0


def test_permuted_labels_keep_count():
    from lowrapport.labels import label_low_rapport
    lab = label_low_rapport({f"p{k:02d}": float(k) for k in range(40)})
    perm = permuted_labels(lab, 3)
    assert perm.n_low == lab.n_low and perm.low != lab.low
    assert perm == permuted_labels(lab, 3)


def test_face_ablation_keys_and_signal(small_corpus, small_cache):
    reps = face_ablation(small_corpus, FAST, features=small_cache)
    assert tuple(reps) == FACE_SETS
    assert reps["face_nosync"].pooled_ap >= reps["face_synconly"].pooled_ap
    assert reps["face_nosync"].n_features + reps["face_synconly"].n_features == reps["face"].n_features


def test_posiface_std_lower_in_low_group(small_corpus, small_cache):
    rows, names, X = small_cache.matrix("face_nosync", "full")
    lab = corpus_labels(small_corpus)
    t = feature_tscores(X, [lab.low[p] for _, p in rows], names)
    assert t["PosiFace_std"] < 0
    assert t["AU09"] > 0


def test_reports_roundtrip_and_table(tmp_path, small_corpus, small_cache):
    reps = [run_experiment(small_corpus, "personality", seg, FAST, features=small_cache)
            for seg in ("full", "last")]
    write_reports(tmp_path / "r.json", reps)
    back = read_reports(tmp_path / "r.json")
    assert [r.to_dict() for r in back] == [r.to_dict() for r in reps]
    table = format_table(reps)
    lines = table.splitlines()
    assert lines[0].split() == ["feature", "set", "full", "first", "middle", "last"]
    assert lines[1].split()[0] == "personality" and lines[1].split()[2] == "-"
    assert lines[-1].startswith("chance")
    assert isinstance(EvalReport.from_dict(reps[0].to_dict()), EvalReport)
