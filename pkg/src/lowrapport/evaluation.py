"""Leave-one-interaction-out evaluation, ablations and descriptive analyses."""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateClass, SingleClass, TooFewSessions
from .features.sets import FACE_SETS, FeatureCache, FeatureConfig
from .labels import LabelSet, aggregate_received_score, corpus_labels
from .metrics import average_precision, pearson, pooled_t
from .model import ATTRIBUTES, SEGMENTS, TRAITS
from .svm import LearnerConfig, ensemble_prob, train_ensemble


@dataclass
class FoldResult:
    session_id: str
    participants: list[str]
    probabilities: list[float]
    labels: list[int]
    cost: Optional[float] = None
    gamma: Optional[float] = None
    train_digest: Optional[str] = None
    skipped: Optional[str] = None


@dataclass
class EvalReport:
    feature_set: str
    segment: str
    learner: dict
    n_features: int
    folds: list[FoldResult] = field(default_factory=list)
    pooled_ap: float = float("nan")
    chance_ap: float = float("nan")

    @property
    def skipped_folds(self) -> list[str]:
        return [f.session_id for f in self.folds if f.skipped]

    def pooled(self):
        ids, probs, labels = [], [], []
        for f in self.folds:
            if f.skipped:
                continue
            ids += f.participants
            probs += f.probabilities
            labels += f.labels
        return ids, np.array(probs), np.array(labels, dtype=int)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["folds"] = [FoldResult(**f) for f in d["folds"]]
        return cls(**d)


def loio_folds(corpus) -> list[tuple[list[str], str]]:
    """One fold per session: (training session ids, held-out session id)."""
    ids = [s.session_id for s, _ in corpus]
    if len(ids) < 2:
        raise TooFewSessions("leave-one-interaction-out needs at least two sessions")
    return [([o for o in ids if o != sid], sid) for sid in ids]


def _digest(ens) -> str:
    h = hashlib.sha256()
    h.update(ens.standardization.digest().encode())
    h.update(np.float64(ens.gamma).tobytes())
    h.update(np.float64(ens.cost).tobytes())
    return h.hexdigest()


def _run_fold(X, y, rows, test_sid, learner: LearnerConfig, names) -> FoldResult:
    sids = np.array([sid for sid, _ in rows])
    test = sids == test_sid
    train = ~test
    pids = [p for (sid, p), t in zip(rows, test) if t]
    labels = [int(v) for v in y[test]]
    try:
        ens = train_ensemble(X[train], np.where(y[train] > 0, 1, -1), sids[train], learner,
                             feature_names=names)
    except SingleClass as exc:
        return FoldResult(test_sid, pids, [], labels, skipped=str(exc))
    probs = ensemble_prob(ens, X[test])
    return FoldResult(test_sid, pids, [float(p) for p in probs], labels,
                      ens.cost, ens.gamma, _digest(ens))


def run_experiment(corpus, feature_set: str, segment: str = "full",
                   learner: LearnerConfig = LearnerConfig(), *,
                   features: Optional[FeatureCache] = None,
                   feature_config: FeatureConfig = FeatureConfig(),
                   labels: Optional[LabelSet] = None, jobs: int = 1) -> EvalReport:
    """Leave-one-interaction-out run; AP is computed over all held-out predictions pooled.

    Labels come from the corpus-wide rapport quartile unless ``labels`` is
    given (e.g. a permuted-label control).
    """
    if segment not in SEGMENTS:
        raise ValueError(f"unknown segment {segment!r}")
    folds = loio_folds(corpus)
    cache = features if features is not None else FeatureCache(corpus, feature_config, jobs)
    rows, names, X = cache.matrix(feature_set, segment)
    labels = labels if labels is not None else corpus_labels(corpus)
    y = np.array([labels.low[p] for _, p in rows], dtype=int)

    def work(fold):
        return _run_fold(X, y, rows, fold[1], learner, names)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            results = list(ex.map(work, folds))
    else:
        results = [work(f) for f in folds]

    report = EvalReport(feature_set, segment, learner.to_dict(), len(names), results)
    ids, probs, lab = report.pooled()
    report.chance_ap = float(lab.mean()) if len(lab) else float("nan")
    report.pooled_ap = average_precision(probs, lab, ids) if lab.any() else float("nan")
    return report


def permuted_labels(labels: LabelSet, seed: int) -> LabelSet:
    """Same positive count, assigned to a random permutation of participants."""
    pids = sorted(labels.low)
    perm = np.random.default_rng(seed).permutation(len(pids))
    vals = [labels.low[pids[k]] for k in perm]
    return LabelSet(dict(labels.score), dict(zip(pids, vals)), labels.boundary)


def face_ablation(corpus, learner: LearnerConfig = LearnerConfig(), *,
                  features: Optional[FeatureCache] = None, jobs: int = 1,
                  segment: str = "full") -> dict[str, EvalReport]:
    cache = features if features is not None else FeatureCache(corpus, FeatureConfig(), jobs)
    return {fs: run_experiment(corpus, fs, segment, learner, features=cache, jobs=jobs)
            for fs in FACE_SETS}


# --- descriptive analyses -------------------------------------------------------------

def feature_tscores(X, labels, names: Sequence[str], equal_var: bool = True) -> dict[str, float]:
    """Per-feature two-sample t; positive means larger in the low-rapport group.

    Missing cells are dropped feature by feature.
    """
    X = np.asarray(X, dtype=float)
    lab = np.asarray(labels).astype(bool)
    if lab.sum() < 2 or (~lab).sum() < 2:
        raise DegenerateClass("t-scores need at least two samples per class")
    out = {}
    for k, name in enumerate(names):
        col = X[:, k]
        ok = ~np.isnan(col)
        out[name] = pooled_t(col[ok & lab], col[ok & ~lab], equal_var)
    return out


def top_tscores(t: dict[str, float], k: int = 10) -> list[tuple[str, float]]:
    return sorted(t.items(), key=lambda kv: (-abs(kv[1]), kv[0]))[:k]


CORR_VARIABLES = ATTRIBUTES[1:] + ATTRIBUTES[:1] + TRAITS  # leadership..liking, rapport, O..N


def attribute_correlations(corpus, alpha: float = 0.05) -> dict:
    """Pearson r between aggregated received attributes and personality traits."""
    data = {v: [] for v in CORR_VARIABLES}
    for s, r in corpus:
        for pid in s.participants:
            for a in ATTRIBUTES:
                data[a].append(aggregate_received_score(r, a, pid))
            for t in TRAITS:
                data[t].append(float(r.personality[pid][t]))
    names = list(CORR_VARIABLES)
    n = len(names)
    R = np.eye(n)
    P = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            r, p = pearson(data[names[i]], data[names[j]])
            R[i, j] = R[j, i] = r
            P[i, j] = P[j, i] = p
    return {"variables": names, "n": len(data[names[0]]), "alpha": alpha,
            "r": R.tolist(), "p": P.tolist(), "significant": (P < alpha).tolist()}


# --- report output --------------------------------------------------------------------

def reports_to_json(reports: Sequence[EvalReport]) -> str:
    return json.dumps({"reports": [r.to_dict() for r in reports]}, indent=1, sort_keys=True) + "\n"


def write_reports(path, reports: Sequence[EvalReport]) -> None:
    Path(path).write_text(reports_to_json(reports))


def read_reports(path) -> list[EvalReport]:
    return [EvalReport.from_dict(d) for d in json.loads(Path(path).read_text())["reports"]]


def format_table(reports: Sequence[EvalReport]) -> str:
    """Pooled AP grid: feature sets down, temporal segments across."""
    sets: list[str] = []
    for r in reports:
        if r.feature_set not in sets:
            sets.append(r.feature_set)
    cell = {(r.feature_set, r.segment): r.pooled_ap for r in reports}
    chance = next((r.chance_ap for r in reports), float("nan"))
    width = max([len("feature set")] + [len(s) for s in sets])
    lines = ["feature set".ljust(width) + "".join(f"{seg:>9}" for seg in SEGMENTS)]
    for fs in sets:
        vals = [cell.get((fs, seg)) for seg in SEGMENTS]
        lines.append(fs.ljust(width) + "".join(
            f"{'-':>9}" if v is None else f"{v:9.3f}" for v in vals))
    lines.append(f"chance (prevalence) {chance:.3f}")
    return "\n".join(lines) + "\n"
