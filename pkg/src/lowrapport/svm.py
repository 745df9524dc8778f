"""RBF-kernel SVM trained by SMO, Platt calibration, nested cost tuning and ensembles.

The SMO solver follows the maximal-violating-pair scheme with second-order
working-set selection. Candidate indices are scanned in a seeded permutation
and ties go to the first candidate scanned, so the seed only changes which of
several equally good pairs is picked; this is the sole source of randomness
between ensemble members.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numba as nb
import numpy as np

from .errors import EmptyMatrix, NonFinite, SingleClass
from .metrics import average_precision

TAU = 1e-12
DEFAULT_C_GRID = (2.0 ** -5, 2.0 ** -3, 2.0 ** -1, 2.0, 2.0 ** 3, 2.0 ** 5)
# Stopping gap on the maximal violating pair. 1e-3 leaves the dual objective up
# to ~5e-6 short of optimal on small problems; 1e-4 keeps it below 1e-7.
SMO_TOL = 1e-4


# --- standardisation ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Standardization:
    mean: np.ndarray  # also the imputation value for missing cells
    std: np.ndarray

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.mean, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.std, dtype="<f8").tobytes())
        return h.hexdigest()


def fit_standardizer(X) -> Standardization:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyMatrix("cannot standardise an empty matrix")
    if np.isinf(X).any():
        raise NonFinite("feature matrix contains infinite values")
    observed = ~np.isnan(X)
    counts = observed.sum(axis=0)
    sums = np.where(observed, X, 0.0).sum(axis=0)
    mean = np.divide(sums, counts, out=np.zeros(X.shape[1]), where=counts > 0)
    filled = np.where(observed, X, mean)
    std = filled.std(axis=0)
    return Standardization(mean, std)


def apply_standardizer(stats: Standardization, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    filled = np.where(np.isnan(X), stats.mean, X)
    scale = np.where(stats.std > 0, stats.std, 1.0)
    Z = (filled - stats.mean) / scale
    Z[:, stats.std == 0] = 0.0
    return Z


def default_gamma(Z: np.ndarray) -> float:
    """1 / (d * mean column variance) of a standardised matrix."""
    d = Z.shape[1]
    pooled = float(Z.var(axis=0).mean()) if d else 0.0
    return 1.0 / (d * pooled) if pooled > 0 else 1.0 / max(d, 1)


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


# --- SMO --------------------------------------------------------------------------

@nb.njit(cache=True, nogil=True)
def _smo(K, y, cvec, eps, order, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
    it = 0
    viol = np.inf
    while it < max_iter:
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in order:
            if y[t] > 0:
                if alpha[t] < cvec[t] and -G[t] > gmax:
                    gmax = -G[t]
                    i = t
            else:
                if alpha[t] > 0 and G[t] > gmax:
                    gmax = G[t]
                    i = t
        gmax2 = -np.inf
        j = -1
        best = np.inf
        for t in order:
            if y[t] > 0:
                if alpha[t] > 0:
                    if G[t] > gmax2:
                        gmax2 = G[t]
                    diff = gmax + G[t]
                    if i >= 0 and diff > 0:
                        quad = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if quad <= 0:
                            quad = TAU
                        obj = -(diff * diff) / quad
                        if obj < best:
                            best = obj
                            j = t
            else:
                if alpha[t] < cvec[t]:
                    if -G[t] > gmax2:
                        gmax2 = -G[t]
                    diff = gmax - G[t]
                    if i >= 0 and diff > 0:
                        quad = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if quad <= 0:
                            quad = TAU
                        obj = -(diff * diff) / quad
                        if obj < best:
                            best = obj
                            j = t
        viol = gmax + gmax2
        if viol < eps or j < 0:
            break
        it += 1

        ci, cj = cvec[i], cvec[j]
        ai, aj = alpha[i], alpha[j]
        qij = y[i] * y[j] * K[i, j]
        if y[i] != y[j]:
            quad = K[i, i] + K[j, j] + 2.0 * qij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            d = ai - aj
            alpha[i] += delta
            alpha[j] += delta
            if d > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = d
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -d
            if d > ci - cj:
                if alpha[i] > ci:
                    alpha[i] = ci
                    alpha[j] = ci - d
            else:
                if alpha[j] > cj:
                    alpha[j] = cj
                    alpha[i] = cj + d
        else:
            quad = K[i, i] + K[j, j] - 2.0 * qij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            s = ai + aj
            alpha[i] -= delta
            alpha[j] += delta
            if s > ci:
                if alpha[i] > ci:
                    alpha[i] = ci
                    alpha[j] = s - ci
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > cj:
                if alpha[j] > cj:
                    alpha[j] = cj
                    alpha[i] = s - cj
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        dai = alpha[i] - ai
        daj = alpha[j] - aj
        for t in range(n):
            G[t] += y[t] * (y[i] * K[t, i] * dai + y[j] * K[t, j] * daj)

    # bias from free vectors, else midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    sfree = 0.0
    nfree = 0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= cvec[t]:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            sfree += yg
    rho = sfree / nfree if nfree > 0 else 0.5 * (ub + lb)
    return alpha, rho, viol, it


@nb.njit(cache=True, nogil=True)
def _platt(f, y, max_iter, tol):
    n = f.shape[0]
    npos = 0
    for k in range(n):
        if y[k] > 0:
            npos += 1
    nneg = n - npos
    hi = (npos + 1.0) / (npos + 2.0)
    lo = 1.0 / (nneg + 2.0)
    t = np.empty(n)
    for k in range(n):
        t[k] = hi if y[k] > 0 else lo
    A = 0.0
    B = np.log((nneg + 1.0) / (npos + 1.0))
    sigma = 1e-12
    min_step = 1e-10

    def objective(A, B):
        v = 0.0
        for k in range(n):
            z = f[k] * A + B
            if z >= 0:
                v += t[k] * z + np.log1p(np.exp(-z))
            else:
                v += (t[k] - 1.0) * z + np.log1p(np.exp(z))
        return v

    fval = objective(A, B)
    gnorm = np.inf
    for _ in range(max_iter):
        h11 = sigma
        h22 = sigma
        h21 = 0.0
        g1 = 0.0
        g2 = 0.0
        for k in range(n):
            z = f[k] * A + B
            if z >= 0:
                e = np.exp(-z)
                p = e / (1.0 + e)
                q = 1.0 / (1.0 + e)
            else:
                e = np.exp(z)
                p = 1.0 / (1.0 + e)
                q = e / (1.0 + e)
            d2 = p * q
            h11 += f[k] * f[k] * d2
            h22 += d2
            h21 += f[k] * d2
            d1 = t[k] - p
            g1 += f[k] * d1
            g2 += d1
        gnorm = np.sqrt(g1 * g1 + g2 * g2)
        if gnorm <= tol:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= min_step:
            nA = A + step * dA
            nB = B + step * dB
            nf = objective(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step *= 0.5
        if step < min_step:
            break
    return A, B, gnorm


@dataclass(frozen=True, eq=False)
class SvmModel:
    support_coefficients: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    cost: float
    training_points: np.ndarray
    calibration: tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    kkt_violation: float = 0.0
    iterations: int = 0

    @property
    def alpha(self) -> np.ndarray:
        return np.abs(self.support_coefficients)

    def decision_function(self, X) -> np.ndarray:
        K = rbf_kernel(np.asarray(X, dtype=float), self.training_points, self.gamma)
        return K @ self.support_coefficients + self.bias


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, d) with one label per row")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise NonFinite("training data must be finite")
    if not np.all((y == 1) | (y == -1)):
        raise ValueError("labels must be +1 or -1")
    if X.shape[0] < 2 or len(np.unique(y)) < 2:
        raise SingleClass("training needs both classes")
    return X, y


def class_costs(y: np.ndarray, C: float, balanced: bool) -> np.ndarray:
    if not balanced:
        return np.full(len(y), float(C))
    n = len(y)
    npos = int((y > 0).sum())
    w = np.where(y > 0, n / (2.0 * npos), n / (2.0 * (n - npos)))
    return C * w


def solve_dual(K: np.ndarray, y: np.ndarray, cvec: np.ndarray, seed: int, tol: float = SMO_TOL,
               max_iter: Optional[int] = None):
    """Run SMO on a precomputed kernel; returns (alpha, rho, violation, iterations)."""
    n = len(y)
    order = np.random.default_rng(seed).permutation(n).astype(np.int64)
    if max_iter is None:
        max_iter = max(100_000, 1000 * n)
    return _smo(np.ascontiguousarray(K), np.ascontiguousarray(y, dtype=float),
                np.ascontiguousarray(cvec, dtype=float), float(tol), order, int(max_iter))


def smo_train(X, y, C: float, gamma: float, seed: int = 0, tol: float = SMO_TOL,
              balanced: bool = False) -> SvmModel:
    """Soft-margin RBF SVM dual solved by SMO to the given KKT tolerance (uncalibrated)."""
    X, y = _check_xy(X, y)
    if not (C > 0 and gamma > 0):
        raise ValueError("C and gamma must be positive")
    K = rbf_kernel(X, X, gamma)
    alpha, rho, viol, it = solve_dual(K, y, class_costs(y, C, balanced), seed, tol)
    return SvmModel(alpha * y, -rho, float(gamma), float(C), X, (0.0, 0.0), int(seed), float(viol), int(it))


def dual_objective(alpha: np.ndarray, K: np.ndarray, y: np.ndarray) -> float:
    """sum(alpha) - 0.5 * sum_ij alpha_i alpha_j y_i y_j K_ij (to be maximised)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def kkt_violation(alpha: np.ndarray, K: np.ndarray, y: np.ndarray, cvec) -> float:
    """Maximal violating-pair gap m(alpha) - M(alpha); zero at the optimum."""
    cvec = np.broadcast_to(np.asarray(cvec, dtype=float), alpha.shape)
    grad = (y[:, None] * y[None, :] * K) @ alpha - 1.0
    score = -y * grad
    up = ((y > 0) & (alpha < cvec)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < cvec))
    if not up.any() or not low.any():
        return 0.0
    return float(max(score[up].max() - score[low].min(), 0.0))


def platt_fit(decision_values, y, tol: float = 1e-8, max_iter: int = 100) -> tuple[float, float]:
    """Sigmoid p = 1 / (1 + exp(A f + B)) fitted with smoothed targets by Newton's method."""
    f = np.ascontiguousarray(decision_values, dtype=float)
    y = np.asarray(y)
    yy = np.where(y > 0, 1.0, -1.0)
    if len(np.unique(yy)) < 2:
        raise SingleClass("calibration needs both classes")
    A, B, _ = _platt(f, yy, max_iter, tol)
    return float(A), float(B)


def sigmoid_prob(f, A: float, B: float) -> np.ndarray:
    z = A * np.asarray(f, dtype=float) + B
    out = np.empty_like(z)
    pos = z >= 0
    e = np.exp(-z[pos])
    out[pos] = e / (1.0 + e)
    out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
    return out


def predict_prob(model: SvmModel, X) -> np.ndarray:
    return sigmoid_prob(model.decision_function(X), *model.calibration)


# --- ensembles ----------------------------------------------------------------------

@dataclass(frozen=True)
class LearnerConfig:
    members: int = 1000
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    cost: Optional[float] = None  # fixed C; skips nested tuning
    gamma: Optional[float] = None  # None: 1/(d * pooled variance)
    seed: int = 0
    tol: float = SMO_TOL
    balanced: bool = False
    tune_seed_offset: int = 7919

    def to_dict(self) -> dict:
        return {"members": self.members, "c_grid": list(self.c_grid), "cost": self.cost,
                "gamma": self.gamma, "seed": self.seed, "tol": self.tol, "balanced": self.balanced}


def member_seeds(seed: int, members: int) -> list[int]:
    return [int(np.random.SeedSequence([int(seed), i]).generate_state(1)[0]) for i in range(members)]


@dataclass(frozen=True, eq=False)
class TrainedEnsemble:
    standardization: Standardization
    training_points: np.ndarray  # standardised
    gamma: float
    cost: float
    coefficients: np.ndarray  # (members, n) alpha*y per member
    biases: np.ndarray  # (members,)
    calibrations: np.ndarray  # (members, 2)
    seeds: tuple[int, ...]
    seed: int
    feature_names: tuple[str, ...] = ()

    @property
    def members(self) -> list[SvmModel]:
        return [SvmModel(self.coefficients[m], float(self.biases[m]), self.gamma, self.cost,
                         self.training_points, tuple(self.calibrations[m]), self.seeds[m])
                for m in range(len(self.seeds))]

    @property
    def imputation(self) -> np.ndarray:
        return self.standardization.mean

    def member_probs(self, X) -> np.ndarray:
        Z = apply_standardizer(self.standardization, np.atleast_2d(X))
        K = rbf_kernel(Z, self.training_points, self.gamma)
        dec = K @ self.coefficients.T + self.biases[None, :]
        return sigmoid_prob(dec * self.calibrations[None, :, 0] + self.calibrations[None, :, 1], 1.0, 0.0)


def ensemble_prob(e: TrainedEnsemble, X) -> np.ndarray:
    """Arithmetic mean of member probabilities, summed in member order."""
    P = e.member_probs(X)
    total = np.zeros(P.shape[0])
    for m in range(P.shape[1]):
        total += P[:, m]
    return total / P.shape[1]


def _fit_members(Z, y, C, gamma, seeds, tol, balanced):
    K = rbf_kernel(Z, Z, gamma)
    cvec = class_costs(y, C, balanced)
    coefs = np.empty((len(seeds), len(y)))
    biases = np.empty(len(seeds))
    cals = np.empty((len(seeds), 2))
    for m, sd in enumerate(seeds):
        alpha, rho, _, _ = solve_dual(K, y, cvec, sd, tol)
        coefs[m] = alpha * y
        biases[m] = -rho
        dec = K @ coefs[m] + biases[m]
        cals[m] = platt_fit(dec, y)
    return coefs, biases, cals


def tune_cost(X, y, groups, grid: Sequence[float] = DEFAULT_C_GRID, gamma: Optional[float] = None,
              seed: int = 0, tol: float = SMO_TOL, balanced: bool = False, return_scores: bool = False):
    """Pick C by inner leave-one-group-out AP over the given (training) rows only.

    Inner folds whose training part has a single class are skipped. Equal AP
    resolves to the smaller C; so does an inner pool with no positives.
    """
    X = np.asarray(X, dtype=float)
    y = np.where(np.asarray(y) > 0, 1.0, -1.0)
    groups = np.asarray(groups)
    grid = sorted(float(c) for c in grid)
    uniq = sorted(set(groups.tolist()))
    if len(uniq) < 2:
        raise ValueError("tuning needs at least two groups")
    if len(grid) == 1:
        return (grid[0], {grid[0]: float("nan")}) if return_scores else grid[0]

    folds = []
    for g in uniq:
        test = groups == g
        train = ~test
        if len(np.unique(y[train])) < 2:
            continue
        stats = fit_standardizer(X[train])
        Ztr = apply_standardizer(stats, X[train])
        Zte = apply_standardizer(stats, X[test])
        gm = gamma if gamma is not None else default_gamma(Ztr)
        folds.append((train, test, rbf_kernel(Ztr, Ztr, gm), rbf_kernel(Zte, Ztr, gm)))
    if not folds:
        raise SingleClass("no inner fold has both classes in its training part")
    if not any((y[test] > 0).any() for _, test, _, _ in folds):
        # every positive sits in a skipped fold: AP is undefined, all C tie
        nan = {C: float("nan") for C in grid}
        return (grid[0], nan) if return_scores else grid[0]

    scores = {}
    for C in grid:
        pooled_p, pooled_y = [], []
        for train, test, Ktr, Kte in folds:
            ytr = y[train]
            alpha, rho, _, _ = solve_dual(Ktr, ytr, class_costs(ytr, C, balanced), seed, tol)
            coef = alpha * ytr
            A, B = platt_fit(Ktr @ coef - rho, ytr)
            pooled_p.append(sigmoid_prob(Kte @ coef - rho, A, B))
            pooled_y.append(y[test])
        scores[C] = average_precision(np.concatenate(pooled_p), np.concatenate(pooled_y) > 0)
    best = grid[0]
    for C in grid[1:]:
        if scores[C] > scores[best]:
            best = C
    return (best, scores) if return_scores else best


def train_ensemble(X, y, groups=None, config: LearnerConfig = LearnerConfig(),
                   seeds: Optional[Sequence[int]] = None,
                   feature_names: Sequence[str] = ()) -> TrainedEnsemble:
    """Shared standardisation, nested-tuned C, then one calibrated SVM per member seed."""
    X = np.asarray(X, dtype=float)
    y = np.where(np.asarray(y) > 0, 1.0, -1.0)
    stats = fit_standardizer(X)
    Z = apply_standardizer(stats, X)
    _check_xy(Z, y)
    if config.members < 1:
        raise ValueError("an ensemble needs at least one member")
    gamma = config.gamma if config.gamma is not None else default_gamma(Z)
    if config.cost is not None:
        C = float(config.cost)
    else:
        if groups is None:
            raise ValueError("nested cost tuning needs group ids")
        C = tune_cost(X, y, groups, config.c_grid, config.gamma,
                      config.seed + config.tune_seed_offset, config.tol, config.balanced)
    seeds = tuple(int(s) for s in (seeds if seeds is not None else member_seeds(config.seed, config.members)))
    coefs, biases, cals = _fit_members(Z, y, C, gamma, seeds, config.tol, config.balanced)
    return TrainedEnsemble(stats, Z, float(gamma), C, coefs, biases, cals, seeds, int(config.seed),
                           tuple(feature_names))


# --- serialisation ------------------------------------------------------------------

def ensemble_to_dict(e: TrainedEnsemble) -> dict:
    return {
        "format": "lowrapport-ensemble/1",
        "seed": e.seed,
        "gamma": e.gamma,
        "cost": e.cost,
        "feature_names": list(e.feature_names),
        "standardization": {"mean": e.standardization.mean.tolist(),
                            "std": e.standardization.std.tolist()},
        "training_points": e.training_points.tolist(),
        "members": [{"seed": s, "alpha_y": c.tolist(), "bias": float(b), "calibration": [float(a), float(bb)]}
                    for s, c, b, (a, bb) in zip(e.seeds, e.coefficients, e.biases, e.calibrations)],
    }


def ensemble_from_dict(doc: dict) -> TrainedEnsemble:
    members = doc["members"]
    return TrainedEnsemble(
        Standardization(np.array(doc["standardization"]["mean"], dtype=float),
                        np.array(doc["standardization"]["std"], dtype=float)),
        np.array(doc["training_points"], dtype=float),
        float(doc["gamma"]), float(doc["cost"]),
        np.array([m["alpha_y"] for m in members], dtype=float),
        np.array([m["bias"] for m in members], dtype=float),
        np.array([m["calibration"] for m in members], dtype=float),
        tuple(int(m["seed"]) for m in members), int(doc["seed"]),
        tuple(doc.get("feature_names", ())),
    )


def save_ensemble(e: TrainedEnsemble, path) -> None:
    Path(path).write_text(json.dumps(ensemble_to_dict(e)) + "\n")


def load_ensemble(path) -> TrainedEnsemble:
    return ensemble_from_dict(json.loads(Path(path).read_text()))
