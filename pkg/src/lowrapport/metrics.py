"""Ranking metric and simple statistics used by the evaluation harness."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from scipy import stats as _st

from .errors import DegenerateClass, DegenerateVariance, NoPositives


def rank_order(scores, ids: Optional[Sequence] = None) -> list[int]:
    """Indices sorted by score descending; ties by ascending id (index if no ids)."""
    scores = np.asarray(scores, dtype=float)
    keys = ids if ids is not None else range(len(scores))
    return sorted(range(len(scores)), key=lambda k: (-scores[k], keys[k]))


def average_precision(scores, labels, ids: Optional[Sequence] = None) -> float:
    """Mean of precision@k over the ranks k of the positive items."""
    labels = np.asarray(labels).astype(bool)
    if len(labels) != len(scores):
        raise ValueError("scores and labels differ in length")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise NoPositives("average precision needs at least one positive label")
    hits = 0
    total = 0.0
    for rank, k in enumerate(rank_order(scores, ids), start=1):
        if labels[k]:
            hits += 1
            total += hits / rank
    return total / n_pos


def pooled_t(x_low, x_high, equal_var: bool = True) -> float:
    """Two-sample t, positive when the first (low-rapport) group has the larger mean.

    Both groups constant gives 0.
    """
    a = np.asarray(x_low, dtype=float)
    b = np.asarray(x_high, dtype=float)
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        raise DegenerateClass("each class needs at least two samples")
    m1, m2 = a.mean(), b.mean()
    v1, v2 = a.var(ddof=1), b.var(ddof=1)
    if equal_var:
        sp2 = ((n1 - 1) * v1 + (n2 - 1) * v2) / (n1 + n2 - 2)
        se = np.sqrt(sp2 * (1.0 / n1 + 1.0 / n2))
    else:
        se = np.sqrt(v1 / n1 + v2 / n2)
    if se == 0:
        return 0.0
    return float((m1 - m2) / se)


def pearson(x, y) -> tuple[float, float]:
    """Pearson r and its two-tailed p-value from a t distribution with n-2 d.o.f."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 3:
        raise DegenerateVariance("correlation needs at least three samples")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt((dx * dx).sum()), np.sqrt((dy * dy).sum())
    if sx == 0 or sy == 0:
        raise DegenerateVariance("a variable has zero variance")
    r = float(np.clip((dx * dy).sum() / (sx * sy), -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    return r, float(2.0 * _st.t.sf(abs(t), n - 2))
