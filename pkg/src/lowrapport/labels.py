"""Aggregated received ratings and low-rapport labels."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import UnknownParticipant
from .model import ATTRIBUTES, RatingsRecord

LOW_QUANTILE = 0.25


@dataclass(frozen=True)
class LabelSet:
    score: dict[str, float]
    low: dict[str, int]
    boundary: float

    @property
    def n_low(self) -> int:
        return sum(self.low.values())


def aggregate_received_score(r: RatingsRecord, attribute: str, target: str) -> float:
    """Mean of all ratings of ``attribute`` that ``target`` received from the others."""
    if attribute not in ATTRIBUTES:
        raise ValueError(f"unknown attribute {attribute!r}")
    vals = [v[attribute] for (rater, ratee), v in r.directed.items() if ratee == target]
    if not vals:
        raise UnknownParticipant(target)
    return float(np.mean(vals))


def corpus_scores(corpus, attribute: str = "rapport") -> dict[str, float]:
    return {pid: aggregate_received_score(r, attribute, pid)
            for s, r in corpus for pid in s.participants}


def low_boundary(scores) -> float:
    # Weibull plotting positions k/(n+1): a strict cut below this boundary
    # labels floor(0.25*(n+1)) distinct scores, i.e. 19 of 78 and 1 of 4.
    return float(np.quantile(np.asarray(scores, dtype=float), LOW_QUANTILE, method="weibull"))


def label_low_rapport(scores: Mapping[str, float]) -> LabelSet:
    """Label participants strictly below the corpus-wide lower-quartile boundary.

    Scores tied with the boundary are labelled not-low.
    """
    if len(scores) < 4:
        raise ValueError("labelling needs at least 4 participants")
    boundary = low_boundary(list(scores.values()))
    low = {p: int(v < boundary) for p, v in scores.items()}
    return LabelSet(dict(scores), low, boundary)


def corpus_labels(corpus) -> LabelSet:
    return label_low_rapport(corpus_scores(corpus, "rapport"))
