"""
Censoring-aware discrimination metrics.

- Harrell's C-index: a pair (j, i) is comparable when T_j < T_i and patient j
  had the event; it is concordant when eta_j > eta_i, and a tie in eta counts
  0.5. Pairs with equal times are not comparable.
- Horizon AUROC: positives recur within the horizon, negatives are followed
  past it (event or not), patients censored before it are excluded.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from ..errors import (
    EmptyInputError,
    LengthMismatchError,
    NoComparablePairsError,
    NoNegativesError,
    NoPositivesError,
)
from ..utils.seeding import make_rng
from .cohort_io import SurvivalData


DEFAULT_HORIZON_MONTHS = 60.0


class HorizonLabel(str, Enum):
    positive = "positive"
    negative = "negative"
    excluded = "excluded"


@dataclass
class MetricSummary:
    mean: float
    std: float
    per_fold: List[float] = field(default_factory=list)

    def format(self, decimals: int = 3) -> str:
        return f"{self.mean:.{decimals}f}±{self.std:.{decimals}f}"

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "per_fold": list(self.per_fold)}


def _scores(eta, data: SurvivalData) -> np.ndarray:
    eta = np.asarray(eta, dtype=np.float64).ravel()
    if eta.size != len(data):
        raise LengthMismatchError(f"{eta.size} risk scores for {len(data)} patients")
    return eta


def comparable_pairs(data: SurvivalData) -> np.ndarray:
    """C[j, i] is True when (j, i) is a comparable pair (j failed first)."""
    times = data.times
    return (times[:, None] < times[None, :]) & (data.events[:, None] == 1)


def c_index(data: SurvivalData, eta) -> float:
    """
    Harrell's concordance index with ties in ``eta`` counted as 0.5.

    Args:
        data: Survival times and event indicators
        eta: Risk scores, higher meaning earlier failure

    Returns:
        Fraction of comparable pairs ordered correctly, in [0, 1]

    Raises:
        NoComparablePairsError: if no pair has an event strictly before the other time
    """
    eta = _scores(eta, data)
    comparable = comparable_pairs(data)
    n_pairs = int(comparable.sum())
    if n_pairs == 0:
        raise NoComparablePairsError("no comparable pairs: need T_j < T_i with an event at T_j")
    concordant = int((comparable & (eta[:, None] > eta[None, :])).sum())
    tied = int((comparable & (eta[:, None] == eta[None, :])).sum())
    return (concordant + 0.5 * tied) / n_pairs


def c_index_random_ties(data: SurvivalData, eta, n_repeats: int = 100,
                        seed: int = 0) -> MetricSummary:
    """C-index with ties in ``eta`` broken uniformly at random.

    Scores are replaced by their dense ranks (distinct values one unit apart)
    and jittered by less than half a unit, which breaks every exact tie
    without reordering distinct values.
    """
    if n_repeats < 2:
        raise ValueError("n_repeats must be at least 2")
    eta = _scores(eta, data)
    _, ranks = np.unique(eta, return_inverse=True)
    ranks = ranks.astype(np.float64)
    rng = make_rng(seed)
    values = [
        c_index(data, ranks + rng.uniform(-0.45, 0.45, size=ranks.size))
        for _ in range(n_repeats)
    ]
    return summarize_folds(values)


def horizon_labels(data: SurvivalData, horizon_months: float = DEFAULT_HORIZON_MONTHS) -> List[HorizonLabel]:
    labels = []
    for t, d in zip(data.times, data.events):
        if t > horizon_months:
            labels.append(HorizonLabel.negative)
        elif d == 1:
            labels.append(HorizonLabel.positive)
        else:
            labels.append(HorizonLabel.excluded)
    return labels


def auroc_horizon(data: SurvivalData, eta, horizon_months: float = DEFAULT_HORIZON_MONTHS) -> float:
    """AUROC separating recurrence within the horizon from follow-up beyond it."""
    eta = _scores(eta, data)
    labels = horizon_labels(data, horizon_months)
    pos = eta[np.array([lbl is HorizonLabel.positive for lbl in labels], dtype=bool)]
    neg = eta[np.array([lbl is HorizonLabel.negative for lbl in labels], dtype=bool)]
    if pos.size == 0:
        raise NoPositivesError(f"no events within {horizon_months} months")
    if neg.size == 0:
        raise NoNegativesError(f"no patients followed beyond {horizon_months} months")
    greater = int((pos[:, None] > neg[None, :]).sum())
    tied = int((pos[:, None] == neg[None, :]).sum())
    return (greater + 0.5 * tied) / (pos.size * neg.size)


def summarize_folds(values: Sequence[float]) -> MetricSummary:
    """Mean and population standard deviation of per-fold values."""
    values = [float(v) for v in values]
    if not values:
        raise EmptyInputError("cannot summarize an empty list of values")
    arr = np.asarray(values, dtype=np.float64)
    return MetricSummary(mean=float(arr.mean()), std=float(arr.std(ddof=0)), per_fold=values)


def summarize_defined(values: Sequence[Optional[float]]) -> Optional[MetricSummary]:
    """Summary over the folds where a metric was defined, or None if none were."""
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    summary = summarize_folds(defined)
    summary.per_fold = list(values)
    return summary
