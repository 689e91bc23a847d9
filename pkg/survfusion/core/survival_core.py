"""
Cox proportional-hazards objective.

Negative log partial likelihood over risk scores ``eta``:

    L(eta) = -sum_{i: d_i = 1} ( eta_i - log sum_{j: T_j >= T_i} exp(eta_j) )

Tied event times share the full risk set (Breslow). A censored patient whose
time equals an event time belongs to that event's risk set. All arithmetic is
float64; the log-sum-exp is max-shifted.
"""
from dataclasses import dataclass
from typing import FrozenSet, List, Tuple

import numpy as np
from scipy.special import logsumexp

from ..errors import LengthMismatchError, NoEventsError
from .cohort_io import SurvivalData


RiskScores = np.ndarray


@dataclass(frozen=True)
class RiskSet:
    event_index: int
    members: FrozenSet[int]

    def __post_init__(self):
        if self.event_index not in self.members:
            raise ValueError("event_index must belong to its risk set")


def _check(eta, data: SurvivalData) -> np.ndarray:
    eta = np.asarray(eta, dtype=np.float64).ravel()
    if eta.size != len(data):
        raise LengthMismatchError(f"{eta.size} risk scores for {len(data)} patients")
    if not np.all(np.isfinite(eta)):
        raise ValueError("risk scores must be finite")
    if data.n_events == 0:
        raise NoEventsError("no events: the partial likelihood is empty")
    return eta


def at_risk_mask(data: SurvivalData) -> np.ndarray:
    """Boolean matrix M[i, j] = T_j >= T_i, restricted to rows with an event."""
    times = data.times
    event_rows = np.flatnonzero(data.events == 1)
    return times[None, :] >= times[event_rows, None]


def risk_sets(data: SurvivalData) -> List[RiskSet]:
    """One risk set per event, in patient order."""
    if data.n_events == 0:
        raise NoEventsError("no events: risk sets are undefined")
    mask = at_risk_mask(data)
    event_rows = np.flatnonzero(data.events == 1)
    return [
        RiskSet(event_index=int(i), members=frozenset(int(j) for j in np.flatnonzero(row)))
        for i, row in zip(event_rows, mask)
    ]


def _log_denominators(eta: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # -inf outside the risk set; every row holds at least its own event
    return logsumexp(np.where(mask, eta[None, :], -np.inf), axis=1)


def cox_loss(eta, data: SurvivalData) -> float:
    """Negative Cox log partial likelihood (sum over events)."""
    eta = _check(eta, data)
    mask = at_risk_mask(data)
    log_denom = _log_denominators(eta, mask)
    event_eta = eta[data.events == 1]
    return float(-(event_eta - log_denom).sum())


def cox_loss_and_grad(eta, data: SurvivalData) -> Tuple[float, np.ndarray]:
    """Loss and its gradient with respect to ``eta`` in one pass."""
    eta = _check(eta, data)
    mask = at_risk_mask(data)
    log_denom = _log_denominators(eta, mask)
    event_eta = eta[data.events == 1]
    loss = float(-(event_eta - log_denom).sum())

    # softmax of eta over each event's risk set
    weights = np.exp(np.where(mask, eta[None, :] - log_denom[:, None], -np.inf))
    grad = weights.sum(axis=0) - data.events.astype(np.float64)
    return loss, grad


def cox_loss_grad(eta, data: SurvivalData) -> np.ndarray:
    """Gradient of ``cox_loss`` with respect to ``eta``; components sum to zero."""
    return cox_loss_and_grad(eta, data)[1]
