"""
Fixed nested fold assignments.

Outer folds partition the cohort and inner folds partition each outer
training portion. Both levels are stratified on the event indicator and
built once per run, so every strategy is evaluated on the same plan.
"""
from dataclasses import dataclass
from typing import List, Tuple
import hashlib
import json

import numpy as np
from sklearn.model_selection import StratifiedKFold

from ..core.cohort_io import SurvivalData
from ..errors import InfeasibleStratificationError
from ..utils.logging import get_logger
from ..utils.seeding import derive_seed, sklearn_seed


logger = get_logger("FoldPlan")

N_OUTER = 5
N_INNER = 3


@dataclass(frozen=True)
class FoldPlan:
    outer_folds: Tuple[Tuple[int, ...], ...]
    inner_folds: Tuple[Tuple[Tuple[int, ...], ...], ...]
    seed: int

    @property
    def n_outer(self) -> int:
        return len(self.outer_folds)

    @property
    def n_patients(self) -> int:
        return sum(len(f) for f in self.outer_folds)

    def outer_test(self, k: int) -> np.ndarray:
        return np.asarray(self.outer_folds[k], dtype=np.int64)

    def outer_train(self, k: int) -> np.ndarray:
        train = [i for j, fold in enumerate(self.outer_folds) if j != k for i in fold]
        return np.asarray(sorted(train), dtype=np.int64)

    def inner_splits(self, k: int) -> List[Tuple[np.ndarray, np.ndarray]]:
        """``(train, validation)`` cohort indices for each inner fold of outer fold ``k``."""
        folds = self.inner_folds[k]
        splits = []
        for j, val in enumerate(folds):
            train = sorted(i for m, fold in enumerate(folds) if m != j for i in fold)
            splits.append((np.asarray(train, dtype=np.int64), np.asarray(val, dtype=np.int64)))
        return splits

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "outer_folds": [list(f) for f in self.outer_folds],
            "inner_folds": [[list(f) for f in inner] for inner in self.inner_folds],
        }

    def sha256(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _stratified(indices: np.ndarray, events: np.ndarray, n_splits: int, seed: int) -> List[Tuple[int, ...]]:
    splitter = StratifiedKFold(n_splits=n_splits, shuffle=True, random_state=sklearn_seed(seed))
    folds = []
    for _, test in splitter.split(np.zeros(indices.size), events):
        folds.append(tuple(sorted(int(i) for i in indices[test])))
    return folds


def make_fold_plan(data: SurvivalData, seed: int,
                   n_outer: int = N_OUTER, n_inner: int = N_INNER) -> FoldPlan:
    """
    Build the stratified nested cross-validation plan (5 outer x 3 inner by default).

    Outer and inner splits are stratified on the event indicator, so every
    fold keeps roughly the cohort's event fraction.

    Args:
        data: Survival outcomes of the whole cohort
        seed: Seed of the shuffled splits; the plan is a pure function of it
        n_outer: Number of outer folds
        n_inner: Number of inner folds inside each outer training set

    Returns:
        FoldPlan holding the outer folds and the inner folds of each outer training set

    Raises:
        InfeasibleStratificationError: if there are fewer events or censored patients than folds
    """
    events = np.asarray(data.events)
    n_events = int(events.sum())
    n_censored = int(events.size - n_events)
    if n_events < n_outer or n_censored < n_outer:
        raise InfeasibleStratificationError(
            f"stratified {n_outer}-fold split needs at least {n_outer} events and {n_outer} censored "
            f"patients, got {n_events} and {n_censored}"
        )

    everyone = np.arange(len(data))
    outer = _stratified(everyone, events, n_outer, derive_seed(seed, "outer"))
    inner = []
    for k in range(n_outer):
        train = np.asarray(sorted(i for j, fold in enumerate(outer) if j != k for i in fold), dtype=np.int64)
        inner.append(tuple(_stratified(train, events[train], n_inner, derive_seed(seed, "inner", k))))

    plan = FoldPlan(outer_folds=tuple(outer), inner_folds=tuple(inner), seed=int(seed))
    logger.info(f"Fold plan: {n_outer} outer x {n_inner} inner folds over {len(data)} patients "
                f"({n_events} events), sha256 {plan.sha256()[:12]}")
    return plan
