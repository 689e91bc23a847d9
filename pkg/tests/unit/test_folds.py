# tests/unit/test_folds.py
import numpy as np
import pytest

from survfusion.core.cohort_io import SurvivalData
from survfusion.experiment.folds import make_fold_plan
from survfusion.errors import InfeasibleStratificationError


def _cohort(n=156, n_events=40, seed=0):
    events = np.zeros(n, dtype=int)
    events[np.random.default_rng(seed).choice(n, n_events, replace=False)] = 1
    return SurvivalData(np.arange(1, n + 1, dtype=float), events)


def test_outer_folds_partition_and_stratify():
    data = _cohort()
    plan = make_fold_plan(data, seed=4)
    assert plan.n_outer == 5
    everyone = np.concatenate([plan.outer_test(k) for k in range(5)])
    assert sorted(everyone.tolist()) == list(range(156))
    for k in range(5):
        assert data.events[plan.outer_test(k)].sum() == 8
        assert len(plan.outer_test(k)) in (31, 32)


def test_inner_folds_partition_outer_training():
    data = _cohort()
    plan = make_fold_plan(data, seed=4)
    for k in range(plan.n_outer):
        outer_train = set(plan.outer_train(k).tolist())
        assert outer_train.isdisjoint(plan.outer_test(k).tolist())
        splits = plan.inner_splits(k)
        assert len(splits) == 3
        vals = [set(val.tolist()) for _, val in splits]
        assert set().union(*vals) == outer_train
        assert sum(len(v) for v in vals) == len(outer_train)
        for train, val in splits:
            assert set(train.tolist()) | set(val.tolist()) == outer_train
            assert data.events[val].sum() >= 10


def test_plan_is_deterministic_per_seed():
    data = _cohort()
    a, b = make_fold_plan(data, seed=4), make_fold_plan(data, seed=4)
    assert a == b
    assert a.sha256() == b.sha256()
    assert make_fold_plan(data, seed=5).sha256() != a.sha256()


def test_too_few_events():
    with pytest.raises(InfeasibleStratificationError):
        make_fold_plan(_cohort(n=50, n_events=4), seed=0)
    with pytest.raises(InfeasibleStratificationError):
        make_fold_plan(_cohort(n=50, n_events=47), seed=0)


def test_plan_serializes():
    plan = make_fold_plan(_cohort(), seed=1)
    payload = plan.to_dict()
    assert payload["seed"] == 1
    assert len(payload["outer_folds"]) == 5
    assert all(len(inner) == 3 for inner in payload["inner_folds"])
