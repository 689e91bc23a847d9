# tests/unit/test_runner.py
import pytest

from survfusion.core.cohort_io import Cohort
from survfusion.core.trainer import TrainConfig
from survfusion.experiment.folds import make_fold_plan
from survfusion.experiment.runner import Strategy, assert_no_leakage, run_strategy
from survfusion.experiment.search import SearchSpec
from survfusion.errors import LeakageError, MissingModalityError


def test_strategy_properties():
    assert [s.value for s in Strategy] == ["unimodal_wsi", "unimodal_ct", "late", "intermediate",
                                           "leibovich", "leibovich_rt"]
    assert Strategy.intermediate.modalities == ("wsi", "ct")
    assert not Strategy.leibovich_rt.learned
    assert Strategy.order(Strategy.late) == 2


def test_leakage_is_detected():
    assert_no_leakage(["P1", "P2"], ["P3"], "fold 0")
    with pytest.raises(LeakageError, match="P2"):
        assert_no_leakage(["P1", "P2"], ["P2", "P3"], "fold 0")


def test_missing_modality(small_synthetic):
    _, cohort, _ = small_synthetic
    plan = make_fold_plan(cohort.survival_data(), seed=0)
    stripped = Cohort(
        patients=[type(p)(p.patient_id, p.outcome, {"wsi": p.embeddings["wsi"]}, p.leibovich)
                  for p in cohort.patients],
        matrices={"wsi": cohort.matrices["wsi"]},
    )
    with pytest.raises(MissingModalityError):
        run_strategy(stripped, Strategy.late, plan, SearchSpec(budget=1))


def test_leibovich_strategy_scores_every_fold(small_synthetic, point_table):
    _, cohort, _ = small_synthetic
    plan = make_fold_plan(cohort.survival_data(), seed=0)
    result = run_strategy(cohort, Strategy.leibovich_rt, plan, SearchSpec(budget=1),
                          point_table=point_table, rt_repeats=4, master_seed=2)
    assert len(result.folds) == 5
    for k, fold in enumerate(result.folds):
        assert fold.n_scored == len(plan.outer_test(k))
        assert set(fold.seeds) == {"fold", "ties"}
        assert fold.epochs is None and fold.alpha is None
    again = run_strategy(cohort, Strategy.leibovich_rt, plan, SearchSpec(budget=1),
                         point_table=point_table, rt_repeats=4, master_seed=2)
    assert [f.c_index for f in again.folds] == [f.c_index for f in result.folds]


def test_learned_strategy_writes_checkpoints(small_synthetic, tmp_path):
    _, cohort, _ = small_synthetic
    plan = make_fold_plan(cohort.survival_data(), seed=0)
    base = TrainConfig(max_epochs=4, warmup_epochs=1, patience=2)
    result = run_strategy(cohort, Strategy.intermediate, plan, SearchSpec(budget=1, hidden_dim=(32, 32)),
                          base=base, checkpoint_dir=tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == [f"intermediate_fold{k}.cxmp" for k in range(5)]
    for fold in result.folds:
        assert 1 <= fold.epochs <= 4
        assert fold.trial_config["hidden_dim"] == 32
