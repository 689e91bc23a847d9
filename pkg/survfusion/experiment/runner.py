"""
Strategy evaluation over a fixed nested fold plan.

For each outer fold a learned strategy searches hyperparameters on the
inner folds, fixes the epoch count from the inner runs, retrains on the
whole outer-training portion for exactly that many epochs and scores the
held-out fold. Late fusion reuses the two unimodal pipelines (same seeds)
and tunes its weight on their inner validation predictions. The Leibovich
strategies score the clinical baseline without training.
"""
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.checkpoint import save_checkpoint, save_late_fusion
from ..core.cohort_io import Cohort, SurvivalData
from ..core.fusion import late_fuse, tune_alpha_folds
from ..core.leibovich import PointTable, leibovich_cohort_scores
from ..core.metrics import (
    DEFAULT_HORIZON_MONTHS,
    MetricSummary,
    auroc_horizon,
    c_index,
    c_index_random_ties,
    summarize_defined,
    summarize_folds,
)
from ..core.nn import RiskModel
from ..core.trainer import SurvivalSet, TrainConfig, train
from ..errors import LeakageError, MissingModalityError, NoNegativesError, NoPositivesError
from ..utils.logging import get_logger
from ..utils.performance import measure_time
from ..utils.seeding import derive_seed
from .folds import FoldPlan
from .search import SearchResult, SearchSpec, TrialConfig, search_hyperparameters, select_epochs


logger = get_logger("Runner")


class Strategy(str, Enum):
    unimodal_wsi = "unimodal_wsi"
    unimodal_ct = "unimodal_ct"
    late = "late"
    intermediate = "intermediate"
    leibovich = "leibovich"
    leibovich_rt = "leibovich_rt"

    @property
    def learned(self) -> bool:
        return self not in (Strategy.leibovich, Strategy.leibovich_rt)

    @property
    def modalities(self) -> Tuple[str, ...]:
        return {
            Strategy.unimodal_wsi: ("wsi",),
            Strategy.unimodal_ct: ("ct",),
            Strategy.late: ("wsi", "ct"),
            Strategy.intermediate: ("wsi", "ct"),
        }.get(self, ())

    @classmethod
    def order(cls, strategy: "Strategy") -> int:
        return list(cls).index(strategy)


@dataclass
class FoldResult:
    fold: int
    c_index: float
    auroc: Optional[float]
    alpha: Optional[float] = None
    epochs: Union[int, Dict[str, int], None] = None
    trial_config: Optional[dict] = None
    seeds: Dict[str, int] = field(default_factory=dict)
    train_ids: List[str] = field(default_factory=list)
    test_ids: List[str] = field(default_factory=list)
    n_scored: Optional[int] = None


@dataclass
class StrategyResult:
    strategy: Strategy
    folds: List[FoldResult]
    config_hash: str = ""
    fold_plan_hash: str = ""

    @property
    def c_index(self) -> MetricSummary:
        return summarize_folds([f.c_index for f in self.folds])

    @property
    def auroc(self) -> Optional[MetricSummary]:
        return summarize_defined([f.auroc for f in self.folds])

    @property
    def n_auroc_undefined(self) -> int:
        return sum(1 for f in self.folds if f.auroc is None)


@dataclass
class _UnimodalFold:
    """Everything the late-fusion strategy needs from one unimodal pipeline."""

    search: SearchResult
    epochs: int
    model: RiskModel
    seed: int
    train_ids: List[str]


UnimodalCache = Dict[Tuple[str, int], _UnimodalFold]


def _safe_auroc(data: SurvivalData, scores: np.ndarray, horizon: float, label: str) -> Optional[float]:
    try:
        return auroc_horizon(data, scores, horizon)
    except (NoPositivesError, NoNegativesError) as e:
        logger.warning(f"{label}: AUROC undefined ({e})")
        return None


def assert_no_leakage(train_ids: Sequence[str], test_ids: Sequence[str], label: str) -> None:
    overlap = set(train_ids) & set(test_ids)
    if overlap:
        raise LeakageError(f"{label}: {len(overlap)} test patients were used for training or tuning, "
                           f"e.g. {sorted(overlap)[:3]}")


def _tuned_ids(search: SearchResult) -> List[str]:
    ids = set()
    for trial_records in search.records:
        for record in trial_records:
            ids.update(record.train_ids)
            ids.update(record.val_ids)
    return sorted(ids)


def _fit_learned(cohort: Cohort, modalities: Tuple[str, ...], plan: FoldPlan, k: int,
                 spec: SearchSpec, base: TrainConfig, seed: int, jobs: int):
    search = search_hyperparameters(cohort, modalities, plan.inner_splits(k), spec, base,
                                    seed=derive_seed(seed, "search"), jobs=jobs)
    epochs = select_epochs(search.best_records)
    train_set = SurvivalSet.from_cohort(cohort, modalities, plan.outer_train(k))
    final = train(train_set, None, search.best.hidden_dim, search.best.dropout,
                  search.best.train_config(base), derive_seed(seed, "final"), modalities,
                  fixed_epochs=epochs)
    train_ids = sorted(set(train_set.ids) | set(_tuned_ids(search)))
    return search, epochs, final.model, train_ids


def _unimodal(cohort: Cohort, modality: str, plan: FoldPlan, k: int, spec: SearchSpec,
              base: TrainConfig, master_seed: int, jobs: int, cache: UnimodalCache) -> _UnimodalFold:
    key = (modality, k)
    if key not in cache:
        strategy = Strategy.unimodal_wsi if modality == "wsi" else Strategy.unimodal_ct
        seed = derive_seed(master_seed, strategy.value, k)
        search, epochs, model, train_ids = _fit_learned(cohort, (modality,), plan, k, spec, base, seed, jobs)
        cache[key] = _UnimodalFold(search=search, epochs=epochs, model=model, seed=seed, train_ids=train_ids)
    return cache[key]


def _trial_dict(trial: TrialConfig) -> dict:
    return trial.model_dump()


def _check_modalities(cohort: Cohort, strategy: Strategy) -> None:
    for modality in strategy.modalities:
        if not cohort.has_modality(modality):
            raise MissingModalityError(f"strategy {strategy.value} needs {modality!r} embeddings for every patient")


@measure_time
def run_strategy(cohort: Cohort, strategy: Union[Strategy, str], plan: FoldPlan,
                 spec: SearchSpec, base: Optional[TrainConfig] = None,
                 point_table: Optional[PointTable] = None, master_seed: int = 0,
                 horizon_months: float = DEFAULT_HORIZON_MONTHS, rt_repeats: int = 100,
                 jobs: int = 1, checkpoint_dir: Optional[Path] = None,
                 cache: Optional[UnimodalCache] = None, config_hash: str = "") -> StrategyResult:
    """
    Evaluate ``strategy`` on every outer fold of ``plan``.

    Learned strategies search hyperparameters on the inner folds, retrain on
    the full outer training set for the selected epoch count and score the
    outer test fold. The clinical baseline scores the test fold directly.

    Args:
        cohort: Loaded cohort
        strategy: Strategy or its name
        plan: Nested fold plan shared by every strategy
        spec: Search space, budget and sampler
        base: Training settings the trials start from
        point_table: Required by the clinical baseline
        master_seed: Root of the per-strategy, per-fold seeds
        horizon_months: AUROC horizon
        rt_repeats: Tie-breaking repeats for the clinical baseline
        jobs: Parallel workers for search trials
        checkpoint_dir: Where to save each fold's final model, if given
        cache: Unimodal pipelines shared with the late-fusion strategy
        config_hash: Recorded on the result for provenance

    Returns:
        StrategyResult with one FoldResult per outer fold

    Raises:
        LeakageError: if a test patient was used for training or tuning
    """
    strategy = Strategy(strategy)
    base = base or TrainConfig()
    cache = {} if cache is None else cache
    _check_modalities(cohort, strategy)
    if not strategy.learned and point_table is None:
        raise ValueError(f"strategy {strategy.value} needs a point table")

    folds: List[FoldResult] = []
    for k in range(plan.n_outer):
        test_idx = plan.outer_test(k)
        label = f"{strategy.value} fold {k}"
        seed = derive_seed(master_seed, strategy.value, k)

        if strategy in (Strategy.leibovich, Strategy.leibovich_rt):
            scores, scored, coverage = leibovich_cohort_scores(cohort, point_table, list(test_idx))
            data = cohort.survival_data(scored)
            seeds = {"fold": seed}
            if strategy is Strategy.leibovich:
                value = c_index(data, scores)
            else:
                seeds["ties"] = derive_seed(seed, "ties")
                value = c_index_random_ties(data, scores, n_repeats=rt_repeats, seed=seeds["ties"]).mean
            result = FoldResult(fold=k, c_index=value, auroc=_safe_auroc(data, scores, horizon_months, label),
                                seeds=seeds, test_ids=coverage.scored_ids, n_scored=len(scored))

        elif strategy is Strategy.late:
            wsi = _unimodal(cohort, "wsi", plan, k, spec, base, master_seed, jobs, cache)
            ct = _unimodal(cohort, "ct", plan, k, spec, base, master_seed, jobs, cache)
            splits = []
            for j, (_, val_idx) in enumerate(plan.inner_splits(k)):
                splits.append((wsi.search.best_records[j].val_risk, ct.search.best_records[j].val_risk,
                               cohort.survival_data(val_idx)))
            weight, _ = tune_alpha_folds(splits, spec.alpha_step)
            test_set = SurvivalSet.from_cohort(cohort, ("wsi", "ct"), test_idx)
            scores = late_fuse(wsi.model.predict(test_set.features), ct.model.predict(test_set.features), weight)
            if checkpoint_dir is not None:
                save_late_fusion(wsi.model, ct.model, weight, Path(checkpoint_dir) / f"late_fold{k}.json")
            result = FoldResult(
                fold=k, c_index=c_index(test_set.data, scores),
                auroc=_safe_auroc(test_set.data, scores, horizon_months, label),
                alpha=weight.alpha, epochs={"wsi": wsi.epochs, "ct": ct.epochs},
                trial_config={"wsi": _trial_dict(wsi.search.best), "ct": _trial_dict(ct.search.best)},
                seeds={"wsi": wsi.seed, "ct": ct.seed},
                train_ids=sorted(set(wsi.train_ids) | set(ct.train_ids)), test_ids=test_set.ids,
            )

        elif strategy in (Strategy.unimodal_wsi, Strategy.unimodal_ct):
            modality = strategy.modalities[0]
            uni = _unimodal(cohort, modality, plan, k, spec, base, master_seed, jobs, cache)
            test_set = SurvivalSet.from_cohort(cohort, strategy.modalities, test_idx)
            scores = uni.model.predict(test_set.features)
            if checkpoint_dir is not None:
                save_checkpoint(uni.model, Path(checkpoint_dir) / f"{strategy.value}_fold{k}.cxmp")
            result = FoldResult(
                fold=k, c_index=c_index(test_set.data, scores),
                auroc=_safe_auroc(test_set.data, scores, horizon_months, label),
                epochs=uni.epochs, trial_config=_trial_dict(uni.search.best),
                seeds={"fold": uni.seed}, train_ids=uni.train_ids, test_ids=test_set.ids,
            )

        else:
            search, epochs, model, train_ids = _fit_learned(cohort, strategy.modalities, plan, k, spec,
                                                            base, seed, jobs)
            test_set = SurvivalSet.from_cohort(cohort, strategy.modalities, test_idx)
            scores = model.predict(test_set.features)
            if checkpoint_dir is not None:
                save_checkpoint(model, Path(checkpoint_dir) / f"{strategy.value}_fold{k}.cxmp")
            result = FoldResult(
                fold=k, c_index=c_index(test_set.data, scores),
                auroc=_safe_auroc(test_set.data, scores, horizon_months, label),
                epochs=epochs, trial_config=_trial_dict(search.best),
                seeds={"fold": seed}, train_ids=train_ids, test_ids=test_set.ids,
            )

        assert_no_leakage(result.train_ids, result.test_ids, label)
        auroc_text = "n/a" if result.auroc is None else f"{result.auroc:.3f}"
        logger.info(f"{label}: C-index {result.c_index:.3f}, AUROC {auroc_text}")
        folds.append(result)

    outcome = StrategyResult(strategy=strategy, folds=folds, config_hash=config_hash,
                             fold_plan_hash=plan.sha256())
    logger.info(f"{strategy.value}: C-index {outcome.c_index.format()}")
    return outcome


def run_experiment(cohort: Cohort, strategies: Sequence[Union[Strategy, str]], plan: FoldPlan,
                   spec: SearchSpec, base: Optional[TrainConfig] = None,
                   point_table: Optional[PointTable] = None, **kwargs) -> List[StrategyResult]:
    """Run several strategies on one plan, sharing the unimodal pipelines."""
    ordered = sorted({Strategy(s) for s in strategies}, key=Strategy.order)
    cache: UnimodalCache = {}
    return [run_strategy(cohort, s, plan, spec, base=base, point_table=point_table, cache=cache, **kwargs)
            for s in ordered]
