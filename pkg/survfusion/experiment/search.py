"""
Hyperparameter search over inner folds.

Samplers are registered by name so the search strategy can be switched from
configuration. ``random`` draws every trial independently from a seed derived
from (search seed, trial index); ``tpe`` asks Optuna's TPE sampler for one
trial at a time and reports the inner-fold score back before the next ask.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type
import math

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.cohort_io import Cohort
from ..core.trainer import SurvivalSet, TrainConfig, train
from ..errors import ConfigError, DegenerateInnerFoldError, DegenerateTrainSetError, DegenerateValSetError, MissingInnerRecordsError
from ..utils.logging import get_logger
from ..utils.performance import measure_time
from ..utils.seeding import derive_seed, make_rng, sklearn_seed


logger = get_logger("Search")

MIN_EPOCHS = 1
MAX_EPOCHS = 200

# widest ranges the search may cover
SEARCH_BOUNDS: Dict[str, Tuple[float, float]] = {
    "learning_rate": (1e-5, 1e-3),
    "weight_decay": (1e-6, 1e-2),
    "l1_penalty": (1e-6, 1e-2),
    "lr_floor": (1e-6, 1e-2),
    "hidden_dim": (32, 512),
    "dropout": (0.0, 0.5),
}
LOG_UNIFORM = ("learning_rate", "weight_decay", "l1_penalty", "lr_floor")


class SearchSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: Tuple[float, float] = SEARCH_BOUNDS["learning_rate"]
    weight_decay: Tuple[float, float] = SEARCH_BOUNDS["weight_decay"]
    l1_penalty: Tuple[float, float] = SEARCH_BOUNDS["l1_penalty"]
    lr_floor: Tuple[float, float] = SEARCH_BOUNDS["lr_floor"]
    hidden_dim: Tuple[int, int] = SEARCH_BOUNDS["hidden_dim"]
    dropout: Tuple[float, float] = SEARCH_BOUNDS["dropout"]
    alpha_step: float = Field(0.01, gt=0.0, le=1.0)
    budget: int = Field(50, ge=1)
    sampler: str = "random"
    seed: int = Field(0, ge=0)

    @field_validator("learning_rate", "weight_decay", "l1_penalty", "lr_floor", "hidden_dim", "dropout")
    @classmethod
    def _within_bounds(cls, value, info):
        low, high = value
        lo_bound, hi_bound = SEARCH_BOUNDS[info.field_name]
        if low > high:
            raise ValueError(f"lower bound {low} exceeds upper bound {high}")
        if low < lo_bound or high > hi_bound:
            raise ValueError(f"range [{low}, {high}] leaves the allowed [{lo_bound}, {hi_bound}]")
        return value

    @model_validator(mode="after")
    def _known_sampler(self):
        if self.sampler.lower() not in default_registry.list_samplers():
            raise ValueError(
                f"unknown sampler {self.sampler!r}; choose from {default_registry.list_samplers()}"
            )
        return self


class TrialConfig(BaseModel):
    """One sampled point of the search space."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: float
    weight_decay: float
    l1_penalty: float
    lr_floor: float
    hidden_dim: int
    dropout: float

    def train_config(self, base: TrainConfig) -> TrainConfig:
        return base.model_copy(update={
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "l1_penalty": self.l1_penalty,
            "lr_floor": self.lr_floor,
        })


@dataclass
class InnerRecord:
    trial: int
    inner_fold: int
    val_c_index: float
    best_epoch: int
    train_ids: List[str]
    val_ids: List[str]
    val_risk: np.ndarray = field(repr=False, default=None)


@dataclass
class SearchResult:
    best: TrialConfig
    best_trial: int
    trials: List[TrialConfig]
    mean_scores: List[float]
    records: List[List[InnerRecord]]

    @property
    def best_records(self) -> List[InnerRecord]:
        return self.records[self.best_trial]


# --- samplers ---------------------------------------------------------------

class RandomSampler:
    """Independent draws: log-uniform rates, uniform-integer width, uniform dropout."""

    sequential = False

    def __init__(self, spec: SearchSpec, seed: int):
        self.spec = spec
        self.seed = seed

    def ask(self, trial: int) -> TrialConfig:
        rng = make_rng(derive_seed(self.seed, "trial", trial))
        values: Dict[str, Any] = {}
        for name in LOG_UNIFORM:
            low, high = getattr(self.spec, name)
            values[name] = float(math.exp(rng.uniform(math.log(low), math.log(high))))
        low, high = self.spec.hidden_dim
        values["hidden_dim"] = int(rng.integers(low, high + 1))
        low, high = self.spec.dropout
        values["dropout"] = float(rng.uniform(low, high))
        return TrialConfig(**values)

    def tell(self, trial: int, value: float) -> None:
        pass


class TpeSampler:
    """Optuna TPE with a fixed seed; trials are asked and told one at a time."""

    sequential = True

    def __init__(self, spec: SearchSpec, seed: int):
        try:
            import optuna
        except ImportError as e:
            raise ConfigError("sampler 'tpe' requires optuna (pip install survfusion[bayes])") from e
        optuna.logging.set_verbosity(optuna.logging.WARNING)
        self.spec = spec
        self._study = optuna.create_study(
            direction="maximize",
            sampler=optuna.samplers.TPESampler(seed=sklearn_seed(seed)),
        )
        self._pending: Dict[int, Any] = {}

    def ask(self, trial: int) -> TrialConfig:
        t = self._study.ask()
        self._pending[trial] = t
        values: Dict[str, Any] = {}
        for name in LOG_UNIFORM:
            low, high = getattr(self.spec, name)
            values[name] = t.suggest_float(name, low, high, log=True)
        values["hidden_dim"] = t.suggest_int("hidden_dim", *self.spec.hidden_dim)
        values["dropout"] = t.suggest_float("dropout", *self.spec.dropout)
        return TrialConfig(**values)

    def tell(self, trial: int, value: float) -> None:
        self._study.tell(self._pending.pop(trial), value)


class SamplerRegistry:
    def __init__(self):
        self._registry: Dict[str, Type[Any]] = {}

    def register(self, name: str, sampler_cls: Type[Any]):
        self._registry[name.lower()] = sampler_cls

    def get(self, name: str):
        return self._registry.get(name.lower())

    def list_samplers(self) -> List[str]:
        return list(self._registry.keys())


default_registry = SamplerRegistry()
default_registry.register("random", RandomSampler)
default_registry.register("tpe", TpeSampler)


def register_sampler(name: str, sampler_cls: Type[Any]):
    default_registry.register(name, sampler_cls)


def get_sampler(spec: SearchSpec, seed: int):
    sampler_cls = default_registry.get(spec.sampler)
    if sampler_cls is None:
        raise ConfigError(f"unknown sampler {spec.sampler!r}")
    return sampler_cls(spec, seed)


# --- search -----------------------------------------------------------------

def evaluate_trial(cohort: Cohort, modalities: Sequence[str],
                   inner_splits: Sequence[Tuple[np.ndarray, np.ndarray]],
                   trial_config: TrialConfig, base: TrainConfig,
                   trial: int, seed: int) -> List[InnerRecord]:
    """Train ``trial_config`` on every inner split; one record per split."""
    cfg = trial_config.train_config(base)
    records = []
    for j, (train_idx, val_idx) in enumerate(inner_splits):
        train_set = SurvivalSet.from_cohort(cohort, modalities, train_idx)
        val_set = SurvivalSet.from_cohort(cohort, modalities, val_idx)
        try:
            result = train(train_set, val_set, trial_config.hidden_dim, trial_config.dropout,
                           cfg, derive_seed(seed, "trial", trial, "inner", j), modalities)
        except (DegenerateTrainSetError, DegenerateValSetError) as e:
            raise DegenerateInnerFoldError(f"inner fold {j}: {e}") from e
        records.append(InnerRecord(
            trial=trial,
            inner_fold=j,
            val_c_index=float(result.best_val_c_index),
            best_epoch=result.best_epoch,
            train_ids=train_set.ids,
            val_ids=val_set.ids,
            val_risk=result.model.predict(val_set.features),
        ))
    return records


@measure_time
def search_hyperparameters(cohort: Cohort, modalities: Sequence[str],
                           inner_splits: Sequence[Tuple[np.ndarray, np.ndarray]],
                           spec: SearchSpec, base: TrainConfig,
                           seed: Optional[int] = None, jobs: int = 1) -> SearchResult:
    """Sample ``spec.budget`` configurations and keep the best mean inner C-index.

    Ties go to the earlier trial. Results do not depend on ``jobs``.
    """
    if not inner_splits:
        raise DegenerateInnerFoldError("no inner folds to search on")
    seed = spec.seed if seed is None else seed
    sampler = get_sampler(spec, seed)

    if sampler.sequential:
        trials, records = [], []
        for t in range(spec.budget):
            trial_config = sampler.ask(t)
            trial_records = evaluate_trial(cohort, modalities, inner_splits, trial_config, base, t, seed)
            sampler.tell(t, float(np.mean([r.val_c_index for r in trial_records])))
            trials.append(trial_config)
            records.append(trial_records)
    else:
        trials = [sampler.ask(t) for t in range(spec.budget)]
        records = Parallel(n_jobs=jobs)(
            delayed(evaluate_trial)(cohort, modalities, inner_splits, trial_config, base, t, seed)
            for t, trial_config in enumerate(trials)
        )

    mean_scores = [float(np.mean([r.val_c_index for r in trial_records])) for trial_records in records]
    best = int(np.argmax(mean_scores))
    logger.debug(f"{'+'.join(modalities)}: best trial {best} of {spec.budget} "
                 f"(mean inner C-index {mean_scores[best]:.4f})")
    return SearchResult(best=trials[best], best_trial=best, trials=trials,
                        mean_scores=mean_scores, records=list(records))


def select_epochs(records: Sequence) -> int:
    """Median of the inner best epochs, rounded half up and clamped to [1, 200]."""
    epochs = [r.best_epoch if isinstance(r, InnerRecord) else int(r) for r in records]
    if not epochs:
        raise MissingInnerRecordsError("no inner records to select an epoch count from")
    median = float(np.median(epochs))
    return int(min(max(math.floor(median + 0.5), MIN_EPOCHS), MAX_EPOCHS))
