"""
Training loop for risk models.

Minibatches of shuffled patients (batch size 16 by default) are scored with
the Cox loss over the risk sets inside the batch; batches without an event
are skipped. Parameters are updated with AdamW, the learning rate follows a
linear warmup into cosine annealing, and the epoch with the best validation
C-index is kept (early stopping with patience).
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import DegenerateTrainSetError, DegenerateValSetError, NoEventsError, NoEventsInBatchError
from ..utils.logging import get_logger
from ..utils.seeding import derive_seed, make_rng
from .cohort_io import Cohort, SurvivalData
from .metrics import c_index, comparable_pairs
from .nn import AdamW, MlpParams, RiskModel, build_model


logger = get_logger("Trainer")

IMPROVEMENT_TOLERANCE = 1e-6


class TrainConfig(BaseModel):
    """Optimizer and schedule settings. Bounds follow the tuning search space."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: float = Field(1e-4, ge=1e-5, le=1e-3)
    weight_decay: float = Field(1e-4, ge=1e-6, le=1e-2)
    l1_penalty: float = Field(1e-5, ge=1e-6, le=1e-2)
    lr_floor: float = Field(1e-6, ge=1e-6, le=1e-2)
    max_epochs: int = Field(200, ge=1, le=200)
    patience: int = Field(10, ge=1)
    batch_size: int = Field(16, ge=1)
    warmup_epochs: int = Field(10, ge=0)
    full_batch: bool = False
    adam_beta1: float = Field(0.9, gt=0, lt=1)
    adam_beta2: float = Field(0.999, gt=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)

    @model_validator(mode="after")
    def _warmup_before_end(self):
        if self.warmup_epochs >= self.max_epochs:
            raise ValueError("warmup_epochs must be smaller than max_epochs")
        return self


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_c_index: Optional[float]
    learning_rate: float


@dataclass
class TrainResult:
    model: RiskModel
    best_epoch: int
    history: List[EpochRecord] = field(default_factory=list)
    best_val_c_index: Optional[float] = None

    @property
    def params(self) -> MlpParams:
        return self.model.params


@dataclass
class SurvivalSet:
    """Features and outcomes of a subset of a cohort."""

    features: Dict[str, np.ndarray]
    data: SurvivalData
    ids: List[str]

    @classmethod
    def from_cohort(cls, cohort: Cohort, modalities: Sequence[str],
                    indices: Optional[Sequence[int]] = None) -> "SurvivalSet":
        positions = list(range(len(cohort))) if indices is None else list(indices)
        return cls(
            features={m: cohort.features(m, positions) for m in modalities},
            data=cohort.survival_data(positions),
            ids=[cohort.patients[i].patient_id for i in positions],
        )

    def __len__(self) -> int:
        return len(self.data)

    def take(self, rows: Sequence[int]) -> "SurvivalSet":
        rows = np.asarray(rows, dtype=np.int64)
        return SurvivalSet(
            features={m: x[rows] for m, x in self.features.items()},
            data=self.data.subset(rows),
            ids=[self.ids[i] for i in rows],
        )


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Linear warmup to ``learning_rate``, then cosine annealing to ``lr_floor``."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch < cfg.warmup_epochs:
        return cfg.learning_rate * (epoch + 1) / cfg.warmup_epochs
    span = cfg.max_epochs - cfg.warmup_epochs
    progress = min(epoch - cfg.warmup_epochs, span) / span
    return cfg.lr_floor + 0.5 * (cfg.learning_rate - cfg.lr_floor) * (1.0 + math.cos(math.pi * progress))


def train_step(model: RiskModel, batch: SurvivalSet, cfg: TrainConfig,
               rng: Optional[np.random.Generator], optimizer: AdamW, lr: float) -> float:
    """One AdamW update on ``batch``. Updates ``model`` in place and returns the batch loss."""
    if batch.data.n_events == 0:
        raise NoEventsInBatchError("batch has no events")
    try:
        loss, grads = model.loss_and_grads(batch.features, batch.data, l1_penalty=cfg.l1_penalty,
                                           train=True, dropout_rng=rng)
    except NoEventsError as e:
        raise NoEventsInBatchError(str(e)) from e
    optimizer.step(model.named_parameters(), grads, lr=lr,
                   weight_decay=cfg.weight_decay, decay_names=model.weight_names())
    return loss


def _has_comparable_pair(data: SurvivalData) -> bool:
    return bool(comparable_pairs(data).any())


def _batches(n: int, cfg: TrainConfig, rng: np.random.Generator) -> List[np.ndarray]:
    order = rng.permutation(n)
    if cfg.full_batch:
        return [order]
    return [order[i:i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]


def fit(model: RiskModel, train_set: SurvivalSet, val_set: Optional[SurvivalSet],
        cfg: TrainConfig, seed: int, fixed_epochs: Optional[int] = None) -> TrainResult:
    """Train ``model`` in place.

    With ``val_set`` the run early-stops on validation C-index and returns the
    best snapshot. With ``fixed_epochs`` it trains exactly that many epochs
    without validation and returns the final parameters.
    """
    if train_set.data.n_events < 2:
        raise DegenerateTrainSetError(
            f"training set has {train_set.data.n_events} events; at least 2 are required"
        )
    if fixed_epochs is None:
        if val_set is None or not _has_comparable_pair(val_set.data):
            raise DegenerateValSetError("validation set has no comparable pair")
        n_epochs = cfg.max_epochs
    else:
        if fixed_epochs < 1:
            raise ValueError("fixed_epochs must be >= 1")
        n_epochs = fixed_epochs

    shuffle_rng = make_rng(derive_seed(seed, "shuffle"))
    dropout_rng = make_rng(derive_seed(seed, "dropout"))
    optimizer = AdamW(beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)

    history: List[EpochRecord] = []
    best_model = model.copy()
    best_epoch = 0
    best_score = -math.inf
    stale = 0

    for epoch in range(n_epochs):
        lr = lr_schedule(epoch, cfg)
        losses = []
        for rows in _batches(len(train_set), cfg, shuffle_rng):
            batch = train_set.take(rows)
            try:
                losses.append(train_step(model, batch, cfg, dropout_rng, optimizer, lr))
            except NoEventsInBatchError:
                logger.debug(f"epoch {epoch + 1}: skipped a batch of {len(rows)} without events")
        train_loss = float(np.mean(losses)) if losses else float("nan")

        if fixed_epochs is not None:
            history.append(EpochRecord(epoch + 1, train_loss, None, lr))
            continue

        val_score = c_index(val_set.data, model.predict(val_set.features))
        history.append(EpochRecord(epoch + 1, train_loss, val_score, lr))
        if val_score > best_score + IMPROVEMENT_TOLERANCE:
            best_score = val_score
            best_epoch = epoch + 1
            best_model = model.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.debug(f"early stop at epoch {epoch + 1}; best epoch {best_epoch} (C-index {best_score:.4f})")
                break

    if fixed_epochs is not None:
        return TrainResult(model=model.copy(), best_epoch=n_epochs, history=history)
    return TrainResult(model=best_model, best_epoch=best_epoch, history=history,
                       best_val_c_index=best_score)


def train(train_set: SurvivalSet, val_set: Optional[SurvivalSet], hidden_dim: int, dropout: float,
          cfg: TrainConfig, seed: int, modalities: Sequence[str],
          fixed_epochs: Optional[int] = None) -> TrainResult:
    """Build a fresh model for ``modalities`` and train it (see ``fit``)."""
    dims = {m: x.shape[1] for m, x in train_set.features.items()}
    model = build_model(modalities, dims, hidden_dim=hidden_dim, dropout=dropout,
                        seed=derive_seed(seed, "init"))
    return fit(model, train_set, val_set, cfg, seed, fixed_epochs=fixed_epochs)
