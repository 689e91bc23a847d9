"""
Synthetic cohorts with a known proportional-hazards structure.

Embeddings are i.i.d. standard normal. The true log relative risk is
``r = sum_m x_m . beta_m`` over modalities; event times are Weibull with the
scale modulated by ``exp(r)`` so proportional hazards hold by construction;
censoring times are independent exponentials.

``complementary_fraction`` controls how much of the CT signal is new
information: the first ``round((1 - c) * k)`` signal coordinates of the
secondary modality are copies of the primary modality's signal coordinates
(shared signal); the rest are independent draws (complementary signal).
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union
import json

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import InvalidSpecError
from ..utils.logging import get_logger
from ..utils.seeding import make_rng
from .cohort_io import Cohort, EmbeddingMatrix, PatientRecord, SurvivalOutcome
from .leibovich import LeibovichFeatures, NStage, TStage


logger = get_logger("Synthetic")

PRIMARY_MODALITY = "wsi"


class SyntheticSpec(BaseModel):
    """Parameters of a synthetic cohort. Identical specs give identical cohorts."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_patients: int = Field(200, ge=2)
    dims: Dict[str, int] = Field(default_factory=lambda: {"wsi": 768, "ct": 768})
    # dense prefix of each modality's coefficient vector; remaining coords are 0
    beta: Dict[str, List[float]] = Field(default_factory=dict)
    complementary_fraction: float = Field(1.0, ge=0.0, le=1.0)
    weibull_shape: float = Field(1.5, gt=0)
    weibull_scale: float = Field(60.0, gt=0)
    censoring_rate: float = Field(0.01, gt=0)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    leibovich_noise: Optional[float] = Field(None, ge=0)

    @model_validator(mode="after")
    def _check_shapes(self):
        for modality, dim in self.dims.items():
            if dim < 1:
                raise ValueError(f"dims.{modality} must be >= 1")
        for modality, coefs in self.beta.items():
            if modality not in self.dims:
                raise ValueError(f"beta.{modality} has no matching entry in dims")
            if len(coefs) > self.dims[modality]:
                raise ValueError(f"beta.{modality} has {len(coefs)} entries but dims.{modality} is {self.dims[modality]}")
        return self

    @classmethod
    def parse(cls, data: dict) -> "SyntheticSpec":
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise InvalidSpecError(describe_validation_error(e, prefix="synthetic")) from e

    def full_beta(self, modality: str) -> np.ndarray:
        beta = np.zeros(self.dims[modality], dtype=np.float64)
        coefs = self.beta.get(modality, [])
        beta[:len(coefs)] = coefs
        return beta

    def modality_order(self) -> List[str]:
        rest = sorted(m for m in self.dims if m != PRIMARY_MODALITY)
        return ([PRIMARY_MODALITY] if PRIMARY_MODALITY in self.dims else []) + rest


def describe_validation_error(error: ValidationError, prefix: str = "") -> str:
    parts = []
    for item in error.errors():
        loc = ".".join(str(p) for p in item["loc"])
        key = f"{prefix}.{loc}" if prefix and loc else (prefix or loc)
        parts.append(f"{key}: {item['msg']}")
    return "; ".join(parts)


@dataclass(frozen=True)
class GroundTruth:
    beta: Dict[str, np.ndarray]
    true_risk: np.ndarray
    event_times: np.ndarray
    censor_times: np.ndarray

    def to_dict(self) -> dict:
        return {
            "beta": {m: b.tolist() for m, b in self.beta.items()},
            "true_risk": self.true_risk.tolist(),
            "event_times": self.event_times.tolist(),
            "censor_times": self.censor_times.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruth":
        return cls(
            beta={m: np.asarray(b, dtype=np.float64) for m, b in data["beta"].items()},
            true_risk=np.asarray(data["true_risk"], dtype=np.float64),
            event_times=np.asarray(data["event_times"], dtype=np.float64),
            censor_times=np.asarray(data["censor_times"], dtype=np.float64),
        )


def write_ground_truth(truth: GroundTruth, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(truth.to_dict(), indent=1) + "\n", encoding="utf-8")


def read_ground_truth(path: Union[str, Path]) -> GroundTruth:
    return GroundTruth.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _revalidate(spec: SyntheticSpec) -> SyntheticSpec:
    try:
        return SyntheticSpec.model_validate(spec.model_dump())
    except ValidationError as e:
        raise InvalidSpecError(describe_validation_error(e, prefix="synthetic")) from e


def _draw(spec: SyntheticSpec):
    """Draw embeddings, true risks, event times and unit-rate censoring draws."""
    rng = make_rng(spec.seed)
    n = spec.n_patients
    order = spec.modality_order()

    features: Dict[str, np.ndarray] = {}
    for modality in order:
        features[modality] = rng.standard_normal((n, spec.dims[modality]))

    primary = order[0]
    primary_signal = np.flatnonzero(spec.full_beta(primary))
    for modality in order[1:]:
        signal = np.flatnonzero(spec.full_beta(modality))
        n_shared = min(int(round((1.0 - spec.complementary_fraction) * len(signal))), len(primary_signal))
        for k in range(n_shared):
            features[modality][:, signal[k]] = features[primary][:, primary_signal[k]]

    # risks are computed from the stored float32 values the models will see
    features = {m: x.astype(np.float32) for m, x in features.items()}
    betas = {m: spec.full_beta(m) for m in order}
    true_risk = np.zeros(n, dtype=np.float64)
    for modality in order:
        true_risk += features[modality].astype(np.float64) @ betas[modality]

    u = rng.random(n)
    cumulative_hazard = -np.log1p(-u)
    event_times = spec.weibull_scale * np.power(cumulative_hazard / np.exp(true_risk), 1.0 / spec.weibull_shape)
    event_times = np.maximum(event_times, np.finfo(np.float64).tiny)
    unit_censor = np.maximum(rng.standard_exponential(n), np.finfo(np.float64).tiny)
    return rng, features, betas, true_risk, event_times, unit_censor


def _clinical_features(rng: np.random.Generator, true_risk: np.ndarray,
                       noise: float) -> List[LeibovichFeatures]:
    n = true_risk.size
    latent = true_risk + noise * rng.standard_normal(n)
    coin = rng.random(n)
    q = (np.argsort(np.argsort(latent, kind="stable"), kind="stable") + 1) / n

    grades = 1 + np.digitize(q, [0.2, 0.55, 0.85])
    stage_levels = [TStage.T1a, TStage.T1b, TStage.T2, TStage.T3, TStage.T4]
    stages = np.digitize(q, [0.25, 0.45, 0.6, 0.95])
    sizes = 2.0 + 12.0 * q

    out = []
    for i in range(n):
        if q[i] > 0.92:
            n_stage = NStage.N1plus
        else:
            n_stage = NStage.Nx if coin[i] < 0.5 else NStage.N0
        out.append(LeibovichFeatures(
            t_stage=stage_levels[int(stages[i])],
            n_stage=n_stage,
            tumor_size_cm=float(round(sizes[i], 1)),
            grade=int(grades[i]),
        ))
    return out


def generate_synthetic_cohort(spec: SyntheticSpec) -> Tuple[Cohort, GroundTruth]:
    """Generate a cohort and its ground truth. A pure function of ``spec``."""
    spec = _revalidate(spec)
    rng, features, betas, true_risk, event_times, unit_censor = _draw(spec)
    censor_times = unit_censor / spec.censoring_rate

    observed = np.minimum(event_times, censor_times)
    events = (event_times < censor_times).astype(np.int8)

    clinical: List[Optional[LeibovichFeatures]] = [None] * spec.n_patients
    if spec.leibovich_noise is not None:
        clinical = _clinical_features(rng, true_risk, spec.leibovich_noise)

    patients = [
        PatientRecord(
            patient_id=f"SYN{i + 1:04d}",
            outcome=SurvivalOutcome(float(observed[i]), int(events[i])),
            embeddings={m: i for m in features},
            leibovich=clinical[i],
        )
        for i in range(spec.n_patients)
    ]
    matrices = {m: EmbeddingMatrix(m, x) for m, x in features.items()}
    cohort = Cohort(patients=patients, matrices=matrices)
    truth = GroundTruth(beta=betas, true_risk=true_risk,
                        event_times=event_times, censor_times=censor_times)
    logger.debug(
        f"Generated {spec.n_patients} synthetic patients, {int(events.sum())} events "
        f"(seed={spec.seed})"
    )
    return cohort, truth


def tune_censoring_rate(spec: SyntheticSpec, target_event_fraction: float) -> float:
    """Censoring rate giving ``spec.seed`` the event count closest to a target.

    With the seed fixed, patient i has an event iff ``rate < E_i / T_i`` where
    ``E_i`` is its unit censoring draw and ``T_i`` its event time, so any rate
    strictly between the k-th and (k+1)-th largest ratio gives exactly k events.
    """
    if not 0.0 < target_event_fraction < 1.0:
        raise InvalidSpecError("target_event_fraction must lie in (0, 1)")
    spec = _revalidate(spec)
    _, _, _, _, event_times, unit_censor = _draw(spec)
    ratios = np.sort(unit_censor / event_times)[::-1]
    n = ratios.size
    k = min(max(int(round(target_event_fraction * n)), 1), n - 1)
    # geometric midpoint between the k-th and (k+1)-th largest ratio
    return float(np.sqrt(ratios[k - 1] * ratios[k]))
