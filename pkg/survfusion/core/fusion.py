"""
Multimodal fusion.

Late fusion averages per-modality risk scores post hoc,
``R = alpha * R_wsi + (1 - alpha) * R_ct``, with alpha tuned on validation
C-index over a grid. Intermediate fusion projects the CT embedding to the WSI
dimension with a trainable linear layer (no activation) and concatenates
``[wsi, projected ct]`` (WSI block first) as the input of a single head.
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import DegenerateValSetError, DimensionMismatchError, LengthMismatchError, NoComparablePairsError
from ..utils.logging import get_logger
from ..utils.seeding import make_rng
from .cohort_io import SurvivalData
from .metrics import c_index


logger = get_logger("Fusion")


@dataclass(frozen=True)
class LateFusionWeight:
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass
class CtProjection:
    """Linear map from the CT embedding to the WSI embedding dimension."""

    W: np.ndarray  # wsi_dim x ct_dim
    b: np.ndarray  # wsi_dim

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        if self.W.ndim != 2 or self.W.shape[0] != self.b.size:
            raise DimensionMismatchError(
                f"projection weight {self.W.shape} does not match bias of length {self.b.size}"
            )

    @property
    def wsi_dim(self) -> int:
        return int(self.W.shape[0])

    @property
    def ct_dim(self) -> int:
        return int(self.W.shape[1])

    @classmethod
    def initialize(cls, wsi_dim: int, ct_dim: int, seed: int) -> "CtProjection":
        bound = 1.0 / np.sqrt(ct_dim)
        rng = make_rng(seed)
        return cls(W=rng.uniform(-bound, bound, size=(wsi_dim, ct_dim)), b=np.zeros(wsi_dim))


def late_fuse(r_wsi, r_ct, w: LateFusionWeight) -> np.ndarray:
    """
    Combine per-modality risk scores into one late-fusion score.

    Args:
        r_wsi: WSI risk scores, one per patient
        r_ct: CT risk scores in the same patient order
        w: Fusion weight; alpha multiplies the WSI scores

    Returns:
        ``alpha * r_wsi + (1 - alpha) * r_ct``; alpha 0 or 1 returns a copy of one input exactly

    Raises:
        LengthMismatchError: if the two score vectors differ in length
    """
    r_wsi = np.asarray(r_wsi, dtype=np.float64).ravel()
    r_ct = np.asarray(r_ct, dtype=np.float64).ravel()
    if r_wsi.size != r_ct.size:
        raise LengthMismatchError(f"{r_wsi.size} WSI scores but {r_ct.size} CT scores")
    if w.alpha == 1.0:
        return r_wsi.copy()
    if w.alpha == 0.0:
        return r_ct.copy()
    return w.alpha * r_wsi + (1.0 - w.alpha) * r_ct


def alpha_grid(grid_step: float = 0.01) -> np.ndarray:
    if not 0.0 < grid_step <= 1.0:
        raise ValueError("grid_step must lie in (0, 1]")
    n = int(round(1.0 / grid_step))
    grid = np.round(np.arange(n + 1) * grid_step, 12)
    grid = grid[grid <= 1.0]
    if grid[-1] != 1.0:
        grid = np.append(grid, 1.0)
    return grid


def tune_alpha_folds(splits: Sequence[Tuple[np.ndarray, np.ndarray, SurvivalData]],
                     grid_step: float = 0.01) -> Tuple[LateFusionWeight, List[float]]:
    """Alpha maximizing the mean validation C-index over one or more splits.

    Each split is ``(r_wsi, r_ct, data)``. Ties go to the larger alpha.
    Returns the weight and the per-grid-point mean C-index.
    """
    if not splits:
        raise DegenerateValSetError("no validation splits to tune alpha on")
    grid = alpha_grid(grid_step)
    scores = np.zeros(grid.size)
    for r_wsi, r_ct, data in splits:
        for k, alpha in enumerate(grid):
            try:
                scores[k] += c_index(data, late_fuse(r_wsi, r_ct, LateFusionWeight(float(alpha))))
            except NoComparablePairsError as e:
                raise DegenerateValSetError(str(e)) from e
    scores /= len(splits)
    best = float(scores.max())
    # last index attaining the maximum is the largest alpha
    k_best = int(np.flatnonzero(scores == best)[-1])
    logger.debug(f"Tuned alpha={grid[k_best]:.2f} (mean validation C-index {best:.4f})")
    return LateFusionWeight(float(grid[k_best])), scores.tolist()


def tune_alpha(r_wsi, r_ct, val_data: SurvivalData, grid_step: float = 0.01) -> LateFusionWeight:
    """Grid point in {0, step, ..., 1} maximizing validation C-index of ``late_fuse``."""
    weight, _ = tune_alpha_folds([(r_wsi, r_ct, val_data)], grid_step)
    return weight


def ct_project(p: CtProjection, e_ct) -> np.ndarray:
    """``W . e_ct + b`` for a single vector or a batch of row vectors."""
    e_ct = np.asarray(e_ct, dtype=np.float64)
    if e_ct.shape[-1] != p.ct_dim:
        raise DimensionMismatchError(f"CT embedding has {e_ct.shape[-1]} entries, projection expects {p.ct_dim}")
    return e_ct @ p.W.T + p.b


def concat_embeddings(e_wsi, e_ct_proj) -> np.ndarray:
    """``[wsi, projected ct]`` along the last axis."""
    e_wsi = np.asarray(e_wsi, dtype=np.float64)
    e_ct_proj = np.asarray(e_ct_proj, dtype=np.float64)
    if e_wsi.shape != e_ct_proj.shape:
        raise DimensionMismatchError(
            f"projected CT block {e_ct_proj.shape} does not match WSI block {e_wsi.shape}"
        )
    return np.concatenate([e_wsi, e_ct_proj], axis=-1)
