"""
survfusion

Cox risk models over per-modality patient embeddings, late and intermediate
fusion, a clinical point-score baseline and a nested cross-validation harness.
"""

from .core.cohort_io import Cohort, SurvivalData, load_manifest
from .core.fusion import late_fuse, tune_alpha
from .core.leibovich import adjusted_leibovich, load_point_table
from .core.metrics import auroc_horizon, c_index, c_index_random_ties
from .core.survival_core import cox_loss, cox_loss_grad
from .experiment.folds import make_fold_plan
from .experiment.runner import Strategy, run_strategy

__version__ = "0.1.0"
__all__ = [
    "Cohort",
    "SurvivalData",
    "load_manifest",
    "late_fuse",
    "tune_alpha",
    "adjusted_leibovich",
    "load_point_table",
    "auroc_horizon",
    "c_index",
    "c_index_random_ties",
    "cox_loss",
    "cox_loss_grad",
    "make_fold_plan",
    "Strategy",
    "run_strategy",
]
