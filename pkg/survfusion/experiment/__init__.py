"""Nested cross-validation protocol and reporting."""

from .folds import FoldPlan, make_fold_plan
from .report import emit_report, read_results
from .runner import Strategy, StrategyResult, run_experiment, run_strategy
from .search import SearchSpec, TrialConfig, search_hyperparameters, select_epochs

__all__ = [
    "FoldPlan",
    "make_fold_plan",
    "emit_report",
    "read_results",
    "Strategy",
    "StrategyResult",
    "run_experiment",
    "run_strategy",
    "SearchSpec",
    "TrialConfig",
    "search_hyperparameters",
    "select_epochs",
]
