"""
Run reports.

    results.jsonl      one record per strategy x outer fold
    summary.txt        mean±std table, best and second-best learned strategy marked
    per_fold.csv       plot-ready per-fold values
    run_metadata.json  seeds, hashes and the assumptions behind the numbers
    fold_audit.json    patient ids used for training/tuning and testing per fold

Every file is a pure function of the results and metadata, so identical runs
produce identical bytes.
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union
import json

import pandas as pd

from ..core.metrics import summarize_defined, summarize_folds
from ..errors import CohortIOError, EmptyInputError, MalformedRowError, MissingFileError
from ..utils.logging import get_logger
from .runner import FoldResult, Strategy, StrategyResult


logger = get_logger("Report")

RESULTS_FILE = "results.jsonl"
SUMMARY_FILE = "summary.txt"
PER_FOLD_FILE = "per_fold.csv"
METADATA_FILE = "run_metadata.json"
AUDIT_FILE = "fold_audit.json"

RECORD_FIELDS = ("strategy", "fold", "c_index", "auroc", "alpha", "epochs", "trial_config", "seeds")

ASSUMPTIONS = {
    "epoch_rule": "median of the inner-fold best epochs for the selected trial, rounded half up, clamped to [1, 200]",
    "auroc_horizon": "patients censored before the horizon are excluded from AUROC",
    "std": "population standard deviation across outer folds",
    "alpha": "late-fusion weight tuned per outer fold on inner validation predictions",
    "cox_ties": "Breslow",
    "time_unit": "months",
    "search": "seeded random search unless sampler = tpe",
}


class ResultsLog:
    """Line-delimited results file with filtered reads."""

    def __init__(self, log_file: Union[str, Path]):
        self.log_file = Path(log_file)

    def reset(self):
        self.log_file.parent.mkdir(parents=True, exist_ok=True)
        self.log_file.write_text("", encoding="utf-8")

    def log_fold(self, strategy: Strategy, fold: FoldResult):
        entry = {
            "strategy": strategy.value,
            "fold": fold.fold,
            "c_index": fold.c_index,
            "auroc": fold.auroc,
            "alpha": fold.alpha,
            "epochs": fold.epochs,
            "trial_config": fold.trial_config,
            "seeds": fold.seeds,
        }
        with open(self.log_file, "a", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(entry, ensure_ascii=False) + "\n")

    def get_records(self, strategy: Optional[str] = None, fold: Optional[int] = None) -> List[Dict[str, Any]]:
        if not self.log_file.exists():
            raise MissingFileError(f"results file not found: {self.log_file}")
        entries = []
        with open(self.log_file, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError as e:
                    raise MalformedRowError(f"{self.log_file}: {e.msg}", row=line_number) from e
                missing = [k for k in RECORD_FIELDS if k not in entry]
                if missing:
                    raise MalformedRowError(f"{self.log_file}: missing fields {missing}", row=line_number)
                if strategy and entry["strategy"] != strategy:
                    continue
                if fold is not None and entry["fold"] != fold:
                    continue
                entries.append(entry)
        return entries

    def get_statistics(self, strategy: str) -> Dict[str, Any]:
        records = self.get_records(strategy=strategy)
        if not records:
            return {"n_folds": 0}
        c = summarize_folds([r["c_index"] for r in records])
        auroc = summarize_defined([r["auroc"] for r in records])
        return {
            "n_folds": len(records),
            "c_index": c.to_dict(),
            "auroc": None if auroc is None else auroc.to_dict(),
        }


def read_results(path: Union[str, Path]) -> List[StrategyResult]:
    """Rebuild strategy results (per-fold numbers only) from a results file."""
    records = ResultsLog(path).get_records()
    grouped: Dict[Strategy, List[FoldResult]] = {}
    for r in records:
        try:
            strategy = Strategy(r["strategy"])
        except ValueError as e:
            raise MalformedRowError(f"unknown strategy {r['strategy']!r}") from e
        grouped.setdefault(strategy, []).append(FoldResult(
            fold=r["fold"], c_index=r["c_index"], auroc=r["auroc"], alpha=r["alpha"],
            epochs=r["epochs"], trial_config=r["trial_config"], seeds=r["seeds"],
        ))
    return [StrategyResult(strategy=s, folds=sorted(grouped[s], key=lambda f: f.fold))
            for s in sorted(grouped, key=Strategy.order)]


def rank_learned(results: Sequence[StrategyResult]) -> List[Strategy]:
    """Learned strategies by mean C-index, descending; equal means keep strategy order."""
    learned = [r for r in results if r.strategy.learned]
    ranked = sorted(learned, key=lambda r: (-r.c_index.mean, Strategy.order(r.strategy)))
    return [r.strategy for r in ranked]


def render_table(results: Sequence[StrategyResult], horizon_months: float = 60.0) -> str:
    if not results:
        raise EmptyInputError("no strategy results to report")
    ordered = sorted(results, key=lambda r: Strategy.order(r.strategy))
    ranked = rank_learned(ordered)
    marks = {}
    if ranked:
        marks[ranked[0]] = "best"
    elif len(ordered) == 1:
        # one row is marked best whatever its kind
        marks[ordered[0].strategy] = "best"
    if len(ranked) > 1:
        marks[ranked[1]] = "second"

    rows = []
    for r in ordered:
        auroc = r.auroc
        auroc_text = "n/a" if auroc is None else auroc.format(3)
        if auroc is not None and r.n_auroc_undefined:
            auroc_text += f" ({len(r.folds) - r.n_auroc_undefined}/{len(r.folds)} folds)"
        rows.append((r.strategy.value, r.c_index.format(3), auroc_text, marks.get(r.strategy, "")))

    headers = ("Strategy", "C-index", f"AUROC@{horizon_months:g}mo", "")
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip(),
             "  ".join("-" * w for w in widths[:3])]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]

    by_strategy = {r.strategy: r for r in ordered}
    if len(ranked) > 1 and by_strategy[ranked[0]].c_index.mean == by_strategy[ranked[1]].c_index.mean:
        lines.append("")
        lines.append(f"note: {ranked[0].value} and {ranked[1].value} have equal mean C-index; "
                     f"ranked by strategy order")
    lines.append("")
    lines.append("mean±std over outer folds (population std)")
    return "\n".join(lines) + "\n"


def per_fold_frame(results: Sequence[StrategyResult]) -> pd.DataFrame:
    rows = []
    for r in sorted(results, key=lambda r: Strategy.order(r.strategy)):
        for f in r.folds:
            epochs = f.epochs
            if isinstance(epochs, dict):
                epochs = "/".join(f"{k}:{v}" for k, v in epochs.items())
            rows.append({"strategy": r.strategy.value, "fold": f.fold, "c_index": f.c_index,
                         "auroc": f.auroc, "alpha": f.alpha, "epochs": epochs})
    return pd.DataFrame(rows, columns=["strategy", "fold", "c_index", "auroc", "alpha", "epochs"])


def _write_json(path: Path, payload: Any):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def emit_report(results: Sequence[StrategyResult], out_dir: Union[str, Path],
                metadata: Optional[Dict[str, Any]] = None, horizon_months: float = 60.0) -> str:
    """Write every report file into ``out_dir`` and return the summary table.

    Args:
        results: Per-strategy results of one run
        out_dir: Existing output directory
        metadata: Seeds, config and hashes recorded in the metadata file
        horizon_months: AUROC horizon shown in the table header

    Returns:
        The rendered summary table
    """
    if not results:
        raise EmptyInputError("no strategy results to report")
    out_dir = Path(out_dir)
    ordered = sorted(results, key=lambda r: Strategy.order(r.strategy))
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        log = ResultsLog(out_dir / RESULTS_FILE)
        log.reset()
        for r in ordered:
            for f in r.folds:
                log.log_fold(r.strategy, f)

        table = render_table(ordered, horizon_months)
        (out_dir / SUMMARY_FILE).write_text(table, encoding="utf-8")
        per_fold_frame(ordered).to_csv(out_dir / PER_FOLD_FILE, index=False, lineterminator="\n")

        meta = dict(metadata or {})
        meta["assumptions"] = ASSUMPTIONS
        meta["horizon_months"] = horizon_months
        meta["fold_plan_sha256"] = sorted({r.fold_plan_hash for r in ordered if r.fold_plan_hash})
        meta["config_sha256"] = sorted({r.config_hash for r in ordered if r.config_hash})
        meta["summary"] = {
            r.strategy.value: {
                "c_index": r.c_index.to_dict(),
                "auroc": None if r.auroc is None else r.auroc.to_dict(),
                "auroc_undefined_folds": r.n_auroc_undefined,
            }
            for r in ordered
        }
        _write_json(out_dir / METADATA_FILE, meta)
        _write_json(out_dir / AUDIT_FILE, {
            r.strategy.value: [
                {"fold": f.fold, "train_ids": f.train_ids, "test_ids": f.test_ids} for f in r.folds
            ]
            for r in ordered
        })
    except OSError as e:
        raise CohortIOError(f"could not write report to {out_dir}: {e}") from e
    logger.info(f"Report written to {out_dir}")
    return table
