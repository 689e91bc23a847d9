"""
Command-line interface.

    survfusion synth OUT_DIR       write a synthetic cohort (manifest, .femb files, ground truth)
    survfusion run                 nested cross-validation of the configured strategies
    survfusion eval CKPT MANIFEST  score a saved model (or late-fusion fold) on a cohort
    survfusion leibovich MANIFEST  score a manifest's clinical columns
    survfusion report RESULTS      re-render the summary table from a results file

Exit codes: 0 success, 2 configuration, 3 I/O or file format, 4 degenerate
data, 5 dimension mismatch.
"""
from functools import wraps
from pathlib import Path
from typing import Optional
import json
import shutil
import sys

import click

from . import __version__
from .config_loader import RunConfig, load_run_config
from .core.checkpoint import LateFusionCheckpoint, load_scorer
from .core.cohort_io import load_manifest, write_embeddings, write_manifest
from .core.leibovich import leibovich_cohort_scores, load_point_table
from .core.metrics import DEFAULT_HORIZON_MONTHS, auroc_horizon, c_index, c_index_random_ties
from .core.synthetic import generate_synthetic_cohort, tune_censoring_rate, write_ground_truth
from .errors import CohortIOError, ConfigError, NoNegativesError, NoPositivesError, SurvfusionError
from .experiment.folds import make_fold_plan
from .experiment.report import emit_report, read_results, render_table
from .experiment.runner import Strategy, run_experiment
from .utils.logging import get_logger, setup_logging
from .utils.seeding import derive_seed


logger = get_logger("CLI")


def _handle_errors(func):
    """Map package errors to their exit codes."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except SurvfusionError as e:
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"error: {e}", err=True)
            sys.exit(e.exit_code)
        except OSError as e:
            logger.error(f"I/O error: {e}")
            click.echo(f"error: {e}", err=True)
            sys.exit(CohortIOError.exit_code)
    return wrapper


def _load_config(ctx: click.Context, **overrides) -> RunConfig:
    opts = ctx.obj
    merged = {"seed": opts["seed"], "jobs": opts["jobs"], "metrics.horizon_months": opts["horizon_months"]}
    merged.update(overrides)
    cfg = load_run_config(opts["config"], environment=opts["environment"], **merged)
    setup_logging(cfg.logging.level, Path(cfg.logging.file) if cfg.logging.file else None,
                  cfg.logging.rotation, cfg.logging.retention)
    return cfg


def _prepare_output(path: Path, force: bool) -> None:
    if path.exists():
        if not force:
            raise ConfigError(f"output directory {path} exists; pass --force to replace it")
        logger.warning(f"Replacing existing output directory {path}")
        shutil.rmtree(path)
    path.mkdir(parents=True)


def _auroc_or_none(data, scores, horizon: float) -> Optional[float]:
    try:
        return auroc_horizon(data, scores, horizon)
    except (NoPositivesError, NoNegativesError):
        return None


def _echo_json(payload) -> None:
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="YAML file merged over the environment configuration.")
@click.option("--env", "environment", default=None, help="Configuration environment (default: $ENVIRONMENT or dev).")
@click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None, help="Master seed.")
@click.option("--jobs", type=click.IntRange(1), default=None, help="Parallel workers for search trials.")
@click.option("--force", is_flag=True, help="Replace an existing output directory.")
@click.option("--horizon-months", type=click.FloatRange(min=0, min_open=True), default=None,
              help=f"AUROC horizon in months (default {DEFAULT_HORIZON_MONTHS:g}).")
@click.version_option(__version__, prog_name="survfusion")
@click.pass_context
def cli(ctx, config_path, environment, seed, jobs, force, horizon_months):
    """Multimodal Cox risk models, fusion strategies and nested cross-validation."""
    ctx.obj = {"config": config_path, "environment": environment, "seed": seed, "jobs": jobs,
               "force": force, "horizon_months": horizon_months}


@cli.command()
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--target-event-fraction", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=None,
              help="Calibrate the censoring rate so this fraction of patients has an event.")
@click.pass_context
@_handle_errors
def synth(ctx, out_dir, target_event_fraction):
    """Write a synthetic cohort to OUT_DIR."""
    cfg = _load_config(ctx)
    spec = cfg.synthetic_spec()
    if target_event_fraction is not None:
        rate = tune_censoring_rate(spec, target_event_fraction)
        spec = spec.model_copy(update={"censoring_rate": rate})
        logger.info(f"Calibrated censoring rate to {rate:.6g}")

    out = Path(out_dir)
    _prepare_output(out, ctx.obj["force"])
    cohort, truth = generate_synthetic_cohort(spec)
    files = {m: f"{m}.femb" for m in cohort.modalities}
    for modality, name in files.items():
        write_embeddings(cohort.matrices[modality], out / name)
    write_manifest(cohort, out / "manifest.csv", files)
    write_ground_truth(truth, out / "ground_truth.json")
    (out / "synthetic_spec.json").write_text(
        json.dumps(spec.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    n_events = cohort.survival_data().n_events
    click.echo(f"wrote {len(cohort)} patients ({n_events} events) to {out}")


@cli.command()
@click.option("--manifest", type=click.Path(dir_okay=False), default=None, help="Overrides cohort.manifest.")
@click.option("--output", "output_dir", type=click.Path(file_okay=False), default=None, help="Overrides output_dir.")
@click.option("--strategy", "strategies", multiple=True, type=click.Choice([s.value for s in Strategy]),
              help="Restrict to these strategies (repeatable).")
@click.pass_context
@_handle_errors
def run(ctx, manifest, output_dir, strategies):
    """Run the nested cross-validation protocol and write a report."""
    overrides = {"cohort.manifest": manifest, "output_dir": output_dir}
    if strategies:
        overrides["strategies"] = list(strategies)
    cfg = _load_config(ctx, **overrides)
    if not cfg.cohort.manifest:
        raise ConfigError("cohort.manifest: no manifest configured (set it or pass --manifest)")

    cohort = load_manifest(cfg.cohort.manifest)
    table = None
    if any(not s.learned for s in cfg.strategies):
        table = load_point_table(cfg.cohort.leibovich_table)

    out = Path(cfg.output_dir)
    _prepare_output(out, ctx.obj["force"])

    plan_seed = cfg.fold_plan_seed()
    plan = make_fold_plan(cohort.survival_data(), plan_seed)
    (out / "fold_plan.json").write_text(json.dumps(plan.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    config_hash = cfg.sha256()
    experiment_seed = cfg.experiment_seed()
    results = run_experiment(
        cohort, cfg.strategies, plan, cfg.search, base=cfg.train, point_table=table,
        master_seed=experiment_seed, horizon_months=cfg.metrics.horizon_months,
        rt_repeats=cfg.metrics.rt_repeats, jobs=cfg.jobs, checkpoint_dir=out / "checkpoints",
        config_hash=config_hash,
    )

    metadata = {
        "version": __version__,
        "master_seed": cfg.seed,
        "derived_seeds": {
            "fold_plan": plan_seed,
            "experiment": experiment_seed,
            "strategies": {s.value: [derive_seed(experiment_seed, s.value, k) for k in range(plan.n_outer)]
                           for s in cfg.strategies},
        },
        "config": cfg.model_dump(mode="json", exclude={"jobs", "logging", "output_dir", "environment"}),
        "cohort": {"n_patients": len(cohort), "n_events": cohort.survival_data().n_events,
                   "modalities": cohort.modalities},
        "point_table_sha256": None if table is None else table.sha256,
    }
    summary = emit_report(results, out, metadata, cfg.metrics.horizon_months)
    click.echo(summary, nl=False)


@cli.command(name="eval")
@click.argument("checkpoint", type=click.Path(dir_okay=False))
@click.argument("manifest", type=click.Path(dir_okay=False))
@click.option("--patients", default=None, help="Comma-separated patient ids to score (default: all).")
@click.pass_context
@_handle_errors
def eval_cmd(ctx, checkpoint, manifest, patients):
    """Print C-index and AUROC of a saved model on a cohort.

    CHECKPOINT is a .cxmp file, or the .json file of a late-fusion fold.
    """
    horizon = ctx.obj["horizon_months"] or DEFAULT_HORIZON_MONTHS
    setup_logging("WARNING")
    model = load_scorer(checkpoint)
    cohort = load_manifest(manifest)
    indices = list(range(len(cohort)))
    if patients:
        wanted = [p.strip() for p in patients.split(",") if p.strip()]
        positions = {pid: i for i, pid in enumerate(cohort.patient_ids)}
        unknown = [p for p in wanted if p not in positions]
        if unknown:
            raise ConfigError(f"--patients: unknown ids {unknown[:5]}")
        indices = [positions[p] for p in wanted]

    for modality in model.modalities:
        if not cohort.has_modality(modality, indices):
            raise ConfigError(f"cohort lacks {modality!r} embeddings required by the checkpoint")
    features = {m: cohort.features(m, indices) for m in model.modalities}
    data = cohort.survival_data(indices)
    scores = model.predict(features)
    _echo_json({
        "checkpoint": str(checkpoint),
        "alpha": model.weight.alpha if isinstance(model, LateFusionCheckpoint) else None,
        "modalities": list(model.modalities),
        "n_patients": len(indices),
        "n_events": data.n_events,
        "c_index": c_index(data, scores),
        "auroc": _auroc_or_none(data, scores, horizon),
        "horizon_months": horizon,
    })


@cli.command()
@click.argument("manifest", type=click.Path(dir_okay=False))
@click.option("--table", "table_path", type=click.Path(dir_okay=False), default=None,
              help="Point table CSV (default: cohort.leibovich_table, else the packaged table).")
@click.option("--rt-repeats", type=click.IntRange(2), default=None,
              help="Random tie-breaking repeats (default: metrics.rt_repeats).")
@click.pass_context
@_handle_errors
def leibovich(ctx, manifest, table_path, rt_repeats):
    """Score a manifest's clinical columns with the adjusted Leibovich score."""
    opts = ctx.obj
    # stdout carries the JSON payload
    setup_logging("WARNING")
    cfg = load_run_config(opts["config"], environment=opts["environment"], seed=opts["seed"],
                          **{"metrics.horizon_months": opts["horizon_months"]})
    horizon = cfg.metrics.horizon_months
    table = load_point_table(table_path or cfg.cohort.leibovich_table)
    cohort = load_manifest(manifest)
    scores, scored, coverage = leibovich_cohort_scores(cohort, table)
    data = cohort.survival_data(scored)
    rt = c_index_random_ties(data, scores, n_repeats=rt_repeats or cfg.metrics.rt_repeats,
                             seed=cfg.leibovich_rt_seed())
    _echo_json({
        "coverage": coverage.to_dict(),
        "c_index": c_index(data, scores),
        "c_index_random_ties": rt.to_dict(),
        "auroc": _auroc_or_none(data, scores, horizon),
        "horizon_months": horizon,
    })


@cli.command()
@click.argument("results_file", type=click.Path(dir_okay=False))
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="Also write the table here.")
@click.pass_context
@_handle_errors
def report(ctx, results_file, output):
    """Re-render the summary table from a results file."""
    horizon = ctx.obj["horizon_months"] or DEFAULT_HORIZON_MONTHS
    table = render_table(read_results(results_file), horizon)
    if output:
        Path(output).write_text(table, encoding="utf-8")
    click.echo(table, nl=False)


def main():
    cli(prog_name="survfusion")


if __name__ == "__main__":
    main()
