"""Run orchestration: config -> generator -> evaluator -> tuner -> artifacts."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .adapter import BuiltinEvaluator, ExternalEvaluator, make_eval_fn
from .config import RunConfig
from .errors import ConfigError
from .kernel import Kernel, generate
from .knobs import KnobConfig
from .metrics import MetricVector
from .objective import CLONE, STRESS, TargetSpec
from .report import RunArtifacts, accuracy_rows, dump_json, emit_report, grid_csv, write_atomic
from .tuners import (CONVERGED, ERROR, EXHAUSTED, TARGET_MET, GridTooLarge, TuningReport,
                     brute_force, ga_tune, gd_tune, make_grid)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BUDGET = 2
EXIT_EVAL = 3


@dataclass
class TargetRun:
    target: TargetSpec
    report: TuningReport
    kernel: Optional[Kernel]
    artifacts: RunArtifacts
    exit_code: int


@dataclass
class RunOutcome:
    out_dir: Path
    runs: list[TargetRun] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        codes = [r.exit_code for r in self.runs]
        if EXIT_EVAL in codes:
            return EXIT_EVAL
        return max(codes, default=EXIT_OK)

    @property
    def reports(self) -> list[TuningReport]:
        return [r.report for r in self.runs]


def exit_code_for(report: TuningReport) -> int:
    if report.best_config is None or report.stop_reason == ERROR:
        return EXIT_EVAL
    if report.target["mode"] == CLONE:
        acc = report.best_accuracy
        return EXIT_OK if acc and acc["min"] >= report.target["accuracy"] else EXIT_BUDGET
    # stress has no accuracy goal: settling or finishing a grid is success, and a
    # restart means an earlier descent already settled before the budget ran out
    if report.stop_reason in (CONVERGED, EXHAUSTED, TARGET_MET):
        return EXIT_OK
    return EXIT_OK if any(e.restart for e in report.epochs) else EXIT_BUDGET


def build_kernel(config: RunConfig, best: dict) -> Kernel:
    return generate(KnobConfig(tuple(best.items())), config.static_size, config.seed,
                    config.fixed or None)


def make_evaluator(config: RunConfig, run_dir: Path):
    if config.evaluator == "external":
        return ExternalEvaluator(config.external, config.core, config.n_dyn, run_dir / "evals")
    return BuiltinEvaluator(config.core, config.n_dyn, config.energy)


def tune(config: RunConfig, target: TargetSpec, eval_fn) -> tuple[TuningReport, Optional[list]]:
    """Run the configured tuner for one target; grid rows come back for brute force."""
    if config.tuner == "gd":
        return gd_tune(config.space, target, config.gd, eval_fn, workers=config.workers), None
    if config.tuner == "ga":
        return ga_tune(config.space, target, config.ga, eval_fn, workers=config.workers), None
    b = config.brute
    try:
        grid = make_grid(config.space, b.levels, b.indices)
        res = brute_force(config.space, target, eval_fn, grid, cap=b.cap, workers=config.workers)
    except GridTooLarge as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(f"brute grid: {exc}") from None
    return res.report, res.rows()


def _run_one(config: RunConfig, target: TargetSpec, out: Path, plots: bool) -> TargetRun:
    evaluator = make_evaluator(config, out)
    eval_fn = make_eval_fn(evaluator, config.static_size, config.seed, config.fixed or None)
    report, rows = tune(config, target, eval_fn)
    kernel = build_kernel(config, report.best_config) if report.best_config else None
    metrics = MetricVector.from_dict(report.best_metrics) if report.best_metrics else None
    art = emit_report(report, out, kernel, metrics, rows, config.to_json(), plots=plots)
    return TargetRun(target, report, kernel, art, exit_code_for(report))


def run(config: RunConfig, plots: bool = True, out: Optional[str] = None) -> RunOutcome:
    """Tune every target of ``config``; batch runs get one subdirectory per clone."""
    out_dir = Path(out or config.out)
    outcome = RunOutcome(out_dir)
    targets = config.targets
    if len(targets) == 1:
        outcome.runs.append(_run_one(config, targets[0], out_dir, plots))
        return outcome
    for i, target in enumerate(targets):
        outcome.runs.append(_run_one(config, target, out_dir / f"clone{i}", plots))
    rows = accuracy_rows(outcome.reports)
    write_atomic(out_dir / "accuracy.csv", grid_csv(rows))
    write_atomic(out_dir / "batch.json", dump_json({
        "schema": 1,
        "clones": [{"dir": f"clone{i}", "stop_reason": r.report.stop_reason,
                    "exit_code": r.exit_code, "accuracy": r.report.best_accuracy}
                   for i, r in enumerate(outcome.runs)],
    }))
    return outcome


def run_clone(config: RunConfig, plots: bool = True) -> RunOutcome:
    if config.use_case != CLONE:
        raise ConfigError("run_clone needs use_case 'clone'")
    return run(config, plots)


def run_stress(config: RunConfig, plots: bool = True) -> RunOutcome:
    if config.use_case != STRESS:
        raise ConfigError("run_stress needs use_case 'stress'")
    return run(config, plots)


def summary_line(outcome: RunOutcome) -> str:
    parts = []
    for r in outcome.runs:
        rep = r.report
        if rep.best_accuracy:
            s = f"min acc {rep.best_accuracy['min']:.4f} mean {rep.best_accuracy['mean']:.4f}"
        elif rep.best_metrics:
            m = rep.target["metric"]
            s = f"{m} {rep.best_metrics[m]:.4f}"
        else:
            s = "no successful evaluation"
        parts.append(f"{rep.tuner}: {s}, {len(rep.epochs)} epochs, {rep.stop_reason}")
    return "; ".join(parts)


__all__ = ["EXIT_BUDGET", "EXIT_CONFIG", "EXIT_EVAL", "EXIT_OK", "RunOutcome", "TargetRun",
           "build_kernel", "exit_code_for", "make_evaluator", "run", "run_clone", "run_stress",
           "summary_line", "tune"]
