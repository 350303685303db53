"""Run artifacts: report JSON, per-epoch CSV, final kernel and metrics."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .kernel import Kernel, emit_asm
from .metrics import MetricVector
from .objective import CLONE
from .tuners import TuningReport

SCHEMA = 1

EPOCH_COLUMNS = ("epoch", "loss", "best_loss", "base_loss", "evals", "step", "skip_p")


@dataclass
class RunArtifacts:
    out_dir: Path
    files: dict[str, Path] = field(default_factory=dict)
    figures: list[Path] = field(default_factory=list)

    def __getitem__(self, name: str) -> Path:
        return self.files[name]


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def epochs_csv(report: TuningReport) -> str:
    names = MetricVector.field_names()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EPOCH_COLUMNS + names)
    for e in report.epochs:
        met = e.epoch_metrics or {}
        w.writerow([_cell(x) for x in (e.epoch, e.epoch_loss, e.best_loss, e.base_loss,
                                       e.evaluations + e.base_evaluations, e.step, e.skip_p)]
                   + [_cell(met.get(n)) for n in names])
    return buf.getvalue()


def read_epochs_csv(path: Union[str, Path]) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def grid_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(v) for k, v in r.items()})
    return buf.getvalue()


def instruction_mix(kernel: Kernel) -> dict[str, float]:
    """Static class shares grouped the way stress results are usually reported."""
    counts = kernel.class_counts()
    n = kernel.size
    return {
        "integer": (counts["int-alu"] + counts["int-mul"]) / n,
        "float": (counts["fp-add"] + counts["fp-mul"]) / n,
        "branch": counts["branch"] / n,
        "load": counts["load"] / n,
        "store": counts["store"] / n,
    }


def _jsonable(obj):
    # NaN/inf are not valid JSON; losses can be inf only for failed points
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n"


def emit_report(report: TuningReport, out_dir: Union[str, Path], kernel: Optional[Kernel] = None,
                metrics: Optional[MetricVector] = None, grid_rows: Optional[Sequence[dict]] = None,
                run_config: Optional[dict] = None, plots: bool = True) -> RunArtifacts:
    """Write all run files into ``out_dir``. Each file is replaced atomically."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    art = RunArtifacts(out)
    body = report.to_json()
    body["schema"] = SCHEMA
    if run_config is not None:
        body["run_config"] = run_config
    if kernel is not None:
        body["instruction_mix"] = instruction_mix(kernel)
    texts = {"report.json": dump_json(body), "epochs.csv": epochs_csv(report)}
    if kernel is not None:
        texts["kernel.s"] = emit_asm(kernel)
        texts["kernel.json"] = kernel.dumps() + "\n"
    met = metrics.to_dict() if metrics is not None else report.best_metrics
    if met is not None:
        mj = {"schema": SCHEMA, "metrics": met}
        if report.best_accuracy is not None:
            mj["accuracy"] = report.best_accuracy
        if kernel is not None:
            mj["instruction_mix"] = instruction_mix(kernel)
        texts["metrics.json"] = dump_json(mj)
    if grid_rows is not None:
        texts["grid.csv"] = grid_csv(grid_rows)
    for name, text in texts.items():
        path = out / name
        try:
            write_atomic(path, text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        art.files[name] = path
    if plots:
        from .plots import render_figures
        art.figures = render_figures(report, out / "figures", kernel)
    return art


def accuracy_rows(reports: Sequence[TuningReport]) -> list[dict]:
    """One row per clone report: min and mean accuracy plus the per-metric values."""
    rows = []
    for i, r in enumerate(reports):
        if r.best_accuracy is None or r.target.get("mode") != CLONE:
            continue
        row = {"clone": i, "min": r.best_accuracy["min"], "mean": r.best_accuracy["mean"]}
        row.update(r.best_accuracy["per_metric"])
        rows.append(row)
    return rows


__all__ = ["EPOCH_COLUMNS", "RunArtifacts", "SCHEMA", "accuracy_rows", "dump_json",
           "emit_report", "epochs_csv", "grid_csv", "instruction_mix", "read_epochs_csv",
           "write_atomic"]
