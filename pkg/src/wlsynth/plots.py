"""Figures rendered next to the delimited run output (PNG, headless backend)."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .kernel import Kernel  # noqa: E402
from .tuners import TuningReport  # noqa: E402

_STYLE = {
    "figure.figsize": (5.0, 3.2),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_convergence(report: TuningReport, path: Path) -> Optional[Path]:
    rows = [e for e in report.epochs if e.epoch_loss is not None]
    if not rows:
        return None
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        x = [e.epoch for e in rows]
        ax.plot(x, [e.epoch_loss for e in rows], marker=".", lw=1, label="epoch loss")
        ax.plot(x, [e.best_loss for e in rows], lw=1.5, label="best so far")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.set_title(f"{report.tuner}: {report.stop_reason}")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_mix(kernel: Kernel, path: Path) -> Path:
    from .report import instruction_mix

    mix = instruction_mix(kernel)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        names = list(mix)
        ax.bar(names, [100 * mix[n] for n in names], color="0.4")
        ax.set_ylabel("share of static instructions (%)")
        return _save(fig, path)


def plot_accuracy(report: TuningReport, path: Path) -> Optional[Path]:
    acc = report.best_accuracy
    if not acc or len(acc["per_metric"]) < 3:
        return None
    names = list(acc["per_metric"])
    vals = [acc["per_metric"][n] for n in names]
    angles = [2 * math.pi * i / len(names) for i in range(len(names))]
    with plt.rc_context(_STYLE):
        fig = plt.figure(figsize=(4.2, 4.2))
        ax = fig.add_subplot(projection="polar")
        ax.plot(angles + angles[:1], vals + vals[:1], lw=1.5)
        ax.fill(angles + angles[:1], vals + vals[:1], alpha=0.2)
        ax.set_xticks(angles)
        ax.set_xticklabels(names, fontsize=7)
        ax.set_ylim(0, 1)
        return _save(fig, path)


def render_figures(report: TuningReport, out_dir: Path, kernel: Optional[Kernel] = None) -> list[Path]:
    out = []
    for p in (plot_convergence(report, out_dir / "convergence.png"),
              plot_accuracy(report, out_dir / "accuracy.png"),
              plot_mix(kernel, out_dir / "mix.png") if kernel is not None else None):
        if p is not None:
            out.append(p)
    return out
