"""Exhaustive search over a Cartesian grid of knob indices."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from ..knobs import KnobConfig, KnobSpace, config_from_indices
from ..metrics import MetricVector
from ..objective import TargetSpec
from .common import ERROR, EXHAUSTED, EpochRecord, EvalFn, Scored, Scorer, TuningReport, summarize

DEFAULT_CAP = 1_000_000


class GridTooLarge(ValueError):
    pass


def level_indices(n_values: int, levels: int) -> tuple[int, ...]:
    """``levels`` indices spread evenly over ``range(n_values)``, ends included."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if levels >= n_values:
        return tuple(range(n_values))
    if levels == 1:
        return (0,)
    return tuple(sorted({int(round(i * (n_values - 1) / (levels - 1))) for i in range(levels)}))


def make_grid(space: KnobSpace, levels: Mapping[str, int] | int | None = None,
              indices: Optional[Mapping[str, Sequence[int]]] = None) -> list[tuple[int, ...]]:
    """Per-knob index lists: explicit ``indices`` first, then ``levels``, else every value."""
    grid = []
    for kd in space.knobs:
        n = len(kd.values)
        if indices and kd.name in indices:
            idx = tuple(sorted(set(int(i) for i in indices[kd.name])))
            if not idx or idx[0] < 0 or idx[-1] >= n:
                raise ValueError(f"grid indices for {kd.name} out of range 0..{n - 1}")
        elif isinstance(levels, int):
            idx = level_indices(n, levels)
        elif levels and kd.name in levels:
            idx = level_indices(n, int(levels[kd.name]))
        else:
            idx = tuple(range(n))
        grid.append(idx)
    return grid


def grid_size(grid: Sequence[Sequence[int]]) -> int:
    return math.prod(len(g) for g in grid)


@dataclass
class GridResult:
    space: KnobSpace
    grid: list[tuple[int, ...]]
    points: list[tuple[int, ...]]
    results: list[Scored]
    best: Optional[Scored]
    report: TuningReport = field(repr=False, default=None)

    @property
    def best_config(self) -> Optional[KnobConfig]:
        return self.best.config if self.best else None

    @property
    def best_metrics(self) -> Optional[MetricVector]:
        return self.best.metrics if self.best else None

    def rows(self) -> list[dict]:
        out = []
        for pt, r in zip(self.points, self.results):
            row = {kd.name: kd.values[i] for kd, i in zip(self.space.knobs, pt)}
            row["loss"] = r.loss
            row.update(r.metrics.to_dict() if r.metrics else {})
            row["error"] = r.error or ""
            out.append(row)
        return out


def brute_force(space: KnobSpace, target: TargetSpec, eval_fn: EvalFn,
                grid: Optional[Sequence[Sequence[int]]] = None, cap: int = DEFAULT_CAP,
                workers: int = 1, batch: int = 256, scorer: Optional[Scorer] = None) -> GridResult:
    grid = [tuple(g) for g in (grid if grid is not None else make_grid(space))]
    if len(grid) != len(space):
        raise ValueError(f"grid has {len(grid)} axes for {len(space)} knobs")
    n = grid_size(grid)
    if n > cap:
        raise GridTooLarge(f"grid has {n} points, over the cap of {cap}; "
                           "use fewer levels per knob or fewer knobs")
    scorer = scorer or Scorer(eval_fn, target, workers)
    points = list(itertools.product(*grid))
    results: list[Scored] = []
    for start in range(0, n, batch):
        chunk = points[start:start + batch]
        results += scorer.score_many([(config_from_indices(p, space), f"grid/point{start + j + 1}")
                                      for j, p in enumerate(chunk)])
    best = None
    for r in results:
        if r.ok and (best is None or r.loss < best.loss):
            best = r
    rec = EpochRecord(1, [float(i) for i in best.config.indices(space)] if best else [],
                      best.config.as_dict() if best else {},
                      best.metrics.to_dict() if best else None,
                      best.loss if best else None, evaluations=n)
    rec.epoch_loss = rec.base_loss
    rec.epoch_metrics = rec.base_metrics
    rec.best_loss = rec.base_loss
    rec.failed = [f"point{j + 1}" for j, r in enumerate(results) if not r.ok]
    report = summarize("brute", {"grid": [list(g) for g in grid], "cap": cap}, space, target,
                       [rec], EXHAUSTED if best else ERROR, scorer)
    return GridResult(space, grid, points, results, best, report)
