"""Gradient-descent tuning over knob index space.

Each epoch evaluates the base point, then a +delta and a -delta gradient
check per non-skipped knob. The central difference gives a gradient whose
infinity norm is scaled to one, so the steepest knob moves a full step and
every other knob moves proportionally less. Step size and knob-skip
probability both decay geometrically over epochs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..knobs import KnobPoint, KnobSpace, distance, perturb, random_point, snap
from ..objective import CLONE, TargetSpec
from .common import (CONVERGED, ERROR, MAX_EPOCHS, TARGET_MET, Check, EpochError, EpochRecord,
                     EvalFn, Scorer, TuningReport, epoch_minimum, summarize)


@dataclass(frozen=True)
class GDSettings:
    delta: float = 1.0
    step0: float = 3.0
    step_decay: float = 0.9
    step_floor: float = 0.6
    skip0: float = 0.3
    skip_decay: float = 0.85
    skip_floor: float = 0.0
    epsilon: float = 0.05
    max_epochs: int = 60
    patience: int = 5
    patience_tol: float = 1e-3
    axis_guard: bool = True
    restarts: int = 5
    seed: int = 42

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.step0 <= 0 or self.step_floor <= 0 or not 0 < self.step_decay <= 1:
            raise ValueError("step schedule must be positive and non-increasing")
        if not 0 <= self.skip0 < 1 or not 0 <= self.skip_decay <= 1 or self.skip_floor > self.skip0:
            raise ValueError("skip schedule must stay in [0, 1) and be non-increasing")
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")
        if self.max_epochs < 0 or self.patience < 1:
            raise ValueError("max_epochs must be >= 0 and patience >= 1")

    def step_size(self, epoch: int) -> float:
        return max(self.step0 * self.step_decay ** (epoch - 1), self.step_floor)

    def skip_probability(self, epoch: int) -> float:
        return max(self.skip0 * self.skip_decay ** (epoch - 1), self.skip_floor)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d) -> "GDSettings":
        return cls(**d)


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, 0x6D, int(epoch)])


def gd_epoch(space: KnobSpace, base: KnobPoint, base_loss: float, settings: GDSettings,
             scorer: Scorer, rng: np.random.Generator, epoch: int = 1,
             record: Optional[EpochRecord] = None,
             schedule_epoch: Optional[int] = None) -> tuple[KnobPoint, EpochRecord]:
    """One gradient step from ``base``. Raises EpochError if every check fails.

    ``schedule_epoch`` (default ``epoch``) indexes the step and skip schedules.
    """
    k = len(space)
    delta = settings.delta
    sched = epoch if schedule_epoch is None else schedule_epoch
    skip_p = settings.skip_probability(sched)
    step = settings.step_size(sched)
    skip = rng.random(k) < skip_p
    if skip.all():
        skip[int(rng.integers(k))] = False
    if record is None:
        cfg = snap(base, space)
        record = EpochRecord(epoch, list(base.pos), cfg.as_dict(), None, base_loss)

    requests = []
    for i in range(k):
        if skip[i]:
            continue
        for sign in (1, -1):
            p = perturb(base, space, i, sign * delta)
            requests.append((i, sign, p, snap(p, space)))
    tag = f"epoch{epoch}/check"
    results = scorer.score_many([(cfg, f"{tag}{j + 1}") for j, (_, _, _, cfg) in enumerate(requests)])

    by_knob: dict[int, dict] = {}
    for (i, sign, p, cfg), res in zip(requests, results):
        by_knob.setdefault(i, {})[sign] = (p, res)
        record.checks.append(Check(space.knobs[i].name, sign, list(p.pos), cfg.as_dict(), res.loss,
                                   res.metrics.to_dict() if res.metrics else None, res.error))
    if requests and not any(r.ok for r in results):
        raise EpochError(f"epoch {epoch}: all {len(results)} gradient checks failed")

    grad = np.zeros(k)
    failed, settled = [], []
    for i, checks in by_knob.items():
        (pp, rp), (pm, rm) = checks[1], checks[-1]
        if not (rp.ok and rm.ok):
            failed.append(space.knobs[i].name)
            continue
        if settings.axis_guard and base_loss is not None and min(rp.loss, rm.loss) >= base_loss:
            # neither neighbour improves: a minimum along this axis, hold it
            settled.append(space.knobs[i].name)
            continue
        span = pp.pos[i] - pm.pos[i]
        if span > 0:
            grad[i] = (rp.loss - rm.loss) / span

    gmax = float(np.max(np.abs(grad))) if k else 0.0
    direction = grad / gmax if gmax > 0 else np.zeros(k)
    new = KnobPoint.clamped(base.as_array() - step * direction, space)

    record.gradient = grad.tolist()
    record.skipped = [space.knobs[i].name for i in range(k) if skip[i]]
    record.failed = failed
    record.settled = settled
    record.new_pos = list(new.pos)
    record.evaluations = len(requests)
    record.step = step
    record.delta = delta
    record.skip_p = skip_p
    low = epoch_minimum(results)
    if low is not None:
        record.epoch_loss = low.loss
        record.epoch_metrics = low.metrics.to_dict()
    return new, record


def gd_tune(space: KnobSpace, target: TargetSpec, settings: GDSettings, eval_fn: EvalFn,
            start: Optional[KnobPoint] = None, workers: int = 1,
            scorer: Optional[Scorer] = None) -> TuningReport:
    scorer = scorer or Scorer(eval_fn, target, workers)
    point = start if start is not None else random_point(space, settings.seed)
    epochs: list[EpochRecord] = []
    stop = MAX_EPOCHS
    initial = None
    segment: list[float] = []
    restart, first = 0, 1

    if settings.max_epochs == 0:
        res = scorer.score(snap(point, space), "epoch0/check0")
        initial = {"pos": list(point.pos), "config": res.config.as_dict(), "loss": res.loss,
                   "metrics": res.metrics.to_dict() if res.metrics else None, "error": res.error}
        return summarize("gd", settings.to_json(), space, target, epochs,
                         ERROR if not res.ok else MAX_EPOCHS, scorer, initial)

    for epoch in range(1, settings.max_epochs + 1):
        cfg = snap(point, space)
        base = scorer.score(cfg, f"epoch{epoch}/check0")
        rec = EpochRecord(epoch, list(point.pos), cfg.as_dict(),
                          base.metrics.to_dict() if base.metrics else None, base.loss,
                          base_evaluations=1)
        epochs.append(rec)
        if not base.ok:
            rec.failed = ["<base>"]
            stop = ERROR
            break
        new = point
        if not scorer.target_met():
            try:
                new, rec = gd_epoch(space, point, base.loss, settings, scorer,
                                    epoch_rng(settings.seed, epoch), epoch, rec, epoch - first + 1)
            except EpochError:
                stop = ERROR
                break
        if rec.epoch_loss is None or base.loss < rec.epoch_loss:
            rec.epoch_loss = base.loss
            rec.epoch_metrics = base.metrics.to_dict()
        rec.best_loss = scorer.best.loss

        if scorer.target_met():
            stop = TARGET_MET
            break
        segment.append(rec.epoch_loss)
        settled = not rec.skipped and not rec.failed and distance(new, point) < settings.epsilon
        # stress has no target to reach: a segment that stops improving is stuck too
        stalled = (target.mode != CLONE and len(segment) > settings.patience
                   and min(segment[:-settings.patience]) - min(segment) <= settings.patience_tol)
        if settled or stalled:
            if restart < settings.restarts and epoch < settings.max_epochs:
                # stuck at a local minimum with budget left: start over elsewhere,
                # schedules restart too, the best point so far is kept
                restart += 1
                first = epoch + 1
                segment = []
                point = random_point(space, [int(settings.seed) & 0xFFFFFFFF, restart])
                rec.restart = True
                continue
            stop = CONVERGED
            break
        point = new

    return summarize("gd", settings.to_json(), space, target, epochs, stop, scorer, initial)


