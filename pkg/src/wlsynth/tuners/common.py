"""Shared bookkeeping for the tuners: scoring, caching, records and reports."""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

from ..errors import EvaluationError
from ..knobs import KnobConfig, KnobSpace
from ..metrics import MetricVector
from ..objective import CLONE, TargetSpec, accuracy, loss

CONVERGED = "converged"
TARGET_MET = "target_met"
MAX_EPOCHS = "max_epochs"
ERROR = "error"
EXHAUSTED = "exhausted"

EvalFn = Callable[[KnobConfig, str], MetricVector]


class EpochError(RuntimeError):
    pass


@dataclass
class Scored:
    config: KnobConfig
    metrics: Optional[MetricVector]
    loss: Optional[float]
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class Scorer:
    """Evaluates configurations against a target, memoizing by configuration.

    Kernels are a pure function of their configuration, so repeated requests
    for the same configuration reuse the first result. ``requests`` counts every
    evaluation asked for; ``simulations`` counts backend calls.
    """

    def __init__(self, eval_fn: EvalFn, target: TargetSpec, workers: int = 1):
        self.eval_fn = eval_fn
        self.target = target
        self.workers = max(1, int(workers))
        self.requests = 0
        self.simulations = 0
        self.best: Optional[Scored] = None
        self._cache: dict = {}
        self._lock = threading.Lock()

    def _run(self, config: KnobConfig, tag: str) -> Scored:
        try:
            met = self.eval_fn(config, tag)
        except EvaluationError as exc:
            return Scored(config, None, None, f"{exc}")
        value = loss(met, self.target).value
        if not math.isfinite(value):
            return Scored(config, met, None, f"non-finite loss {value}")
        return Scored(config, met, value)

    def score_many(self, items: Sequence[tuple[KnobConfig, str]]) -> list[Scored]:
        todo = {}
        for config, tag in items:
            key = config.assignments
            if key not in self._cache and key not in todo:
                todo[key] = (config, tag)
        if todo:
            jobs = list(todo.values())
            if self.workers > 1 and len(jobs) > 1:
                with ThreadPoolExecutor(self.workers) as pool:
                    done = list(pool.map(lambda job: self._run(*job), jobs))
            else:
                done = [self._run(*job) for job in jobs]
            with self._lock:
                self.simulations += len(done)
                for s in done:
                    self._cache[s.config.assignments] = s
        out = [self._cache[c.assignments] for c, _ in items]
        self.requests += len(items)
        for s in out:
            if s.ok and (self.best is None or s.loss < self.best.loss):
                self.best = s
        return out

    def score(self, config: KnobConfig, tag: str) -> Scored:
        return self.score_many([(config, tag)])[0]

    def target_met(self) -> bool:
        if self.target.mode != CLONE or self.best is None:
            return False
        return accuracy(self.best.metrics, self.target).min >= self.target.target_accuracy


@dataclass
class Check:
    knob: str
    sign: int
    pos: list[float]
    config: dict
    loss: Optional[float]
    metrics: Optional[dict]
    error: Optional[str] = None


@dataclass
class EpochRecord:
    epoch: int
    base_pos: list[float]
    base_config: dict
    base_metrics: Optional[dict]
    base_loss: Optional[float]
    checks: list[Check] = field(default_factory=list)
    gradient: list[float] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: list[str] = field(default_factory=list)
    settled: list[str] = field(default_factory=list)
    new_pos: list[float] = field(default_factory=list)
    evaluations: int = 0
    base_evaluations: int = 0
    step: Optional[float] = None
    delta: Optional[float] = None
    restart: bool = False
    skip_p: Optional[float] = None
    epoch_loss: Optional[float] = None
    epoch_metrics: Optional[dict] = None
    best_loss: Optional[float] = None


@dataclass
class TuningReport:
    tuner: str
    settings: dict
    space: dict
    target: dict
    epochs: list[EpochRecord]
    stop_reason: str
    best_config: Optional[dict]
    best_metrics: Optional[dict]
    best_loss: Optional[float]
    best_accuracy: Optional[dict]
    total_evaluations: int
    simulations: int
    initial: Optional[dict] = None
    schema: int = 1

    def to_json(self) -> dict:
        return asdict(self)


def summarize(tuner: str, settings: dict, space: KnobSpace, target: TargetSpec,
              epochs: list[EpochRecord], stop: str, scorer: Scorer,
              initial: Optional[dict] = None) -> TuningReport:
    best = scorer.best
    acc = None
    if best is not None and target.mode == CLONE:
        a = accuracy(best.metrics, target)
        acc = {"per_metric": dict(a.per_metric), "min": a.min, "mean": a.mean}
    return TuningReport(
        tuner=tuner, settings=settings, space=space.to_json(), target=target.to_json(),
        epochs=epochs, stop_reason=stop,
        best_config=best.config.as_dict() if best else None,
        best_metrics=best.metrics.to_dict() if best else None,
        best_loss=best.loss if best else None,
        best_accuracy=acc,
        total_evaluations=scorer.requests, simulations=scorer.simulations,
        initial=initial,
    )


def epoch_minimum(results: Sequence[Scored]) -> Optional[Scored]:
    best = None
    for s in results:
        if s.ok and (best is None or s.loss < best.loss):
            best = s
    return best
