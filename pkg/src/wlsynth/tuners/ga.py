"""Genetic-algorithm baseline over integer index genomes.

One epoch is one generation: the whole population is evaluated, then the
next generation is bred by tournament selection, single-point crossover and
per-gene mutation, with the best individual carried over unchanged.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..knobs import KnobSpace, KnobConfig, config_from_indices
from ..objective import CLONE, TargetSpec
from .common import (CONVERGED, ERROR, MAX_EPOCHS, TARGET_MET, Check, EpochRecord, EvalFn,
                     Scorer, TuningReport, epoch_minimum, summarize)


@dataclass(frozen=True)
class GASettings:
    population: int = 50
    mutation_rate: float = 0.03
    crossover_rate: float = 1.0
    tournament_size: int = 5
    elitism: bool = True
    max_epochs: int = 60
    patience: int = 5
    patience_tol: float = 1e-3
    seed: int = 42

    def __post_init__(self):
        if not self.population >= self.tournament_size >= 2:
            raise ValueError("need population >= tournament_size >= 2")
        if not 0 <= self.mutation_rate <= 1 or not 0 <= self.crossover_rate <= 1:
            raise ValueError("mutation and crossover rates must be in [0, 1]")
        if self.max_epochs < 0 or self.patience < 1:
            raise ValueError("max_epochs must be >= 0 and patience >= 1")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d) -> "GASettings":
        return cls(**d)


def _tournament(rng, fitness: np.ndarray, size: int) -> int:
    picks = rng.choice(len(fitness), size=size, replace=False)
    return int(picks[np.argmax(fitness[picks])])


def breed(space: KnobSpace, pop: np.ndarray, fitness: np.ndarray, settings: GASettings,
          rng: np.random.Generator) -> np.ndarray:
    """Next generation from ``pop`` (rows are genomes) and its fitness."""
    n, k = pop.shape
    sizes = np.array([len(kd.values) for kd in space.knobs])
    children = []
    if settings.elitism:
        children.append(pop[int(np.argmax(fitness))].copy())
    while len(children) < n:
        a = pop[_tournament(rng, fitness, settings.tournament_size)].copy()
        b = pop[_tournament(rng, fitness, settings.tournament_size)].copy()
        if k > 1 and rng.random() < settings.crossover_rate:
            cut = int(rng.integers(1, k))
            a[cut:], b[cut:] = b[cut:].copy(), a[cut:].copy()
        for child in (a, b):
            hit = rng.random(k) < settings.mutation_rate
            for g in np.flatnonzero(hit):
                if sizes[g] > 1:
                    # a random value other than the current one
                    v = int(rng.integers(sizes[g] - 1))
                    child[g] = v + (v >= child[g])
            children.append(child)
    return np.array(children[:n], dtype=np.int64)


def ga_tune(space: KnobSpace, target: TargetSpec, settings: GASettings, eval_fn: EvalFn,
            workers: int = 1, scorer: Optional[Scorer] = None) -> TuningReport:
    scorer = scorer or Scorer(eval_fn, target, workers)
    rng = np.random.default_rng([int(settings.seed) & 0xFFFFFFFF, 0x6A])
    k = len(space)
    sizes = [len(kd.values) for kd in space.knobs]
    pop = np.array([[rng.integers(s) for s in sizes] for _ in range(settings.population)],
                   dtype=np.int64).reshape(settings.population, k)
    epochs: list[EpochRecord] = []
    history: list[float] = []
    stop = MAX_EPOCHS

    for epoch in range(1, settings.max_epochs + 1):
        configs: list[KnobConfig] = [config_from_indices(g, space) for g in pop]
        results = scorer.score_many([(c, f"epoch{epoch}/check{j + 1}") for j, c in enumerate(configs)])
        fitness = np.array([-r.loss if r.ok else -np.inf for r in results])
        low = epoch_minimum(results)
        if low is None:
            epochs.append(EpochRecord(epoch, [], {}, None, None, evaluations=len(results),
                                      failed=["<population>"]))
            stop = ERROR
            break
        top = int(np.argmax(fitness))
        rec = EpochRecord(epoch, [float(x) for x in pop[top]], configs[top].as_dict(),
                          low.metrics.to_dict(), low.loss, evaluations=len(results))
        rec.checks = [Check("", 0, [float(x) for x in g], c.as_dict(), r.loss,
                            r.metrics.to_dict() if r.metrics else None, r.error)
                      for g, c, r in zip(pop, configs, results)]
        rec.failed = [f"individual{j + 1}" for j, r in enumerate(results) if not r.ok]
        rec.epoch_loss = low.loss
        rec.epoch_metrics = low.metrics.to_dict()
        rec.best_loss = scorer.best.loss
        epochs.append(rec)
        history.append(scorer.best.loss)

        if scorer.target_met():
            stop = TARGET_MET
            break
        if target.mode != CLONE and len(history) > settings.patience:
            if history[-settings.patience - 1] - history[-1] <= settings.patience_tol:
                stop = CONVERGED
                break
        if epoch == settings.max_epochs:
            break
        pop = breed(space, pop, fitness, settings, rng)
        rec.new_pos = [float(x) for x in pop[0]]

    return summarize("ga", settings.to_json(), space, target, epochs, stop, scorer)
