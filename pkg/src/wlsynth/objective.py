"""Scalar losses and per-metric accuracy for cloning and stress targets.

Clone loss is a weighted squared log-ratio, ``sum w * ln((met+eps)/(tgt+eps))**2``:
zero at an exact match, symmetric in (met, target), and scale-free, so an IPC
of 2 and a hit rate of 0.9 contribute on the same relative footing. It is
*not* a cross-entropy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .metrics import MetricVector

LOG_EPS = 1e-6
ACC_EPS = 1e-6

CLONE = "clone"
STRESS = "stress"
MAXIMIZE = "maximize"
MINIMIZE = "minimize"

DEFAULT_CLONE_METRICS = ("frac_int", "frac_branch", "frac_load", "frac_store",
                         "l1d_hit", "l1i_hit", "l2_hit", "branch_mispred", "ipc")


class MetricError(KeyError):
    pass


def _check_field(name: str) -> None:
    if name not in MetricVector.field_names():
        raise MetricError(f"unknown metric field {name!r}")


@dataclass(frozen=True)
class TargetSpec:
    mode: str
    clone_targets: Mapping[str, float] = field(default_factory=dict)
    weights: Mapping[str, float] = field(default_factory=dict)
    stress_metric: str = "ipc"
    stress_direction: str = MAXIMIZE
    target_accuracy: float = 0.99

    def __post_init__(self):
        if self.mode not in (CLONE, STRESS):
            raise ValueError(f"mode must be clone or stress, got {self.mode!r}")
        if not 0.0 < self.target_accuracy <= 1.0:
            raise ValueError(f"target_accuracy {self.target_accuracy} not in (0, 1]")
        object.__setattr__(self, "clone_targets", dict(self.clone_targets))
        for name in self.clone_targets:
            _check_field(name)
        w = {name: (1.0 if name in DEFAULT_CLONE_METRICS else 0.0) for name in self.clone_targets}
        for name, v in dict(self.weights).items():
            _check_field(name)
            if name not in self.clone_targets:
                raise ValueError(f"weight given for {name!r} but no target value")
            w[name] = float(v)
        if any(v < 0 for v in w.values()):
            raise ValueError("metric weights must be >= 0")
        object.__setattr__(self, "weights", w)
        if self.mode == CLONE and not any(v > 0 for v in w.values()):
            raise ValueError("clone target needs at least one metric with positive weight")
        if self.mode == STRESS:
            _check_field(self.stress_metric)
            if self.stress_direction not in (MAXIMIZE, MINIMIZE):
                raise ValueError(f"stress direction {self.stress_direction!r}")

    @classmethod
    def clone(cls, targets, weights=None, target_accuracy: float = 0.99) -> "TargetSpec":
        if isinstance(targets, MetricVector):
            targets = targets.to_dict()
        return cls(CLONE, targets, weights or {}, target_accuracy=target_accuracy)

    @classmethod
    def stress(cls, metric: str = "ipc", direction: str = MAXIMIZE) -> "TargetSpec":
        return cls(STRESS, stress_metric=metric, stress_direction=direction)

    @property
    def weighted(self) -> list[str]:
        return [m for m, w in self.weights.items() if w > 0]

    def to_json(self) -> dict:
        if self.mode == CLONE:
            return {"mode": CLONE, "targets": dict(self.clone_targets),
                    "weights": dict(self.weights), "accuracy": self.target_accuracy}
        return {"mode": STRESS, "metric": self.stress_metric,
                "direction": self.stress_direction}

    @classmethod
    def from_json(cls, d: Mapping) -> "TargetSpec":
        mode = d.get("mode")
        if mode == CLONE:
            if "targets" not in d:
                raise ValueError("clone target needs a 'targets' object")
            return cls(CLONE, d["targets"], d.get("weights", {}),
                       target_accuracy=float(d.get("accuracy", 0.99)))
        if mode == STRESS:
            return cls(STRESS, stress_metric=d.get("metric") or "ipc",
                       stress_direction=d.get("direction", MAXIMIZE))
        raise ValueError(f"target mode must be 'clone' or 'stress', got {mode!r}")


@dataclass(frozen=True)
class Loss:
    value: float
    per_metric: Mapping[str, float] = field(default_factory=dict)

    def __lt__(self, other: "Loss") -> bool:
        return self.value < other.value


def clone_loss(met: MetricVector, target: TargetSpec) -> Loss:
    if target.mode != CLONE:
        raise ValueError("clone_loss needs a clone-mode target")
    per = {}
    for name, w in target.weights.items():
        if w == 0:
            continue
        m = met.get(name)
        t = target.clone_targets[name]
        per[name] = w * math.log((m + LOG_EPS) / (t + LOG_EPS)) ** 2
    return Loss(math.fsum(per.values()), per)


def stress_loss(met: MetricVector, target: TargetSpec) -> Loss:
    if target.mode != STRESS:
        raise ValueError("stress_loss needs a stress-mode target")
    v = math.log(met.get(target.stress_metric) + LOG_EPS)
    v = -v if target.stress_direction == MAXIMIZE else v
    return Loss(v, {target.stress_metric: v})


def loss(met: MetricVector, target: TargetSpec) -> Loss:
    return clone_loss(met, target) if target.mode == CLONE else stress_loss(met, target)


@dataclass(frozen=True)
class Accuracy:
    per_metric: Mapping[str, float]
    min: float
    mean: float


def accuracy(met: MetricVector, target: TargetSpec, fields: Optional[list] = None) -> Accuracy:
    if target.mode != CLONE:
        raise ValueError("accuracy needs a clone-mode target")
    names = fields if fields is not None else target.weighted
    per = {}
    for name in names:
        t = target.clone_targets[name]
        err = abs(met.get(name) - t) / max(abs(t), ACC_EPS)
        per[name] = min(max(1.0 - err, 0.0), 1.0)
    vals = list(per.values())
    return Accuracy(per, min(vals), math.fsum(vals) / len(vals))
