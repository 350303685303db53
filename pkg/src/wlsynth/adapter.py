"""Evaluator backends: the built-in simulator and arbitrary external commands.

An external backend receives the kernel as ``kernel.s`` and ``kernel.json``
plus the core configuration as ``core.json`` in a per-evaluation working
directory, runs a command template, and reads metrics back from a
gem5-style ``stats.txt`` dump (``key value [# comment]`` per line).
"""

from __future__ import annotations

import json
import os
import re
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Protocol, Sequence, Union

from .errors import EvaluationError, StatsError
from .kernel import GenerationError, Kernel, emit_asm, generate
from .knobs import KnobConfig
from .metrics import STATS_KEYS, MetricVector
from .microsim import CoreConfig, EnergyModel, simulate

IDENTITY = "identity"
ONE_MINUS = "one-minus"
DIVIDE_BY = "divide-by"

_DIVIDE_RE = re.compile(r"^divide-by\((.+)\)$")


class Evaluator(Protocol):
    capabilities: frozenset

    def evaluate(self, kernel: Kernel, tag: str = "") -> MetricVector: ...


class BuiltinEvaluator:
    """In-process evaluation on the built-in timing and power model."""

    capabilities = frozenset(MetricVector.field_names())

    def __init__(self, core: CoreConfig, n_dyn: int, energy: EnergyModel = EnergyModel()):
        self.core = core
        self.n_dyn = int(n_dyn)
        self.energy = energy

    def evaluate(self, kernel: Kernel, tag: str = "") -> MetricVector:
        try:
            return simulate(kernel, self.core, self.n_dyn, self.energy)
        except ValueError as exc:
            raise EvaluationError(str(exc)) from exc


@dataclass(frozen=True)
class MetricSource:
    key: str
    transform: str = IDENTITY
    divisor: Optional[str] = None

    @classmethod
    def from_json(cls, d: Union[str, Mapping]) -> "MetricSource":
        if isinstance(d, str):
            return cls(d)
        transform = d.get("transform", IDENTITY)
        divisor = d.get("divisor") or d.get("by")
        m = _DIVIDE_RE.match(transform)
        if m:
            transform, divisor = DIVIDE_BY, m.group(1)
        if transform not in (IDENTITY, ONE_MINUS, DIVIDE_BY):
            raise ValueError(f"unknown transform {transform!r}")
        if transform == DIVIDE_BY and not divisor:
            raise ValueError(f"divide-by transform for {d['key']!r} needs a divisor key")
        return cls(d["key"], transform, divisor)

    def to_json(self) -> dict:
        d = {"key": self.key, "transform": self.transform}
        if self.divisor:
            d["divisor"] = self.divisor
        return d


def builtin_metric_map() -> dict[str, MetricSource]:
    """Identity mapping for the dump written by the built-in simulator."""
    return {name: MetricSource(key) for name, key in STATS_KEYS.items()}


def read_stats(text: str) -> dict[str, tuple[str, int]]:
    """First ``(value token, line number)`` per key; later duplicates are ignored."""
    out: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if len(parts) < 2 or parts[0].startswith("#"):
            continue
        out.setdefault(parts[0], (parts[1], lineno))
    return out


def _value(raw: Mapping[str, tuple[str, int]], key: str) -> float:
    if key not in raw:
        raise StatsError(f"stats key {key!r} not found in dump")
    token, lineno = raw[key]
    try:
        return float(token)
    except ValueError:
        raise StatsError(f"line {lineno}: cannot parse value {token!r} for {key!r}") from None


def parse_stats(text: str, metric_map: Mapping[str, MetricSource]) -> MetricVector:
    if not metric_map:
        raise StatsError("no metrics mapped")
    if not text.strip():
        raise StatsError("empty stats dump")
    raw = read_stats(text)
    values = {}
    for name, src in metric_map.items():
        if name not in MetricVector.field_names():
            raise StatsError(f"unknown metric field {name!r} in metric map")
        v = _value(raw, src.key)
        if src.transform == ONE_MINUS:
            v = 1.0 - v
        elif src.transform == DIVIDE_BY:
            d = _value(raw, src.divisor)
            if d == 0:
                raise StatsError(f"divisor {src.divisor!r} is zero for {name!r}")
            v = v / d
        values[name] = v
    return MetricVector(**values)


@dataclass(frozen=True)
class ExternalEvalSpec:
    command: tuple[str, ...]
    metric_map: Mapping[str, MetricSource]
    stats_path: str = "{workdir}/stats.txt"
    timeout: float = 600.0
    env: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if not self.command:
            raise ValueError("external evaluator needs a command")
        if not self.metric_map:
            raise ValueError("no metrics mapped")

    @classmethod
    def from_json(cls, d: Mapping) -> "ExternalEvalSpec":
        cmd = d["command"]
        cmd = tuple(shlex.split(cmd)) if isinstance(cmd, str) else tuple(cmd)
        mm = d.get("metric_map", "builtin")
        metric_map = builtin_metric_map() if mm == "builtin" else {
            k: MetricSource.from_json(v) for k, v in mm.items()}
        return cls(cmd, metric_map, d.get("stats_path", "{workdir}/stats.txt"),
                   float(d.get("timeout", 600.0)), dict(d.get("env", {})))

    def to_json(self) -> dict:
        return {"command": list(self.command), "stats_path": self.stats_path,
                "timeout": self.timeout, "env": dict(self.env),
                "metric_map": {k: v.to_json() for k, v in self.metric_map.items()}}

    def require(self, metrics: Sequence[str]) -> None:
        missing = [m for m in metrics if m not in self.metric_map]
        if missing:
            raise ValueError(f"external evaluator has no mapping for {missing}")


class ExternalEvaluator:
    """Runs an external simulator per kernel in ``run_dir/<tag>``."""

    def __init__(self, spec: ExternalEvalSpec, core: CoreConfig, n_dyn: int,
                 run_dir: Union[str, Path]):
        self.spec = spec
        self.core = core
        self.n_dyn = int(n_dyn)
        self.run_dir = Path(run_dir)
        self.capabilities = frozenset(spec.metric_map)
        self.records: dict[str, Path] = {}
        self._count = 0

    def workdir(self, tag: str) -> Path:
        if not tag:
            self._count += 1
            tag = f"eval{self._count}"
        return self.run_dir / tag

    def evaluate(self, kernel: Kernel, tag: str = "") -> MetricVector:
        wd = self.workdir(tag)
        wd.mkdir(parents=True, exist_ok=True)
        asm = wd / "kernel.s"
        kjson = wd / "kernel.json"
        core_path = wd / "core.json"
        asm.write_text(emit_asm(kernel))
        kjson.write_text(kernel.dumps())
        core_path.write_text(json.dumps(self.core.to_json(), indent=1))
        fields = {"asm": str(asm), "workdir": str(wd), "core_config": str(core_path),
                  "kernel_json": str(kjson), "n_dyn": str(self.n_dyn)}
        try:
            args = [part.format(**fields) for part in self.spec.command]
            stats_path = Path(self.spec.stats_path.format(**fields))
        except (KeyError, IndexError) as exc:
            raise EvaluationError(f"bad placeholder in command template: {exc}") from exc
        if not stats_path.is_absolute():
            stats_path = wd / stats_path
        env = dict(os.environ)
        env.update(self.spec.env)
        try:
            proc = subprocess.run(args, cwd=wd, env=env, capture_output=True, text=True,
                                  timeout=self.spec.timeout)
        except subprocess.TimeoutExpired as exc:
            out = (exc.stdout or "") + (exc.stderr or "") if isinstance(exc.stdout, str) else ""
            raise EvaluationError(f"evaluator timed out after {self.spec.timeout}s", out) from exc
        except OSError as exc:
            raise EvaluationError(f"cannot run evaluator: {exc}") from exc
        output = proc.stdout + proc.stderr
        if proc.returncode != 0:
            raise EvaluationError(f"evaluator exited with status {proc.returncode}", output)
        try:
            text = stats_path.read_text()
        except OSError as exc:
            raise EvaluationError(f"cannot read stats dump {stats_path}: {exc}", output) from exc
        self.records[str(wd)] = stats_path
        return parse_stats(text, self.spec.metric_map)


def evaluate_external(spec: ExternalEvalSpec, kernel: Kernel, core: CoreConfig, n_dyn: int,
                      workdir: Union[str, Path]) -> MetricVector:
    return ExternalEvaluator(spec, core, n_dyn, workdir).evaluate(kernel, "")


def make_eval_fn(evaluator: Evaluator, static_size: int, seed: int,
                 fixed: Optional[Mapping] = None):
    """Knob configuration -> metrics, through the generator and ``evaluator``."""

    def eval_fn(config: KnobConfig, tag: str) -> MetricVector:
        try:
            kernel = generate(config, static_size, seed, fixed)
        except GenerationError as exc:
            raise EvaluationError(f"generation failed: {exc}") from exc
        return evaluator.evaluate(kernel, tag)

    return eval_fn
