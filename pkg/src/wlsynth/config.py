"""Run configuration: one JSON file describing a tuning run end to end.

Fields that name files (knob space, core, external evaluator spec, targets)
are resolved relative to the config file and inlined, so the serialized form
is self-contained and parses back to an equal RunConfig.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from .adapter import ExternalEvalSpec
from .errors import ConfigError
from .kernel import DEFAULT_STATIC_SIZE
from .knobs import KnobSpace
from .microsim import CoreConfig, EnergyModel, load_core
from .objective import CLONE, STRESS, MetricError, TargetSpec
from .tuners import GASettings, GDSettings

TUNERS = ("gd", "ga", "brute")
EVALUATORS = ("builtin", "external")
# tuning runs favor short simulations; the generator's own default is far longer
DEFAULT_RUN_N_DYN = 100_000

_KEYS = {"use_case", "knobs", "active_knobs", "fixed", "target", "batch", "evaluator", "external",
         "core", "energy", "tuner", "gd", "ga", "brute", "static_size", "n_dyn", "seed", "out",
         "workers", "schema"}


@dataclass(frozen=True)
class BruteSettings:
    levels: Optional[Union[int, Mapping[str, int]]] = None
    indices: Optional[Mapping[str, tuple]] = None
    cap: int = 1_000_000

    def to_json(self) -> dict:
        d: dict[str, Any] = {"cap": self.cap}
        if self.levels is not None:
            d["levels"] = self.levels if isinstance(self.levels, int) else dict(self.levels)
        if self.indices is not None:
            d["indices"] = {k: list(v) for k, v in self.indices.items()}
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "BruteSettings":
        levels = d.get("levels")
        if isinstance(levels, Mapping):
            levels = {str(k): int(v) for k, v in levels.items()}
        indices = d.get("indices")
        if indices is not None:
            indices = {str(k): tuple(int(i) for i in v) for k, v in indices.items()}
        return cls(levels, indices, int(d.get("cap", 1_000_000)))

    def __hash__(self):
        return hash(json.dumps(self.to_json(), sort_keys=True))


@dataclass(frozen=True)
class RunConfig:
    use_case: str
    target: TargetSpec
    space: KnobSpace = field(default_factory=KnobSpace.default)
    fixed: Mapping[str, float] = field(default_factory=dict)
    batch: tuple[TargetSpec, ...] = ()
    evaluator: str = "builtin"
    external: Optional[ExternalEvalSpec] = None
    core: CoreConfig = field(default_factory=lambda: load_core("large"))
    energy: EnergyModel = field(default_factory=EnergyModel)
    tuner: str = "gd"
    gd: GDSettings = field(default_factory=GDSettings)
    ga: GASettings = field(default_factory=GASettings)
    brute: BruteSettings = field(default_factory=BruteSettings)
    static_size: int = DEFAULT_STATIC_SIZE
    n_dyn: int = DEFAULT_RUN_N_DYN
    seed: int = 42
    out: str = "runs/latest"
    workers: int = 1

    def __post_init__(self):
        if self.use_case not in (CLONE, STRESS):
            raise ConfigError(f"use_case must be 'clone' or 'stress', got {self.use_case!r}")
        if self.target.mode != self.use_case:
            raise ConfigError(f"target mode {self.target.mode!r} does not match use_case {self.use_case!r}")
        if any(t.mode != CLONE for t in self.batch):
            raise ConfigError("batch entries must be clone targets")
        if self.batch and self.use_case != CLONE:
            raise ConfigError("batch targets need use_case 'clone'")
        if self.tuner not in TUNERS:
            raise ConfigError(f"tuner must be one of {TUNERS}, got {self.tuner!r}")
        if self.evaluator not in EVALUATORS:
            raise ConfigError(f"evaluator must be one of {EVALUATORS}, got {self.evaluator!r}")
        if self.evaluator == "external":
            if self.external is None:
                raise ConfigError("evaluator 'external' needs an 'external' spec")
            needed = (self.target.weighted if self.use_case == CLONE
                      else [self.target.stress_metric])
            try:
                self.external.require(needed)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if self.static_size < 10:
            raise ConfigError(f"static_size must be >= 10, got {self.static_size}")
        if self.n_dyn < self.static_size:
            raise ConfigError(f"n_dyn ({self.n_dyn}) must cover one loop body ({self.static_size})")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        overlap = set(self.fixed) & set(self.space.names)
        if overlap:
            raise ConfigError(f"knobs both fixed and tuned: {sorted(overlap)}")
        object.__setattr__(self, "fixed", dict(self.fixed))

    @property
    def targets(self) -> tuple[TargetSpec, ...]:
        return self.batch or (self.target,)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    def to_json(self) -> dict:
        d = {
            "schema": 1,
            "use_case": self.use_case,
            "knobs": self.space.to_json(),
            "fixed": dict(self.fixed),
            "target": self.target.to_json(),
            "evaluator": self.evaluator,
            "core": self.core.to_json(),
            "energy": self.energy.to_json(),
            "tuner": self.tuner,
            "gd": self.gd.to_json(),
            "ga": self.ga.to_json(),
            "brute": self.brute.to_json(),
            "static_size": self.static_size,
            "n_dyn": self.n_dyn,
            "seed": self.seed,
            "out": self.out,
            "workers": self.workers,
        }
        if self.batch:
            d["batch"] = [t.to_json() for t in self.batch]
        if self.external is not None:
            d["external"] = self.external.to_json()
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, d: Mapping, base_dir: Union[str, Path] = ".") -> "RunConfig":
        base = Path(base_dir)
        unknown = set(d) - _KEYS
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        try:
            return cls._parse(d, base)
        except ConfigError:
            raise
        except MetricError as exc:
            raise ConfigError(exc.args[0]) from None
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    @classmethod
    def _parse(cls, d: Mapping, base: Path) -> "RunConfig":
        use_case = d.get("use_case") or (d.get("target") or {}).get("mode")
        if use_case is None:
            raise ConfigError("config needs 'use_case' (clone or stress)")
        if use_case not in (CLONE, STRESS):
            raise ConfigError(f"use_case must be 'clone' or 'stress', got {use_case!r}")

        knobs = _load_json(d.get("knobs", "default"), base, "knobs")
        space = KnobSpace.default() if knobs == "default" else KnobSpace.from_json(knobs)
        if d.get("active_knobs"):
            space = space.subset(d["active_knobs"])

        batch = tuple(TargetSpec.from_json(_with_mode(t, CLONE))
                      for t in _load_json(d.get("batch", []), base, "batch"))
        tgt = d.get("target")
        if tgt is None:
            if use_case == STRESS:
                tgt = {"mode": STRESS}
            elif batch:
                tgt = batch[0].to_json()
            else:
                raise ConfigError("clone use case needs 'target' with metric values")
        target = TargetSpec.from_json(_with_mode(_load_json(tgt, base, "target"), use_case))

        external = d.get("external")
        if external is not None:
            external = ExternalEvalSpec.from_json(_load_json(external, base, "external"))
        core = d.get("core", "large")
        if isinstance(core, str) and core not in ("large", "small") and not core.strip().startswith("{"):
            core = str(_resolve(core, base, "core"))

        kw: dict[str, Any] = dict(
            use_case=use_case, target=target, space=space,
            fixed={str(k): v for k, v in d.get("fixed", {}).items()}, batch=batch,
            evaluator=d.get("evaluator", "builtin"), external=external,
            core=load_core(core),
            energy=EnergyModel.from_json(d.get("energy", {})),
            tuner=d.get("tuner", "gd"),
            static_size=int(d.get("static_size", DEFAULT_STATIC_SIZE)),
            n_dyn=int(d.get("n_dyn", DEFAULT_RUN_N_DYN)),
            seed=int(d.get("seed", 42)), out=str(d.get("out", "runs/latest")),
            workers=int(d.get("workers", 1)),
        )
        gd = dict(d.get("gd", {}))
        gd.setdefault("seed", kw["seed"])
        ga = dict(d.get("ga", {}))
        ga.setdefault("seed", kw["seed"])
        kw["gd"] = GDSettings.from_json(gd)
        kw["ga"] = GASettings.from_json(ga)
        kw["brute"] = BruteSettings.from_json(d.get("brute", {}))
        return cls(**kw)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_json(d, path.parent)


def _with_mode(d: Mapping, mode: str) -> dict:
    d = dict(d)
    d.setdefault("mode", mode)
    return d


def _resolve(name: str, base: Path, what: str) -> Path:
    path = Path(name)
    if not path.is_absolute():
        path = base / path
    if not path.exists():
        raise ConfigError(f"{what} file not found: {path}")
    return path


def _load_json(value, base: Path, what: str):
    """Inline value, or the parsed content of a referenced JSON file."""
    if isinstance(value, str) and value != "default":
        try:
            return json.loads(_resolve(value, base, what).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{what} file {value}: not valid JSON ({exc})") from None
    return value
