"""Knob space of the abstract workload model.

A knob is a discrete, ordered list of admissible values. Tuners work in
continuous *index* coordinates (one real per knob, bounded by the list
length) and only snap to concrete values when a kernel is generated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

FRACTION = "fraction"
SCALAR = "scalar"

# opcode -> instruction class
OPCODE_CLASS = {
    "ADD": "int-alu",
    "MUL": "int-mul",
    "FADDD": "fp-add",
    "FMULD": "fp-mul",
    "BEQ": "branch",
    "BNE": "branch",
    "LD": "load",
    "LW": "load",
    "SD": "store",
    "SW": "store",
}

SCALAR_KNOBS = ("REG_DIST", "MEM_SIZE", "MEM_STRIDE", "MEM_TEMP1", "MEM_TEMP2", "B_PATTERN")

_WEIGHTS = tuple(range(1, 11))

DEFAULT_KNOB_VALUES: dict[str, tuple[float, ...]] = {
    "ADD": _WEIGHTS,
    "MUL": _WEIGHTS,
    "FADDD": _WEIGHTS,
    "FMULD": _WEIGHTS,
    "BEQ": _WEIGHTS,
    "BNE": _WEIGHTS,
    "LD": _WEIGHTS,
    "LW": _WEIGHTS,
    "SD": _WEIGHTS,
    "SW": _WEIGHTS,
    "REG_DIST": tuple(range(1, 11)),
    "MEM_SIZE": (2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048),
    "MEM_STRIDE": (8, 12, 16, 20, 24, 32, 40, 48, 56, 64),
    "MEM_TEMP1": (1, 2, 4, 8, 16, 32, 64, 128, 256, 512),
    "MEM_TEMP2": tuple(range(1, 11)),
    "B_PATTERN": (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1),
}


@dataclass(frozen=True)
class KnobDef:
    name: str
    kind: str
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if self.kind not in (FRACTION, SCALAR):
            raise ValueError(f"knob {self.name}: unknown kind {self.kind!r}")
        if not self.values:
            raise ValueError(f"knob {self.name}: empty value list")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError(f"knob {self.name}: values must be strictly ascending")
        if (self.kind == FRACTION) != (self.name in OPCODE_CLASS):
            raise ValueError(f"knob {self.name}: opcode knobs and only opcode knobs are fractions")
        if self.kind == FRACTION and self.values[0] <= 0:
            raise ValueError(f"knob {self.name}: fraction weights must be positive")

    @property
    def size(self) -> int:
        return len(self.values)

    @property
    def upper(self) -> int:
        return len(self.values) - 1

    def to_json(self) -> dict:
        return {"name": self.name, "kind": self.kind, "values": list(self.values)}


class KnobSpace:
    """Ordered, immutable collection of knobs."""

    __slots__ = ("knobs", "_index")

    def __init__(self, knobs: Iterable[KnobDef]):
        knobs = tuple(knobs)
        names = [k.name for k in knobs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate knob names in {names}")
        if not any(k.kind == FRACTION for k in knobs):
            raise ValueError("knob space needs at least one instruction-fraction knob")
        self.knobs = knobs
        self._index = {n: i for i, n in enumerate(names)}

    @classmethod
    def default(cls) -> "KnobSpace":
        return cls(
            KnobDef(n, FRACTION if n in OPCODE_CLASS else SCALAR, v)
            for n, v in DEFAULT_KNOB_VALUES.items()
        )

    @classmethod
    def from_json(cls, obj: Mapping) -> "KnobSpace":
        knobs = []
        for k in obj["knobs"]:
            name = k["name"]
            kind = k.get("kind")
            if kind is None:
                kind = FRACTION if name in OPCODE_CLASS else SCALAR
            values = k.get("values", DEFAULT_KNOB_VALUES.get(name))
            if values is None:
                raise ValueError(f"knob {name}: no values given and no default list")
            knobs.append(KnobDef(name, kind, tuple(values)))
        return cls(knobs)

    def to_json(self) -> dict:
        return {"knobs": [k.to_json() for k in self.knobs]}

    def subset(self, names: Sequence[str]) -> "KnobSpace":
        missing = [n for n in names if n not in self._index]
        if missing:
            raise ValueError(f"unknown knobs {missing}")
        return KnobSpace(self.knobs[self._index[n]] for n in names)

    def __len__(self) -> int:
        return len(self.knobs)

    def __iter__(self):
        return iter(self.knobs)

    def __contains__(self, name) -> bool:
        return name in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, KnobSpace) and self.knobs == other.knobs

    def __hash__(self) -> int:
        return hash(self.knobs)

    def __repr__(self) -> str:
        return f"KnobSpace({[k.name for k in self.knobs]})"

    def index(self, name: str) -> int:
        return self._index[name]

    @property
    def names(self) -> list[str]:
        return [k.name for k in self.knobs]

    @property
    def upper_bounds(self) -> np.ndarray:
        return np.array([k.upper for k in self.knobs], dtype=float)


@dataclass(frozen=True)
class KnobPoint:
    """Continuous position in index space (one coordinate per knob)."""

    pos: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "pos", tuple(float(x) for x in self.pos))

    def __len__(self) -> int:
        return len(self.pos)

    def as_array(self) -> np.ndarray:
        return np.array(self.pos, dtype=float)

    @classmethod
    def clamped(cls, pos, space: KnobSpace) -> "KnobPoint":
        arr = np.clip(np.asarray(pos, dtype=float), 0.0, space.upper_bounds)
        return cls(tuple(arr.tolist()))


@dataclass(frozen=True)
class KnobConfig:
    """Concrete knob values, one per knob of the space it was snapped from."""

    assignments: tuple[tuple[str, float], ...]

    def __post_init__(self):
        if isinstance(self.assignments, Mapping):
            object.__setattr__(self, "assignments", tuple(self.assignments.items()))
        else:
            object.__setattr__(self, "assignments", tuple(tuple(a) for a in self.assignments))

    def __getitem__(self, name: str) -> float:
        for k, v in self.assignments:
            if k == name:
                return v
        raise KeyError(name)

    def get(self, name: str, default=None):
        try:
            return self[name]
        except KeyError:
            return default

    def as_dict(self) -> dict[str, float]:
        return dict(self.assignments)

    def validate(self, space: KnobSpace) -> None:
        names = [k for k, _ in self.assignments]
        if sorted(names) != sorted(space.names):
            raise ValueError(f"config knobs {names} do not match space {space.names}")
        for knob in space:
            if self[knob.name] not in knob.values:
                raise ValueError(f"{knob.name}={self[knob.name]} not in {knob.values}")

    def indices(self, space: KnobSpace) -> tuple[int, ...]:
        return tuple(knob.values.index(self[knob.name]) for knob in space)


def random_point(space: KnobSpace, seed: int) -> KnobPoint:
    rng = np.random.default_rng(seed)
    return KnobPoint(tuple(float(rng.integers(0, k.size)) for k in space))


def snap_indices(point: KnobPoint, space: KnobSpace) -> tuple[int, ...]:
    if len(point) != len(space):
        raise ValueError(f"point has {len(point)} coordinates, space has {len(space)} knobs")
    out = []
    for x, knob in zip(point.pos, space):
        # ties at .5 go to the lower index
        i = math.ceil(x - 0.5)
        out.append(min(max(i, 0), knob.upper))
    return tuple(out)


def snap(point: KnobPoint, space: KnobSpace) -> KnobConfig:
    idx = snap_indices(point, space)
    return KnobConfig(tuple((k.name, k.values[i]) for k, i in zip(space, idx)))


def config_from_indices(indices: Sequence[int], space: KnobSpace) -> KnobConfig:
    return KnobConfig(tuple((k.name, k.values[int(i)]) for k, i in zip(space, indices)))


def point_from_config(config: KnobConfig, space: KnobSpace) -> KnobPoint:
    return KnobPoint(tuple(float(i) for i in config.indices(space)))


def perturb(point: KnobPoint, space: KnobSpace, dim: int, delta: float) -> KnobPoint:
    if not 0 <= dim < len(point):
        raise IndexError(f"knob dimension {dim} out of range for {len(point)} knobs")
    pos = list(point.pos)
    pos[dim] = min(max(pos[dim] + delta, 0.0), float(space.knobs[dim].upper))
    return KnobPoint(tuple(pos))


def distance(a: KnobPoint, b: KnobPoint) -> float:
    """L-infinity distance in index units."""
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    if not a.pos:
        return 0.0
    return max(abs(x - y) for x, y in zip(a.pos, b.pos))


def instruction_profile(config: KnobConfig, space: KnobSpace) -> dict[str, float]:
    weights = {k.name: float(config[k.name]) for k in space if k.kind == FRACTION}
    total = math.fsum(weights.values())
    return {name: w / total for name, w in weights.items()}
