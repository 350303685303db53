"""Measured execution characteristics of a kernel run."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Mapping, Optional

FRACTION_FIELDS = ("frac_int", "frac_fp", "frac_branch", "frac_load", "frac_store")
RATE_FIELDS = ("l1i_hit", "l1d_hit", "l2_hit", "branch_mispred")

# gem5-flavoured names used by the stats dump of the built-in simulator
STATS_KEYS = {
    "frac_int": "system.cpu.commit.int_fraction",
    "frac_fp": "system.cpu.commit.fp_fraction",
    "frac_branch": "system.cpu.commit.branch_fraction",
    "frac_load": "system.cpu.commit.load_fraction",
    "frac_store": "system.cpu.commit.store_fraction",
    "l1i_hit": "system.cpu.icache.hit_rate",
    "l1d_hit": "system.cpu.dcache.hit_rate",
    "l2_hit": "system.l2.hit_rate",
    "branch_mispred": "system.cpu.branchPred.mispred_rate",
    "ipc": "system.cpu.ipc",
    "dyn_power": "system.power.dynamic",
}


@dataclass(frozen=True)
class MetricVector:
    frac_int: float = 0.0
    frac_fp: float = 0.0
    frac_branch: float = 0.0
    frac_load: float = 0.0
    frac_store: float = 0.0
    l1i_hit: float = 1.0
    l1d_hit: float = 1.0
    l2_hit: float = 1.0
    branch_mispred: float = 0.0
    ipc: float = 1.0
    dyn_power: float = 0.0

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, float]) -> "MetricVector":
        unknown = set(d) - set(cls.field_names())
        if unknown:
            raise ValueError(f"unknown metric field(s): {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def get(self, name: str) -> float:
        if name not in self.field_names():
            raise KeyError(f"unknown metric field {name!r}")
        return getattr(self, name)

    def replace(self, **kw) -> "MetricVector":
        return replace(self, **kw)

    def validate(self, fetch_width: Optional[int] = None) -> None:
        total = math.fsum(getattr(self, f) for f in FRACTION_FIELDS)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"instruction fractions sum to {total}, expected 1")
        for f in FRACTION_FIELDS + RATE_FIELDS:
            v = getattr(self, f)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{f}={v} outside [0, 1]")
        if not self.ipc > 0 or (fetch_width is not None and self.ipc > fetch_width):
            raise ValueError(f"ipc={self.ipc} outside (0, {fetch_width}]")
        if self.dyn_power < 0:
            raise ValueError(f"dyn_power={self.dyn_power} negative")


def format_stats(met: MetricVector, extra: Optional[Mapping[str, float]] = None) -> str:
    """Render metrics as a gem5-style ``stats.txt`` dump.

    Values use ``repr`` so that parsing the text back is bit-exact.
    """
    lines = ["---------- Begin Simulation Statistics ----------"]
    for name in MetricVector.field_names():
        lines.append(f"{STATS_KEYS[name]:<44} {getattr(met, name)!r:<24} # {name}")
    for key, value in (extra or {}).items():
        lines.append(f"{key:<44} {value!r:<24}")
    lines.append("---------- End Simulation Statistics   ----------")
    return "\n".join(lines) + "\n"
