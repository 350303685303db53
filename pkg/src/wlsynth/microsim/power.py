from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Mapping

from .config import CoreConfig

EVENTS = ("int", "fp", "load", "store", "branch", "l1_access", "l2_access", "mem_access", "flush")


@dataclass(frozen=True)
class EnergyModel:
    """Energy per event in nanojoules."""

    e_int: float = 0.1
    e_fp: float = 0.4
    e_load: float = 0.2
    e_store: float = 0.2
    e_branch: float = 0.12
    e_l1_access: float = 0.05
    e_l2_access: float = 0.3
    e_mem_access: float = 2.0
    e_flush: float = 0.5

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be >= 0")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: Mapping) -> "EnergyModel":
        return cls(**d)


def dynamic_power(counts: Mapping[str, float], cycles: int, core: CoreConfig,
                  em: EnergyModel = EnergyModel()) -> float:
    """Average dynamic power in watts over ``cycles`` at the core frequency."""
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    unknown = set(counts) - set(EVENTS)
    if unknown:
        raise ValueError(f"unknown energy event(s): {sorted(unknown)}")
    energy_nj = sum(counts.get(e, 0) * getattr(em, "e_" + e) for e in EVENTS)
    return energy_nj * 1e-9 / (cycles / core.frequency)
