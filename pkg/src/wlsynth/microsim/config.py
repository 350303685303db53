from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Union


def _is_pow2(x: int) -> bool:
    return x > 0 and x & (x - 1) == 0


@dataclass(frozen=True)
class CacheConfig:
    size: int
    line: int = 64
    associativity: int = 4
    hit_latency: int = 2

    def __post_init__(self):
        if min(self.size, self.line, self.associativity, self.hit_latency) < 1:
            raise ValueError(f"cache parameters must be positive: {self}")
        if self.size % (self.line * self.associativity):
            raise ValueError(f"cache size {self.size} not divisible by line x ways")
        if not _is_pow2(self.sets) or not _is_pow2(self.line):
            raise ValueError(f"cache needs power-of-two sets and line size: {self}")

    @property
    def sets(self) -> int:
        return self.size // (self.line * self.associativity)


@dataclass(frozen=True)
class CoreConfig:
    """Out-of-order core parameters. Presets follow the small/large table."""

    name: str = "custom"
    frequency: float = 2.0e9
    fetch_width: int = 8
    rob_size: int = 160
    lsq_size: int = 64
    rse_size: int = 128
    alu_count: int = 6
    simd_count: int = 4
    fp_count: int = 4
    l1i: CacheConfig = field(default_factory=lambda: CacheConfig(32 * 1024, 64, 4, 2))
    l1d: CacheConfig = field(default_factory=lambda: CacheConfig(32 * 1024, 64, 4, 2))
    l2: CacheConfig = field(default_factory=lambda: CacheConfig(1024 * 1024, 64, 8, 12))
    l2_prefetch: bool = True
    mem_latency: int = 100
    mispredict_penalty: int = 10
    memory_size: int = 1 << 30
    int_latency: int = 1
    mul_latency: int = 3
    fp_add_latency: int = 3
    fp_mul_latency: int = 5

    def __post_init__(self):
        counts = ("fetch_width", "rob_size", "lsq_size", "rse_size", "alu_count",
                  "simd_count", "fp_count", "mem_latency", "int_latency", "mul_latency",
                  "fp_add_latency", "fp_mul_latency")
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.mispredict_penalty < 0 or self.frequency <= 0:
            raise ValueError("mispredict_penalty must be >= 0 and frequency > 0")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: Mapping) -> "CoreConfig":
        """Build from a mapping; ``"preset"`` selects a base that other keys override."""
        d = dict(d)
        base = PRESETS[d.pop("preset")] if "preset" in d else cls()
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown core config field(s): {sorted(unknown)}")
        for key in ("l1i", "l1d", "l2"):
            if key in d and isinstance(d[key], Mapping):
                d[key] = replace(getattr(base, key), **d[key])
        return replace(base, **d)


SMALL = CoreConfig(
    name="small", fetch_width=3, rob_size=40, lsq_size=16, rse_size=32,
    alu_count=3, simd_count=2, fp_count=2,
    l1i=CacheConfig(16 * 1024, 64, 4, 2), l1d=CacheConfig(16 * 1024, 64, 4, 2),
    l2=CacheConfig(256 * 1024, 64, 8, 12), l2_prefetch=False,
)
LARGE = CoreConfig(name="large")

PRESETS = {"small": SMALL, "large": LARGE}


def load_core(spec: Union[str, Mapping, CoreConfig]) -> CoreConfig:
    """Resolve a preset name, a JSON file path, an inline JSON string or a mapping."""
    if isinstance(spec, CoreConfig):
        return spec
    if isinstance(spec, Mapping):
        return CoreConfig.from_json(spec)
    if spec in PRESETS:
        return PRESETS[spec]
    text = spec.strip()
    if not text.startswith("{"):
        path = Path(spec)
        if not path.exists():
            raise ValueError(f"unknown core preset or missing file: {spec}")
        text = path.read_text()
    return CoreConfig.from_json(json.loads(text))
