"""Kernel synthesis from a knob configuration.

The generator is an ordered list of passes over a loop body, each one
filling in one aspect of the static code:

    skeleton -> reserve registers -> opcode profile -> register init
    -> branch randomization -> memory streams -> register allocation
    -> instruction addresses

Every pass draws from its own RNG stream derived from the kernel seed, so a
(config, static_size, seed) triple always yields the same kernel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .knobs import OPCODE_CLASS, KnobConfig

DEFAULT_STATIC_SIZE = 500
DEFAULT_DYNAMIC_LENGTH = 10_000_000

N_INT_REGS = 32
N_FP_REGS = 32
FP_BASE = N_INT_REGS  # fp register r is encoded as FP_BASE + r

CODE_BASE = 0x0040_0000
STREAM_BASES = (0x1000_0000, 0x2000_0000)

# reserved registers: stream base pointers and read-only operands
BASE_REGS = (30, 31)
INT_CONST_REG = 29
FP_CONST_REG = FP_BASE + 31
INT_POOL = tuple(range(5, 29))
FP_POOL = tuple(FP_BASE + r for r in range(0, 31))

# knob values used when a knob is not part of the tuned space
GENERATOR_DEFAULTS = {
    "REG_DIST": 1,
    "MEM_SIZE": 2,
    "MEM_STRIDE": 8,
    "MEM_TEMP1": 1,
    "MEM_TEMP2": 0,
    "B_PATTERN": 0.0,
}

# second memory stream has no knobs of its own
FIXED_STREAM_FOOTPRINT = 4096
FIXED_STREAM_STRIDE = 8
STREAM1_RATIO = 0.5

CLASSES = ("int-alu", "int-mul", "fp-add", "fp-mul", "load", "store", "branch")
OPCODES = tuple(OPCODE_CLASS)

_INT_WRITERS = {"int-alu", "int-mul", "load"}
_FP_WRITERS = {"fp-add", "fp-mul"}

_PATTERN_PERIODS = (1, 2, 4)


class GenerationError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Instr:
    cls: str
    opcode: str
    dest: Optional[int] = None
    srcs: tuple[int, ...] = ()
    mem_stream: Optional[int] = None
    branch_slot: Optional[int] = None

    def to_json(self) -> dict:
        return {
            "class": self.cls,
            "opcode": self.opcode,
            "dest": self.dest,
            "srcs": list(self.srcs),
            "mem_stream": self.mem_stream,
            "branch_slot": self.branch_slot,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "Instr":
        return cls(d["class"], d["opcode"], d["dest"], tuple(d["srcs"]),
                   d["mem_stream"], d["branch_slot"])


@dataclass(frozen=True)
class MemStream:
    """Strided walk over a footprint with a repeated trailing window.

    The fresh walk is cut into windows of ``repeat_count`` addresses. After
    every ``repeat_period``-th window, that window is issued once more.
    A zero count or period disables repetition. Offsets wrap modulo the
    footprint, so addresses stay in ``[base, base + footprint)``.
    """

    id: int
    footprint: int
    stride: int
    ratio: float
    repeat_count: int
    repeat_period: int
    base: int

    def __post_init__(self):
        if self.stride <= 0 or self.footprint < self.stride:
            raise ValueError(f"stream {self.id}: need footprint >= stride > 0")
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"stream {self.id}: ratio {self.ratio} not in (0, 1]")
        if self.repeat_count < 0 or self.repeat_period < 0:
            raise ValueError(f"stream {self.id}: negative temporal parameters")

    def fresh_index(self, k: int) -> int:
        t1, t2 = self.repeat_count, self.repeat_period
        if t1 <= 0 or t2 <= 0:
            return k
        block = (t2 + 1) * t1
        c, r = divmod(k, block)
        fresh = t2 * t1
        if r < fresh:
            return c * fresh + r
        return c * fresh + (t2 - 1) * t1 + (r - fresh)

    def address(self, k: int) -> int:
        """Address of the k-th access (0-based) to this stream."""
        return self.base + (self.fresh_index(k) * self.stride) % self.footprint

    def to_json(self) -> dict:
        return {
            "id": self.id, "footprint": self.footprint, "stride": self.stride,
            "ratio": self.ratio, "repeat_count": self.repeat_count,
            "repeat_period": self.repeat_period, "base": self.base,
        }


@dataclass(frozen=True)
class BranchPattern:
    directions: tuple[tuple[bool, ...], ...]
    randomized: tuple[int, ...]
    random_ratio: float

    def __post_init__(self):
        if not 0.0 <= self.random_ratio <= 1.0:
            raise ValueError(f"random_ratio {self.random_ratio} not in [0, 1]")

    @property
    def n_slots(self) -> int:
        return len(self.directions)

    def to_json(self) -> dict:
        return {
            "directions": [[int(b) for b in d] for d in self.directions],
            "randomized": list(self.randomized),
            "random_ratio": self.random_ratio,
        }


@dataclass(frozen=True)
class Kernel:
    instrs: tuple[Instr, ...]
    streams: tuple[MemStream, ...]
    pattern: BranchPattern
    dep_distance: int
    seed: int
    knob_config: KnobConfig
    init_values: tuple[tuple[int, int], ...] = field(default=())
    fixed: tuple[tuple[str, float], ...] = field(default=())

    @property
    def size(self) -> int:
        return len(self.instrs)

    def pc(self, i: int) -> int:
        return CODE_BASE + 4 * i

    def class_counts(self) -> dict[str, int]:
        counts = dict.fromkeys(CLASSES, 0)
        for ins in self.instrs:
            counts[ins.cls] += 1
        return counts

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "seed": self.seed,
            "static_size": self.size,
            "dep_distance": self.dep_distance,
            "knob_config": [list(a) for a in self.knob_config.assignments],
            "init_values": [list(p) for p in self.init_values],
            "fixed": dict(self.fixed),
            "streams": [s.to_json() for s in self.streams],
            "pattern": self.pattern.to_json(),
            "instrs": [i.to_json() for i in self.instrs],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, d: Mapping) -> "Kernel":
        p = d["pattern"]
        return cls(
            instrs=tuple(Instr.from_json(i) for i in d["instrs"]),
            streams=tuple(MemStream(**s) for s in d["streams"]),
            pattern=BranchPattern(
                tuple(tuple(bool(b) for b in x) for x in p["directions"]),
                tuple(p["randomized"]), p["random_ratio"]),
            dep_distance=d["dep_distance"],
            seed=d["seed"],
            knob_config=_config_record(d["knob_config"]),
            init_values=tuple(tuple(p) for p in d["init_values"]),
            fixed=tuple(d.get("fixed", {}).items()),
        )


def _config_record(rec) -> KnobConfig:
    # ordered [name, value] pairs; a plain mapping is accepted too
    return KnobConfig(tuple(rec.items()) if isinstance(rec, Mapping) else tuple(map(tuple, rec)))


def _rng(seed: int, stage: int, sub: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, stage, sub])


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _largest_remainder(quotas: Mapping[str, float], total: int, rank) -> dict[str, int]:
    counts = {k: int(math.floor(q)) for k, q in quotas.items()}
    left = total - sum(counts.values())
    order = sorted(quotas, key=lambda k: (-(quotas[k] - counts[k]), rank(k)))
    for k in order[:left]:
        counts[k] += 1
    return counts


# opcode groups behind the measured instruction-mix fractions
_MIX_GROUP = {"int-alu": "int", "int-mul": "int", "fp-add": "fp", "fp-mul": "fp",
              "branch": "branch", "load": "load", "store": "store"}


def quantize_profile(weights: Mapping[str, float], size: int) -> dict[str, int]:
    """Split ``size`` slots proportional to ``weights``, two levels deep.

    Group totals (int, fp, branch, load, store) are rounded first, then each
    group's slots are shared among its opcodes. Every opcode count and every
    group count is the floor or the ceiling of its exact quota.
    """
    total = math.fsum(weights.values())
    quotas = {op: w * size / total for op, w in weights.items()}
    groups: dict[str, list[str]] = {}
    for op in weights:
        groups.setdefault(_MIX_GROUP[OPCODE_CLASS[op]], []).append(op)
    gq = {g: math.fsum(quotas[op] for op in ops) for g, ops in groups.items()}
    gcount = _largest_remainder(gq, size, lambda g: OPCODES.index(groups[g][0]))
    counts = {}
    for g, ops in groups.items():
        counts.update(_largest_remainder({op: quotas[op] for op in ops}, gcount[g],
                                         OPCODES.index))
    return {op: counts[op] for op in weights}


def _knob_values(config: KnobConfig, fixed: Optional[Mapping] = None) -> dict:
    values = dict(GENERATOR_DEFAULTS)
    if fixed:
        values.update(fixed)
    values.update(config.as_dict())
    return values


def _pool_size(writers: int, pool: int, dd: int) -> int:
    # Round-robin over P registers must not reuse a register within dd writes,
    # including across the loop back edge where the sequence restarts at 0.
    if writers <= pool:
        return max(writers, 1)
    for p in range(pool, dd, -1):
        r = writers % p
        if r == 0 or r >= dd:
            return p
    return pool


def generate(config: KnobConfig, static_size: int = DEFAULT_STATIC_SIZE, seed: int = 0,
             fixed: Optional[Mapping] = None) -> Kernel:
    if static_size < 10:
        raise GenerationError(f"static_size {static_size} below minimum of 10")
    knobs = _knob_values(config, fixed)

    # skeleton + profile
    weights = {op: float(knobs[op]) for op in OPCODES if op in knobs}
    if not weights:
        raise GenerationError("configuration has no instruction-fraction knobs")
    counts = quantize_profile(weights, static_size)
    for op, n in counts.items():
        if n == 0:
            raise GenerationError(
                f"static_size {static_size} too small to place {op} ({OPCODE_CLASS[op]})")
    # Stable placement: instance j of an opcode owns a fixed random sort key,
    # so a small change in one count moves few instructions instead of
    # reshuffling the whole body.
    tagged = []
    for op, c in counts.items():
        keys = _rng(seed, 1, OPCODES.index(op)).random(static_size)[:c]
        tagged += [(float(key), OPCODES.index(op), j) for j, key in enumerate(keys)]
    tagged.sort()
    opcodes = [OPCODES[o] for _, o, _ in tagged]
    classes = [OPCODE_CLASS[op] for op in opcodes]
    n = static_size

    # branch randomization, again drawn per opcode instance
    ratio = float(knobs["B_PATTERN"])
    draws = {}
    for op in counts:
        if OPCODE_CLASS[op] == "branch":
            rng = _rng(seed, 3, OPCODES.index(op))
            periods = rng.choice(_PATTERN_PERIODS, size=static_size)
            bits = rng.integers(0, 2, size=(static_size, max(_PATTERN_PERIODS)))
            draws[op] = (periods, bits, rng.random(static_size))
    slots, directions, rank = [], [], []
    for i, (_, o, j) in enumerate(tagged):
        if OPCODE_CLASS[OPCODES[o]] == "branch":
            periods, bits, u = draws[OPCODES[o]]
            slots.append(i)
            directions.append(tuple(bool(b) for b in bits[j, :int(periods[j])]))
            rank.append(float(u[j]))
    n_rand = min(_round_half_up(ratio * len(slots)), len(slots))
    randomized = tuple(sorted(int(k) for k in np.argsort(rank, kind="stable")[:n_rand]))
    pattern = BranchPattern(tuple(directions), randomized, ratio)
    slot_of = {pos: k for k, pos in enumerate(slots)}

    # memory streams, interleaved by ratio
    streams = (
        MemStream(1, int(knobs["MEM_SIZE"]) * 1024, int(knobs["MEM_STRIDE"]), STREAM1_RATIO,
                  int(knobs["MEM_TEMP1"]), int(knobs["MEM_TEMP2"]), STREAM_BASES[0]),
        MemStream(2, FIXED_STREAM_FOOTPRINT, FIXED_STREAM_STRIDE, 1.0 - STREAM1_RATIO,
                  0, 0, STREAM_BASES[1]),
    )
    stream_of = {}
    k = 0
    for i, c in enumerate(classes):
        if c in ("load", "store"):
            first = math.floor((k + 1) * STREAM1_RATIO) - math.floor(k * STREAM1_RATIO)
            stream_of[i] = 1 if first else 2
            k += 1

    # register allocation at dependency distance
    dd = int(knobs["REG_DIST"])
    if dd < 1:
        raise GenerationError(f"REG_DIST must be >= 1, got {dd}")
    writes_int = [c in _INT_WRITERS for c in classes]
    writes_fp = [c in _FP_WRITERS for c in classes]
    dest = [None] * n
    for writes, pool in ((writes_int, INT_POOL), (writes_fp, FP_POOL)):
        w = sum(writes)
        p = _pool_size(w, len(pool), dd)
        j = 0
        for i in range(n):
            if writes[i]:
                dest[i] = pool[j % p]
                j += 1

    def producer(i: int, writes: list, fallback: int) -> int:
        for step in range(dd, dd + n):
            q = (i - step) % n
            if writes[q]:
                return dest[q]
        return fallback

    instrs = []
    for i, (op, c) in enumerate(zip(opcodes, classes)):
        if c in ("int-alu", "int-mul"):
            srcs = (producer(i, writes_int, INT_CONST_REG), INT_CONST_REG)
        elif c in ("fp-add", "fp-mul"):
            srcs = (producer(i, writes_fp, FP_CONST_REG), FP_CONST_REG)
        elif c == "branch":
            srcs = (producer(i, writes_int, INT_CONST_REG), INT_CONST_REG)
        elif c == "load":
            srcs = (BASE_REGS[stream_of[i] - 1],)
        else:  # store: data, base
            srcs = (producer(i, writes_int, INT_CONST_REG), BASE_REGS[stream_of[i] - 1])
        instrs.append(Instr(c, op, dest[i], srcs, stream_of.get(i), slot_of.get(i)))

    # register init: bases get stream bases, everything else a random integer
    used = sorted({r for ins in instrs for r in ins.srcs} | {d for d in dest if d is not None}
                  | set(BASE_REGS) | {INT_CONST_REG, FP_CONST_REG})
    rng = _rng(seed, 4)
    init = []
    for r in used:
        if r in BASE_REGS:
            init.append((r, STREAM_BASES[BASE_REGS.index(r)]))
        else:
            init.append((r, int(rng.integers(1, 1 << 16))))

    return Kernel(tuple(instrs), streams, pattern, dd, int(seed), config, tuple(init),
                  tuple(sorted((fixed or {}).items())))


def regenerate(d: Mapping) -> Kernel:
    """Rebuild a kernel from the knob record of its JSON form."""
    return generate(_config_record(d["knob_config"]), int(d["static_size"]),
                    int(d["seed"]), d.get("fixed") or None)


def _reg(r: int) -> str:
    return f"f{r - FP_BASE}" if r >= FP_BASE else f"x{r}"


_MNEMONIC = {"ADD": "add", "MUL": "mul", "FADDD": "fadd.d", "FMULD": "fmul.d",
             "BEQ": "beq", "BNE": "bne", "LD": "ld", "LW": "lw", "SD": "sd", "SW": "sw"}


def _asm_line(ins: Instr) -> str:
    m = _MNEMONIC[ins.opcode]
    if ins.cls == "load":
        return f"{m} {_reg(ins.dest)}, 0({_reg(ins.srcs[0])})"
    if ins.cls == "store":
        return f"{m} {_reg(ins.srcs[0])}, 0({_reg(ins.srcs[1])})"
    if ins.cls == "branch":
        # falls through either way; only the predictor sees the direction
        return f"{m} {_reg(ins.srcs[0])}, {_reg(ins.srcs[1])}, .+4"
    return f"{m} {_reg(ins.dest)}, {_reg(ins.srcs[0])}, {_reg(ins.srcs[1])}"


def emit_asm(kernel: Kernel) -> str:
    cfg = ", ".join(f"{k}={v}" for k, v in kernel.knob_config.assignments)
    lines = [
        f"# synthetic kernel: seed={kernel.seed} static_size={kernel.size}",
        f"# knobs: {cfg}",
        "    .text",
        "    .globl _start",
        "_start:",
    ]
    scratch = INT_POOL[0]
    fp_inits = [(r, v) for r, v in kernel.init_values if r >= FP_BASE]
    int_inits = [(r, v) for r, v in kernel.init_values if r < FP_BASE]
    for r, v in fp_inits:
        lines.append(f"    li {_reg(scratch)}, {v}  # init")
        lines.append(f"    fcvt.d.l {_reg(r)}, {_reg(scratch)}")
    for r, v in int_inits:
        lines.append(f"    li {_reg(r)}, {v:#x}" if r in BASE_REGS else f"    li {_reg(r)}, {v}")
    lines.append(".Lloop:")
    lines.extend("    " + _asm_line(ins) for ins in kernel.instrs)
    lines.append("    j .Lloop")
    return "\n".join(lines) + "\n"
