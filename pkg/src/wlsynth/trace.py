"""Dynamic expansion of a kernel's static loop."""

from __future__ import annotations

from typing import Iterator, NamedTuple, Optional

import numpy as np

from .kernel import Instr, Kernel

_BRANCH_STREAM = 0xB7A4C4
_CHUNK = 4096


class DynInstr(NamedTuple):
    seq: int
    index: int
    instr: Instr
    address: Optional[int]
    taken: Optional[bool]


def branch_rng(kernel: Kernel) -> np.random.Generator:
    return np.random.default_rng([kernel.seed & 0xFFFFFFFF, _BRANCH_STREAM])


def random_direction_count(kernel: Kernel, n_dyn: int) -> int:
    """Number of dynamic branch instances whose direction is randomized."""
    rand = set(kernel.pattern.randomized)
    per_pos = np.array([ins.branch_slot is not None and ins.branch_slot in rand
                        for ins in kernel.instrs], dtype=np.int64)
    full, rest = divmod(n_dyn, kernel.size)
    return int(per_pos.sum() * full + per_pos[:rest].sum())


def random_directions(kernel: Kernel, n_dyn: int) -> np.ndarray:
    """Taken bits for randomized branch instances, in dynamic order."""
    n = random_direction_count(kernel, n_dyn)
    return (branch_rng(kernel).random(n) < 0.5).astype(np.uint8)


def dynamic_trace(kernel: Kernel, n_dyn: int) -> Iterator[DynInstr]:
    """Yield ``n_dyn`` resolved dynamic instructions, cycling the loop body."""
    if n_dyn < 1:
        raise ValueError("n_dyn must be >= 1")
    streams = {s.id: s for s in kernel.streams}
    stream_k = dict.fromkeys(streams, 0)
    rand = set(kernel.pattern.randomized)
    dirs = kernel.pattern.directions
    occurrence = [0] * kernel.pattern.n_slots
    rng = branch_rng(kernel)
    bits = np.empty(0)
    used = 0
    body = kernel.instrs
    size = len(body)
    for seq in range(n_dyn):
        i = seq % size
        ins = body[i]
        addr = None
        taken = None
        if ins.mem_stream is not None:
            k = stream_k[ins.mem_stream]
            addr = streams[ins.mem_stream].address(k)
            stream_k[ins.mem_stream] = k + 1
        elif ins.branch_slot is not None:
            b = ins.branch_slot
            if b in rand:
                if used == len(bits):
                    bits = rng.random(_CHUNK)
                    used = 0
                taken = bool(bits[used] < 0.5)
                used += 1
            else:
                d = dirs[b]
                taken = d[occurrence[b] % len(d)]
            occurrence[b] += 1
        yield DynInstr(seq, i, ins, addr, taken)
