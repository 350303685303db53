"""Independent reference models shared by the unit and acceptance tests."""

from collections import OrderedDict

from wlsynth.kernel import CODE_BASE
from wlsynth.microsim import CacheConfig
from wlsynth.trace import dynamic_trace


def lru_l1d_hit_rate(kernel, cache: CacheConfig, n_dyn: int) -> float:
    """Replay the trace's data addresses through a dict-of-OrderedDict LRU cache."""
    shift = cache.line.bit_length() - 1
    sets = [OrderedDict() for _ in range(cache.sets)]
    hits = acc = 0
    for d in dynamic_trace(kernel, n_dyn):
        if d.address is None:
            continue
        line = d.address >> shift
        s = sets[line % cache.sets]
        hit = line in s
        if hit:
            s.move_to_end(line)
        else:
            if len(s) == cache.associativity:
                s.popitem(last=False)
            s[line] = True
        if d.seq >= kernel.size:
            acc += 1
            hits += hit
    return hits / acc if acc else 1.0


def gshare_mispredicts(kernel, n_dyn: int, bits: int = 12) -> tuple[int, int]:
    """Two-bit counters indexed by pc xor global history, counted after one loop pass."""
    mask = (1 << bits) - 1
    pht = [2] * (1 << bits)
    hist = 0
    miss = n = 0
    for d in dynamic_trace(kernel, n_dyn):
        if d.taken is None:
            continue
        idx = (((CODE_BASE + 4 * d.index) >> 2) ^ hist) & mask
        pred = pht[idx] >= 2
        pht[idx] = min(pht[idx] + 1, 3) if d.taken else max(pht[idx] - 1, 0)
        hist = ((hist << 1) | int(d.taken)) & mask
        if d.seq >= kernel.size:
            n += 1
            miss += pred != d.taken
    return miss, n
