"""Cycle-approximate out-of-order timing model.

Instructions are processed in program order and each one is assigned a
fetch, issue, complete and retire cycle under these constraints:

* at most ``fetch_width`` fetched and retired per cycle
* ROB, LSQ and issue-window (RSE) occupancy caps
* register last-writer dependencies
* per-cycle functional-unit slots (ALU pool: integer, branch and address
  generation; FP pool: FP add/mul), fully pipelined
* load latency from the first cache level that hits; set-associative LRU
  caches with write-allocate stores and optional next-line L2 prefetch
* gshare prediction at fetch; a misprediction blocks fetch for
  ``mispredict_penalty`` cycles

Caches and the predictor are updated in program order, so the L1D sees
exactly the address sequence of the dynamic trace.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..kernel import CLASSES, CODE_BASE, Kernel
from ..trace import random_directions
from .config import CacheConfig, CoreConfig

C_INT, C_MUL, C_FPADD, C_FPMUL, C_LOAD, C_STORE, C_BRANCH = range(7)
CLASS_CODE = {c: i for i, c in enumerate(CLASSES)}

GSHARE_BITS = 12

# layout of the counters array returned by the kernel loop
(K_CYCLES, K_INT, K_FP, K_LOAD, K_STORE, K_BRANCH, K_L1, K_L2, K_MEM, K_FLUSH,
 W_N, W_INT, W_FP, W_LOAD, W_STORE, W_BRANCH, W_MISP,
 W_L1I_ACC, W_L1I_HIT, W_L1D_ACC, W_L1D_HIT, W_L2_ACC, W_L2_HIT, N_COUNTERS) = range(24)

_UNIT_RING = 1 << 16


@njit(cache=True, nogil=True)
def _cache_access(tags, stamps, sets, ways, line, clock):
    """LRU lookup with allocate-on-miss. Returns True on hit."""
    base = (line & (sets - 1)) * ways
    victim = base
    oldest = stamps[base]
    for w in range(base, base + ways):
        if tags[w] == line:
            stamps[w] = clock
            return True
        if stamps[w] < oldest:
            oldest = stamps[w]
            victim = w
    tags[victim] = line
    stamps[victim] = clock
    return False


@njit(cache=True, nogil=True)
def _cache_fill(tags, stamps, sets, ways, line, clock):
    base = (line & (sets - 1)) * ways
    victim = base
    oldest = stamps[base]
    for w in range(base, base + ways):
        if tags[w] == line:
            return
        if stamps[w] < oldest:
            oldest = stamps[w]
            victim = w
    tags[victim] = line
    stamps[victim] = clock


@njit(cache=True, nogil=True)
def _claim_unit(tag, cnt, units, t):
    mask = tag.shape[0] - 1
    while True:
        j = t & mask
        if tag[j] != t:
            tag[j] = t
            cnt[j] = 0
        if cnt[j] < units:
            cnt[j] += 1
            return t
        t += 1


@njit(cache=True, nogil=True)
def run_model(n_dyn, cls, dest, src0, src1, stream, slot,
              s_base, s_foot, s_stride, s_t1, s_t2,
              slot_rand, pat_off, pat_len, pat_bits, rbits,
              p, geo):
    """Core loop. ``p`` holds scalar core parameters, ``geo`` cache geometry."""
    fetch_width = p[0]
    rob = p[1]
    lsq = p[2]
    rse = p[3]
    alu_units = p[4]
    fp_units = p[5]
    mem_lat = p[6]
    penalty = p[7]
    lat_int = p[8]
    lat_mul = p[9]
    lat_fpa = p[10]
    lat_fpm = p[11]
    prefetch = p[12]
    code_base = p[13]

    # an L1I hit is hidden by the fetch pipeline, so its latency is not read
    l1i_sets, l1i_ways, l1i_shift = geo[0], geo[1], geo[2]
    l1d_sets, l1d_ways, l1d_shift, l1d_lat = geo[4], geo[5], geo[6], geo[7]
    l2_sets, l2_ways, l2_shift, l2_lat = geo[8], geo[9], geo[10], geo[11]

    l1i_tags = np.full(l1i_sets * l1i_ways, -1, np.int64)
    l1i_st = np.zeros(l1i_sets * l1i_ways, np.int64)
    l1d_tags = np.full(l1d_sets * l1d_ways, -1, np.int64)
    l1d_st = np.zeros(l1d_sets * l1d_ways, np.int64)
    l2_tags = np.full(l2_sets * l2_ways, -1, np.int64)
    l2_st = np.zeros(l2_sets * l2_ways, np.int64)
    clock = 0

    pht = np.full(1 << GSHARE_BITS, 2, np.int8)
    hist_mask = (1 << GSHARE_BITS) - 1
    hist = 0

    rob_ring = np.zeros(rob, np.int64)
    rse_ring = np.zeros(rse, np.int64)
    lsq_ring = np.zeros(lsq, np.int64)
    reg_ready = np.zeros(64, np.int64)
    alu_tag = np.full(_UNIT_RING, -1, np.int64)
    alu_cnt = np.zeros(_UNIT_RING, np.int64)
    fp_tag = np.full(_UNIT_RING, -1, np.int64)
    fp_cnt = np.zeros(_UNIT_RING, np.int64)

    n_streams = s_base.shape[0]
    stream_k = np.zeros(n_streams, np.int64)
    n_slots = slot_rand.shape[0]
    occ = np.zeros(max(n_slots, 1), np.int64)
    rb = 0

    k = np.zeros(N_COUNTERS, np.int64)
    size = cls.shape[0]

    fetch_cycle = 0
    fetched = 0
    fetch_resume = 0
    last_iline = -1
    prev_retire = 0
    retired = 0
    n_mem = 0

    for i in range(n_dyn):
        s = i % size
        c = cls[s]
        warm = i >= size
        is_mem = c == C_LOAD or c == C_STORE

        # front end: structural caps delay fetch (in-order allocation)
        t = fetch_cycle
        if t < fetch_resume:
            t = fetch_resume
        if i >= rob and rob_ring[i % rob] > t:
            t = rob_ring[i % rob]
        if i >= rse and rse_ring[i % rse] > t:
            t = rse_ring[i % rse]
        if is_mem and n_mem >= lsq and lsq_ring[n_mem % lsq] > t:
            t = lsq_ring[n_mem % lsq]
        if t > fetch_cycle:
            fetch_cycle = t
            fetched = 0
        if fetched == fetch_width:
            fetch_cycle += 1
            fetched = 0

        iline = (code_base + 4 * s) >> l1i_shift
        if iline != last_iline:
            last_iline = iline
            clock += 1
            k[K_L1] += 1
            hit = _cache_access(l1i_tags, l1i_st, l1i_sets, l1i_ways, iline, clock)
            if warm:
                k[W_L1I_ACC] += 1
            if hit:
                if warm:
                    k[W_L1I_HIT] += 1
            else:
                k[K_L2] += 1
                l2line = (code_base + 4 * s) >> l2_shift
                l2hit = _cache_access(l2_tags, l2_st, l2_sets, l2_ways, l2line, clock)
                if warm:
                    k[W_L2_ACC] += 1
                    if l2hit:
                        k[W_L2_HIT] += 1
                if l2hit:
                    fetch_cycle += l2_lat
                else:
                    k[K_MEM] += 1
                    fetch_cycle += mem_lat
                fetched = 0
        fetched += 1
        f = fetch_cycle

        # operands
        ready = f + 1
        r = src0[s]
        if r >= 0 and reg_ready[r] > ready:
            ready = reg_ready[r]
        r = src1[s]
        if r >= 0 and reg_ready[r] > ready:
            ready = reg_ready[r]

        if c == C_FPADD or c == C_FPMUL:
            issue = _claim_unit(fp_tag, fp_cnt, fp_units, ready)
        else:
            issue = _claim_unit(alu_tag, alu_cnt, alu_units, ready)

        release = 0
        if c == C_INT:
            lat = lat_int
            k[K_INT] += 1
        elif c == C_MUL:
            lat = lat_mul
            k[K_INT] += 1
        elif c == C_FPADD:
            lat = lat_fpa
            k[K_FP] += 1
        elif c == C_FPMUL:
            lat = lat_fpm
            k[K_FP] += 1
        elif c == C_BRANCH:
            lat = lat_int
            k[K_BRANCH] += 1
            b = slot[s]
            if slot_rand[b]:
                taken = rbits[rb] != 0
                rb += 1
            else:
                taken = pat_bits[pat_off[b] + occ[b] % pat_len[b]] != 0
            occ[b] += 1
            idx = (((code_base + 4 * s) >> 2) ^ hist) & hist_mask
            ctr = pht[idx]
            predicted = ctr >= 2
            if taken:
                if ctr < 3:
                    pht[idx] = ctr + 1
            else:
                if ctr > 0:
                    pht[idx] = ctr - 1
            hist = ((hist << 1) | (1 if taken else 0)) & hist_mask
            if predicted != taken:
                k[K_FLUSH] += 1
                if warm:
                    k[W_MISP] += 1
                resume = f + penalty + 1
                if resume > fetch_resume:
                    fetch_resume = resume
        else:
            # memory access in program order
            m = stream[s]
            kk = stream_k[m]
            stream_k[m] = kk + 1
            t1 = s_t1[m]
            t2 = s_t2[m]
            if t1 <= 0 or t2 <= 0:
                fresh = kk
            else:
                block = (t2 + 1) * t1
                cc = kk // block
                rr = kk - cc * block
                if rr < t2 * t1:
                    fresh = cc * t2 * t1 + rr
                else:
                    fresh = cc * t2 * t1 + (t2 - 1) * t1 + (rr - t2 * t1)
            addr = s_base[m] + (fresh * s_stride[m]) % s_foot[m]

            clock += 1
            k[K_L1] += 1
            hit = _cache_access(l1d_tags, l1d_st, l1d_sets, l1d_ways, addr >> l1d_shift, clock)
            if warm:
                k[W_L1D_ACC] += 1
            if hit:
                acc = l1d_lat
                if warm:
                    k[W_L1D_HIT] += 1
            else:
                k[K_L2] += 1
                l2line = addr >> l2_shift
                l2hit = _cache_access(l2_tags, l2_st, l2_sets, l2_ways, l2line, clock)
                if prefetch:
                    _cache_fill(l2_tags, l2_st, l2_sets, l2_ways, l2line + 1, clock)
                if warm:
                    k[W_L2_ACC] += 1
                    if l2hit:
                        k[W_L2_HIT] += 1
                if l2hit:
                    acc = l2_lat
                else:
                    acc = mem_lat
                    k[K_MEM] += 1
            if c == C_LOAD:
                lat = acc
                k[K_LOAD] += 1
            else:
                # stores retire from the store buffer; the LSQ entry drains later
                lat = 1
                release = issue + acc
                k[K_STORE] += 1

        complete = issue + lat
        d = dest[s]
        if d >= 0:
            reg_ready[d] = complete

        ret = complete if complete > prev_retire else prev_retire
        if ret == prev_retire:
            if retired == fetch_width:
                ret += 1
                retired = 0
        else:
            retired = 0
        retired += 1
        prev_retire = ret

        rob_ring[i % rob] = ret
        rse_ring[i % rse] = issue
        if is_mem:
            lsq_ring[n_mem % lsq] = release if release > ret else ret
            n_mem += 1

        if warm:
            k[W_N] += 1
            if c == C_INT or c == C_MUL:
                k[W_INT] += 1
            elif c == C_FPADD or c == C_FPMUL:
                k[W_FP] += 1
            elif c == C_LOAD:
                k[W_LOAD] += 1
            elif c == C_STORE:
                k[W_STORE] += 1
            else:
                k[W_BRANCH] += 1

    k[K_CYCLES] = prev_retire + 1
    return k


def _log2(x: int) -> int:
    return x.bit_length() - 1


def _geometry(c: CacheConfig) -> list[int]:
    return [c.sets, c.associativity, _log2(c.line), c.hit_latency]


def kernel_arrays(kernel: Kernel) -> dict[str, np.ndarray]:
    body = kernel.instrs
    n = len(body)
    cls = np.empty(n, np.int64)
    dest = np.full(n, -1, np.int64)
    src0 = np.full(n, -1, np.int64)
    src1 = np.full(n, -1, np.int64)
    stream = np.full(n, -1, np.int64)
    slot = np.full(n, -1, np.int64)
    stream_pos = {st.id: j for j, st in enumerate(kernel.streams)}
    for i, ins in enumerate(body):
        cls[i] = CLASS_CODE[ins.cls]
        if ins.dest is not None:
            dest[i] = ins.dest
        # store base registers carry no timing dependency (never written)
        if ins.srcs:
            src0[i] = ins.srcs[0]
        if len(ins.srcs) > 1:
            src1[i] = ins.srcs[1]
        if ins.mem_stream is not None:
            stream[i] = stream_pos[ins.mem_stream]
        if ins.branch_slot is not None:
            slot[i] = ins.branch_slot
    st = kernel.streams
    pat = kernel.pattern
    lens = np.array([len(d) for d in pat.directions], np.int64)
    offs = np.concatenate([[0], np.cumsum(lens)[:-1]]).astype(np.int64) if len(lens) else np.zeros(0, np.int64)
    bits = np.array([b for d in pat.directions for b in d], np.uint8)
    rand = np.zeros(pat.n_slots, np.uint8)
    rand[list(pat.randomized)] = 1
    return dict(
        cls=cls, dest=dest, src0=src0, src1=src1, stream=stream, slot=slot,
        s_base=np.array([x.base for x in st], np.int64),
        s_foot=np.array([x.footprint for x in st], np.int64),
        s_stride=np.array([x.stride for x in st], np.int64),
        s_t1=np.array([x.repeat_count for x in st], np.int64),
        s_t2=np.array([x.repeat_period for x in st], np.int64),
        slot_rand=rand, pat_off=offs, pat_len=lens,
        pat_bits=bits if len(bits) else np.zeros(1, np.uint8),
    )


def core_arrays(core: CoreConfig) -> tuple[np.ndarray, np.ndarray]:
    p = np.array([
        core.fetch_width, core.rob_size, core.lsq_size, core.rse_size,
        core.alu_count, core.fp_count, core.mem_latency, core.mispredict_penalty,
        core.int_latency, core.mul_latency, core.fp_add_latency, core.fp_mul_latency,
        int(core.l2_prefetch), CODE_BASE,
    ], np.int64)
    geo = np.array(_geometry(core.l1i) + _geometry(core.l1d) + _geometry(core.l2), np.int64)
    return p, geo


def run_counters(kernel: Kernel, core: CoreConfig, n_dyn: int) -> np.ndarray:
    a = kernel_arrays(kernel)
    rbits = random_directions(kernel, n_dyn)
    if rbits.size == 0:
        rbits = np.zeros(1, np.uint8)
    p, geo = core_arrays(core)
    return run_model(
        int(n_dyn), a["cls"], a["dest"], a["src0"], a["src1"], a["stream"], a["slot"],
        a["s_base"], a["s_foot"], a["s_stride"], a["s_t1"], a["s_t2"],
        a["slot_rand"], a["pat_off"], a["pat_len"], a["pat_bits"], rbits, p, geo)
