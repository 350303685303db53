"""Built-in deterministic evaluator: timing model plus event-energy power."""

from __future__ import annotations

from dataclasses import dataclass

from ..kernel import Kernel
from ..metrics import MetricVector
from . import engine as _e
from .config import LARGE, PRESETS, SMALL, CacheConfig, CoreConfig, load_core
from .power import EnergyModel, dynamic_power

__all__ = [
    "CacheConfig", "CoreConfig", "EnergyModel", "LARGE", "SMALL", "PRESETS",
    "SimResult", "dynamic_power", "load_core", "simulate", "simulate_detailed",
]


@dataclass(frozen=True)
class SimResult:
    metrics: MetricVector
    cycles: int
    events: dict


def _rate(num: int, den: int, empty: float) -> float:
    return num / den if den else empty


def simulate_detailed(kernel: Kernel, core: CoreConfig, n_dyn: int,
                      energy: EnergyModel = EnergyModel()) -> SimResult:
    if n_dyn < kernel.size:
        raise ValueError(f"n_dyn={n_dyn} shorter than the loop body ({kernel.size})")
    k = _e.run_counters(kernel, core, n_dyn)
    cycles = int(k[_e.K_CYCLES])
    events = {
        "int": int(k[_e.K_INT]), "fp": int(k[_e.K_FP]), "load": int(k[_e.K_LOAD]),
        "store": int(k[_e.K_STORE]), "branch": int(k[_e.K_BRANCH]),
        "l1_access": int(k[_e.K_L1]), "l2_access": int(k[_e.K_L2]),
        "mem_access": int(k[_e.K_MEM]), "flush": int(k[_e.K_FLUSH]),
    }
    n = int(k[_e.W_N])
    if n == 0:
        # single pass: nothing after warm-up, fall back to the whole run
        n = n_dyn
        fr = [events["int"], events["fp"], events["branch"], events["load"], events["store"]]
    else:
        fr = [int(k[_e.W_INT]), int(k[_e.W_FP]), int(k[_e.W_BRANCH]),
              int(k[_e.W_LOAD]), int(k[_e.W_STORE])]
    met = MetricVector(
        frac_int=fr[0] / n, frac_fp=fr[1] / n, frac_branch=fr[2] / n,
        frac_load=fr[3] / n, frac_store=fr[4] / n,
        l1i_hit=_rate(int(k[_e.W_L1I_HIT]), int(k[_e.W_L1I_ACC]), 1.0),
        l1d_hit=_rate(int(k[_e.W_L1D_HIT]), int(k[_e.W_L1D_ACC]), 1.0),
        l2_hit=_rate(int(k[_e.W_L2_HIT]), int(k[_e.W_L2_ACC]), 1.0),
        branch_mispred=_rate(int(k[_e.W_MISP]), int(k[_e.W_BRANCH]), 0.0),
        ipc=n_dyn / cycles,
        dyn_power=dynamic_power(events, cycles, core, energy),
    )
    return SimResult(met, cycles, events)


def simulate(kernel: Kernel, core: CoreConfig, n_dyn: int,
             energy: EnergyModel = EnergyModel()) -> MetricVector:
    return simulate_detailed(kernel, core, n_dyn, energy).metrics
