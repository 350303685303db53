import itertools
import math

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from wlsynth.kernel import generate
from wlsynth.knobs import KnobSpace, config_from_indices
from wlsynth.metrics import MetricVector
from wlsynth.microsim import LARGE, simulate
from wlsynth.objective import (DEFAULT_CLONE_METRICS, MetricError, TargetSpec, accuracy,
                               clone_loss, loss, stress_loss)
from wlsynth.tuners import make_grid

FIELDS = MetricVector.field_names()
pos = st.floats(1e-3, 10, allow_nan=False)
vectors = st.fixed_dictionaries({f: pos for f in FIELDS}).map(MetricVector.from_dict)


def test_clone_exact_match_zero():
    met = MetricVector(frac_int=0.5, frac_load=0.5, ipc=2)
    t = TargetSpec.clone(met)
    assert clone_loss(met, t).value == 0
    a = accuracy(met, t)
    assert a.min == a.mean == 1.0


def test_clone_unit_log_ratio():
    t = TargetSpec.clone({"ipc": 1.0}, {"ipc": 2.0})
    got = clone_loss(MetricVector(ipc=math.e), t).value
    # 2 * ln((e + eps) / (1 + eps))^2, eps = 1e-6
    expect = 2.0 * math.log((math.e + 1e-6) / (1 + 1e-6)) ** 2
    assert got == pytest.approx(expect, rel=1e-15)
    assert got == pytest.approx(2.0, abs=1e-5)


def test_default_weights():
    t = TargetSpec.clone(MetricVector())
    assert {m for m, w in t.weights.items() if w > 0} == set(DEFAULT_CLONE_METRICS)
    assert t.weights["dyn_power"] == 0 and t.weights["frac_fp"] == 0


def test_target_validation():
    with pytest.raises(MetricError, match="'ipcx'"):
        TargetSpec.clone({"ipcx": 1.0})
    with pytest.raises(ValueError):
        TargetSpec.clone({"ipc": 1.0}, {"ipc": 0.0})
    with pytest.raises(ValueError):
        TargetSpec.clone({"ipc": 1.0}, {"ipc": -1.0})
    with pytest.raises(ValueError):
        TargetSpec.clone({"ipc": 1.0}, target_accuracy=0)
    with pytest.raises(ValueError):
        TargetSpec.clone({"ipc": 1.0}, {"l2_hit": 1.0})
    with pytest.raises(MetricError):
        TargetSpec.stress("watts")
    with pytest.raises(ValueError):
        TargetSpec.stress("ipc", "sideways")


def test_target_json():
    t = TargetSpec.clone({"ipc": 1.2, "l1d_hit": 0.9}, {"l1d_hit": 3}, 0.95)
    assert TargetSpec.from_json(t.to_json()) == t
    s = TargetSpec.from_json({"mode": "stress"})
    assert s.stress_metric == "ipc" and s.stress_direction == "maximize"
    assert TargetSpec.from_json(s.to_json()) == s


def test_stress_examples():
    t = TargetSpec.stress("ipc")
    assert stress_loss(MetricVector(ipc=1.0), t).value == pytest.approx(0, abs=1e-5)
    assert stress_loss(MetricVector(ipc=math.e), t).value == pytest.approx(-1, abs=1e-5)
    tm = TargetSpec.stress("ipc", "minimize")
    assert stress_loss(MetricVector(ipc=math.e), tm).value == pytest.approx(1, abs=1e-5)
    assert math.isfinite(stress_loss(MetricVector(dyn_power=0.0), TargetSpec.stress("dyn_power")).value)


def test_accuracy_arithmetic():
    t = TargetSpec.clone({"ipc": 1.0})
    assert accuracy(MetricVector(ipc=1.05), t).per_metric["ipc"] == pytest.approx(0.95)
    assert accuracy(MetricVector(ipc=3.0), t).per_metric["ipc"] == 0.0


def test_mode_mismatch():
    with pytest.raises(ValueError):
        clone_loss(MetricVector(), TargetSpec.stress())
    with pytest.raises(ValueError):
        stress_loss(MetricVector(), TargetSpec.clone({"ipc": 1}))
    with pytest.raises(ValueError):
        accuracy(MetricVector(), TargetSpec.stress())


@given(vectors, vectors)
def test_clone_symmetry_and_nonneg(a, b):
    ta, tb = TargetSpec.clone(a), TargetSpec.clone(b)
    la, lb = clone_loss(b, ta), clone_loss(a, tb)
    assert la.value >= 0
    assert la.value == pytest.approx(lb.value, rel=1e-12, abs=1e-300)
    assert la.value == pytest.approx(math.fsum(la.per_metric.values()), rel=1e-15)


@given(vectors, st.sampled_from([f for f in FIELDS if f not in DEFAULT_CLONE_METRICS]), pos)
def test_zero_weight_fields_ignored(met, field, value):
    t = TargetSpec.clone(met)
    assert t.weights[field] == 0
    other = met.replace(**{field: value})
    assert clone_loss(other, t).value == clone_loss(met, t).value


@given(vectors, st.lists(st.sampled_from([0.0, 1.0, -1.0, 0.01, -0.2]),
                        min_size=len(DEFAULT_CLONE_METRICS), max_size=len(DEFAULT_CLONE_METRICS)))
def test_accuracy_one_iff_loss_zero(a, shifts):
    t = TargetSpec.clone(a)
    b = a.replace(**{m: a.get(m) * (1 + s) for m, s in zip(DEFAULT_CLONE_METRICS, shifts)})
    assert (accuracy(b, t).min >= 1 - 1e-9) == (clone_loss(b, t).value <= 1e-9)


@given(st.floats(0, 100), st.floats(0, 100))
def test_stress_monotone(x, y):
    assume(x < y)
    for direction, sign in (("maximize", 1), ("minimize", -1)):
        t = TargetSpec.stress("dyn_power", direction)
        lx = stress_loss(MetricVector(dyn_power=x), t).value
        ly = stress_loss(MetricVector(dyn_power=y), t).value
        assume(math.log(y + 1e-6) > math.log(x + 1e-6))
        assert sign * (ly - lx) < 0


def test_grid_argmin_is_metric_argmax():
    space = KnobSpace.default().subset(["ADD", "FADDD", "LD", "MEM_SIZE"])
    grid = make_grid(space, 3)
    t = TargetSpec.stress("dyn_power")
    best_loss = best_metric = None
    for pt in itertools.product(*grid):
        cfg = config_from_indices(pt, space)
        met = simulate(generate(cfg, 200, 1), LARGE, 5000)
        lv = loss(met, t).value
        if best_loss is None or lv < best_loss[0]:
            best_loss = (lv, pt)
        if best_metric is None or met.dyn_power > best_metric[0]:
            best_metric = (met.dyn_power, pt)
    assert best_loss[1] == best_metric[1]
