import sys

import pytest

from wlsynth.adapter import (BuiltinEvaluator, ExternalEvalSpec, ExternalEvaluator, MetricSource,
                             builtin_metric_map, evaluate_external, make_eval_fn, parse_stats,
                             read_stats)
from wlsynth.errors import EvaluationError, StatsError
from wlsynth.kernel import generate
from wlsynth.knobs import KnobConfig, KnobSpace, random_point, snap
from wlsynth.metrics import MetricVector, format_stats
from wlsynth.microsim import LARGE, SMALL, simulate

SPACE = KnobSpace.default()
SELF_TEST = [sys.executable, "-m", "wlsynth", "eval", "--kernel", "{kernel_json}",
             "--core", "{core_config}", "--n-dyn", "{n_dyn}", "--stats-out", "{workdir}/stats.txt"]


def kernel(seed=0):
    return generate(snap(random_point(SPACE, seed), SPACE), 200, seed)


def test_direct_mapping():
    met = parse_stats("system.cpu.ipc 1.234\n", {"ipc": MetricSource("system.cpu.ipc")})
    assert met.ipc == 1.234


def test_one_minus():
    src = MetricSource.from_json({"key": "dcache.miss_rate", "transform": "one-minus"})
    assert parse_stats("dcache.miss_rate 0.08", {"l1d_hit": src}).l1d_hit == pytest.approx(0.92)


def test_divide_by():
    src = MetricSource.from_json({"key": "instructions", "transform": "divide-by(cycles)"})
    met = parse_stats("instructions 100\ncycles 80 # total\n", {"ipc": src})
    assert met.ipc == 1.25
    src2 = MetricSource.from_json({"key": "instructions", "transform": "divide-by", "by": "cycles"})
    assert src2 == src
    with pytest.raises(StatsError, match="zero"):
        parse_stats("instructions 100\ncycles 0\n", {"ipc": src})


def test_first_match_wins_and_comments():
    text = "# header line\nsim.ipc 2.0 # first\nsim.ipc 3.0\nnoise\n"
    assert parse_stats(text, {"ipc": MetricSource("sim.ipc")}).ipc == 2.0
    assert read_stats(text)["sim.ipc"] == ("2.0", 2)


def test_parse_errors():
    with pytest.raises(StatsError, match="no metrics mapped"):
        parse_stats("a 1", {})
    with pytest.raises(StatsError, match="empty"):
        parse_stats("   \n", {"ipc": MetricSource("a")})
    with pytest.raises(StatsError, match="'sim.ipc' not found"):
        parse_stats("other 1", {"ipc": MetricSource("sim.ipc")})
    with pytest.raises(StatsError, match="line 2"):
        parse_stats("x 1\nsim.ipc fast\n", {"ipc": MetricSource("sim.ipc")})
    with pytest.raises(ValueError):
        MetricSource.from_json({"key": "a", "transform": "square"})


def test_unmapped_fields_keep_defaults():
    met = parse_stats("sim.ipc 2.5", {"ipc": MetricSource("sim.ipc")})
    assert met == MetricVector(ipc=2.5)


@pytest.mark.parametrize("seed", range(5))
def test_stats_round_trip_bit_exact(seed):
    met = simulate(kernel(seed), LARGE, 10_000)
    assert parse_stats(format_stats(met), builtin_metric_map()) == met


def test_spec_json_round_trip():
    spec = ExternalEvalSpec.from_json({"command": "sim --in {asm} --out {workdir}",
                                       "metric_map": {"ipc": "sim.ipc",
                                                      "l1d_hit": {"key": "d.miss", "transform": "one-minus"}},
                                       "timeout": 5, "env": {"A": "1"}})
    assert spec.command == ("sim", "--in", "{asm}", "--out", "{workdir}")
    assert ExternalEvalSpec.from_json(spec.to_json()) == spec
    spec.require(["ipc", "l1d_hit"])
    with pytest.raises(ValueError, match="branch_mispred"):
        spec.require(["ipc", "branch_mispred"])
    with pytest.raises(ValueError):
        ExternalEvalSpec.from_json({"command": "x", "timeout": 0})
    assert set(ExternalEvalSpec.from_json({"command": "x"}).metric_map) == set(MetricVector.field_names())


def test_self_test_through_cli(tmp_path):
    # the package's own eval subcommand as the external simulator
    k = kernel(3)
    spec = ExternalEvalSpec.from_json({"command": SELF_TEST, "timeout": 120})
    met = evaluate_external(spec, k, SMALL, 20_000, tmp_path)
    assert met == simulate(k, SMALL, 20_000)
    wd = tmp_path / "eval1"
    for name in ("kernel.s", "kernel.json", "core.json", "stats.txt"):
        assert (wd / name).exists()


def test_external_layout_and_records(tmp_path):
    spec = ExternalEvalSpec.from_json({"command": SELF_TEST, "timeout": 120})
    ev = ExternalEvaluator(spec, LARGE, 5000, tmp_path)
    ev.evaluate(kernel(1), "epoch2/check3")
    wd = tmp_path / "epoch2" / "check3"
    assert ev.records[str(wd)] == wd / "stats.txt"
    assert "system.cpu.ipc" in (wd / "stats.txt").read_text()


def test_nonzero_exit_carries_output(tmp_path):
    cmd = [sys.executable, "-c", "import sys; print('boom'); sys.exit(4)"]
    ev = ExternalEvaluator(ExternalEvalSpec.from_json({"command": cmd}), LARGE, 1000, tmp_path)
    with pytest.raises(EvaluationError, match="status 4") as exc:
        ev.evaluate(kernel(), "t")
    assert "boom" in exc.value.output


def test_timeout(tmp_path):
    cmd = [sys.executable, "-c", "import time; time.sleep(5)"]
    ev = ExternalEvaluator(ExternalEvalSpec.from_json({"command": cmd, "timeout": 0.3}),
                           LARGE, 1000, tmp_path)
    with pytest.raises(EvaluationError, match="timed out"):
        ev.evaluate(kernel(), "t")


def test_missing_stats_and_env(tmp_path):
    cmd = [sys.executable, "-c",
           "import os; open('stats.txt','w').write('sim.ipc ' + os.environ['FAKE_IPC'])"]
    spec = ExternalEvalSpec.from_json({"command": cmd, "metric_map": {"ipc": "sim.ipc"},
                                       "env": {"FAKE_IPC": "1.5"}})
    assert ExternalEvaluator(spec, LARGE, 1000, tmp_path).evaluate(kernel(), "a").ipc == 1.5
    spec = ExternalEvalSpec.from_json({"command": [sys.executable, "-c", "pass"],
                                       "metric_map": {"ipc": "sim.ipc"}})
    with pytest.raises(EvaluationError, match="cannot read stats"):
        ExternalEvaluator(spec, LARGE, 1000, tmp_path).evaluate(kernel(), "b")
    spec = ExternalEvalSpec.from_json({"command": ["{nope}"], "metric_map": {"ipc": "x"}})
    with pytest.raises(EvaluationError, match="placeholder"):
        ExternalEvaluator(spec, LARGE, 1000, tmp_path).evaluate(kernel(), "c")


def test_builtin_evaluator_and_eval_fn():
    ev = BuiltinEvaluator(LARGE, 5000)
    k = kernel(2)
    assert ev.evaluate(k) == simulate(k, LARGE, 5000)
    with pytest.raises(EvaluationError):
        BuiltinEvaluator(LARGE, 10).evaluate(k)
    fn = make_eval_fn(ev, 200, 2)
    assert fn(k.knob_config, "x") == ev.evaluate(k)
    # 10 opcodes cannot fit in 10 slots with these weights
    tiny = make_eval_fn(ev, 10, 0)
    with pytest.raises(EvaluationError, match="generation failed"):
        tiny(KnobConfig({op: w for op, w in zip(
            ["ADD", "MUL", "FADDD", "FMULD", "BEQ", "BNE", "LD", "LW", "SD", "SW"],
            [10, 10, 10, 1, 1, 1, 1, 1, 1, 1])}), "x")
