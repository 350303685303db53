import csv
import json
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import pytest

from wlsynth.adapter import BuiltinEvaluator, make_eval_fn
from wlsynth.cli import main
from wlsynth.config import RunConfig
from wlsynth.errors import ConfigError
from wlsynth.kernel import emit_asm, generate, regenerate
from wlsynth.knobs import KnobConfig, KnobSpace, random_point, snap
from wlsynth.microsim import LARGE, SMALL, simulate
from wlsynth.objective import TargetSpec
from wlsynth.report import SCHEMA, emit_report, read_epochs_csv
from wlsynth.run import EXIT_BUDGET, EXIT_CONFIG, EXIT_EVAL, EXIT_OK, exit_code_for, run
from wlsynth.tuners import CONVERGED, MAX_EPOCHS, GDSettings, gd_tune

SPACE = KnobSpace.default()
FAST = ["--n-dyn", "5000", "--static-size", "200", "--no-plots"]


def ref_metrics(seed=7, core=LARGE, n_dyn=5000, size=200):
    cfg = snap(random_point(SPACE, seed), SPACE)
    return cfg, simulate(generate(cfg, size, seed), core, n_dyn)


def write(path: Path, obj) -> str:
    path.write_text(json.dumps(obj))
    return str(path)


def test_config_round_trip(tmp_path):
    _, met = ref_metrics()
    d = {"use_case": "clone", "target": {"targets": met.to_dict(), "weights": {"ipc": 2.0}},
         "core": "small", "tuner": "ga", "ga": {"population": 20}, "n_dyn": 5000,
         "static_size": 200, "seed": 3, "active_knobs": ["ADD", "LD", "MEM_SIZE"],
         "fixed": {"SD": 2}}
    c = RunConfig.from_json(d)
    assert c.core == SMALL and c.ga.population == 20 and c.gd.seed == 3
    assert list(c.space.names) == ["ADD", "LD", "MEM_SIZE"]
    again = RunConfig.from_json(json.loads(c.dumps()))
    assert again == c
    assert again.dumps() == c.dumps()


def test_config_files_resolved_against_config_dir(tmp_path):
    write(tmp_path / "core.json", {"preset": "small", "mem_latency": 150})
    write(tmp_path / "knobs.json", SPACE.subset(["ADD", "LD"]).to_json())
    cfg = tmp_path / "run.json"
    write(cfg, {"use_case": "stress", "core": "core.json", "knobs": "knobs.json",
                "target": {"metric": "dyn_power"}})
    c = RunConfig.load(cfg)
    assert c.core.mem_latency == 150 and len(c.space) == 2
    assert RunConfig.from_json(c.to_json()) == c


@pytest.mark.parametrize("bad, needle", [
    ({"use_case": "clone", "target": {"targets": {"ipcx": 1}}}, "ipcx"),
    ({"use_case": "clone"}, "target"),
    ({"use_case": "sideways"}, "use_case"),
    ({"use_case": "stress", "tuner": "anneal"}, "tuner"),
    ({"use_case": "stress", "core": "missing.json"}, "not found"),
    ({"use_case": "stress", "evaluator": "external"}, "external"),
    ({"use_case": "stress", "n_dyn": 5}, "n_dyn"),
    ({"use_case": "stress", "colour": 1}, "colour"),
    ({"use_case": "stress", "fixed": {"ADD": 1}}, "fixed and tuned"),
])
def test_config_validation(bad, needle):
    with pytest.raises(ConfigError, match=needle):
        RunConfig.from_json(bad)


def test_batch_config():
    _, a = ref_metrics(1)
    _, b = ref_metrics(2)
    c = RunConfig.from_json({"use_case": "clone", "batch": [{"targets": a.to_dict()},
                                                            {"targets": b.to_dict()}]})
    assert len(c.targets) == 2 and c.target == c.batch[0]
    with pytest.raises(ConfigError):
        RunConfig.from_json({"use_case": "stress", "batch": [{"targets": a.to_dict()}]})


def _ten_epoch_report():
    cfg, met = ref_metrics(9)
    fn = make_eval_fn(BuiltinEvaluator(LARGE, 5000), 200, 1)
    # a start far from the reference so the run uses its whole budget
    rep = gd_tune(SPACE, TargetSpec.clone(met, target_accuracy=1.0), GDSettings(max_epochs=10,
                  restarts=10, epsilon=0.0), fn)
    return rep


def test_emit_report_files(tmp_path):
    rep = _ten_epoch_report()
    assert len(rep.epochs) == 10
    kernel = generate(KnobConfig(tuple(rep.best_config.items())), 200, 1)
    art = emit_report(rep, tmp_path, kernel, plots=True)
    for name in ("report.json", "epochs.csv", "kernel.s", "kernel.json", "metrics.json"):
        assert art[name].exists()
    with open(tmp_path / "epochs.csv") as f:
        lines = list(csv.reader(f))
    assert len(lines) == 11
    rows = read_epochs_csv(tmp_path / "epochs.csv")
    body = json.loads((tmp_path / "report.json").read_text())
    assert body["schema"] == SCHEMA == 1
    assert body["best_loss"] == min(float(r["loss"]) for r in rows)
    again = regenerate(json.loads((tmp_path / "kernel.json").read_text()))
    assert emit_asm(again) == (tmp_path / "kernel.s").read_text()
    assert {p.name for p in art.figures} == {"convergence.png", "accuracy.png", "mix.png"}
    assert all(p.read_bytes()[:4] == b"\x89PNG" for p in art.figures)


def test_emit_report_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match=str(blocker)):
        emit_report(_ten_epoch_report(), blocker / "sub", plots=False)


def test_run_reproducible(tmp_path):
    _, met = ref_metrics(4)
    c = RunConfig.from_json({"use_case": "clone", "target": {"targets": met.to_dict()},
                             "gd": {"max_epochs": 4}, "n_dyn": 5000, "static_size": 200})
    run(c, plots=False, out=str(tmp_path / "a"))
    run(c, plots=False, out=str(tmp_path / "b"))
    for name in ("report.json", "epochs.csv", "kernel.s", "kernel.json", "metrics.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_batch_run(tmp_path):
    _, a = ref_metrics(1)
    _, b = ref_metrics(2)
    c = RunConfig.from_json({"use_case": "clone", "gd": {"max_epochs": 2}, "n_dyn": 5000,
                             "static_size": 200,
                             "batch": [{"targets": a.to_dict()}, {"targets": b.to_dict()}]})
    out = run(c, plots=False, out=str(tmp_path))
    assert len(out.runs) == 2
    assert (tmp_path / "clone0" / "kernel.s").exists() and (tmp_path / "clone1" / "kernel.s").exists()
    rows = list(csv.DictReader(open(tmp_path / "accuracy.csv")))
    assert [r["clone"] for r in rows] == ["0", "1"]


# exit codes, driven through the CLI with injected faults

def test_exit_ok_when_target_met(tmp_path):
    cfg, met = ref_metrics(5)
    # a loose accuracy bar that the first epochs reach
    start = tmp_path / "t.json"
    write(start, met.to_dict())
    gen_cfg = tmp_path / "c.json"
    write(gen_cfg, {"use_case": "clone", "gd": {"max_epochs": 5}, "seed": 5})
    code = main(["clone", "--config", str(gen_cfg), "--targets", str(start), *FAST,
                 "--out", str(tmp_path / "o"), "--accuracy", "0.5"])
    assert code == EXIT_OK


def test_exit_budget_zero_epochs(tmp_path):
    _, met = ref_metrics(6)
    t = write(tmp_path / "t.json", met.to_dict())
    out = tmp_path / "o"
    code = main(["clone", "--targets", t, "--epochs", "0", *FAST, "--out", str(out)])
    assert code == EXIT_BUDGET
    for name in ("report.json", "epochs.csv", "kernel.s", "kernel.json", "metrics.json"):
        assert (out / name).exists()
    body = json.loads((out / "report.json").read_text())
    assert body["best_config"] == body["initial"]["config"]


def test_exit_config_errors(tmp_path, capsys):
    t = write(tmp_path / "t.json", {"ipcx": 1.2})
    assert main(["clone", "--targets", t, *FAST, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "ipcx" in capsys.readouterr().err
    assert main(["clone", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG
    assert main(["stress", "--core", "tiny", *FAST]) == EXIT_CONFIG
    with pytest.raises(SystemExit):
        main(["stress", "--tuner", "anneal"])


def test_exit_eval_failure(tmp_path):
    ext = write(tmp_path / "ext.json", {"command": [sys.executable, "-c", "import sys; sys.exit(9)"],
                                        "metric_map": {"ipc": "sim.ipc"}})
    code = main(["stress", "--evaluator", "external", "--external-spec", ext, "--epochs", "2",
                 *FAST, "--out", str(tmp_path / "o")])
    assert code == EXIT_EVAL


def test_stress_defaults_to_ipc(tmp_path):
    out = tmp_path / "o"
    assert main(["stress", "--epochs", "2", *FAST, "--out", str(out)]) in (EXIT_OK, EXIT_BUDGET)
    body = json.loads((out / "report.json").read_text())
    assert body["target"]["metric"] == "ipc"
    assert body["target"]["direction"] == "maximize"
    assert "instruction_mix" in body


def test_brute_writes_grid(tmp_path):
    knobs = write(tmp_path / "k.json", SPACE.subset(["ADD", "LD", "MEM_SIZE"]).to_json())
    cfg = write(tmp_path / "c.json", {"use_case": "stress", "knobs": knobs,
                                      "target": {"metric": "dyn_power"}})
    out = tmp_path / "o"
    code = main(["brute", "--config", cfg, "--levels", "3", *FAST, "--out", str(out)])
    assert code == EXIT_OK
    rows = list(csv.DictReader(open(out / "grid.csv")))
    assert len(rows) == 27
    best = max(float(r["dyn_power"]) for r in rows)
    assert json.loads((out / "metrics.json").read_text())["metrics"]["dyn_power"] == best


def test_gen_and_eval_subcommands(tmp_path, capsys):
    knobs = write(tmp_path / "k.json", {"ADD": 2, "LD": 1, "MEM_SIZE": 8})
    out = tmp_path / "g"
    assert main(["gen", "--knobs", knobs, "--static-size", "100", "--out", str(out)]) == 0
    assert (out / "kernel.s").read_text().count("\n") > 100
    capsys.readouterr()
    assert main(["eval", "--kernel", str(out / "kernel.json"), "--n-dyn", "5000"]) == 0
    met = json.loads(capsys.readouterr().out)["metrics"]
    k = regenerate(json.loads((out / "kernel.json").read_text()))
    assert met["ipc"] == simulate(k, LARGE, 5000).ipc


def test_module_entry_point(tmp_path):
    knobs = write(tmp_path / "k.json", {"ADD": 1})
    r = subprocess.run([sys.executable, "-m", "wlsynth", "gen", "--knobs", knobs,
                        "--static-size", "20"], capture_output=True, text=True, timeout=120)
    assert r.returncode == 0 and ".Lloop:" in r.stdout


def test_stress_exit_code_rules():
    fn = make_eval_fn(BuiltinEvaluator(LARGE, 5000), 200, 1)
    space = SPACE.subset(["ADD", "LD"])
    rep = gd_tune(space, TargetSpec.stress("ipc"), GDSettings(max_epochs=3, restarts=0), fn)
    assert exit_code_for(replace(rep, stop_reason=CONVERGED)) == EXIT_OK
    # out of budget without ever settling
    fresh = replace(rep, stop_reason=MAX_EPOCHS,
                    epochs=[replace(e, restart=False) for e in rep.epochs])
    assert exit_code_for(fresh) == EXIT_BUDGET
    # out of budget after an earlier descent settled and restarted
    settled = replace(fresh, epochs=[replace(fresh.epochs[0], restart=True)] + fresh.epochs[1:])
    assert exit_code_for(settled) == EXIT_OK
