"""Command-line front end.

Subcommands ``clone``, ``stress`` and ``brute`` run a tuning job from a JSON
run config, with flags overriding config fields. ``eval`` measures one kernel
and ``gen`` turns a knob configuration into a kernel without simulating it.

Exit codes: 0 success, 1 config error, 2 budget exhausted, 3 evaluator failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import RunConfig
from .errors import ConfigError, EvaluationError
from .kernel import GenerationError, Kernel, emit_asm, generate, regenerate
from .knobs import KnobConfig
from .metrics import format_stats
from .microsim import EnergyModel, load_core
from .objective import CLONE, STRESS
from .report import dump_json, write_atomic
from .run import EXIT_CONFIG, EXIT_EVAL, EXIT_OK, run, summary_line

log = logging.getLogger("wlsynth")


def _abspath(p: Optional[str]) -> Optional[str]:
    return None if p is None else str(Path(p).resolve())


def _core_arg(value: str) -> str:
    # presets and inline JSON pass through, paths are made absolute so they
    # do not get resolved against the config file's directory
    if value in ("large", "small") or value.strip().startswith("{"):
        return value
    return _abspath(value)


def _read_json(path: str, what: str):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path}: not valid JSON ({exc})") from None


def _targets_arg(path: str, use_case: str) -> dict:
    """A --targets file: a target object, a plain metric map, or a list (batch)."""
    data = _read_json(path, "targets file")
    if isinstance(data, list):
        return {"batch": [t if "targets" in t else {"targets": t} for t in data]}
    if isinstance(data, dict) and ("targets" in data or "mode" in data or "metric" in data):
        return {"target": data}
    if use_case == STRESS:
        raise ConfigError(f"targets file {path} holds no stress target")
    return {"target": {"mode": CLONE, "targets": data}}


def config_dict(args: argparse.Namespace, use_case: Optional[str]) -> tuple[dict, Path]:
    """Config file contents with command-line overrides merged in."""
    if args.config:
        d = _read_json(args.config, "config")
        if not isinstance(d, dict):
            raise ConfigError(f"config {args.config} must be a JSON object")
        base = Path(args.config).resolve().parent
    else:
        d, base = {}, Path.cwd()
    if use_case:
        if d.get("use_case") not in (None, use_case):
            raise ConfigError(f"config use_case is {d['use_case']!r}, subcommand wants {use_case!r}")
        d["use_case"] = use_case
    if getattr(args, "targets", None):
        d.update(_targets_arg(args.targets, d.get("use_case", CLONE)))
    if getattr(args, "metric", None) or getattr(args, "minimize", False):
        tgt = d.get("target") if isinstance(d.get("target"), dict) else {}
        tgt = dict(tgt, mode=STRESS)
        if args.metric:
            tgt["metric"] = args.metric
        if args.minimize:
            tgt["direction"] = "minimize"
        d["target"] = tgt
    if args.core:
        d["core"] = _core_arg(args.core)
    if args.external_spec:
        d["external"] = _abspath(args.external_spec)
    for key in ("tuner", "evaluator", "workers", "n_dyn", "static_size", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    if args.out:
        d["out"] = args.out
    if args.seed is not None:
        for t in ("gd", "ga"):
            d[t] = dict(d.get(t, {}), seed=args.seed)
    if args.epochs is not None:
        for t in ("gd", "ga"):
            d[t] = dict(d.get(t, {}), max_epochs=args.epochs)
    if getattr(args, "levels", None) is not None:
        d["brute"] = dict(d.get("brute", {}), levels=args.levels)
    return d, base


def load_run_config(args: argparse.Namespace, use_case: Optional[str]) -> RunConfig:
    d, base = config_dict(args, use_case)
    if "seed" not in d:
        d["seed"] = 42
    cfg = RunConfig.from_json(d, base)
    if args.accuracy is not None:
        try:
            cfg = replace(cfg, target=replace(cfg.target, target_accuracy=args.accuracy),
                          batch=tuple(replace(t, target_accuracy=args.accuracy) for t in cfg.batch))
        except ValueError as exc:
            raise ConfigError(f"--accuracy: {exc}") from None
    return cfg


def cmd_tune(args: argparse.Namespace, use_case: Optional[str]) -> int:
    cfg = load_run_config(args, use_case)
    if args.dump_config:
        print(cfg.dumps())
        return EXIT_OK
    log.info("%s run: tuner=%s knobs=%d core=%s out=%s", cfg.use_case, cfg.tuner, len(cfg.space),
             cfg.core.name, cfg.out)
    outcome = run(cfg, plots=not args.no_plots)
    for r in outcome.runs:
        if r.exit_code == EXIT_EVAL:
            last = _last_error(r.report)
            log.error("evaluator failure%s", f": {last}" if last else "")
    print(summary_line(outcome))
    print(f"artifacts in {outcome.out_dir}")
    return outcome.exit_code


def _last_error(report) -> Optional[str]:
    if report.initial and report.initial.get("error"):
        return report.initial["error"]
    for e in reversed(report.epochs):
        for c in e.checks:
            if c.error:
                return c.error
    return None


def cmd_brute(args: argparse.Namespace) -> int:
    args.tuner = "brute"
    use_case = None
    if not args.config and not args.targets:
        use_case = STRESS
    return cmd_tune(args, use_case)


def _load_kernel(args: argparse.Namespace) -> Kernel:
    if args.kernel:
        d = _read_json(args.kernel, "kernel file")
        try:
            return Kernel.from_json(d) if "instrs" in d else regenerate(d)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"kernel file {args.kernel}: {exc}") from None
    if args.knobs:
        d = _read_json(args.knobs, "knob file")
        fixed = d.pop("fixed", None) if isinstance(d, dict) and "fixed" in d else None
        if isinstance(d, dict) and "knob_config" in d:
            d = d["knob_config"]
        try:
            return generate(KnobConfig(d if isinstance(d, dict) else tuple(d)),
                            args.static_size or 500, 42 if args.seed is None else args.seed, fixed)
        except GenerationError as exc:
            raise ConfigError(f"knob file {args.knobs}: {exc}") from None
    raise ConfigError("need --kernel or --knobs")


def cmd_eval(args: argparse.Namespace) -> int:
    kernel = _load_kernel(args)
    try:
        core = load_core(_core_arg(args.core) if args.core else "large")
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"--core: {exc}") from None
    n_dyn = args.n_dyn or 100_000
    energy = EnergyModel()
    if args.energy:
        energy = EnergyModel.from_json(_read_json(args.energy, "energy file"))
    if args.evaluator == "external":
        from .adapter import ExternalEvalSpec, ExternalEvaluator
        if not args.external_spec:
            raise ConfigError("--evaluator external needs --external-spec")
        spec = ExternalEvalSpec.from_json(_read_json(args.external_spec, "external spec"))
        ev = ExternalEvaluator(spec, core, n_dyn, Path(args.out or "runs/eval"))
    else:
        from .adapter import BuiltinEvaluator
        ev = BuiltinEvaluator(core, n_dyn, energy)
    met = ev.evaluate(kernel, "eval")
    if args.stats_out:
        write_atomic(Path(args.stats_out), format_stats(met))
    print(dump_json({"schema": 1, "metrics": met.to_dict()}), end="")
    return EXIT_OK


def cmd_gen(args: argparse.Namespace) -> int:
    kernel = _load_kernel(args)
    if args.out:
        out = Path(args.out)
        write_atomic(out / "kernel.s", emit_asm(kernel))
        write_atomic(out / "kernel.json", kernel.dumps() + "\n")
        print(f"wrote {out / 'kernel.s'} and {out / 'kernel.json'}")
    else:
        print(emit_asm(kernel), end="")
    return EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--core", help="large, small, a core JSON file or inline JSON")
    p.add_argument("--evaluator", choices=("builtin", "external"))
    p.add_argument("--external-spec", help="external evaluator spec JSON")
    p.add_argument("--n-dyn", type=int, help="dynamic instructions per evaluation")
    p.add_argument("--static-size", type=int, help="static loop body size")
    p.add_argument("--seed", type=int, help="generator and tuner seed (default 42)")
    p.add_argument("--out", help="output directory")


def _tuning(p: argparse.ArgumentParser, tuners: Sequence[str]) -> None:
    _common(p)
    if tuners:
        p.add_argument("--tuner", choices=tuners)
    p.add_argument("--epochs", type=int, help="epoch (generation) budget")
    p.add_argument("--accuracy", type=float, help="clone target accuracy")
    p.add_argument("--workers", type=int, help="parallel evaluations")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    p.add_argument("--dump-config", action="store_true",
                   help="print the resolved config and exit")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wlsynth", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clone", help="tune a clone toward target metrics")
    _tuning(p, ("gd", "ga", "brute"))
    p.add_argument("--targets", help="target metrics JSON (a list means batch mode)")
    p.set_defaults(func=lambda a: cmd_tune(a, CLONE))

    p = sub.add_parser("stress", help="tune a kernel to extremize one metric")
    _tuning(p, ("gd", "ga", "brute"))
    p.add_argument("--metric", help="metric to extremize (default ipc)")
    p.add_argument("--minimize", action="store_true")
    p.set_defaults(func=lambda a: cmd_tune(a, STRESS))

    p = sub.add_parser("brute", help="exhaustive grid search")
    _tuning(p, ())
    p.add_argument("--targets", help="clone target metrics JSON")
    p.add_argument("--metric", help="stress metric (default ipc)")
    p.add_argument("--minimize", action="store_true")
    p.add_argument("--levels", type=int, help="values per knob in the grid")
    p.set_defaults(func=cmd_brute)

    for name, hlp, fn in (("eval", "measure one kernel", cmd_eval),
                          ("gen", "build a kernel from knob values", cmd_gen)):
        p = sub.add_parser(name, help=hlp)
        _common(p)
        p.add_argument("--kernel", help="kernel JSON")
        p.add_argument("--knobs", help="knob values JSON object")
        if name == "eval":
            p.add_argument("--energy", help="energy model JSON")
            p.add_argument("--stats-out", help="also write a stats.txt dump here")
        p.set_defaults(func=fn)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EvaluationError as exc:
        print(f"evaluator failure: {exc}", file=sys.stderr)
        if exc.output:
            print(exc.output, file=sys.stderr)
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
