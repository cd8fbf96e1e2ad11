"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 run failure (divergence or impact),
4 failed ``analyze --assert`` checks.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import analysis, config, sim
from .errors import ConfigInvalid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUN = 3
EXIT_ASSERT = 4

FAILED_TERMINATIONS = ("divergence", "impact")


def _add_config_args(p):
    p.add_argument("--config", help="JSON scenario document")
    p.add_argument("--preset", help="named preset used as the base")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted override, value parsed as JSON (repeatable)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", default="runs", help="output directory (default: runs)")


def build_parser():
    parser = argparse.ArgumentParser(prog="indiflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario")
    _add_config_args(p)

    p = sub.add_parser("compare", help="run the conventional and direct arms on one scenario")
    _add_config_args(p)
    p.add_argument("--reps", type=int, default=20, help="interleaved repetitions (default 20)")

    p = sub.add_parser("sweep", help="run one scenario per value of a parameter")
    _add_config_args(p)
    p.add_argument("--param", required=True, help="dotted parameter path")
    p.add_argument("--values", required=True, help="JSON list of values")

    p = sub.add_parser("analyze", help="recompute the report of a saved run")
    p.add_argument("run", help="run directory or log CSV")
    p.add_argument("--config", help="config to take setpoints from (default: the run's echo)")
    p.add_argument("--preset", help="preset to take setpoints from")
    p.add_argument("--out", help="where to write report.json (default: next to the log)")
    p.add_argument("--assert", dest="check", action="store_true",
                   help="exit 4 unless the landing checks pass")
    p.add_argument("--rate-tol", type=float, default=0.05, help="relative decay-rate tolerance")
    p.add_argument("--min-r2", type=float, default=0.95, help="minimum decay-fit R^2")

    sub.add_parser("presets", help="list preset names")
    return parser


def _config(args):
    if args.config is None and args.preset is None:
        raise ConfigInvalid("give --config or --preset")
    return config.load_config(args.config, args.overrides, args.preset, args.seed)


def _report(log, cfg, metrics):
    rep = analysis.analyze_log(log, cfg.gains.setpoint, cfg.guard.min_height, cfg.sensor.c[2])
    rep["termination"] = metrics.termination
    rep["name"] = cfg.name
    rep["config_hash"] = cfg.digest()
    return rep


def write_run(out_dir, cfg, log, metrics):
    """Standard run layout: echo, log, metrics and report."""
    os.makedirs(out_dir, exist_ok=True)
    config.write_echo(cfg, os.path.join(out_dir, "config.echo.json"))
    log.write_csv(os.path.join(out_dir, "log.csv"))
    analysis.write_json(metrics.to_dict(), os.path.join(out_dir, "metrics.json"))
    analysis.write_json(_report(log, cfg, metrics), os.path.join(out_dir, "report.json"))
    return out_dir


def _status(cfg, metrics, out_dir):
    print(f"{cfg.name}: {metrics.termination} after {metrics.ticks} ticks -> {out_dir}")
    if metrics.termination in FAILED_TERMINATIONS:
        print(f"error: run {cfg.name} ended in {metrics.termination}", file=sys.stderr)
        return EXIT_RUN
    return EXIT_OK


def cmd_simulate(args):
    cfg = _config(args)
    log, metrics = sim.run_scenario(cfg)
    out_dir = write_run(os.path.join(args.out, cfg.name), cfg, log, metrics)
    return _status(cfg, metrics, out_dir)


def cmd_compare(args):
    cfg = _config(args)
    if args.reps < 1:
        raise ConfigInvalid("--reps must be at least 1", "reps")
    res = sim.compare_methods(cfg, repetitions=args.reps)
    code = EXIT_OK
    for arm, log, metrics in zip(res["arms"], res["logs"], res["metrics"]):
        arm_cfg = sim.with_method(cfg, arm)
        out_dir = write_run(os.path.join(args.out, f"{cfg.name}-{arm}"), arm_cfg, log, metrics)
        code = max(code, _status(arm_cfg, metrics, out_dir))
    text, summary = analysis.compare_report(*res["metrics"], wall_ratio=res["wall_ratio"])
    summary["repetitions"] = res["repetitions"]
    summary["rep_medians_s"] = res["rep_medians"]
    cmp_dir = os.path.join(args.out, f"{cfg.name}-compare")
    os.makedirs(cmp_dir, exist_ok=True)
    config.write_echo(cfg, os.path.join(cmp_dir, "config.echo.json"))
    analysis.write_json(summary, os.path.join(cmp_dir, "report.json"))
    print(text)
    return code


def cmd_sweep(args):
    cfg = _config(args)
    try:
        values = json.loads(args.values)
    except json.JSONDecodeError:
        raise ConfigInvalid(f"--values is not a JSON list: {args.values!r}", "values") from None
    if not isinstance(values, list) or not values:
        raise ConfigInvalid("--values must be a non-empty JSON list", "values")
    variants = sim.sweep_variants(cfg, args.param, values)
    code = EXIT_OK
    rows = []
    for i, (value, var) in enumerate(zip(values, variants)):
        log, metrics = sim.run_scenario(var)
        out_dir = write_run(os.path.join(args.out, f"{cfg.name}-sweep-{i:03d}"), var, log, metrics)
        code = max(code, _status(var, metrics, out_dir))
        rows.append({"value": value, "dir": out_dir, **metrics.to_dict()})
    sweep_dir = os.path.join(args.out, f"{cfg.name}-sweep")
    os.makedirs(sweep_dir, exist_ok=True)
    analysis.write_json({"param": args.param, "runs": rows}, os.path.join(sweep_dir, "report.json"))
    return code


def cmd_analyze(args):
    path = args.run
    log_path = os.path.join(path, "log.csv") if os.path.isdir(path) else path
    run_dir = os.path.dirname(log_path)
    if not os.path.exists(log_path):
        raise ConfigInvalid(f"no log at {log_path}", "run")
    if args.config or args.preset:
        cfg = config.load_config(args.config, (), args.preset)
    else:
        echo = os.path.join(run_dir, "config.echo.json")
        if not os.path.exists(echo):
            raise ConfigInvalid("no config.echo.json next to the log; pass --config or --preset")
        cfg = config.load_config(echo)
    try:
        log = sim.SimLog.read_csv(log_path)
    except ValueError as exc:
        raise ConfigInvalid(str(exc), "run") from None
    rep = analysis.analyze_log(log, cfg.gains.setpoint, cfg.guard.min_height, cfg.sensor.c[2])
    checks = analysis.check_report(rep, args.rate_tol, args.min_r2)
    rep["checks"] = [{"name": n, "ok": ok, "detail": d} for n, ok, d in checks]
    out = args.out or run_dir
    os.makedirs(out, exist_ok=True)
    analysis.write_json(rep, os.path.join(out, "report.json"))
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if args.check and not all(ok for _, ok, _ in checks):
        print("error: acceptance checks failed", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def cmd_presets(args):
    for name in sim.scenario_library():
        print(name)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "compare": cmd_compare, "sweep": cmd_sweep,
    "analyze": cmd_analyze, "presets": cmd_presets,
}


def parse_and_dispatch(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None):
    sys.exit(parse_and_dispatch(argv))


if __name__ == "__main__":
    main()
