"""Command-line entry point: ``dagcache <subcommand> ...``.

Exit codes: 0 success, 1 validation or runtime failure (a JSON error record
is written to stderr), 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, DagCacheError, ValidationError
from .objective import (Placement, brute_force_optimum, caching_gain, expected_total_work,
                        relaxed_gain)
from .offline import greedy, relaxation_ascent, round_fractional
from .policies import POLICIES, UPDATE_MODES
from .simulator import report_to_json, rows_to_csv, run, sweep
from .workload import (GeneratorConfig, dumps_trace, generate, generate_regression_workload,
                       load_trace)

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _emit(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _policy_opts(args) -> dict:
    opts = {}
    if args.policy == "heuristic":
        opts.update(beta=args.beta, update_mode=args.update_mode)
    elif args.policy == "adaptive-grad":
        opts.update(period=args.period, gamma0=args.gamma0)
    return {k: v for k, v in opts.items() if v is not None}


# -- subcommands -------------------------------------------------------------------

def cmd_generate(args) -> int:
    conf = _load_config(args.config)
    kind = args.kind or conf.pop("kind", "synthetic")
    gen = dict(conf.get("generator", conf))
    gen.pop("kind", None)
    if args.seed is not None:
        gen["seed"] = args.seed
    if args.num_jobs is not None:
        gen["num_jobs"] = args.num_jobs
    if kind == "synthetic":
        trace = generate(GeneratorConfig.from_mapping(gen))
    elif kind == "regression":
        trace = generate_regression_workload(**gen)
    else:
        raise ConfigError(f"unknown generator kind {kind!r}")
    _emit(dumps_trace(trace), args.out)
    return 0


def cmd_simulate(args) -> int:
    trace = load_trace(args.trace)
    report = run(trace, args.policy, args.capacity, args.seed, **_policy_opts(args))
    out = args.out
    fmt = args.format or ("json" if out and str(out).endswith(".json") else "csv")
    _emit(report_to_json(report) + "\n" if fmt == "json" else rows_to_csv([report.row()]), out)
    return 0


def _placement_json(catalog, placement: Placement, extra: dict) -> str:
    rec = {
        "capacity": placement.capacity,
        "cached": placement.labels(catalog),
        "fingerprints": sorted(placement.cached),
        "used": placement.used(catalog),
        "gain": caching_gain(catalog, placement),
        "expected_total_work": expected_total_work(catalog),
    }
    rec.update(extra)
    return json.dumps(rec, indent=2) + "\n"


def cmd_solve(args) -> int:
    catalog = load_trace(args.trace).catalog
    extra = {"method": args.method}
    if args.method == "greedy":
        placement = greedy(catalog, args.capacity)
    elif args.method == "relax":
        res = relaxation_ascent(catalog, args.capacity, args.iterations)
        placement = round_fractional(catalog, res.state, args.seed)
        extra["relaxed_value"] = res.value
    else:
        placement, _ = brute_force_optimum(catalog, args.capacity)
    _emit(_placement_json(catalog, placement, extra), args.out)
    return 0


def cmd_eval_gain(args) -> int:
    catalog = load_trace(args.trace).catalog
    keys = [k for k in (args.cache or "").split(",") if k]
    cached = frozenset(catalog.resolve(k) for k in keys)
    placement = Placement(cached, args.capacity if args.capacity is not None else float("inf"))
    extra = {"relaxed_gain": relaxed_gain(catalog, placement)}
    _emit(_placement_json(catalog, placement, extra), args.out)
    return 0


def cmd_sweep(args) -> int:
    conf = _load_config(args.config).get("sweep", {})
    trace_ref = args.trace or conf.get("trace")
    if trace_ref is None:
        raise ConfigError("sweep needs --trace or a [sweep] trace entry")
    policies = args.policies.split(",") if args.policies else conf.get("policies", list(POLICIES))
    capacities = _floats(args.capacities) if args.capacities else conf.get("capacities")
    seeds = _ints(args.seeds) if args.seeds else conf.get("seeds", [0])
    if not capacities:
        raise ConfigError("sweep needs --capacities")
    opts = dict(conf.get("options", {}))
    for key in ("beta", "update_mode", "period", "gamma0"):
        if getattr(args, key) is not None:
            opts[key] = getattr(args, key)
    rows = sweep(load_trace(trace_ref), policies, capacities, seeds, jobs=args.jobs, **opts)
    if args.out and str(args.out).endswith(".json"):
        _emit(json.dumps(rows, indent=2) + "\n", args.out)
    else:
        _emit(rows_to_csv(rows), args.out)
    return 0


def cmd_run(args) -> int:
    if args.policy != "adaptive-grad":
        raise ConfigError("run streams per-period diagnostics and only supports adaptive-grad")
    trace = load_trace(args.trace)
    report = run(trace, "adaptive-grad", args.capacity, args.seed, **_policy_opts(args))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k", "period_end", "relaxed_gain", "placement_gain"])
    for p in report.periods:
        writer.writerow([p["k"], repr(p["end"]), repr(p["relaxed"]), repr(p["gain"])])
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_verify(args) -> int:
    from .checks import SUITES

    names = list(SUITES) if args.suite == "all" else [args.suite]
    failed = 0
    for name in names:
        ok, detail = SUITES[name]()
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed += not ok
    if failed:
        raise ValidationError(f"{failed} verification suite(s) failed")
    return 0


# -- parser ----------------------------------------------------------------------

def _add_policy_flags(p, default=None):
    p.add_argument("--policy", choices=POLICIES, default=default, required=default is None)
    p.add_argument("--beta", type=float, help="heuristic score decay (default 0.6)")
    p.add_argument("--update-mode", choices=UPDATE_MODES, dest="update_mode")
    p.add_argument("--period", type=float, help="adaptive-grad measurement period, seconds")
    p.add_argument("--gamma0", type=float, help="adaptive-grad step constant")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dagcache", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dagcache {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic or regression trace")
    p.add_argument("--config", help="TOML file; keys of GeneratorConfig, optionally under [generator]")
    p.add_argument("--kind", choices=("synthetic", "regression"))
    p.add_argument("--seed", type=int)
    p.add_argument("--num-jobs", type=int, dest="num_jobs")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="replay a trace against one policy")
    p.add_argument("--trace", required=True, help="trace file or builtin:simple")
    _add_policy_flags(p)
    p.add_argument("--capacity", type=float, required=True, help="cache size, MB")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="offline placement for a trace's catalog")
    p.add_argument("--trace", required=True)
    p.add_argument("--capacity", type=float, required=True)
    p.add_argument("--method", choices=("greedy", "relax", "brute"), default="greedy")
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval-gain", help="caching gain of a given placement")
    p.add_argument("--trace", required=True)
    p.add_argument("--cache", default="", help="comma-separated labels or fingerprints")
    p.add_argument("--capacity", type=float)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_eval_gain)

    p = sub.add_parser("sweep", help="policy x capacity x seed grid, one CSV row per run")
    p.add_argument("--trace")
    p.add_argument("--config", help="TOML file with a [sweep] table")
    p.add_argument("--policies")
    p.add_argument("--capacities")
    p.add_argument("--seeds")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--beta", type=float)
    p.add_argument("--update-mode", choices=UPDATE_MODES, dest="update_mode")
    p.add_argument("--period", type=float)
    p.add_argument("--gamma0", type=float)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("run", help="per-period diagnostics of the gradient policy as CSV")
    p.add_argument("--trace", required=True)
    _add_policy_flags(p, default="adaptive-grad")
    p.add_argument("--capacity", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run the built-in self-checks")
    p.add_argument("--suite", choices=("simple", "sandwich", "estimator", "convergence", "all"),
                   default="all")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DagCacheError, OSError, TypeError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
