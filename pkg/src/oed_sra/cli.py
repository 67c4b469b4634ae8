"""Command-line front end: ``oed-sra run | validate | replay``.

Exit codes: 0 success, 1 failed validation or replay mismatch, 2 bad
configuration, 3 oracle failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ORACLE = 0, 1, 2, 3


def _limit_threads():
    n = os.environ.get("OED_SRA_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


_limit_threads()

from .benchmarks import BUILTINS, get_case  # noqa: E402
from .config import ConfigError, OracleError, build_problem, load_config  # noqa: E402
from .replay import replay_file  # noqa: E402
from .session import (  # noqa: E402
    RunLog,
    SessionAborted,
    run,
    save_snapshot,
    summary,
    write_plot_table,
    write_summary_csv,
)
from . import validation  # noqa: E402


def _overrides(args) -> dict:
    return {
        "v_max": args.vmax,
        "k_max": args.kmax,
        "criterion": args.criterion,
        "tau": args.tau,
        "n0": args.n0,
        "n": args.n,
    }


def _load_problem(args):
    if bool(args.case) == bool(args.config):
        raise ConfigError("give exactly one of --case or --config")
    if args.case:
        if args.case not in BUILTINS:
            raise ConfigError(f"unknown case {args.case!r}; builtin cases: {', '.join(BUILTINS)}")
        cfg = get_case(args.case, lhs=args.lhs).config
        name = args.case
    else:
        cfg = load_config(args.config)
        name = cfg.get("name", Path(args.config).stem)
    problem = build_problem(cfg, args.seed, interactive=args.interactive)
    return name, problem


def cmd_run(args) -> int:
    try:
        name, problem = _load_problem(args)
        cfg = validation.session_config(problem, args.seed, args.quick, **_overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = RunLog(out / "run.ndjson", timing=args.timing)
    header = {"case": name, "seed": args.seed, "problem": problem.config}
    t0 = time.perf_counter()
    ref = {"case": name, "seed": args.seed, "problem": problem.config}
    try:
        state = run(cfg, problem.graph0, problem.families, problem.oracle, log_to=log, header=header)
    except SessionAborted as exc:
        save_snapshot(out / "snapshot.json", exc.state, cfg, ref)
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    summ = summary(state, problem.n_initial)
    final = {"type": "final", **summ}
    if args.timing:
        final["wall_s"] = round(time.perf_counter() - t0, 3)
    log.write(final)
    write_summary_csv(out / "summary.csv", [summ])
    write_plot_table(out / "alpha_trace.csv", state)
    save_snapshot(out / "snapshot.json", state, cfg, ref)
    print(json.dumps(summ, indent=2, sort_keys=True, default=str))
    return EXIT_OK


def cmd_validate(args) -> int:
    results = []
    if args.props:
        for fn in validation.PROPERTY_CHECKS.values():
            results.append(fn())
    else:
        names = list(BUILTINS) if args.case in (None, "all") else [args.case]
        unknown = [n for n in names if n not in BUILTINS]
        if unknown:
            print(f"config error: unknown case {unknown[0]!r}; builtin cases: {', '.join(BUILTINS)}", file=sys.stderr)
            return EXIT_CONFIG
        if args.quick:
            results.append(validation.check_determinism(tuple(names)))
        else:
            for n in names:
                results.append(validation.BENCHMARK_CHECKS[n](seeds=range(args.seeds)))
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_replay(args) -> int:
    res = replay_file(args.logfile)
    print(("OK: " if res.ok else "MISMATCH: ") + res.message)
    return EXIT_OK if res.ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oed-sra", description="Sequential experimental design for reliability analysis.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a design session")
    r.add_argument("--case", help=f"builtin case: {', '.join(BUILTINS)}")
    r.add_argument("--config", help="YAML or JSON problem config")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--vmax", type=float)
    r.add_argument("--kmax", type=int)
    r.add_argument("--criterion", choices=("h1", "h2", "h3"))
    r.add_argument("--tau", type=float)
    r.add_argument("--n0", type=int)
    r.add_argument("--n", type=int)
    r.add_argument("--out", default="oed_out")
    r.add_argument("--interactive", action="store_true", help="enter outcomes at a prompt")
    r.add_argument("--quick", action="store_true", help="reduced sample sizes and budget")
    r.add_argument("--timing", action="store_true", help="record wall-clock times in the log")
    r.add_argument("--lhs", type=int, default=0, help="builtin cases: maximin LHS initial design of this size")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check benchmarks against their manifests")
    v.add_argument("--case", default="all")
    v.add_argument("--seeds", type=int, default=5)
    v.add_argument("--props", action="store_true", help="property checks only")
    v.add_argument("--quick", action="store_true", help="determinism and replay at reduced scale")
    v.set_defaults(func=cmd_validate)

    rp = sub.add_parser("replay", help="recompute a run log and diff")
    rp.add_argument("logfile")
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
