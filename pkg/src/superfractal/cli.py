"""Command-line entry point.

Subcommands: simulate, spectrum, census, verify, loglaplace-check, all,
emit-plots.  Exit codes: 0 success, 1 a gated check failed, 2 bad config,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .model import InvalidParamsError, NumericsError, load_config

GATED = {"verify"}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="superfractal",
        description="Simulation and multifractal analysis of superprocess densities")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--replicas", type=int, default=None,
                       help="override replica count")
        p.add_argument("--out", default=None,
                       help="run directory (default: config output_dir or "
                            "SUPERFRACTAL_OUT)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")

    for name, doc in (("simulate", "density, jumps and diagnostics artifacts"),
                      ("spectrum", "pointwise exponents and the empirical spectrum"),
                      ("census", "jump-box and late-time event tallies"),
                      ("verify", "kernel, Levy and duality property suites"),
                      ("loglaplace-check", "duality check only"),
                      ("all", "every stage in order")):
        p = sub.add_parser(name, help=doc)
        common(p)
        if name in ("verify", "all"):
            p.add_argument("--dump-kernel", default=None, metavar="CSV",
                           help="also dump the model kernel table (x, p, dp_dx)")

    p = sub.add_parser("emit-plots", help="render figures and gnuplot scripts")
    p.add_argument("run_dir", help="directory holding run artifacts")
    return ap


def _resolve_out(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get("SUPERFRACTAL_OUT")
    if str(cfg.run.output_dir) != "out" and str(cfg.run.output_dir) != "./out":
        return Path(cfg.run.output_dir)
    return Path(env) if env else Path(cfg.run.output_dir)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)

    if args.command == "emit-plots":
        from .plots import emit_plots
        run_dir = Path(args.run_dir)
        if not run_dir.is_dir():
            print(f"error: {run_dir} is not a directory", file=sys.stderr)
            return 2
        written = emit_plots(run_dir)
        if not written:
            print(f"error: no plottable artifacts in {run_dir}", file=sys.stderr)
            return 2
        for p in written:
            print(p)
        return 0

    try:
        cfg = load_config(args.config)
    except InvalidParamsError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    cfg = cfg.with_overrides(seed=args.seed, n_replicas=args.replicas)
    run_dir = _resolve_out(args, cfg)

    if args.command == "loglaplace-check":
        stages = ["verify"]
    elif args.command == "all":
        stages = ["simulate", "spectrum", "census", "verify"]
    else:
        stages = [args.command]

    from .runner import run_stages
    kwargs = {}
    if getattr(args, "dump_kernel", None):
        kwargs["dump_kernel_csv"] = Path(args.dump_kernel)
    try:
        outputs = run_stages(cfg, stages, run_dir, jobs=args.jobs, **kwargs)
    except InvalidParamsError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NumericsError as e:
        stage = stages[-1]
        print(f"numeric failure in stage {stage}: {e}", file=sys.stderr)
        return 3

    if args.command == "loglaplace-check":
        dual = outputs["verify"]["checks"]["duality"]
        print(json.dumps(dual, indent=2))
        return 0 if dual["passed"] else 1

    failed = [s for s in stages if s in GATED and not outputs[s].get("passed", True)]
    if args.command in ("verify", "all"):
        from .plots import emit_plots
        if args.command == "all":
            emit_plots(run_dir)
    for s in stages:
        mark = "ok" if s not in GATED or outputs[s].get("passed", True) else "FAILED"
        print(f"stage {s}: {mark} -> {run_dir}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
