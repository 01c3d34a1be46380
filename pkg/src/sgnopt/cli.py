"""``sgnopt`` command line: run, tune, fstar, verify."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from .harness.config import ConfigError, load_config
from .harness.experiment import ExperimentError, TUNABLE, build_objective, compute_fstar, run_experiment, tune_constant
from .harness.suites import SUITES, run_suite


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sgnopt", description="Sketched Newton experiment harness.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write trace CSVs")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="output directory (overrides out_dir)")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--timing", action="store_true", help="record wall_ns (traces are then not reproducible)")

    tune = sub.add_parser("tune", help="grid-search one smoothness constant")
    tune.add_argument("--config", required=True)
    tune.add_argument("--param", choices=TUNABLE, default="l_alg")
    tune.add_argument("--grid", type=float, nargs="+", required=True)
    tune.add_argument("--workers", type=int, default=1)

    fstar = sub.add_parser("fstar", help="reference optimum of the configured objective")
    fstar.add_argument("--config", required=True)
    fstar.add_argument("--tol", type=float, default=1e-12)

    verify = sub.add_parser("verify", help="run a verification suite")
    verify.add_argument("--suite", choices=SUITES, required=True)
    verify.add_argument("--quick", action="store_true", help="reduced sizes for a fast smoke check")
    return p


QUICK = {
    "equivalence": {"count": 20},
    "envelope": {"replications": 3, "iters": 200},
    "local": {"replications": 20, "iters": 100},
    "rho": {"samples": 10_000, "probes": 3},
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            res = run_experiment(cfg, out_dir=args.out, workers=args.workers, timing=args.timing)
            print(json.dumps({"out_dir": str(res.out_dir), "f_star": res.f_star,
                              "final_mean_subopt": float(res.mean_subopt[-1]),
                              "failures": len(res.failures)}))
            return 1 if len(res.failures) == len(res.replications) else 0
        if args.command == "tune":
            cfg = load_config(args.config)
            print(json.dumps({"param": args.param, "best": tune_constant(cfg, args.param, args.grid, args.workers)}))
            return 0
        if args.command == "fstar":
            cfg = load_config(args.config)
            f, x = compute_fstar(build_objective(cfg), tol=args.tol)
            print(json.dumps({"f_star": f, "x_star": [float(v) for v in x]}))
            return 0
        result = run_suite(args.suite, **(QUICK[args.suite] if args.quick else {}))
        print(result.line())
        return 0 if result.passed else 1
    except (ConfigError, ExperimentError, OSError, ValueError) as exc:
        print(f"sgnopt: error: {exc}", file=sys.stderr)
        return 2
