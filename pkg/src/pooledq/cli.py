"""Command-line entry point: ``pooledq {simulate,experiment,bias-variance,verify}``.

Exit codes: 0 success, 1 verification failure, 2 usage/config error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .engine import RunPlan, run_replications
from .errors import ConfigError, DomainError
from .experiment import (
    DEFAULT_SEED,
    ExperimentConfig,
    Scenario,
    cmd_bias_variance_sweep,
    cmd_experiment,
    config_from_dict,
    load_config,
    model_name,
    write_replication_csv,
)
from .processes import MM1_DEFAULT_WARMUP, ProcessModel
from .verification import CHECKS, cmd_verify

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("pooledq")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _common(p: argparse.ArgumentParser, out_default: str):
    p.add_argument("--seed", type=_u64, default=None, help=f"64-bit base seed (default {DEFAULT_SEED})")
    p.add_argument("--workers", type=_positive, default=None, help="worker threads (default 1)")
    p.add_argument("--out", default=None, help=f"output directory (default {out_default})")
    p.add_argument("--config", default=None, help="JSON experiment config")


def _model_flags(p: argparse.ArgumentParser):
    p.add_argument("--model", choices=("ar1", "mm1"), required=True)
    p.add_argument("--phi", type=float, default=0.5, help="AR(1) correlation parameter")
    p.add_argument("--mu", type=float, default=0.0, help="AR(1) mean parameter")
    p.add_argument("--sigma", type=float, default=1.0, help="AR(1) innovation sd")
    p.add_argument("--utilization", "--rho", type=float, default=0.9, help="M/M/1 traffic intensity")
    p.add_argument("--arrival-rate", type=float, default=1.0, help="M/M/1 arrival rate")
    p.add_argument("--warmup", type=int, default=None,
                   help=f"discarded initial observations (default 0 for ar1, {MM1_DEFAULT_WARMUP} for mm1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pooledq", description="Pooled vs average quantile estimation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write raw replication paths as CSV")
    _common(p, ".")
    _model_flags(p)
    p.add_argument("-L", "--length", type=_positive, required=True, help="run-length per replication")
    p.add_argument("-R", "--replications", type=_positive, required=True)
    p.add_argument("--file", default="paths.csv", help="CSV file name inside --out (default paths.csv)")

    for name, helptext in (("experiment", "MSE sweep over R for every scenario"),
                           ("bias-variance", "bias and variance at fixed L and fixed budget")):
        p = sub.add_parser(name, help=helptext)
        _common(p, "results")
        p.add_argument("--micro-reps", type=_positive, default=None, help="micro-replications (default 100)")
        p.add_argument("--r-grid", type=lambda s: [_positive(x) for x in s.split(",")], default=None,
                       help="comma-separated R grid overriding every scenario")

    p = sub.add_parser("verify", help="run the acceptance checks and write a pass/fail report")
    _common(p, "results")
    p.add_argument("--only", type=lambda s: s.split(","), default=None,
                   help=f"comma-separated subset of {','.join(CHECKS)}")
    p.add_argument("--truth-shift", type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


def _experiment_config(args, default_scenarios=None) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = config_from_dict({})
        if default_scenarios is not None:
            cfg.scenarios = default_scenarios
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is not None:
        cfg.output_dir = Path(args.out)
    if args.micro_reps is not None:
        cfg.micro_reps = args.micro_reps
    if args.r_grid is not None:
        grid = tuple(args.r_grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("must be strictly ascending", "--r-grid")
        cfg.scenarios = [Scenario(s.name, s.model, s.l, s.alphas, grid) for s in cfg.scenarios]
    return cfg


def bias_variance_defaults():
    models = (ProcessModel.ar1(0.9), ProcessModel.mm1(0.9))
    return [Scenario(f"{model_name(m)}_L400", m, 400, (0.95,), (1, 4, 16, 64)) for m in models]


def _simulate(args) -> int:
    if args.model == "ar1":
        model = ProcessModel.ar1(args.phi, args.mu, args.sigma, 0 if args.warmup is None else args.warmup)
    else:
        model = ProcessModel.mm1(args.utilization, args.arrival_rate,
                                 MM1_DEFAULT_WARMUP if args.warmup is None else args.warmup)
    plan = RunPlan(model, args.replications, args.length,
                   DEFAULT_SEED if args.seed is None else args.seed, args.workers or 1)
    data = run_replications(plan)
    path = Path(args.out or ".") / args.file
    write_replication_csv(data, path)
    print(path)
    return EXIT_OK


def _verify(args) -> int:
    if args.config:
        log.info("verify ignores --config; checks run at their fixed sizes")
    unknown = set(args.only or ()) - set(CHECKS)
    if unknown:
        raise ConfigError(f"unknown check ids {sorted(unknown)}", "--only")
    path, ok, _ = cmd_verify(DEFAULT_SEED if args.seed is None else args.seed, args.out or "results",
                             workers=args.workers or 1, only=args.only, truth_shift=args.truth_shift,
                             progress=lambda r: print(r.line(), flush=True))
    print(f"report: {path}")
    return EXIT_OK if ok else EXIT_VERIFY


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            return _simulate(args)
        if args.command == "experiment":
            cfg = _experiment_config(args)
            result = cmd_experiment(cfg)
            print(f"{len(result.rows)} rows written to {cfg.output_dir}")
            return EXIT_OK
        if args.command == "bias-variance":
            print(cmd_bias_variance_sweep(_experiment_config(args, bias_variance_defaults())))
            return EXIT_OK
        return _verify(args)
    except (ConfigError, DomainError) as exc:
        print(f"pooledq {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"pooledq {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
