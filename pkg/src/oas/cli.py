"""Command-line entry point: ``oas {reconstruct,thresholds,trial,sweep}``.

Exit codes: 0 ok, 1 usage, 2 configuration, 3 numerical, 4 I/O.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import harness
from .errors import ConfigurationError, DomainError, NumericalError
from .oracle import posterior_oracle
from .posterior import ObservationSummary, estimate, reconstruct
from .priors import TRUTH, SourceModel, sample_source, stream
from .scheduler import (BudgetModel, asymptotic_run, calibrate_target_mse, parallel_asymptotic_run,
                        worst_component_run)
from .thresholds import compute_thresholds, default_k_max

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3, 4
OUTPUT_DIR_ENV = "OAS_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def fmt(x: float) -> str:
    return f"{float(x):.12g}"


def _print_config(stream, **items):
    for key, value in items.items():
        if isinstance(value, float):
            value = fmt(value)
        print(f"# {key} = {value}", file=stream)


def _add_source(p):
    p.add_argument("--source", choices=["sparse-gaussian", "binary"], default="sparse-gaussian")
    p.add_argument("--p", type=float, required=True, help="zero probability (sparse) or P(+1) (binary)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oas", description="Bayesian oversampled adaptive sensing")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("reconstruct", help="conditional mean and posterior MSE for (sum, count)")
    _add_source(p)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--sum", type=float, required=True, dest="s")
    p.add_argument("--count", type=int, default=1, dest="k")
    p.add_argument("--oracle", action="store_true", help="cross-check against numerical quadrature")

    p = sub.add_parser("thresholds", help="stopping threshold table as CSV")
    _add_source(p)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--target", type=float, required=True, help="target posterior MSE")
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--M", type=int, default=16, help="used for the default k-max")
    p.add_argument("--c", type=float, default=3.0, help="used for the default k-max")

    p = sub.add_parser("trial", help="run one trial and print its schedule trace")
    _add_source(p)
    p.add_argument("--policy", choices=["worst_component", "asymptotic", "parallel_asymptotic"],
                   default="worst_component")
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--c", type=float, default=3.0)
    p.add_argument("--M", type=int, default=16)
    p.add_argument("--es-n0-db", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target", type=float, default=None, help="target MSE; calibrated if omitted")
    p.add_argument("--K", type=int, default=4, help="sensors for parallel_asymptotic")
    p.add_argument("--calibration-trials", type=int, default=200)
    p.add_argument("--out", default=None, help="write the trace here instead of stdout")

    p = sub.add_parser("sweep", help="Monte-Carlo sweep over compression ratio and M")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_DIR_ENV} or ./results)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--overlay", default=None, help="reference curves CSV: compression_ratio,mse_db,label")
    return parser


def cmd_reconstruct(args, out) -> int:
    model = SourceModel(args.source, args.p)
    obs = ObservationSummary(args.s, args.k)
    _print_config(out, source=model.kind.value, p=model.p, sigma2=args.sigma2, sum=args.s, count=args.k)
    est = estimate(model, obs, args.sigma2)
    print(f"r = {fmt(est.r)}", file=out)
    print(f"mse = {fmt(est.mse)}", file=out)
    if args.oracle:
        ref = posterior_oracle(model, [args.s / args.k] * args.k, args.sigma2)
        print(f"oracle_r = {fmt(ref.r)}", file=out)
        print(f"oracle_mse = {fmt(ref.mse)}", file=out)
        print(f"abs_diff_r = {fmt(abs(ref.r - est.r))}", file=out)
        print(f"abs_diff_mse = {fmt(abs(ref.mse - est.mse))}", file=out)
    return EXIT_OK


def cmd_thresholds(args, out) -> int:
    model = SourceModel(args.source, args.p)
    k_max = args.k_max if args.k_max is not None else default_k_max(args.M, args.c)
    _print_config(out, source=model.kind.value, p=model.p, sigma2=args.sigma2, target=args.target, k_max=k_max)
    table = compute_thresholds(model, args.sigma2, args.target, k_max)
    out.write(table.to_csv())
    return EXIT_OK


def cmd_trial(args, out) -> int:
    model = SourceModel(args.source, args.p)
    budget = BudgetModel.from_snr(model, args.N, args.c, args.M, args.es_n0_db)
    budget.check_feasible()
    _print_config(out, policy=args.policy, source=model.kind.value, p=model.p, N=args.N, c=args.c,
                  M=args.M, es_n0_db=args.es_n0_db, sigma2=budget.sigma2, total_slots=budget.total_slots,
                  seed=args.seed)
    truth = sample_source(model, args.N, stream(args.seed, TRUTH))
    if args.policy == "worst_component":
        trace = worst_component_run(model, budget, truth, args.seed)
    else:
        target = args.target
        if target is None:
            target = calibrate_target_mse(model, budget, args.calibration_trials, args.seed, 0.02)
        _print_config(out, target_mse=target)
        if args.policy == "asymptotic":
            trace = asymptotic_run(model, budget, target, truth, args.seed)
        else:
            _print_config(out, K=args.K)
            trace = parallel_asymptotic_run(model, budget, args.K, target, truth, args.seed)
    text = "\n".join(trace.lines()) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"# trace written to {args.out}", file=out)
    else:
        out.write(text)
    err = float(np.mean((truth - reconstruct(model, trace.final_s, trace.final_k, budget.sigma2)) ** 2))
    print(f"# slots_used = {trace.slots_used}", file=out)
    print(f"# mse = {fmt(err)}", file=out)
    return EXIT_OK


def cmd_sweep(args, out) -> int:
    if not os.path.exists(args.config):
        raise FileNotFoundError(f"config file not found: {args.config}")
    config = harness.ExperimentConfig.from_file(args.config, trials=args.trials, seed=args.seed)
    out_dir = args.out or os.environ.get(OUTPUT_DIR_ENV) or "results"
    _print_config(out, **{k: (v if not isinstance(v, list) else ",".join(map(str, v)))
                          for k, v in config.to_dict().items()}, output_dir=out_dir, workers=args.workers)
    result = harness.run_sweep(config, workers=args.workers)
    for path in harness.emit_results(result, out_dir, overlay=args.overlay):
        print(f"# wrote {path}", file=out)
    out.write(harness.results_csv(result))
    return EXIT_OK


COMMANDS = {"reconstruct": cmd_reconstruct, "thresholds": cmd_thresholds, "trial": cmd_trial,
            "sweep": cmd_sweep}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
