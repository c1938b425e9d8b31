"""Command-line entry point: ``python -m sucag <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .graph import generate_topology
from .harness import (ConfigError, ExperimentConfig, NumericalError, build_problem, fit_linear_rate,
                      read_trace_csv, resolve_gamma, run_experiment, stepsize_inputs, write_outputs)
from .theory import convergence_rate, theorem1_stepsize

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def cmd_run(args):
    cfg = ExperimentConfig.load(args.config)
    outdir = args.output or cfg.output
    if outdir is None:
        raise ConfigError("no output directory (set 'output' in the config or pass --output)")
    problem = build_problem(cfg)
    traces = run_experiment(cfg, problem)
    trace_path, summary_path = write_outputs(traces, problem, cfg, outdir)
    print(f"wrote {trace_path} and {summary_path}")


def cmd_reference(args):
    cfg = ExperimentConfig.load(args.config)
    problem = build_problem(cfg)
    print(json.dumps({
        "F_star": problem.F_star,
        "grad_norm": problem.grad_norm,
        "R0": problem.R0,
        "theta_star": problem.theta_star.tolist(),
    }, indent=2))


def cmd_graph_gen(args):
    rest = list(args.rest)
    if len(rest) == 1:
        p, seed = None, int(rest[0])
    elif len(rest) == 2:
        p, seed = float(rest[0]), int(rest[1])
    else:
        raise ConfigError("usage: graph-gen <kind> <n> [p] <seed>")
    try:
        g = generate_topology(args.kind, args.n, p, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    g.write_edgelist(sys.stdout)


def cmd_rate(args):
    series = read_trace_csv(args.trace)
    methods = sorted({m for m, _ in series}, key=lambda m: m)
    for m in methods:
        trials = [series[(mm, t)] for (mm, t) in sorted(series) if mm == m]
        with np.errstate(invalid="ignore"):
            mean = np.mean(np.vstack(trials), axis=0)
        try:
            rate = fit_linear_rate(mean, args.burn_in)
            print(f"{m}: contraction factor {rate:.17g} (burn-in {args.burn_in}, {len(trials)} trials)")
        except ValueError as exc:
            print(f"{m}: no fit ({exc})")


def cmd_stepsize(args):
    cfg = ExperimentConfig.load(args.config)
    problem = build_problem(cfg)
    inp = stepsize_inputs(cfg, problem)
    gamma = theorem1_stepsize(inp)
    c = problem.constants
    Delta = inp.resolved_delta()
    delta, asym = convergence_rate(gamma, c.mu, c.L, Delta)
    report = {
        "L": c.L, "mu": c.mu, "L_H_bar": c.L_H_bar, "R0": inp.R0,
        "Delta": Delta, "c0": inp.c0, "beta": inp.beta, "m0": inp.m0,
        "gamma_theorem": gamma, "gamma_max": 2.0 / (c.mu + c.L),
        "delta": delta, "asymptotic_rate": asym,
        "methods": {m.name: resolve_gamma(m, cfg, problem) for m in cfg.methods},
    }
    print(json.dumps(report, indent=2))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sucag", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a full experiment and write trace/summary CSV")
    p.add_argument("config")
    p.add_argument("--output", help="override the config's output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("reference", help="compute the reference minimiser")
    p.add_argument("config")
    p.set_defaults(func=cmd_reference)

    p = sub.add_parser("graph-gen", help="print an edge list")
    p.add_argument("kind")
    p.add_argument("n", type=int)
    p.add_argument("rest", nargs="+", metavar="[p] seed")
    p.set_defaults(func=cmd_graph_gen)

    p = sub.add_parser("rate", help="fit linear rates to a trace file")
    p.add_argument("trace")
    p.add_argument("--burn-in", type=int, default=0)
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("stepsize", help="report the theoretical step size")
    p.add_argument("config")
    p.set_defaults(func=cmd_stepsize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
