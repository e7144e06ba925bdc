"""Command-line front end.

Exit codes: 0 success, 2 configuration error (including bad flags),
3 runtime failure.
"""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .acquisitions import ALL_ACQUISITIONS
from .benchmarks import benchmark, benchmark_names, ea_search, random_search, simple_regret
from .domain import load_config
from .exceptions import ConfigError, MalformedConfig
from .expressions import Expression
from .orchestrator import RunOptions, SimulatedWorkers, ThreadWorkers, dump_trace, init_run, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser():
    parser = argparse.ArgumentParser(prog="mixbo", description="Bayesian optimisation over mixed domains.")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="optimise a benchmark or a configured objective")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--benchmark", help="benchmark name (see `mixbo list`)")
    src.add_argument("--config", help="JSON domain file")
    r.add_argument("--objective", help="objective expression (overrides the config's)")
    r.add_argument("--budget", type=int, help="number of evaluations")
    r.add_argument("--capital", type=float, help="multi-fidelity cost budget")
    r.add_argument("--time-budget-s", type=float, help="wall-clock budget in seconds")
    r.add_argument("--method", choices=("bo", "random", "ea"), default="bo")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--acquisitions", help="comma-separated subset of " + ",".join(ALL_ACQUISITIONS))
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default="trace.jsonl", help="trace file (JSON lines)")
    r.add_argument("--summary", help="regret summary file (default: <out stem>.summary.jsonl)")
    r.add_argument("--noise", type=float, help="noise standard deviation as a fraction of the range")
    r.add_argument("--mf", choices=("on", "off"), help="use the fidelity variable")
    r.add_argument("--harness", choices=("simulated", "threads"), default="simulated")

    sub.add_parser("list", help="list benchmark names")
    return parser


class _Problem:
    def __init__(self, domain, fidelity, objective, true_f=None, optimum=None):
        self.domain = domain
        self.fidelity = fidelity
        self.objective = objective
        self.true_f = true_f
        self.optimum = optimum


def _benchmark_problem(args):
    name = args.benchmark
    if args.mf == "on" and not name.endswith("-mf"):
        name += "-mf"
    if args.mf == "off" and name.endswith("-mf"):
        name = name[:-3]
    if args.noise is not None and args.noise > 0 and "-noisy" not in name:
        name += "-noisy"
    bench = benchmark(name) if args.noise is None else benchmark(name, noise_fraction=args.noise)
    if args.objective:
        raise ConfigError("--objective applies to --config runs only")
    return _Problem(bench.domain, bench.fidelity, bench.objective(args.seed), bench.f, bench.optimum)


def _config_problem(args):
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise MalformedConfig(f"cannot read config: {exc}") from None
    cfg = load_config(text)
    fidelity = cfg.fidelity if args.mf != "off" else None
    if args.mf == "on" and fidelity is None:
        raise ConfigError("--mf on needs a fidelity block in the config")
    text = args.objective or cfg.objective
    if not text:
        raise ConfigError("no objective: give --objective or an 'objective' key in the config")
    names = cfg.domain.names + (cfg.fidelity.names if cfg.fidelity else ())
    expr = Expression(text, names)
    dom_names = cfg.domain.names
    fid_names = cfg.fidelity.names if cfg.fidelity else ()
    zhf = cfg.fidelity.z_hf if cfg.fidelity else ()

    def value(z, x):
        env = dict(zip(dom_names, x))
        env.update(zip(fid_names, z))
        return float(np.asarray(expr(env), dtype=float))

    if fidelity is not None:
        objective = value
    else:
        def objective(x):
            return value(zhf, x)
    return _Problem(cfg.domain, fidelity, objective)


def _write_summary(path, trace, problem, z_hf):
    if problem.optimum is not None:
        curve = simple_regret(trace, problem.optimum, problem.true_f, z_hf=z_hf)
        key = "simple_regret"
    else:
        curve = []
        best = -math.inf
        for rec in trace:
            ok = rec["y"] is not None and (z_hf is None or tuple(rec["z"]) == tuple(z_hf))
            if ok:
                best = max(best, rec["y"])
            curve.append(best)
        key = "best_value"
    with open(path, "w") as fh:
        for rec, v in zip(trace, curve):
            v = v if math.isfinite(v) else None
            fh.write(json.dumps({"n": rec["step"], "capital": rec["capital_spent"], key: v}) + "\n")


def _run(args):
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    if args.budget is None and args.capital is None and args.time_budget_s is None:
        raise ConfigError("give --budget, --capital or --time-budget-s")
    if args.budget is not None and args.budget < 1:
        raise ConfigError("--budget must be positive")
    acqs = None
    if args.acquisitions:
        acqs = tuple(a.strip() for a in args.acquisitions.split(",") if a.strip())
        bad = [a for a in acqs if a not in ALL_ACQUISITIONS]
        if bad or not acqs:
            raise ConfigError(f"unknown acquisitions {bad}")
    problem = _benchmark_problem(args) if args.benchmark else _config_problem(args)
    rng = np.random.default_rng(args.seed)
    z_hf = None
    if args.method != "bo":
        n = args.budget
        if n is None:
            raise ConfigError(f"--method {args.method} needs --budget")
        if problem.fidelity is not None:
            zhf = problem.fidelity.z_hf
            base = problem.objective
            objective = lambda x: base(zhf, x)  # noqa: E731
        else:
            objective = problem.objective
        if args.method == "random":
            trace = random_search(problem.domain, n, rng, objective)
        else:
            trace = ea_search(objective, problem.domain, n, rng)
    else:
        fid = problem.fidelity
        if fid is not None:
            cost_hf = fid.cost(fid.z_hf)
            budget = args.capital if args.capital is not None else (
                args.budget * cost_hf if args.budget is not None else math.inf)
            z_hf = fid.z_hf
        else:
            budget = args.budget if args.budget is not None else math.inf
        options = RunOptions(budget=budget, workers=args.workers, acquisitions=acqs,
                             max_wall_time_s=args.time_budget_s)
        if not math.isfinite(budget):
            # time-limited runs still need a finite design size
            options.n_init = max(2, 5 * problem.domain.d)
        state = init_run(problem.domain, fid, options, seed=args.seed)
        harness = (ThreadWorkers(problem.objective, args.workers) if args.harness == "threads"
                   else SimulatedWorkers(problem.objective, args.workers))
        trace = run(state, harness).trace
    dump_trace(trace, args.out)
    summary = args.summary or str(Path(args.out).with_suffix("")) + ".summary.jsonl"
    _write_summary(summary, trace, problem, z_hf)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "list":
        print("\n".join(benchmark_names()))
        return EXIT_OK
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"mixbo: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"mixbo: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
