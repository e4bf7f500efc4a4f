"""Command line interface: ``kfsched {generate,solve,greedy,oracle,bench}``."""

from __future__ import annotations

import argparse
import json
import sys

from .baselines import brute_force, greedy
from .errors import KFSchedError
from .harness import ExperimentSpec, run_bench
from .problem import load_problem
from .solver import SolverConfig, solve, write_trace_csv
from .system import InstanceSpec, generate_instance


def _schedule_payload(problem, sched, obj) -> dict:
    return {
        "objective": obj,
        "schedule": list(sched.gamma),
        "active_sensors": [sched.active_sensors(k) for k in range(1, problem.T + 1)],
    }


def _cmd_generate(args) -> int:
    spec = InstanceSpec(args.n, args.m, args.seed, args.spectral_target, args.noise_sigma2)
    params = generate_instance(spec)
    if args.out == "-":
        json.dump(params.to_dict(), sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        params.save(args.out)
    return 0


def _cmd_solve(args) -> int:
    problem = load_problem(args.problem)
    config = SolverConfig(
        gap_tolerance=args.gap,
        time_limit=args.time_limit,
        node_limit=args.node_limit,
        branching=args.branching,
        record_trace=args.trace is not None,
    )
    res = solve(problem, config)
    if args.trace:
        write_trace_csv(res.trace, args.trace)
    json.dump(res.to_dict(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0 if res.incumbent is not None else 2


def _cmd_greedy(args) -> int:
    problem = load_problem(args.problem)
    sched, obj = greedy(problem)
    json.dump(_schedule_payload(problem, sched, obj), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def _cmd_oracle(args) -> int:
    problem = load_problem(args.problem)
    sched, obj = brute_force(problem, args.cap)
    json.dump(_schedule_payload(problem, sched, obj), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def _cmd_bench(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    paths = run_bench(spec, args.out_dir)
    json.dump(paths, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kfsched", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a random system instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="-", help="output JSON path ('-' for stdout)")
    p.add_argument("--spectral-target", type=float, default=0.5)
    p.add_argument("--noise-sigma2", type=float, default=0.01)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("solve", help="solve a problem file to optimality")
    p.add_argument("--problem", required=True)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--gap", type=float, default=1e-6)
    p.add_argument("--branching", choices=["max_marginal", "lowest_index"], default="max_marginal")
    p.add_argument("--trace", default=None, help="write a per-node CSV trace here")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("greedy", help="run the greedy heuristic")
    p.add_argument("--problem", required=True)
    p.set_defaults(func=_cmd_greedy)

    p = sub.add_parser("oracle", help="exhaustive enumeration (small problems)")
    p.add_argument("--problem", required=True)
    p.add_argument("--cap", type=int, default=100_000)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("bench", help="run an experiment sweep")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KFSchedError, ValueError, KeyError, OSError) as exc:
        print(f"kfsched {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
