"""Seeded experiment sweeps for sensor selection and sensor scheduling.

Every row is written in (n, trial, algorithm) order and floats are emitted
with ``repr`` so two runs of the same spec produce identical files apart
from the ``wall_time`` column.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .baselines import brute_force, count_feasible, greedy
from .problem import ConstraintSystem, PerStepBudget, ScheduleProblem, Selection, final_state_costs
from .solver import SolverConfig, Status, solve
from .system import InstanceSpec, generate_instance

RESULTS_SCHEMA = "# kfsched-results v1"
QUALITY_SCHEMA = "# kfsched-quality v1"
RESULT_COLUMNS = [
    "experiment",
    "algorithm",
    "n",
    "m",
    "T",
    "p",
    "trial",
    "seed",
    "status",
    "objective",
    "lower_bound",
    "gap",
    "nodes",
    "wall_time",
]
QUALITY_COLUMNS = ["instance_id", "solver_objective", "greedy_objective", "ratio"]
ALGORITHMS = ("solver", "greedy", "oracle")


@dataclass
class ExperimentSpec:
    experiment: str
    n_values: list[int]
    m: int
    T: int
    p: int
    trials: int
    base_seed: int = 0
    seeds: list[int] | None = None
    time_limit: float | None = 10.0
    gap_tolerance: float = 1e-6
    algorithms: list[str] = field(default_factory=lambda: ["solver", "greedy"])
    oracle_cap: int = 100_000
    spectral_target: float = 0.5
    noise_sigma2: float = 0.01

    def __post_init__(self):
        if self.experiment not in ("selection", "scheduling"):
            raise ValueError(f"experiment must be 'selection' or 'scheduling', got {self.experiment!r}")
        if not self.n_values or any(n < 1 for n in self.n_values):
            raise ValueError("n_values must be a non-empty list of positive integers")
        if self.m < 1 or self.T < 1:
            raise ValueError("m and T must be positive")
        if not 0 <= self.p <= self.m:
            raise ValueError("budget p must lie in [0, m]")
        if self.trials < 0:
            raise ValueError("trials must be nonnegative")
        if self.seeds is not None and len(self.seeds) < self.trials:
            raise ValueError("fewer seeds than trials")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad or not self.algorithms:
            raise ValueError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentSpec:
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown experiment spec fields: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentSpec:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def seed_for(self, trial: int) -> int:
        return self.seeds[trial] if self.seeds is not None else self.base_seed + trial


def build_problem(spec: ExperimentSpec, n: int, seed: int) -> ScheduleProblem:
    """Final-state-error problem on a fresh random instance."""
    params = generate_instance(
        InstanceSpec(n, spec.m, seed, spec.spectral_target, spec.noise_sigma2)
    )
    con = Selection(spec.p) if spec.experiment == "selection" else PerStepBudget(spec.p)
    return ScheduleProblem(params, spec.T, final_state_costs(n, spec.T), ConstraintSystem((con,)))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    rows = []
    config = SolverConfig(gap_tolerance=spec.gap_tolerance, time_limit=spec.time_limit)
    for n in spec.n_values:
        for trial in range(spec.trials):
            seed = spec.seed_for(trial)
            problem = build_problem(spec, n, seed)
            base = {
                "experiment": spec.experiment,
                "n": n,
                "m": spec.m,
                "T": spec.T,
                "p": spec.p,
                "trial": trial,
                "seed": seed,
            }
            for algo in spec.algorithms:
                row = dict(base, algorithm=algo)
                t0 = time.perf_counter()
                if algo == "solver":
                    res = solve(problem, config)
                    row.update(
                        status=res.status.value,
                        objective=res.objective if res.incumbent else None,
                        lower_bound=res.lower_bound,
                        gap=res.gap if res.incumbent else None,
                        nodes=res.nodes_explored,
                    )
                elif algo == "greedy":
                    _, obj = greedy(problem)
                    row.update(status="heuristic", objective=obj, lower_bound=None, gap=None, nodes=None)
                else:
                    _, obj = brute_force(problem, spec.oracle_cap)
                    row.update(
                        status=Status.OPTIMAL.value,
                        objective=obj,
                        lower_bound=obj,
                        gap=0.0,
                        nodes=count_feasible(problem),
                    )
                row["wall_time"] = time.perf_counter() - t0
                rows.append(row)
    return rows


def quality_scatter(rows: Iterable[dict]) -> list[dict]:
    """Pair solver and greedy objectives per (experiment, n, trial)."""
    solver_obj, greedy_obj = {}, {}
    for r in rows:
        key = (r["experiment"], r["n"], r["trial"])
        if r["algorithm"] == "solver":
            solver_obj[key] = r["objective"]
        elif r["algorithm"] == "greedy":
            greedy_obj[key] = r["objective"]
    unmatched = set(solver_obj) ^ set(greedy_obj)
    if unmatched:
        raise ValueError(f"unmatched solver/greedy rows for {sorted(unmatched)}")
    out = []
    for key in sorted(solver_obj):
        s, g = solver_obj[key], greedy_obj[key]
        if s is None:
            raise ValueError(f"solver row {key} has no objective")
        ratio = g / s if s != 0 else (1.0 if g == 0 else float("inf"))
        exp, n, trial = key
        out.append(
            {
                "instance_id": f"{exp}-n{n}-t{trial}",
                "solver_objective": s,
                "greedy_objective": g,
                "ratio": ratio,
            }
        )
    return out


def render_csv(rows: Sequence[dict], columns: Sequence[str], schema: str) -> str:
    buf = io.StringIO()
    buf.write(schema + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def write_results(rows: Sequence[dict], path: str | Path) -> None:
    Path(path).write_text(render_csv(rows, RESULT_COLUMNS, RESULTS_SCHEMA))


def write_quality(pairs: Sequence[dict], path: str | Path) -> None:
    Path(path).write_text(render_csv(pairs, QUALITY_COLUMNS, QUALITY_SCHEMA))


def summarize(rows: Sequence[dict]) -> dict:
    """Median wall time and optimal fraction per (algorithm, n)."""
    groups: dict[tuple[str, int], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["algorithm"], r["n"]), []).append(r)
    out = []
    for (algo, n), rs in sorted(groups.items()):
        out.append(
            {
                "algorithm": algo,
                "n": n,
                "trials": len(rs),
                "median_wall_time": statistics.median(r["wall_time"] for r in rs),
                "max_wall_time": max(r["wall_time"] for r in rs),
                "optimal": sum(r["status"] == Status.OPTIMAL.value for r in rs),
            }
        )
    return {"groups": out}


def run_bench(spec: ExperimentSpec, out_dir: str | Path) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = run_experiment(spec)
    write_results(rows, out_dir / "results.csv")
    paths = {"results": str(out_dir / "results.csv")}
    if "solver" in spec.algorithms and "greedy" in spec.algorithms:
        pairs = quality_scatter(rows)
        write_quality(pairs, out_dir / "quality.csv")
        paths["quality"] = str(out_dir / "quality.csv")
    summary = summarize(rows)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    paths["summary"] = str(out_dir / "summary.json")
    return paths
