"""Exact sensor scheduling by branch-and-bound on the filter reformulation.

Each step's weighted error is the minimum of a convex quadratic in the
filter coefficients ``K_k``, subject to ``K_k[:, j] = 0`` whenever
``gamma_j = 0``. Dropping that coupling for undecided sensors gives a
convex relaxation whose optimum is available in closed form: the
restricted-support error with every undecided measurement allowed. Since
extra measurements never increase the optimal filter's error, that value
lower-bounds every completion of the node, and equals the true objective
once all entries are fixed.
"""

from __future__ import annotations

import csv
import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .covariance import CovarianceCache
from .estimator import CostMatrix, FilterCoefficients, optimal_coefficients, restricted_error
from .problem import UNDECIDED, Schedule, ScheduleProblem, is_feasible, propagate


class Branching(str, Enum):
    MAX_MARGINAL = "max_marginal"
    LOWEST_INDEX = "lowest_index"


class Heuristic(str, Enum):
    GREEDY_COMPLETION = "greedy_completion"
    NONE = "none"


class Status(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"  # stopped on a limit with an incumbent
    INFEASIBLE = "infeasible"
    UNKNOWN = "unknown"  # stopped on a limit before any incumbent


@dataclass
class SolverConfig:
    gap_tolerance: float = 1e-6
    time_limit: float | None = None
    node_limit: int | None = None
    branching: Branching = Branching.MAX_MARGINAL
    incumbent_heuristic: Heuristic = Heuristic.GREEDY_COMPLETION
    max_queue: int = 1_000_000
    record_trace: bool = False

    def __post_init__(self):
        self.branching = Branching(self.branching)
        self.incumbent_heuristic = Heuristic(self.incumbent_heuristic)
        if self.gap_tolerance <= 0:
            raise ValueError("gap_tolerance must be positive")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.node_limit is not None and self.node_limit < 1:
            raise ValueError("node_limit must be positive")


@dataclass(frozen=True)
class Node:
    fixed_one: frozenset[int]
    fixed_zero: frozenset[int]
    lower_bound: float = -math.inf
    depth: int = 0
    id: int = 0
    parent: int = -1


@dataclass(frozen=True)
class TraceRecord:
    node_id: int
    parent_id: int
    depth: int
    bound: float
    action: str  # branch | prune-bound | prune-infeasible | incumbent
    fixed_one: tuple[int, ...] = ()
    fixed_zero: tuple[int, ...] = ()


@dataclass
class SolveResult:
    incumbent: Schedule | None
    objective: float
    lower_bound: float
    status: Status
    nodes_explored: int
    wall_time: float
    coefficients: list[FilterCoefficients] | None = None
    trace: list[TraceRecord] = field(default_factory=list)
    timeline: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def gap(self) -> float:
        if self.incumbent is None:
            return math.inf
        return (self.objective - self.lower_bound) / max(abs(self.objective), 1e-12)

    def to_dict(self) -> dict:
        out = {
            "status": self.status.value,
            "objective": self.objective if self.incumbent is not None else None,
            "lower_bound": self.lower_bound,
            "gap": self.gap if self.incumbent is not None else None,
            "nodes_explored": self.nodes_explored,
            "wall_time": self.wall_time,
            "schedule": list(self.incumbent.gamma) if self.incumbent else None,
        }
        if self.incumbent is not None:
            out["active_sensors"] = [
                self.incumbent.active_sensors(k) for k in range(1, self.incumbent.T + 1)
            ]
        return out


def write_trace_csv(records: Sequence[TraceRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "parent_id", "depth", "bound", "action", "fixed_one", "fixed_zero"])
        for r in records:
            w.writerow(
                [
                    r.node_id,
                    r.parent_id,
                    r.depth,
                    repr(r.bound),
                    r.action,
                    " ".join(map(str, r.fixed_one)),
                    " ".join(map(str, r.fixed_zero)),
                ]
            )


class BoundEvaluator:
    """Sum of restricted-support errors, memoized per (step, support)."""

    _MEMO_CAP = 500_000

    def __init__(self, cache: CovarianceCache, costs: Sequence[CostMatrix]):
        self.cache = cache
        self.costs = [c for c in costs if not c.is_zero]
        self._memo: dict[tuple[int, bytes], float] = {}

    def step_error(self, cost: CostMatrix, allowed: np.ndarray) -> float:
        mk = self.cache.m * cost.k
        prefix = allowed[:mk]
        key = (cost.k, prefix.tobytes())
        val = self._memo.get(key)
        if val is None:
            if len(self._memo) >= self._MEMO_CAP:
                self._memo.clear()
            val = restricted_error(self.cache, cost, cost.k, np.flatnonzero(prefix))
            self._memo[key] = val
        return val

    def total(self, allowed: np.ndarray) -> float:
        """``allowed`` is a boolean mask of length ``m*T``."""
        return sum(self.step_error(c, allowed) for c in self.costs)


def _mask(size: int, fixed_zero) -> np.ndarray:
    allowed = np.ones(size, dtype=bool)
    allowed[list(fixed_zero)] = False
    return allowed


def node_lower_bound(cache: CovarianceCache, costs: Sequence[CostMatrix], node: Node) -> float:
    """Relaxation value: every index not fixed to zero is treated as measured."""
    ev = BoundEvaluator(cache, costs)
    return ev.total(_mask(cache.m * cache.T, node.fixed_zero))


def branch_variable(
    node: Node,
    cache: CovarianceCache,
    costs: Sequence[CostMatrix],
    config: SolverConfig,
    evaluator: BoundEvaluator | None = None,
) -> int:
    size = cache.m * cache.T
    undecided = sorted(set(range(size)) - node.fixed_one - node.fixed_zero)
    if not undecided:
        raise ValueError("node has no undecided index")
    if config.branching is Branching.LOWEST_INDEX or len(undecided) == 1:
        return undecided[0]
    ev = evaluator or BoundEvaluator(cache, costs)
    allowed = _mask(size, node.fixed_zero)
    base = ev.total(allowed)
    best, best_gain = undecided[0], -math.inf
    for j in undecided:
        allowed[j] = False
        gain = ev.total(allowed) - base
        allowed[j] = True
        if gain > best_gain:
            best, best_gain = j, gain
    return best


def _state_sets(state: np.ndarray) -> tuple[frozenset[int], frozenset[int]]:
    return (
        frozenset(np.flatnonzero(state == 1).tolist()),
        frozenset(np.flatnonzero(state == 0).tolist()),
    )


def greedy_completion(
    node: Node,
    problem: ScheduleProblem,
    cache: CovarianceCache | None = None,
    evaluator: BoundEvaluator | None = None,
) -> Schedule | None:
    """Complete ``node`` by repeatedly switching on the best single index.

    Additions that leave no feasible completion are skipped; a forced
    consequence of an addition (e.g. the tied copies of a selected sensor)
    comes with it. Stops once nothing feasible remains to add, or when
    nothing strictly improves and leaving the rest off is feasible.
    """
    cache = cache or problem.cache
    ev = evaluator or BoundEvaluator(cache, problem.costs)
    cs, m, T = problem.constraints, problem.m, problem.T
    state = propagate(cs, m, T, node.fixed_one, node.fixed_zero)
    if state is None:
        return None
    while True:
        undecided = np.flatnonzero(state == UNDECIDED)
        if undecided.size == 0:
            break
        ones, zeros = _state_sets(state)
        current = ev.total(state == 1)
        best_state, best_val = None, math.inf
        seen: set[bytes] = set()
        for j in undecided:
            cand = propagate(cs, m, T, ones | {int(j)}, zeros)
            if cand is None:
                continue
            key = cand.tobytes()
            if key in seen:
                continue
            seen.add(key)
            val = ev.total(cand == 1)
            if val < best_val:
                best_state, best_val = cand, val
        if best_state is None:
            break
        if not best_val < current:
            if propagate(cs, m, T, ones, zeros | set(undecided.tolist())) is not None:
                break
        state = best_state
    state = state.copy()
    state[state == UNDECIDED] = 0
    sched = Schedule(tuple(state.tolist()), m, T)
    return sched if is_feasible(cs, sched) else None


def _coefficients(problem: ScheduleProblem, sched: Schedule) -> list[FilterCoefficients]:
    supp = sched.support()
    out = []
    for k in range(1, problem.T + 1):
        mk = problem.m * k
        out.append(optimal_coefficients(problem.cache, k, [j for j in supp if j < mk]))
    return out


def solve(problem: ScheduleProblem, config: SolverConfig | None = None) -> SolveResult:
    """Best-first branch-and-bound. Single-threaded and deterministic."""
    config = config or SolverConfig()
    start = time.perf_counter()
    cache = problem.cache
    ev = BoundEvaluator(cache, problem.costs)
    cs, m, T = problem.constraints, problem.m, problem.T
    trace: list[TraceRecord] = []
    timeline: list[tuple[float, float, float]] = []
    ids = itertools.count()

    def log(node: Node, action: str):
        if config.record_trace:
            trace.append(
                TraceRecord(
                    node.id,
                    node.parent,
                    node.depth,
                    node.lower_bound,
                    action,
                    tuple(sorted(node.fixed_one)),
                    tuple(sorted(node.fixed_zero)),
                )
            )

    def threshold(inc: float) -> float:
        # purely relative, so an Optimal exit always has gap <= tolerance
        return inc - config.gap_tolerance * abs(inc)

    def elapsed() -> float:
        return time.perf_counter() - start

    incumbent: Schedule | None = None
    inc_obj = math.inf
    pruned_min = math.inf
    nodes = 0

    def make_node(ones, zeros, depth, parent) -> tuple[Node, np.ndarray | None]:
        nonlocal nodes
        nodes += 1
        state = propagate(cs, m, T, ones, zeros)
        if state is None:
            node = Node(frozenset(ones), frozenset(zeros), math.inf, depth, next(ids), parent)
            return node, None
        f1, f0 = _state_sets(state)
        node = Node(f1, f0, ev.total(state != 0), depth, next(ids), parent)
        return node, state

    def global_lb(current: float) -> float:
        vals = [current, pruned_min, inc_obj]
        if heap:
            vals.append(heap[0][0])
        if stack:
            vals.append(min(n.lower_bound for n in stack))
        return min(vals)

    def finish(status: Status, lb: float) -> SolveResult:
        coeffs = _coefficients(problem, incumbent) if incumbent is not None else None
        return SolveResult(
            incumbent=incumbent,
            objective=inc_obj,
            lower_bound=lb,
            status=status,
            nodes_explored=nodes,
            wall_time=elapsed(),
            coefficients=coeffs,
            trace=trace,
            timeline=timeline,
        )

    heap: list[tuple[float, int, Node]] = []
    stack: list[Node] = []

    root, root_state = make_node((), (), 0, -1)
    if root_state is None:
        log(root, "prune-infeasible")
        return finish(Status.INFEASIBLE, math.inf)

    if config.incumbent_heuristic is Heuristic.GREEDY_COMPLETION:
        sched = greedy_completion(root, problem, cache, ev)
        if sched is not None:
            incumbent, inc_obj = sched, ev.total(sched.array == 1)
            timeline.append((elapsed(), inc_obj, root.lower_bound))

    def consider(node: Node, state: np.ndarray | None) -> None:
        """Prune, record a leaf, or enqueue a freshly created node."""
        nonlocal incumbent, inc_obj, pruned_min
        if state is None:
            log(node, "prune-infeasible")
            return
        if node.lower_bound >= threshold(inc_obj):
            pruned_min = min(pruned_min, node.lower_bound)
            log(node, "prune-bound")
            return
        if not np.any(state == UNDECIDED):
            sched = Schedule(tuple(state.tolist()), m, T)
            if not is_feasible(cs, sched):
                log(node, "prune-infeasible")
                return
            # leaf bound is the exact objective
            incumbent, inc_obj = sched, node.lower_bound
            log(node, "incumbent")
            timeline.append((elapsed(), inc_obj, global_lb(current_bound)))
            return
        if len(heap) >= config.max_queue:
            stack.append(node)
        else:
            heapq.heappush(heap, (node.lower_bound, node.id, node))

    current_bound = root.lower_bound
    consider(root, root_state)

    while heap or stack:
        if config.time_limit is not None and elapsed() >= config.time_limit:
            break
        if config.node_limit is not None and nodes >= config.node_limit:
            break
        node = stack.pop() if stack else heapq.heappop(heap)[2]
        current_bound = node.lower_bound
        if node.lower_bound >= threshold(inc_obj):
            pruned_min = min(pruned_min, node.lower_bound)
            log(node, "prune-bound")
            continue
        j = branch_variable(node, cache, problem.costs, config, ev)
        log(node, "branch")
        for one_side in (True, False):
            ones = node.fixed_one | {j} if one_side else node.fixed_one
            zeros = node.fixed_zero if one_side else node.fixed_zero | {j}
            child, state = make_node(ones, zeros, node.depth + 1, node.id)
            consider(child, state)
    else:
        if incumbent is None:
            return finish(Status.INFEASIBLE, math.inf)
        return finish(Status.OPTIMAL, min(inc_obj, pruned_min))

    # limits are checked before popping, so every open node is still queued
    lb = global_lb(inc_obj)
    return finish(Status.FEASIBLE if incumbent is not None else Status.UNKNOWN, lb)
