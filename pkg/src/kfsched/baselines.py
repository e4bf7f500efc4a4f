"""Greedy heuristic and exhaustive-enumeration oracle."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .errors import EnumerationCapExceeded, KFSchedError, UnsupportedConstraintError
from .problem import UNDECIDED, Schedule, ScheduleProblem, is_feasible, propagate
from .solver import BoundEvaluator, Node, greedy_completion


def greedy(problem: ScheduleProblem) -> tuple[Schedule, float]:
    """Switch sensors on one at a time, always taking the largest error drop.

    Under a Selection constraint a sensor is added at every step at once.
    Ordering is global (best marginal over all steps), not step by step.
    """
    if problem.constraints.has_raw:
        raise UnsupportedConstraintError("greedy supports only the structured constraint families")
    ev = BoundEvaluator(problem.cache, problem.costs)
    sched = greedy_completion(Node(frozenset(), frozenset()), problem, problem.cache, ev)
    if sched is None:
        raise KFSchedError("greedy found no feasible schedule")
    return sched, problem.objective(sched)


def enumerate_feasible(problem: ScheduleProblem) -> Iterator[Schedule]:
    """Depth-first walk over assignments, pruned by constraint propagation.

    Schedules come out in decreasing lexicographic order of ``gamma``.
    """
    cs, m, T = problem.constraints, problem.m, problem.T

    def walk(state: np.ndarray):
        und = np.flatnonzero(state == UNDECIDED)
        if und.size == 0:
            sched = Schedule(tuple(state.tolist()), m, T)
            if is_feasible(cs, sched):
                yield sched
            return
        j = int(und[0])
        ones = set(np.flatnonzero(state == 1).tolist())
        zeros = set(np.flatnonzero(state == 0).tolist())
        for val in (1, 0):
            nxt = propagate(cs, m, T, ones | {j} if val else ones, zeros if val else zeros | {j})
            if nxt is not None:
                yield from walk(nxt)

    root = propagate(cs, m, T)
    if root is not None:
        yield from walk(root)


def count_feasible(problem: ScheduleProblem, cap: int | None = None) -> int:
    count = 0
    for _ in enumerate_feasible(problem):
        count += 1
        if cap is not None and count > cap:
            break
    return count


def brute_force(problem: ScheduleProblem, enumeration_cap: int = 100_000) -> tuple[Schedule, float]:
    """Exact minimizer by evaluating every feasible schedule.

    Ties go to the schedule whose sorted support is lexicographically
    smallest. Raises ``EnumerationCapExceeded`` before evaluating anything
    if the feasible set is too large, and ``KFSchedError`` if it is empty.
    """
    count = count_feasible(problem, enumeration_cap)
    if count > enumeration_cap:
        raise EnumerationCapExceeded(count, enumeration_cap)
    ev = BoundEvaluator(problem.cache, problem.costs)
    best_key, best = None, None
    for sched in enumerate_feasible(problem):
        key = (ev.total(sched.array == 1), tuple(sched.support()))
        if best_key is None or key < best_key:
            best_key, best = key, sched
    if best is None:
        raise KFSchedError("problem has no feasible schedule")
    return best, problem.objective(best)
