"""Sensor scheduling problem instances and their constraint systems.

A schedule is a 0/1 vector ``gamma`` of length ``m*T``; entry
``m*(k-1) + j`` switches sensor ``j`` (0-based) on at step ``k`` (1-based).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .covariance import CovarianceCache, build_cache
from .estimator import CostMatrix, schedule_objective
from .system import SystemParams

FEAS_TOL = 1e-9
UNDECIDED = -1


@dataclass(frozen=True)
class Schedule:
    gamma: tuple[int, ...]
    m: int
    T: int

    def __post_init__(self):
        gamma = tuple(int(g) for g in self.gamma)
        if len(gamma) != self.m * self.T:
            raise ValueError(f"schedule length {len(gamma)} != m*T = {self.m * self.T}")
        if any(g not in (0, 1) for g in gamma):
            raise ValueError("schedule entries must be 0 or 1")
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def from_support(cls, support: Iterable[int], m: int, T: int) -> Schedule:
        gamma = [0] * (m * T)
        for j in support:
            gamma[j] = 1
        return cls(tuple(gamma), m, T)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.gamma, dtype=np.int8)

    def support(self) -> list[int]:
        return [i for i, g in enumerate(self.gamma) if g]

    def active_sensors(self, k: int) -> list[int]:
        """Sensors (0-based) switched on at step ``k`` (1-based)."""
        row = self.gamma[self.m * (k - 1) : self.m * k]
        return [j for j, g in enumerate(row) if g]


# -- constraint families ---------------------------------------------------


@dataclass(frozen=True)
class Selection:
    """Commit to one sensor subset of size ``p`` used at every step."""

    p: int

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 0:
            raise ValueError("Selection budget must be a nonnegative integer")


@dataclass(frozen=True)
class PerStepBudget:
    """``p`` active sensors at every step (``<= p`` when not ``equality``)."""

    p: int
    equality: bool = True

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 0:
            raise ValueError("PerStepBudget budget must be a nonnegative integer")


@dataclass(frozen=True)
class EnergyBudget:
    """Sensor ``sensor`` may be active on at most ``limit`` steps.

    ``limit`` is the energy budget divided by the per-activation cost.
    """

    sensor: int
    limit: float

    def __post_init__(self):
        if self.limit < 0:
            raise ValueError("energy limit must be nonnegative")
        if self.sensor < 0:
            raise ValueError("sensor index must be nonnegative")

    @property
    def max_uses(self) -> int:
        return int(math.floor(self.limit + FEAS_TOL))


Structured = Union[Selection, PerStepBudget, EnergyBudget]


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    structured: tuple[Structured, ...] = ()
    H: np.ndarray | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "structured", tuple(self.structured))
        if (self.H is None) != (self.b is None):
            raise ValueError("raw constraints need both H and b")
        if self.H is not None:
            H = np.atleast_2d(np.asarray(self.H, dtype=float))
            b = np.atleast_1d(np.asarray(self.b, dtype=float))
            if H.shape[0] != b.shape[0]:
                raise ValueError("H and b row counts differ")
            object.__setattr__(self, "H", H)
            object.__setattr__(self, "b", b)

    @property
    def has_raw(self) -> bool:
        return self.H is not None and self.H.shape[0] > 0

    def of_type(self, kind) -> list:
        return [c for c in self.structured if isinstance(c, kind)]


def materialize(cs: ConstraintSystem, m: int, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Equivalent ``(H, b)`` with ``H gamma <= b``; equalities become pairs."""
    rows: list[np.ndarray] = []
    rhs: list[float] = []

    def add(row, bound, equality=False):
        rows.append(row)
        rhs.append(bound)
        if equality:
            rows.append(-row)
            rhs.append(-bound)

    for c in cs.structured:
        if isinstance(c, Selection):
            row = np.zeros(m * T)
            row[:m] = 1.0
            add(row, float(c.p), equality=True)
            for i in range(m):
                for j in range(1, T):
                    tie = np.zeros(m * T)
                    tie[i] = 1.0
                    tie[i + j * m] = -1.0
                    add(tie, 0.0, equality=True)
        elif isinstance(c, PerStepBudget):
            for k in range(T):
                row = np.zeros(m * T)
                row[k * m : (k + 1) * m] = 1.0
                add(row, float(c.p), equality=c.equality)
        elif isinstance(c, EnergyBudget):
            if c.sensor >= m:
                raise ValueError(f"energy constraint names sensor {c.sensor} but m = {m}")
            row = np.zeros(m * T)
            row[c.sensor :: m] = 1.0
            add(row, float(c.limit))
        else:
            raise TypeError(f"unknown constraint {c!r}")
    if cs.has_raw:
        if cs.H.shape[1] != m * T:
            raise ValueError(f"raw H has {cs.H.shape[1]} columns, expected {m * T}")
        rows.extend(cs.H)
        rhs.extend(cs.b)
    if not rows:
        return np.zeros((0, m * T)), np.zeros(0)
    return np.vstack(rows), np.asarray(rhs, dtype=float)


def is_feasible(cs: ConstraintSystem, schedule: Schedule) -> bool:
    m, T = schedule.m, schedule.T
    g = schedule.array.reshape(T, m)
    for c in cs.structured:
        if isinstance(c, Selection):
            if g[0].sum() != c.p or np.any(g != g[0]):
                return False
        elif isinstance(c, PerStepBudget):
            counts = g.sum(axis=1)
            if np.any(counts > c.p) or (c.equality and np.any(counts != c.p)):
                return False
        elif isinstance(c, EnergyBudget):
            if c.sensor >= m or g[:, c.sensor].sum() > c.limit + FEAS_TOL:
                return False
    if cs.has_raw:
        if cs.H.shape[1] != m * T:
            raise ValueError(f"raw H has {cs.H.shape[1]} columns, expected {m * T}")
        if np.any(cs.H @ schedule.array > cs.b + FEAS_TOL):
            return False
    return True


# -- partial assignments ---------------------------------------------------


def _step_bounds(cs: ConstraintSystem, m: int) -> tuple[int, int]:
    """Allowed per-step count interval from all PerStepBudget constraints."""
    lo, hi = 0, m
    for c in cs.of_type(PerStepBudget):
        hi = min(hi, c.p)
        if c.equality:
            lo = max(lo, c.p)
    return lo, hi


def _energy_caps(cs: ConstraintSystem, m: int) -> np.ndarray:
    caps = np.full(m, np.iinfo(np.int64).max // 4, dtype=np.int64)
    for c in cs.of_type(EnergyBudget):
        if c.sensor < m:
            caps[c.sensor] = min(caps[c.sensor], c.max_uses)
    return caps


def _propagate_selection(cs, s, m, T, step_lo, step_hi, caps) -> bool | None:
    """Tying + cardinality on the sensor-level variables. Returns changed flag or None."""
    changed = False
    g = s.reshape(T, m)
    lo, hi = step_lo, step_hi
    for c in cs.of_type(Selection):
        lo, hi = max(lo, c.p), min(hi, c.p)
    if lo > hi:
        return None
    for i in range(m):
        col = g[:, i]
        has1, has0 = np.any(col == 1), np.any(col == 0)
        if has1 and has0:
            return None
        if caps[i] < T:
            if has1:
                return None
            has0 = True
        target = 1 if has1 else 0 if has0 else UNDECIDED
        if target != UNDECIDED and np.any(col == UNDECIDED):
            col[:] = target
            changed = True
    ones = int(np.sum(g[0] == 1))
    und = np.flatnonzero(g[0] == UNDECIDED)
    if ones > hi or ones + und.size < lo:
        return None
    if und.size and ones == hi:
        g[:, und] = 0
        changed = True
    elif und.size and ones + und.size == lo:
        g[:, und] = 1
        changed = True
    return changed


def _flow_feasible(g: np.ndarray, need: np.ndarray, room: np.ndarray) -> bool:
    """Can each step k gain ``need[k]`` ones from its undecided cells with
    sensor i gaining at most ``room[i]``?"""
    T, m = g.shape
    total = int(need.sum())
    if total == 0:
        return True
    src, sink = 0, T + m + 1
    rows, cols, caps = [], [], []
    for k in range(T):
        if need[k]:
            rows.append(src)
            cols.append(1 + k)
            caps.append(int(need[k]))
        for i in np.flatnonzero(g[k] == UNDECIDED):
            rows.append(1 + k)
            cols.append(1 + T + i)
            caps.append(1)
    for i in range(m):
        r = int(min(room[i], T))
        if r > 0:
            rows.append(1 + T + i)
            cols.append(sink)
            caps.append(r)
    graph = csr_matrix(
        (np.asarray(caps, dtype=np.int32), (rows, cols)), shape=(T + m + 2, T + m + 2)
    )
    return maximum_flow(graph, src, sink).flow_value == total


def propagate(
    cs: ConstraintSystem,
    m: int,
    T: int,
    fixed_one: Iterable[int] = (),
    fixed_zero: Iterable[int] = (),
) -> np.ndarray | None:
    """Fix every entry forced by the constraints, or return None if no
    completion can be feasible.

    Returns an int8 array with entries 0, 1 or ``UNDECIDED``. For the
    structured families the infeasibility test is exact; raw ``(H, b)`` rows
    use interval reasoning and can miss dead ends.
    """
    s = np.full(m * T, UNDECIDED, dtype=np.int8)
    fixed_one = list(fixed_one)
    fixed_zero = list(fixed_zero)
    s[fixed_zero] = 0
    if np.any(s[fixed_one] == 0):
        raise ValueError("fixed_one and fixed_zero overlap")
    s[fixed_one] = 1

    step_lo, step_hi = _step_bounds(cs, m)
    if step_lo > step_hi:
        return None
    caps = _energy_caps(cs, m)
    has_sel = bool(cs.of_type(Selection))
    has_step = bool(cs.of_type(PerStepBudget))
    has_energy = bool(cs.of_type(EnergyBudget))
    if has_raw := cs.has_raw:
        H, b = cs.H, cs.b
        if H.shape[1] != m * T:
            raise ValueError(f"raw H has {H.shape[1]} columns, expected {m * T}")
    g = s.reshape(T, m)

    changed = True
    while changed:
        changed = False
        if has_sel:
            res = _propagate_selection(cs, s, m, T, step_lo, step_hi, caps)
            if res is None:
                return None
            changed |= res
        if has_step:
            for k in range(T):
                row = g[k]
                ones = int(np.sum(row == 1))
                und = np.flatnonzero(row == UNDECIDED)
                if ones > step_hi or ones + und.size < step_lo:
                    return None
                if und.size and ones == step_hi:
                    row[und] = 0
                    changed = True
                elif und.size and ones + und.size == step_lo:
                    row[und] = 1
                    changed = True
        if has_energy:
            for i in range(m):
                col = g[:, i]
                ones = int(np.sum(col == 1))
                if ones > caps[i]:
                    return None
                if ones == caps[i] and np.any(col == UNDECIDED):
                    col[col == UNDECIDED] = 0
                    changed = True
        if has_raw:
            und = s == UNDECIDED
            fixed_part = H[:, ~und] @ s[~und].astype(float)
            Hu = H[:, und]
            slack = b + FEAS_TOL - fixed_part - np.minimum(Hu, 0.0).sum(axis=1)
            if np.any(slack < 0):
                return None
            # a variable whose unfavourable value alone exceeds the slack is forced
            forced = np.abs(Hu) > slack[:, None]
            if np.any(forced):
                idx = np.flatnonzero(und)
                for r, c in zip(*np.nonzero(forced)):
                    j = idx[c]
                    want = 0 if Hu[r, c] > 0 else 1
                    if s[j] == UNDECIDED:
                        s[j] = want
                        changed = True
                    elif s[j] != want:
                        return None

    if has_step and has_energy and not has_sel:
        need = np.maximum(step_lo - np.sum(g == 1, axis=1), 0)
        room = caps - np.sum(g == 1, axis=0)
        if not _flow_feasible(g, need, room):
            return None
    return s


def partial_feasible(
    cs: ConstraintSystem,
    m: int,
    T: int,
    fixed_one: Iterable[int] = (),
    fixed_zero: Iterable[int] = (),
) -> bool:
    return propagate(cs, m, T, fixed_one, fixed_zero) is not None


# -- objectives ------------------------------------------------------------


def total_error_costs(n: int, T: int, theta: float | Sequence[float] = 1.0) -> list[CostMatrix]:
    thetas = [float(theta)] * T if np.isscalar(theta) else [float(t) for t in theta]
    if len(thetas) != T or min(thetas) < 0:
        raise ValueError("need T nonnegative weights")
    return [CostMatrix(k=k + 1, Q=thetas[k] * np.eye(n)) for k in range(T)]


def final_state_costs(n: int, T: int) -> list[CostMatrix]:
    return [CostMatrix(k=k, Q=np.eye(n) if k == T else np.zeros((n, n))) for k in range(1, T + 1)]


def objective_weight_lqg(theta, T: int, tol: float = 1e-10) -> list[CostMatrix]:
    """Costs with ``M_k = theta`` for every step, from an eigen-factorization."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if not np.allclose(theta, theta.T, rtol=0.0, atol=1e-12):
        raise ValueError("theta must be symmetric")
    w, U = np.linalg.eigh(0.5 * (theta + theta.T))
    if w.min() < -tol:
        raise ValueError(f"theta is not PSD (min eigenvalue {w.min():.3e})")
    w, U = w[::-1], U[:, ::-1]
    Q = np.sqrt(np.clip(w, 0.0, None))[:, None] * U.T
    return [CostMatrix(k=k, Q=Q) for k in range(1, T + 1)]


# -- problem ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScheduleProblem:
    params: SystemParams
    T: int
    costs: tuple[CostMatrix, ...]
    constraints: ConstraintSystem = field(default_factory=ConstraintSystem)

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(self.costs))
        if self.T < 1:
            raise ValueError("horizon T must be at least 1")
        if len(self.costs) != self.T:
            raise ValueError(f"expected {self.T} cost matrices, got {len(self.costs)}")
        for k, cost in enumerate(self.costs, start=1):
            if cost.k != k:
                raise ValueError(f"cost matrix {k} is labelled step {cost.k}")
            if cost.Q.shape[1] != self.params.n:
                raise ValueError(f"Q_{k} has {cost.Q.shape[1]} columns, expected {self.params.n}")
        for c in self.constraints.of_type(EnergyBudget):
            if c.sensor >= self.params.m:
                raise ValueError(f"energy constraint names sensor {c.sensor} but m = {self.m}")

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def size(self) -> int:
        return self.params.m * self.T

    @cached_property
    def cache(self) -> CovarianceCache:
        return build_cache(self.params, self.T)

    def objective(self, schedule: Schedule | Iterable[int]) -> float:
        support = schedule.support() if isinstance(schedule, Schedule) else schedule
        return schedule_objective(self.cache, self.costs, support)

    def is_feasible(self, schedule: Schedule) -> bool:
        return is_feasible(self.constraints, schedule)


# -- JSON ------------------------------------------------------------------


def constraint_from_dict(d: dict) -> Structured:
    kind = d.get("type")
    if kind == "selection":
        return Selection(int(d["p"]))
    if kind in ("per_step", "scheduling"):
        return PerStepBudget(int(d["p"]), bool(d.get("equality", True)))
    if kind == "energy":
        if "limit" in d:
            limit = float(d["limit"])
        else:
            limit = float(d["beta"]) / float(d["alpha"])
        return EnergyBudget(int(d["sensor"]), limit)
    raise ValueError(f"unknown constraint type {kind!r}")


def constraint_to_dict(c: Structured) -> dict:
    if isinstance(c, Selection):
        return {"type": "selection", "p": c.p}
    if isinstance(c, PerStepBudget):
        return {"type": "per_step", "p": c.p, "equality": c.equality}
    return {"type": "energy", "sensor": c.sensor, "limit": c.limit}


def _costs_from_objective(obj, n: int, T: int) -> list[CostMatrix]:
    if isinstance(obj, str):
        obj = {"type": obj}
    kind = obj.get("type")
    if kind == "final_state":
        return final_state_costs(n, T)
    if kind == "total_error":
        return total_error_costs(n, T, obj.get("theta", 1.0))
    if kind == "lqg":
        return objective_weight_lqg(obj["Theta"], T)
    if kind == "explicit":
        return [CostMatrix(k=k + 1, Q=q) for k, q in enumerate(obj["Q"])]
    raise ValueError(f"unknown objective {kind!r}")


def problem_from_dict(data: dict, base_dir: Path | None = None) -> ScheduleProblem:
    inst = data["instance"]
    if isinstance(inst, str):
        path = Path(inst)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        params = SystemParams.load(path)
    else:
        params = SystemParams.from_dict(inst)
    T = int(data["T"])
    costs = _costs_from_objective(data.get("objective", "final_state"), params.n, T)
    structured, H, b = [], None, None
    for c in data.get("constraints", []):
        if c.get("type") == "raw":
            H, b = c["H"], c["b"]
        else:
            structured.append(constraint_from_dict(c))
    if "H" in data:
        H, b = data["H"], data["b"]
    return ScheduleProblem(params, T, costs, ConstraintSystem(tuple(structured), H, b))


def problem_to_dict(problem: ScheduleProblem) -> dict:
    cons = [constraint_to_dict(c) for c in problem.constraints.structured]
    if problem.constraints.has_raw:
        cons.append(
            {"type": "raw", "H": problem.constraints.H.tolist(), "b": problem.constraints.b.tolist()}
        )
    return {
        "instance": problem.params.to_dict(),
        "T": problem.T,
        "objective": {"type": "explicit", "Q": [c.Q.tolist() for c in problem.costs]},
        "constraints": cons,
    }


def load_problem(path: str | Path) -> ScheduleProblem:
    path = Path(path)
    return problem_from_dict(json.loads(path.read_text()), base_dir=path.parent)
