import itertools
import math

import numpy as np
import pytest

from kfsched import (
    Branching,
    ConstraintSystem,
    Heuristic,
    Node,
    PerStepBudget,
    Schedule,
    ScheduleProblem,
    Selection,
    SolverConfig,
    Status,
    SystemParams,
    brute_force,
    branch_variable,
    cost_c,
    greedy_completion,
    is_feasible,
    node_lower_bound,
    restricted_error,
    solve,
    total_error_costs,
)
from kfsched.solver import write_trace_csv

from conftest import random_params, small_problem


def two_sensor_problem(constraint=None):
    """n = 1, T = 1; sensor 0 has noise variance 1, sensor 1 has 100."""
    params = SystemParams(
        A=[[1.0]], C=[[1.0], [1.0]], W=[[1.0]], V=np.diag([1.0, 100.0]), Sigma0=[[1.0]]
    )
    cons = ConstraintSystem((constraint,)) if constraint else ConstraintSystem()
    return ScheduleProblem(params, 1, total_error_costs(1, 1), cons)


def test_root_bound_is_all_sensors_on():
    prob = small_problem(3, 3, 2, 0, Selection(1))
    root = node_lower_bound(prob.cache, prob.costs, Node(frozenset(), frozenset()))
    assert root == pytest.approx(prob.objective(range(6)), rel=1e-14)


def test_all_off_bound_is_prior_error():
    prob = small_problem(3, 2, 3, 1, costs=total_error_costs(3, 3))
    node = Node(frozenset(), frozenset(range(6)))
    expected = sum(np.trace(prob.cache.state_cov(k)) for k in (1, 2, 3))
    assert node_lower_bound(prob.cache, prob.costs, node) == pytest.approx(expected)


def test_bound_is_exact_at_full_assignment():
    prob = small_problem(3, 2, 2, 3)
    for gamma in itertools.product((0, 1), repeat=4):
        ones = frozenset(j for j, g in enumerate(gamma) if g)
        node = Node(ones, frozenset(range(4)) - ones)
        assert node_lower_bound(prob.cache, prob.costs, node) == prob.objective(ones)


def test_bounds_monotone_along_tree_seed9():
    prob = small_problem(3, 3, 2, 9, PerStepBudget(2))
    res = solve(prob, SolverConfig(record_trace=True))
    bounds = {r.node_id: r.bound for r in res.trace}
    checked = 0
    for r in res.trace:
        if r.parent_id in bounds and math.isfinite(r.bound):
            assert r.bound >= bounds[r.parent_id] - 1e-9
            checked += 1
    assert checked > 0


def test_branch_variable_single_and_lowest():
    prob = small_problem(2, 4, 2, 0)
    cfg = SolverConfig(branching=Branching.LOWEST_INDEX)
    node = Node(frozenset({0, 1, 2, 4, 5, 6, 7}), frozenset())
    assert branch_variable(node, prob.cache, prob.costs, SolverConfig()) == 3
    node = Node(frozenset({0, 1, 2, 4, 5, 6}), frozenset())
    assert branch_variable(node, prob.cache, prob.costs, cfg) == 3
    with pytest.raises(ValueError):
        branch_variable(Node(frozenset(range(8)), frozenset()), prob.cache, prob.costs, cfg)


def test_max_marginal_prefers_precise_sensor():
    prob = two_sensor_problem()
    # removing sensor 0 leaves 1 - 1/101; removing sensor 1 leaves 1 - 1/2
    both = 1.0 / (1.0 + 1.0 + 1.0 / 100.0)
    gain0, gain1 = 100.0 / 101.0 - both, 0.5 - both
    assert gain0 > gain1
    root = Node(frozenset(), frozenset())
    assert node_lower_bound(prob.cache, prob.costs, Node(frozenset(), frozenset({0}))) == pytest.approx(
        100.0 / 101.0
    )
    assert branch_variable(root, prob.cache, prob.costs, SolverConfig()) == 0


def test_greedy_completion_examples():
    prob = small_problem(2, 3, 2, 4, Selection(2))
    full = Schedule((1, 0, 1, 1, 0, 1), 3, 2)
    node = Node(frozenset(full.support()), frozenset({1, 4}))
    assert greedy_completion(node, prob) == full

    allon = small_problem(2, 3, 2, 4, Selection(3))
    assert greedy_completion(Node(frozenset(), frozenset()), allon).gamma == (1,) * 6

    prob = two_sensor_problem(PerStepBudget(1))
    assert greedy_completion(Node(frozenset(), frozenset()), prob).gamma == (1, 0)


def test_greedy_completion_infeasible_node():
    prob = small_problem(2, 3, 1, 4, Selection(1))
    assert greedy_completion(Node(frozenset({0, 1}), frozenset()), prob) is None


def test_single_forced_sensor():
    prob = small_problem(2, 1, 1, 2, Selection(1), costs=total_error_costs(2, 1))
    res = solve(prob)
    assert res.status is Status.OPTIMAL
    assert res.incumbent.gamma == (1,)
    assert res.objective == pytest.approx(restricted_error(prob.cache, prob.costs[0], 1, [0]))
    assert res.nodes_explored >= 1


def test_scalar_selection_objective(scalar_params):
    prob = ScheduleProblem(
        scalar_params, 1, total_error_costs(1, 1), ConstraintSystem((Selection(1),))
    )
    res = solve(prob)
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(0.5)


def sweep():
    for s in range(20):
        n, m, T = (2, 3, 4)[s % 3], (3, 4)[s % 2], (2, 3)[(s // 2) % 2]
        for con in (Selection(2), PerStepBudget(2)):
            yield small_problem(n, m, T, 100 + s, con)


@pytest.mark.parametrize("idx", range(40))
def test_matches_brute_force(idx):
    prob = list(itertools.islice(sweep(), idx, idx + 1))[0]
    res = solve(prob)
    _, best = brute_force(prob)
    assert res.status is Status.OPTIMAL
    assert is_feasible(prob.constraints, res.incumbent)
    assert res.objective == pytest.approx(best, rel=1e-6)
    assert res.objective >= res.lower_bound - 1e-9
    assert res.gap <= 1e-6


@pytest.mark.parametrize("branching", list(Branching))
@pytest.mark.parametrize("heuristic", list(Heuristic))
def test_all_configurations_reach_the_optimum(branching, heuristic):
    costs = total_error_costs(3, 3, [0.5, 1.0, 2.0])
    prob = small_problem(3, 3, 3, 21, PerStepBudget(1), costs=costs)
    res = solve(prob, SolverConfig(branching=branching, incumbent_heuristic=heuristic))
    _, best = brute_force(prob)
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(best, rel=1e-6)


def test_raw_constraints_solved_exactly():
    m, T = 3, 2
    H = np.array([[1, 1, 0, 0, 0, 0], [0, 0, 0, 1, 1, 1], [-1, -1, -1, 0, 0, 0]], dtype=float)
    b = np.array([1.0, 2.0, -1.0])
    params = random_params(3, m, 31)
    prob = ScheduleProblem(params, T, total_error_costs(3, T), ConstraintSystem((), H, b))
    res = solve(prob)
    sched, best = brute_force(prob)
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(best, rel=1e-9)
    assert np.all(H @ res.incumbent.array <= b)


def test_lqg_objective_solved_exactly():
    from kfsched import objective_weight_lqg

    rng = np.random.default_rng(5)
    X = rng.normal(size=(3, 3))
    theta = X @ X.T
    params = random_params(3, 3, 32)
    prob = ScheduleProblem(
        params, 2, objective_weight_lqg(theta, 2), ConstraintSystem((PerStepBudget(1),))
    )
    assert solve(prob).objective == pytest.approx(brute_force(prob)[1], rel=1e-6)


def test_infeasible_problem():
    prob = small_problem(2, 3, 2, 0, Selection(2))
    bad = ScheduleProblem(
        prob.params, 2, prob.costs, ConstraintSystem((Selection(2), PerStepBudget(1)))
    )
    res = solve(bad)
    assert res.status is Status.INFEASIBLE and res.incumbent is None

    raw = ScheduleProblem(prob.params, 2, prob.costs, ConstraintSystem((), [[1, 1, 1, 1, 1, 1]], [-1]))
    assert solve(raw).status is Status.INFEASIBLE


def test_coefficients_realize_objective_and_count():
    prob = small_problem(3, 3, 3, 7, PerStepBudget(2), costs=total_error_costs(3, 3))
    res = solve(prob)
    total = sum(cost_c(prob.cache, c, K) for c, K in zip(prob.costs, res.coefficients))
    assert total == pytest.approx(res.objective, abs=1e-9)
    n, m, T = 3, 3, 3
    assert sum(K.K.size for K in res.coefficients) == n * m * T * (T + 1) // 2
    supp = set(res.incumbent.support())
    for K in res.coefficients:
        assert set(K.support()) <= supp


def test_anytime_timeline_is_monotone():
    prob = small_problem(6, 6, 3, 11, PerStepBudget(3))
    res = solve(prob, SolverConfig(incumbent_heuristic=Heuristic.NONE))
    assert res.timeline
    objs = [o for _, o, _ in res.timeline]
    lbs = [lb for _, _, lb in res.timeline]
    assert all(a >= b for a, b in zip(objs, objs[1:]))
    assert all(a <= b + 1e-12 for a, b in zip(lbs, lbs[1:]))


def test_node_limit_gives_feasible_with_valid_bound():
    prob = small_problem(6, 6, 3, 12, PerStepBudget(3))
    res = solve(prob, SolverConfig(node_limit=5))
    assert res.status is Status.FEASIBLE
    opt = solve(prob).objective
    assert res.lower_bound <= opt + 1e-12 <= res.objective + 1e-12
    assert res.gap >= 0


def test_node_limit_without_incumbent_is_unknown():
    prob = small_problem(6, 6, 3, 12, PerStepBudget(3))
    res = solve(prob, SolverConfig(node_limit=1, incumbent_heuristic=Heuristic.NONE))
    assert res.status is Status.UNKNOWN and res.incumbent is None


def test_time_limit_respected():
    prob = small_problem(10, 8, 3, 1, PerStepBudget(3))
    res = solve(prob, SolverConfig(time_limit=0.2))
    assert res.wall_time < 2.0
    assert res.incumbent is not None


def test_depth_first_fallback_keeps_optimality():
    prob = small_problem(4, 4, 3, 13, PerStepBudget(2))
    res = solve(prob, SolverConfig(max_queue=2))
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(brute_force(prob)[1], rel=1e-6)


def test_deterministic_node_counts():
    prob = small_problem(5, 5, 3, 14, PerStepBudget(2))
    a, b = solve(prob), solve(prob)
    assert a.nodes_explored == b.nodes_explored and a.incumbent == b.incumbent


def test_trace_csv(tmp_path):
    prob = small_problem(3, 3, 2, 9, PerStepBudget(2))
    res = solve(prob, SolverConfig(record_trace=True))
    path = tmp_path / "trace.csv"
    write_trace_csv(res.trace, path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:5] == ["node_id", "parent_id", "depth", "bound", "action"]
    actions = {line.split(",")[4] for line in lines[1:]}
    assert actions <= {"branch", "prune-bound", "prune-infeasible", "incumbent"}
    assert "branch" in actions


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(gap_tolerance=0)
    with pytest.raises(ValueError):
        SolverConfig(branching="nope")
