import numpy as np
import pytest

from kfsched import (
    ConstraintSystem,
    InstanceSpec,
    PerStepBudget,
    ScheduleProblem,
    Selection,
    SystemParams,
    final_state_costs,
    generate_instance,
)

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def scalar_params():
    """A = C = W = V = Sigma0 = 1."""
    one = [[1.0]]
    return SystemParams(A=one, C=one, W=one, V=one, Sigma0=one)


def random_params(n, m, seed):
    return generate_instance(InstanceSpec(n, m, seed))


def small_problem(n, m, T, seed, constraint=None, costs=None):
    params = random_params(n, m, seed)
    cons = ConstraintSystem((constraint,)) if constraint is not None else ConstraintSystem()
    return ScheduleProblem(params, T, costs or final_state_costs(n, T), cons)


@pytest.fixture
def report(request):
    """Record a one-line pass/fail verdict printed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def _record(label, ok, detail=""):
        lines.append(f"[{'PASS' if ok else 'FAIL'}] {label}" + (f" ({detail})" if detail else ""))
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


__all__ = ["random_params", "small_problem", "Selection", "PerStepBudget", "np"]
