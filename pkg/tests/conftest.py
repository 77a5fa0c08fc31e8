import sys

import pytest

from lrrt import (
    GridSpec,
    build_initial_condition,
    build_operators,
)

from solverdata import DEFAULT_IC


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one pass/fail line per acceptance criterion, if any ran."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get(
        "tests.test_acceptance"
    )
    results = getattr(mod, "ACCEPTANCE_RESULTS", None) if mod else None
    if not results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(results):
        name, ok, detail = results[num]
        status = "pass" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num} ({name}): {status}  [{detail}]")


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec(m=51, n=8, t_end=0.5)


@pytest.fixture(scope="session")
def small_ops(small_grid):
    return build_operators(small_grid)


@pytest.fixture(scope="session")
def small_state0(small_grid):
    return build_initial_condition(small_grid, DEFAULT_IC)
