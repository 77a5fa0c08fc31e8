import sys

import pytest

from figdata import result_line, write_rows


@pytest.fixture
def mc_error_csv(tmp_path):
    rows = [
        result_line(study="mc-study", m=101, n=32, r=10, N=1600,
                    mc_error=0.004, var_r=0.0256, wall_time_s=17.1, seed=1),
        result_line(study="mc-study", m=101, n=32, r=10, N=6400,
                    mc_error=0.002, var_r=0.0256, wall_time_s=68.4, seed=1),
        result_line(study="mc-study", m=101, n=32, r=5, N=1600,
                    mc_error=0.0041, var_r=0.0269, wall_time_s=9.0, seed=1),
    ]
    return write_rows(tmp_path / "mc_error.csv", rows)


@pytest.fixture
def alpha_csv(tmp_path):
    rows = [
        result_line(study="alpha-table", m=201, n=102, r=20, s=2, N=500,
                    alpha=0.8155, var_r=0.084, var_s=0.093, corr_rs=0.859, seed=1),
        result_line(study="alpha-table", m=201, n=102, r=40, s=2, N=500,
                    alpha=0.8155, var_r=0.084, var_s=0.093, corr_rs=0.859, seed=1),
        result_line(study="alpha-table", m=201, n=102, r=20, s=5, N=500,
                    alpha=0.9723, var_r=0.084, var_s=0.088, corr_rs=0.993, seed=1),
        result_line(study="alpha-table", m=201, n=102, r=40, s=5, N=500,
                    alpha=0.9723, var_r=0.084, var_s=0.088, corr_rs=0.993, seed=1),
        # a combination measured for one fine rank only
        result_line(study="alpha-table", m=201, n=102, r=20, s=7, N=500,
                    alpha=0.9812, seed=1),
        # an error cell: alpha empty
        result_line(study="alpha-table", m=201, n=102, r=20, s=30, N=500, seed=1),
    ]
    return write_rows(tmp_path / "alpha_table.csv", rows)


@pytest.fixture
def flux_csv(tmp_path):
    lines = ["x,phi_ref,phi_cv"]
    for i in range(21):
        x = -1.5 + 0.15 * i
        lines.append(f"{x},{0.2 + 0.1 * (1 - abs(x))},{0.21 + 0.1 * (1 - abs(x))}")
    path = tmp_path / "flux.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print the renderer acceptance line, if that test ran."""
    mod = sys.modules.get("test_figures_acceptance")
    results = getattr(mod, "ACCEPTANCE_RESULTS", None) if mod else None
    if not results:
        return
    terminalreporter.write_sep("-", "acceptance criteria (renderer)")
    for num in sorted(results):
        name, ok, detail = results[num]
        status = "pass" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num} ({name}): {status}  [{detail}]")
