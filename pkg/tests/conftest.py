import numpy as np
import pytest

from mongeampere.grid import Grid2D
from mongeampere.nash_moser import Schedule, run
from mongeampere.problem import K_exact_model, K_quadratic, ScaledOperator, curvature_problem


@pytest.fixture(scope="session")
def base():
    return Grid2D.box(2.0, 1.0, 65, 65)


@pytest.fixture(scope="session")
def saddle_spec():
    return curvature_problem(K_quadratic(1.0, 0.0, -1.0), epsilon=0.05)


@pytest.fixture(scope="session")
def exact_spec():
    return curvature_problem(K_exact_model, epsilon=0.05)


@pytest.fixture(scope="session")
def saddle_run(saddle_spec, base):
    """The K = u^2 - v^2 run at default settings, shared by several test files."""
    return run(ScaledOperator(saddle_spec, base), Schedule(), base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_LINES = []


@pytest.fixture
def record():
    """Log one acceptance line; the lines are repeated in the terminal summary."""
    def emit(tag, ok, detail):
        line = f"{tag}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _LINES.append(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
