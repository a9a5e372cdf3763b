import numpy as np
import pytest

from icapm.model_spec import ModelSpec, ParameterVector
from icapm.simulate import simulate

SD = np.array([0.06, 0.035, 0.06])
CORR = np.array([[1.0, -0.2, 0.6], [-0.2, 1.0, -0.2], [0.6, -0.2, 1.0]])
H0_SMALL = CORR * np.outer(SD, SD)


@pytest.fixture(scope="session")
def small_spec():
    return ModelSpec(1, 1, 2, series_names=("A", "C", "M"))


@pytest.fixture(scope="session")
def small_truth():
    return ParameterVector(
        kappa_w=np.array([1.5, 0.3]), kappa_c=np.array([[2.0, -3.0]]),
        a=np.full(3, 0.35), b=np.full(3, 0.85),
    )


@pytest.fixture(scope="session")
def small_sim(small_spec, small_truth):
    return simulate(small_spec, small_truth, H0_SMALL, 400, seed=11)


@pytest.fixture(scope="session")
def small_fit(small_spec, small_sim):
    from icapm.optimizer import estimate

    return estimate(small_spec, small_sim.dataset)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
