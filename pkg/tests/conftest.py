import numpy as np
import pytest

from signalcraft import dist
from signalcraft.equilibrium import EquilibriumMap, linear_cost_model


@pytest.fixture
def unit():
    return dist.Uniform(0, 1)


@pytest.fixture
def identity():
    return EquilibriumMap.identity()


@pytest.fixture
def game_map():
    """Values uniform on [0, 6], linear cost, states up to 10."""
    return EquilibriumMap(dist.Uniform(0, 6), linear_cost_model(1.0), theta_max=10)


@pytest.fixture
def capacity_prior():
    return dist.Discrete([0.4, 0.6, 1.0], [0.3, 0.3, 0.4])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_CRITERIA = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        n = int(name.split("_")[2])
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA[n] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        outcome, detail = _CRITERIA[n]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {detail}")
