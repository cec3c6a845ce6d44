import numpy as np
import pytest

from morkit.basis import build_snapshots
from morkit.fin import build_thermal_fin
from morkit.rng import substream

# acceptance results collected by tests/test_acceptance.py
ACCEPTANCE_RESULTS = []


def record_acceptance(number, name, passed, detail=""):
    line = f"[acceptance] {number:>2} {name}: {'PASS' if passed else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE_RESULTS.append((number, line))
    print(line, flush=True)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fin_p3():
    """Small p=3 fin shared by basis/estimator tests."""
    return build_thermal_fin(subfins=4, mesh_density=6, p=3)


@pytest.fixture(scope="session")
def fin_p3_training(fin_p3):
    params = fin_p3.domain.sample_uniform(substream(7, "training"), 80)
    return build_snapshots(fin_p3, params)


@pytest.fixture(scope="session")
def fin_p1():
    return build_thermal_fin(subfins=4, mesh_density=6, p=1)


@pytest.fixture(scope="session")
def fin_p2():
    return build_thermal_fin(subfins=4, mesh_density=6, p=2)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
