import numpy as np
import pytest

from satdwell.doa import solve_dwell_doa
from satdwell.model import two_mode_example
from satdwell.sdp import Certificate

# certificate printed for the two-mode example at tau = 2 (4 decimals)
PRINTED_P = [
    np.array([[1.0839, 1.5333], [1.5333, 3.1411]]),
    np.array([[1.3408, -0.7720], [-0.7720, 1.2585]]),
]
PRINTED_H = [
    [np.array([[0.8898, 0.7467]]), np.array([[0.5660, 1.5560]])],
    [np.array([[1.1270, -0.8560]]), np.array([[-0.3050, -0.4333]])],
]


@pytest.fixture(scope="session")
def plant():
    return two_mode_example()


@pytest.fixture(scope="session")
def cert2(plant):
    _, sol, cert = solve_dwell_doa(plant, 2)
    assert sol.optimal
    return cert


@pytest.fixture(scope="session")
def printed_cert():
    return Certificate(2, PRINTED_P, PRINTED_H)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=str):
        terminalreporter.write_line(RESULTS[key])
