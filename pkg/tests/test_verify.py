import numpy as np
import pytest

from satdwell import InvalidArgumentError
from satdwell.model import Schedule, simulate
from satdwell.sdp import Certificate
from satdwell.verify import (
    check_ldi_validity_along,
    check_lyapunov_decrease,
    monte_carlo_doa,
    sample_psi_boundary,
    splitmix64,
    trial_seed,
)

X0 = [0.2763, -0.6918]


def test_splitmix64_reference_values():
    # reference outputs of the published splitmix64 generator seeded with 0
    state, outs = 0, []
    for _ in range(3):
        outs.append(splitmix64(state))
        state = (state + 0x9E3779B97F4A7C15) & (2**64 - 1)
    assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    assert trial_seed(7, 0) != trial_seed(7, 1)


@pytest.fixture(scope="module")
def fig2(plant, cert2):
    return simulate(plant, Schedule.periodic([1, 0], 2, 401), X0, 400, cert2)


def test_fig2_lyapunov(plant, cert2, fig2):
    chk = check_lyapunov_decrease(plant, cert2, fig2)
    assert chk.passed
    assert all(b < a for a, b in zip(chk.switch_values, chk.switch_values[1:]) if a > 0)


def test_fig2_ldi_validity(plant, cert2, fig2):
    chk = check_ldi_validity_along(plant, cert2, fig2)
    assert chk.passed and chk.steps == 400
    assert chk.max_residual <= 1e-9


def test_zero_start_is_trivial(plant, cert2):
    tr = simulate(plant, Schedule.periodic([0, 1], 2, 11), [0.0, 0.0], 10, cert2)
    chk = check_lyapunov_decrease(plant, cert2, tr)
    assert chk.passed and not any(chk.switch_values)


def test_broken_certificate_is_caught(plant, cert2, fig2):
    bad = Certificate(2, [cert2.P[0], np.eye(2)], cert2.H)
    assert not check_lyapunov_decrease(plant, bad, fig2).passed


def test_scaled_start_is_invalid_for_ldi(plant, cert2):
    tr = simulate(plant, Schedule.periodic([1, 0], 2, 6), [5.0, -5.0], 5, cert2)
    assert check_ldi_validity_along(plant, cert2, tr).invalid


def test_trivial_hull_with_gain_equal_k(plant):
    H = [[md.K, md.K] for md in plant.modes]
    cert = Certificate(2, [np.eye(2), np.eye(2)], H)
    tr = simulate(plant, Schedule.periodic([0, 1], 2, 5), [0.01, 0.01], 4)
    chk = check_ldi_validity_along(plant, cert, tr)
    assert chk.passed


def test_boundary_samples(cert2):
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = sample_psi_boundary(cert2.P, rng)
        q = [x @ P @ x for P in cert2.P]
        assert max(q) == pytest.approx(1.0)


def test_monte_carlo_active_and_deterministic(plant, cert2):
    a = monte_carlo_doa(plant, cert2, trials=150, seed=3, band="active")
    b = monte_carlo_doa(plant, cert2, trials=150, seed=3, band="active")
    assert a.passed, a.failures[:3]
    assert a.to_text() == b.to_text()
    assert a.psi_exits > 0
    assert a.worst_switch_ratio < 1.0
    assert a.failures_csv().splitlines()[0] == "trial_seed,x0,property"


def test_monte_carlo_reports_both_band_scopes(plant, cert2):
    rep = monte_carlo_doa(plant, cert2, trials=100, seed=2)
    assert set(rep.band_violations) == {"all", "active"}
    assert rep.band_violations["active"] == 0
    assert len(rep.failures) == rep.band_violations["all"]


def test_monte_carlo_rejects_bad_args(plant, cert2):
    with pytest.raises(InvalidArgumentError):
        monte_carlo_doa(plant, cert2, trials=0)
    with pytest.raises(InvalidArgumentError):
        monte_carlo_doa(plant, cert2, trials=5, band="some")


def test_monte_carlo_catches_broken_certificate(plant, cert2):
    bad = Certificate(2, [0.05 * P for P in cert2.P], cert2.H)
    rep = monte_carlo_doa(plant, bad, trials=50, seed=0, band="active")
    assert not rep.passed
