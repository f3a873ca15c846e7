import numpy as np
import pytest

from satdwell import InvalidArgumentError
from satdwell.ldi import enumerate_tuples, theta
from satdwell.lmi import (
    Affine,
    VariableLayout,
    build_baseline,
    build_corollary3,
    build_unsaturated,
    count_constraints,
    q_name,
    y_name,
)
from satdwell.sdp import certificate_vector, spd_inverse

REFERENCE_COUNTS = {2: 16, 3: 26, 4: 44, 5: 78, 8: 532}


@pytest.mark.parametrize("tau,total", sorted(REFERENCE_COUNTS.items()))
def test_counts_formula_and_assembly(plant, tau, total):
    c = count_constraints(2, 1, 2, tau)
    assert c.total == total
    assert (c.within, c.switching, c.band) == (4, 2 * 2**tau, 2 * tau)
    p = build_corollary3(plant, tau)
    assert p.constraint_count() == total
    fam = p.family_counts()
    assert fam == {"within": c.within, "switching": c.switching, "band": c.band, "pd": 2}


def test_counts_reject_bad_args():
    with pytest.raises(InvalidArgumentError):
        count_constraints(2, 1, 2, 0)


def test_layout_pack_unpack_roundtrip():
    lay = VariableLayout()
    lay.add("Q", (3, 3), symmetric=True)
    lay.add("Y", (2, 3))
    assert lay.nz == 6 + 6
    rng = np.random.default_rng(0)
    S = rng.normal(size=(3, 3))
    vals = {"Q": S + S.T, "Y": rng.normal(size=(2, 3))}
    back = lay.unpack(lay.pack(vals))
    for k in vals:
        np.testing.assert_array_equal(back[k], vals[k])
    with pytest.raises(InvalidArgumentError):
        lay.add("Q", (1, 1))


def test_affine_algebra():
    lay = VariableLayout()
    lay.add("X", (2, 2), symmetric=True)
    X = Affine.variable(lay, "X")
    L = np.array([[1.0, 2.0], [0.0, 3.0]])
    expr = L @ X @ L.T + 2.0 * X
    z = np.array([1.0, -0.5, 4.0])
    Xv = lay.unpack(z)["X"]
    np.testing.assert_allclose(expr(z), L @ Xv @ L.T + 2 * Xv)


def test_blocks_are_symmetric(plant):
    p = build_corollary3(plant, 3)
    for b in p.blocks:
        np.testing.assert_array_equal(b.const, b.const.T)
        np.testing.assert_array_equal(b.coef, np.swapaxes(b.coef, 1, 2))


def test_objective_is_trace(plant):
    p = build_corollary3(plant, 2)
    z = np.arange(p.nz, dtype=float)
    vals = p.layout.unpack(z)
    assert p.objective @ z == pytest.approx(np.trace(vals[q_name(0)]) + np.trace(vals[q_name(1)]))


def test_switching_block_equals_direct_schur(plant, cert2):
    """Assembled block evaluated at a certificate equals the hand-built matrix."""
    p = build_corollary3(plant, 2)
    z = certificate_vector(p, cert2)
    Q = [spd_inverse(P) for P in cert2.P]
    blocks = [b for b in p.blocks if b.family == "switching"]
    k = 0
    for i in range(2):
        for j in range(2):
            if i == j:
                continue
            for tup in enumerate_tuples(1, 2):
                th = theta(plant, i, tup)
                off = th.theta0 @ Q[i] + sum(c @ h @ Q[i] for c, h in zip(th.thetas, cert2.H[i]))
                want = np.block([[Q[i], off.T], [off, Q[j]]])
                np.testing.assert_allclose(blocks[k].evaluate(z), want, atol=1e-12)
                k += 1


def test_certificate_satisfies_blocks(plant, cert2):
    p = build_corollary3(plant, 2)
    z = certificate_vector(p, cert2)
    sl = p.slacks(z)
    assert sl.min() > -1e-7


def test_variable_names(plant):
    p = build_corollary3(plant, 2)
    assert [v.name for v in p.layout] == ["Q1", "Y1_1", "Y1_2", "Q2", "Y2_1", "Y2_2"]
    assert y_name(0, 2) == "Y1_2"


def test_unsaturated_and_baseline_shapes(plant):
    u = build_unsaturated(plant, 2)
    assert u.is_feasibility
    assert u.family_counts() == {"within": 2, "switching": 2, "pd": 2}
    b = build_baseline(plant, 0.7)
    assert b.family_counts() == {"within": 4, "band": 2, "pd": 2}
    for lam in (0.0, 1.0, -0.2):
        with pytest.raises(InvalidArgumentError):
            build_baseline(plant, lam)


def test_bad_tau_eps(plant):
    with pytest.raises(InvalidArgumentError):
        build_corollary3(plant, 0)
    with pytest.raises(InvalidArgumentError):
        build_corollary3(plant, 2, eps=0.0)
