import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from satdwell import DomainError, InvalidArgumentError
from satdwell.ldi import (
    SubsetS,
    enumerate_subsets,
    enumerate_tuples,
    hull_membership,
    selector,
    theta,
    theta_families,
    vertex_eval,
    vertex_matrix,
)
from satdwell.model import SwitchedSystem, iterate


def test_subsets():
    subs = enumerate_subsets(2)
    assert [s.mask for s in subs] == [0, 1, 2, 3]
    assert str(subs[2]) == "{2}" and str(subs[0]) == "{}"
    assert subs[1].complement.mask == 2
    np.testing.assert_array_equal(selector(subs[3]), np.eye(2))
    with pytest.raises(InvalidArgumentError):
        SubsetS(4, 2)


def test_tuple_order():
    tups = list(enumerate_tuples(1, 2))
    assert [(a.mask, b.mask) for a, b in tups] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert len(list(enumerate_tuples(2, 3))) == 64


def test_vertex_matrix_extremes(plant):
    md = plant.modes[0]
    full, empty = enumerate_subsets(1)[1], enumerate_subsets(1)[0]
    np.testing.assert_allclose(vertex_matrix(plant, 0, empty), md.A + md.B @ md.K)
    np.testing.assert_allclose(vertex_matrix(plant, 0, full), md.A)


def _recursive_vertex(sys, i, tup, H_list, x):
    """x_k = A x_{k-1} + B (D_{S^c} K x_{k-1} + D_S H_k x)."""
    md = sys.modes[i]
    xk = x
    for S, H in zip(tup, H_list):
        xk = md.A @ xk + md.B @ (selector(S.complement) @ md.K @ xk + selector(S) @ H @ x)
    return xk


def _symbolic_theta(A, B, K, masks, m):
    """Exact expansion with sympy; H entries are symbols."""
    n = A.shape[0]
    xs = sp.Matrix(sp.symbols(f"x0:{n}"))
    Hs = [sp.Matrix(m, n, sp.symbols(f"h{k}_0:{m * n}")) for k in range(len(masks))]
    xk = xs
    for mask, H in zip(masks, Hs):
        D = sp.diag(*[1 if mask >> j & 1 else 0 for j in range(m)])
        Dc = sp.eye(m) - D
        xk = A * xk + B * (Dc * K * xk + D * H * xs)
    xk = sp.expand(xk)
    th0 = xk.jacobian(xs).subs({s: 0 for H in Hs for s in H})
    ths = []
    for H in Hs:
        # coefficient of H x: d/d(H x) obtained by differentiating wrt H entries
        c = sp.zeros(n, m)
        for j in range(m):
            c[:, j] = sp.Matrix([sp.diff(xk[r], H[j, 0]).subs(xs[0], 1).subs({s: 0 for s in xs[1:]}) for r in range(n)])
        ths.append(c)
    return th0, ths


def test_theta_exact_against_symbolic_expansion():
    # integer data: float products are exact, so equality is exact
    A = [np.array([[1, 2], [0, -1]]), np.array([[0, 1], [-2, 1]])]
    B = [np.array([[1, 0], [2, 1]]), np.array([[1, 1], [0, 1]])]
    K = [np.array([[1, -1], [0, 2]]), np.array([[2, 0], [1, 1]])]
    sysm = SwitchedSystem.from_matrices(A, B, K)
    for i in range(2):
        for t in (1, 2):
            for tup in enumerate_tuples(2, t):
                th = theta(sysm, i, tup)
                e0, es = _symbolic_theta(sp.Matrix(A[i]), sp.Matrix(B[i]), sp.Matrix(K[i]), [S.mask for S in tup], 2)
                np.testing.assert_array_equal(th.theta0, np.array(e0, dtype=float))
                for c, e in zip(th.thetas, es):
                    np.testing.assert_array_equal(c, np.array(e, dtype=float))


def test_theta_matches_recursion_t_up_to_3(plant):
    rng = np.random.default_rng(0)
    for i in range(2):
        for t in (1, 2, 3):
            H = [rng.normal(size=(1, 2)) for _ in range(t)]
            for th in theta_families(plant, i, t):
                for _ in range(3):
                    x = rng.normal(size=2)
                    np.testing.assert_allclose(
                        vertex_eval(th, H, x), _recursive_vertex(plant, i, th.tuple, H, x), rtol=1e-13, atol=1e-13
                    )


def test_hull_trivial_when_unsaturated(plant):
    # H = K and a small x: no channel saturates, the S = {} vertex carries all weight
    H = [plant.modes[0].K] * 2
    w = hull_membership(plant, 0, H, [0.05, 0.02], 2)
    assert w.residual < 1e-15
    assert w.weights[0] == pytest.approx(1.0)


def test_hull_rejects_points_outside_band(cert2, plant):
    with pytest.raises(DomainError):
        hull_membership(plant, 0, cert2.H[0], [5.0, 5.0], 2)


def _lp_in_hull(vertices, target):
    k = len(vertices)
    Aeq = np.vstack([vertices.T, np.ones((1, k))])
    beq = np.concatenate([target, [1.0]])
    res = linprog(np.zeros(k), A_eq=Aeq, b_eq=beq, bounds=[(0, None)] * k, method="highs")
    return res.status == 0


def test_hull_agrees_with_lp_oracle(cert2, plant):
    rng = np.random.default_rng(11)
    done = 0
    while done < 60:
        x = rng.uniform(-1.5, 1.5, size=2)
        i = int(rng.integers(2))
        if max(np.abs(h @ x).max() for h in cert2.H[i]) > 1.0:
            continue
        w = hull_membership(plant, i, cert2.H[i], x, 2)
        assert _lp_in_hull(w.vertices, w.target)
        done += 1


@settings(max_examples=200, deadline=None)
@given(
    st.floats(-2.0, 2.0), st.floats(-2.0, 2.0), st.integers(0, 1), st.integers(1, 2),
)
def test_hull_property(cert2, plant, a, b, i, t):
    x = np.array([a, b])
    if max(np.abs(h @ x).max() for h in cert2.H[i][:t]) > 1.0:
        return
    w = hull_membership(plant, i, cert2.H[i], x, t)
    assert w.weights.min() >= 0.0
    assert abs(w.weights.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(w.target, iterate(plant, i, x, t), atol=0)
    assert w.residual <= 1e-9
