import math

import numpy as np
import pytest
from shapely.geometry import Polygon

from satdwell import InvalidArgumentError, UnsupportedDimensionError
from satdwell.doa import (
    BaselineAnalysis,
    baseline_analyze,
    baseline_post,
    ball_inside,
    band_containment_margin,
    doa_estimate,
    ellipse_boundary,
    ellipse_csv,
    ellipsoid_contains,
    ellipsoid_volume,
    intersection_area_2d,
    intersection_polygon_2d,
    intersection_volume_mc,
    min_dwell_search,
    strict_floor,
    polygon_area,
)
from satdwell.model import Mode, SwitchedSystem

P_A = np.array([[1.0, 0.3], [0.3, 0.5]])
P_B = np.array([[0.4, -0.2], [-0.2, 1.5]])


def radial_area(P_list, k=200_000):
    """Star-shaped region around the origin: 0.5 * integral of r(theta)^2."""
    th = 2 * np.pi * (np.arange(k) + 0.5) / k
    u = np.vstack([np.cos(th), np.sin(th)])
    q = np.max([np.einsum("ak,ab,bk->k", u, P, u) for P in P_list], axis=0)
    return 0.5 * float(np.sum(1.0 / q)) * (2 * np.pi / k)


def test_single_ellipse_closed_form():
    want = math.pi / math.sqrt(np.linalg.det(P_A))
    assert ellipsoid_volume(P_A) == pytest.approx(want)
    assert intersection_area_2d([P_A]) == pytest.approx(want, rel=1e-5)


def test_intersection_against_radial_integral_and_shapely():
    a = intersection_area_2d([P_A, P_B])
    assert a == pytest.approx(radial_area([P_A, P_B]), rel=1e-5)
    polys = [Polygon(ellipse_boundary(P, 20000)[1]) for P in (P_A, P_B)]
    assert a == pytest.approx(polys[0].intersection(polys[1]).area, rel=1e-5)


def test_resolution_convergence():
    a = intersection_area_2d([P_A, P_B], 4096)
    b = intersection_area_2d([P_A, P_B], 8192)
    assert abs(a - b) / b < 1e-3


def test_boundary_is_ccw_and_on_ellipse():
    th, pts = ellipse_boundary(P_A, 64)
    np.testing.assert_allclose(np.einsum("ka,ab,kb->k", pts, P_A, pts), 1.0)
    assert polygon_area(pts) > 0
    assert len(th) == 64


def test_nested_ellipses_give_smaller():
    assert intersection_area_2d([P_A, 4 * P_A]) == pytest.approx(math.pi / math.sqrt(np.linalg.det(4 * P_A)), rel=1e-5)


def test_dimension_errors():
    with pytest.raises(UnsupportedDimensionError):
        intersection_area_2d([np.eye(3)])
    with pytest.raises(InvalidArgumentError):
        intersection_polygon_2d([])


def test_volume_mc_3d():
    P = np.diag([1.0, 2.0, 4.0])
    v = intersection_volume_mc([P, P], samples=50_000, seed=1)
    assert v == pytest.approx(ellipsoid_volume(P))
    v2 = intersection_volume_mc([P, np.diag([4.0, 1.0, 1.0])], samples=200_000, seed=1)
    assert 0 < v2 < ellipsoid_volume(P)


def test_contains_and_band_margin():
    assert ellipsoid_contains(P_A, [0.0, 0.0])
    assert not ellipsoid_contains(P_A, [3.0, 0.0])
    # E(I) sits inside |x1| <= 1 exactly
    np.testing.assert_allclose(band_containment_margin(np.eye(2), np.array([[1.0, 0.0]])), [0.0], atol=1e-15)


def test_doa_estimate_and_csv(cert2):
    est = doa_estimate(cert2)
    assert est.area == pytest.approx(intersection_area_2d(cert2.P))
    assert est.contains([0.0, 0.0]) and not est.contains([2.0, 2.0])
    lines = ellipse_csv(cert2.P[0], 10).splitlines()
    assert lines[0] == "theta,x1,x2" and len(lines) == 11


def test_min_dwell_search(plant):
    res = min_dwell_search(plant, 3)
    assert res.min_tau == 2
    assert [r.status for r in res.rows] == ["infeasible", "optimal"]
    assert res.rows[1].counts.total == 16
    assert res.rows[1].area == pytest.approx(1.372, rel=0.1)
    assert not min_dwell_search(plant, 1).found


def test_min_dwell_single_stable_mode():
    sysm = SwitchedSystem((Mode(np.array([[1.1, 0.3], [0.0, 0.8]]), np.array([[1.0], [0.2]]), np.array([[-0.6, -0.2]])),))
    assert min_dwell_search(sysm, 3).min_tau == 1


def test_strict_floor():
    assert strict_floor(5.93) == 5
    assert strict_floor(5.0) == 4
    assert strict_floor(0.3) == 0


def test_baseline_post_definitions():
    P = [np.diag([1.0, 4.0]), np.diag([2.0, 2.0])]
    r = baseline_post(0.5, P, [None, None])
    assert r.mu == pytest.approx(4.0)  # lmax(P1) / lmin(P1)
    assert r.dwell_bound == 1
    assert r.r == pytest.approx(0.5)
    single = baseline_post(0.5, [np.diag([1.0, 3.0])], [None])
    assert single.mu == pytest.approx(3.0)


def test_baseline_analyze(plant):
    res = baseline_analyze(plant, [0.5, 0.65, 0.8])
    assert res.statuses[0.5] == "infeasible"
    assert res.best.dwell_bound == 5
    with pytest.raises(InvalidArgumentError):
        baseline_analyze(plant, [])
    assert BaselineAnalysis([]).best is None


def test_ball_inside():
    assert ball_inside([np.eye(2)], 0.99) == 0
    assert ball_inside([np.eye(2)], 1.01) == 10_000
