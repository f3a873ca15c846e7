"""Geometry of the DOA estimate, dwell-time scans and the single-gain baseline."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError, UnsupportedDimensionError
from .lmi import build_baseline, build_corollary3, count_constraints
from .model import SwitchedSystem
from .sdp import Certificate, SdpSolution, band_margins, recover_certificate, solve

DEFAULT_RESOLUTION = 4096
DEFAULT_LAMBDA_GRID = tuple(round(0.5 + 0.05 * k, 2) for k in range(10)) + (0.99,)


def ellipsoid_contains(P, x, tol: float = 0.0) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(x @ np.asarray(P, dtype=float) @ x <= 1.0 + tol)


def band_containment_margin(P, H) -> np.ndarray:
    return band_margins(np.asarray(P, dtype=float), H)


def ellipse_boundary(P, resolution: int = DEFAULT_RESOLUTION):
    """``resolution`` points on ``x'Px = 1``, counter-clockwise, with their parameter angles."""
    P = np.asarray(P, dtype=float)
    if P.shape != (2, 2):
        raise UnsupportedDimensionError("ellipse boundaries are two-dimensional")
    w, V = np.linalg.eigh(0.5 * (P + P.T))
    if np.linalg.det(V) < 0:
        V[:, 1] = -V[:, 1]
    th = 2.0 * np.pi * np.arange(resolution) / resolution
    pts = (V / np.sqrt(w)) @ np.vstack([np.cos(th), np.sin(th)])
    return th, np.ascontiguousarray(pts.T)


def polygon_area(poly) -> float:
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def intersection_polygon_2d(P_list, resolution: int = DEFAULT_RESOLUTION) -> np.ndarray:
    """Vertices of the intersection of inscribed boundary polygons, by successive convex clipping."""
    if not len(P_list):
        raise InvalidArgumentError("need at least one ellipse")
    if any(np.asarray(P).shape != (2, 2) for P in P_list):
        raise UnsupportedDimensionError("intersection areas are computed for n = 2 only")
    poly = ellipse_boundary(P_list[0], resolution)[1]
    for P in P_list[1:]:
        poly = _kernels.clip_convex(poly, ellipse_boundary(P, resolution)[1])
    return poly


def intersection_area_2d(P_list, resolution: int = DEFAULT_RESOLUTION) -> float:
    return polygon_area(intersection_polygon_2d(P_list, resolution))


def ellipsoid_volume(P) -> float:
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) / math.sqrt(np.linalg.det(P))


def intersection_volume_mc(P_list, samples: int = 100_000, seed=0) -> float:
    """Monte-Carlo volume of the intersection, sampling inside the smallest ellipsoid."""
    P_list = [np.asarray(P, dtype=float) for P in P_list]
    vols = [ellipsoid_volume(P) for P in P_list]
    k = int(np.argmin(vols))
    n = P_list[k].shape[0]
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((samples, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    d *= rng.random(samples)[:, None] ** (1.0 / n)
    L = np.linalg.cholesky(P_list[k])
    # x' P x = |L' x|^2, so x = L^{-T} d is uniform in E(P_k)
    x = np.linalg.solve(L.T, d.T).T
    inside = np.ones(samples, dtype=bool)
    for P in P_list:
        inside &= np.einsum("sa,ab,sb->s", x, P, x) <= 1.0
    return vols[k] * float(inside.mean())


def ellipse_csv(P, resolution: int = 720) -> str:
    th, pts = ellipse_boundary(P, resolution)
    return _rows_csv(th, pts)


def polygon_csv(poly) -> str:
    poly = np.asarray(poly, dtype=float)
    th = np.mod(np.arctan2(poly[:, 1], poly[:, 0]), 2 * np.pi) if len(poly) else np.zeros(0)
    return _rows_csv(th, poly)


def _rows_csv(th, pts) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta", "x1", "x2"])
    for a, (x1, x2) in zip(th, pts):
        w.writerow([f"{a:.10g}", f"{x1:.12g}", f"{x2:.12g}"])
    return buf.getvalue()


@dataclass(eq=False)
class DoaEstimate:
    certificate: Certificate
    area: float
    ellipse_areas: list
    polygon: np.ndarray = None

    @property
    def P(self):
        return self.certificate.P

    def contains(self, x, tol: float = 0.0) -> bool:
        return all(ellipsoid_contains(P, x, tol) for P in self.P)


def doa_estimate(cert: Certificate, resolution: int = DEFAULT_RESOLUTION) -> DoaEstimate:
    """Region ``∩ E(P_i)``; polygon and area only when ``n = 2``, else a sampled volume."""
    if cert.n == 2:
        poly = intersection_polygon_2d(cert.P, resolution)
        return DoaEstimate(cert, polygon_area(poly), [ellipsoid_volume(P) for P in cert.P], poly)
    return DoaEstimate(cert, intersection_volume_mc(cert.P), [ellipsoid_volume(P) for P in cert.P])


@dataclass(eq=False)
class DwellRow:
    tau: int
    status: str
    counts: tuple
    objective: float = float("nan")
    area: float = float("nan")
    certificate: Certificate = None


@dataclass(eq=False)
class DwellSearch:
    rows: list
    min_tau: int = None

    @property
    def found(self) -> bool:
        return self.min_tau is not None


def solve_dwell_doa(sys: SwitchedSystem, tau: int, eps: float = 1e-6, solver: str = "CLARABEL"):
    """Assemble, solve and (when optimal) recover; returns ``(problem, solution, certificate or None)``."""
    p = build_corollary3(sys, tau, eps)
    sol = solve(p, solver)
    cert = recover_certificate(sol, tau) if sol.optimal else None
    return p, sol, cert


def min_dwell_search(sys: SwitchedSystem, tau_max: int, eps: float = 1e-6, solver: str = "CLARABEL", stop_at_first: bool = True) -> DwellSearch:
    """Scan ``tau = 1..tau_max``; with ``stop_at_first`` the scan ends at the first optimal ``tau``."""
    if tau_max < 1:
        raise InvalidArgumentError("tau_max must be at least 1")
    rows, first = [], None
    for tau in range(1, tau_max + 1):
        counts = count_constraints(sys.N, sys.m, sys.n, tau)
        _, sol, cert = solve_dwell_doa(sys, tau, eps, solver)
        row = DwellRow(tau, sol.status, counts, sol.objective)
        if cert is not None:
            row.certificate = cert
            if sys.n == 2:
                row.area = intersection_area_2d(cert.P)
            if first is None:
                first = tau
        rows.append(row)
        if first is not None and stop_at_first:
            break
    return DwellSearch(rows, first)


def strict_floor(a: float) -> int:
    """Largest integer strictly less than ``a`` (the floor convention the dwell bound is stated with)."""
    return math.ceil(a) - 1


@dataclass(eq=False)
class BaselineResult:
    lam: float
    P: list
    H: list
    mu: float
    dwell_bound: int
    r: float

    @property
    def area(self) -> float:
        return math.pi * self.r**2


@dataclass(eq=False)
class BaselineAnalysis:
    rows: list
    statuses: dict = field(default_factory=dict)

    @property
    def best(self):
        """Smallest dwell bound; ties go to the larger ball."""
        if not self.rows:
            return None
        return min(self.rows, key=lambda r: (r.dwell_bound, -r.area))

    def best_area_within(self, tau: int):
        """Largest ball among the grid points whose dwell bound is at most ``tau``."""
        ok = [r for r in self.rows if r.dwell_bound <= tau]
        return max(ok, key=lambda r: r.area) if ok else None


def baseline_post(lam: float, P: list, H: list) -> BaselineResult:
    """``mu``, dwell bound and ``r`` from a solved single-gain problem."""
    eig = [np.linalg.eigvalsh(p) for p in P]
    mu = max(ei[-1] / ej[0] for ei in eig for ej in eig)
    a = -math.log(mu) / math.log(lam)
    r = min(1.0 / math.sqrt(e[-1]) for e in eig)
    return BaselineResult(lam, P, H, float(mu), max(1, strict_floor(a)), float(r))


def baseline_analyze(sys: SwitchedSystem, lam_grid=DEFAULT_LAMBDA_GRID, eps: float = 1e-6, solver: str = "CLARABEL") -> BaselineAnalysis:
    lam_grid = list(lam_grid)
    if not lam_grid:
        raise InvalidArgumentError("lambda grid is empty")
    if any(not 0.0 < lam < 1.0 for lam in lam_grid):
        raise InvalidArgumentError("every lambda must lie in (0, 1)")
    rows, statuses = [], {}
    for lam in lam_grid:
        sol: SdpSolution = solve(build_baseline(sys, lam, eps), solver)
        statuses[lam] = sol.status
        if not sol.optimal:
            continue
        cert = recover_certificate(sol, 1)
        rows.append(baseline_post(lam, cert.P, [h[0] for h in cert.H]))
    return BaselineAnalysis(rows, statuses)


def ball_inside(P_list, r: float, samples: int = 10_000, tol: float = 1e-9) -> int:
    """Number of sampled points of the circle ``|x| = r`` falling outside some ``E(P_i)`` (2-D)."""
    th = 2.0 * np.pi * np.arange(samples) / samples
    x = r * np.column_stack([np.cos(th), np.sin(th)])
    bad = np.zeros(samples, dtype=bool)
    for P in P_list:
        bad |= np.einsum("sa,ab,sb->s", x, np.asarray(P), x) > 1.0 + tol
    return int(bad.sum())
