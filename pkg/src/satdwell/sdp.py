"""Solving, exporting and certifying assembled LMI problems.

The SDPA sparse file written by :func:`export_sdpa` encodes the problem as

    minimize   c' z
    subject to sum_k z_k F_k - F_0  >=  0      (block diagonal)

with ``F_k = coef[k]`` and ``F_0 = margin * I - const`` per block, and
``c = -objective`` (the native problems maximize).  One diagonal block per
:class:`~satdwell.lmi.BlockConstraint`, in problem order.  Entries are written
upper-triangle only, sorted by (matrix, block, row, col), values in
round-trip ``repr`` form.  A JSON sidecar maps each ``z`` entry back to its
matrix variable and records per-block family, tag and margin.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write_text
from .errors import InvalidArgumentError, NumericalFailure
from .ldi import enumerate_subsets, enumerate_tuples, theta
from .lmi import BlockConstraint, LmiProblem, VariableLayout, q_name, y_name
from .model import SwitchedSystem

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"

# validation tolerances
STRICT_TOL = 1e-6
PSD_TOL = 1e-8
SINGULAR_EIG = 1e-10


@dataclass(eq=False)
class SdpSolution:
    status: str
    values: dict = field(default_factory=dict)
    objective: float = float("nan")
    z: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

_STATUS = {
    "optimal": OPTIMAL,
    "optimal_inaccurate": OPTIMAL,
    "infeasible": INFEASIBLE,
    "infeasible_inaccurate": INFEASIBLE,
}


def _solve_cvxpy(p: LmiProblem, solver: str, **opts) -> SdpSolution:
    import cvxpy as cp

    z = cp.Variable(p.nz)
    cons = []
    for b in p.blocks:
        s = b.size
        G = b.coef.reshape(p.nz, s * s).T
        F = cp.reshape(G @ z + b.const.reshape(-1), (s, s), order="C")
        cons.append(0.5 * (F + F.T) - b.margin * np.eye(s) >> 0)
    goal = cp.Maximize(p.objective @ z) if not p.is_feasibility else cp.Minimize(0)
    prob = cp.Problem(goal, cons)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            prob.solve(solver=solver, **opts)
    except cp.error.SolverError as exc:
        log.warning("solver %s failed: %s", solver, exc)
        return SdpSolution(NUMERICAL_FAILURE, meta={"solver": solver, "message": str(exc)})
    stats = prob.solver_stats
    meta = {
        "solver": solver,
        "raw_status": prob.status,
        "iterations": getattr(stats, "num_iters", None),
        "solve_time": getattr(stats, "solve_time", None),
    }
    if caught:
        meta["warnings"] = [str(w.message) for w in caught]
        log.info("solver %s: %s", solver, "; ".join(meta["warnings"]))
    status = _STATUS.get(prob.status, NUMERICAL_FAILURE)
    if status != OPTIMAL or z.value is None:
        return SdpSolution(status if status != OPTIMAL else NUMERICAL_FAILURE, meta=meta)
    zv = np.asarray(z.value, dtype=float)
    meta["min_slack"] = float(np.min(p.slacks(zv)))
    values = p.layout.unpack(zv)
    for name, v in values.items():
        if p.layout[name].symmetric and np.linalg.eigvalsh(v)[0] <= 0.0:
            return SdpSolution(NUMERICAL_FAILURE, values, float(p.objective @ zv), zv, meta)
    return SdpSolution(OPTIMAL, values, float(p.objective @ zv), zv, meta)


SOLVERS = ("CLARABEL", "SCS", "CVXOPT")
# default tolerances tight enough for the 1e-8 band-containment check
SOLVER_DEFAULTS = {
    "CLARABEL": {"tol_gap_abs": 1e-10, "tol_gap_rel": 1e-10, "tol_feas": 1e-10},
    "SCS": {"eps": 1e-9, "max_iters": 200_000},
    "CVXOPT": {},  # tighter settings make its interior-point loop stall
}


def solve(p: LmiProblem, solver: str = "CLARABEL", **opts) -> SdpSolution:
    """Solve through cvxpy with the named conic backend.

    Infeasibility and solver breakdowns come back as statuses, not exceptions.
    """
    solver = solver.upper()
    if solver not in SOLVERS:
        raise InvalidArgumentError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    return _solve_cvxpy(p, solver, **{**SOLVER_DEFAULTS[solver], **opts})


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Certificate:
    """``P_i`` (one per mode) and ``H[i][t-1] = H_{i,t}`` for ``t = 1..tau``."""

    tau: int
    P: list
    H: list

    @property
    def N(self) -> int:
        return len(self.P)

    @property
    def n(self) -> int:
        return self.P[0].shape[0]

    def band_gains(self) -> np.ndarray:
        """All ``H_{i,t}`` stacked as ``(N * tau, m, n)``."""
        return np.ascontiguousarray(np.array([h for row in self.H for h in row], dtype=float))

    def to_dict(self) -> dict:
        return {
            "format": "satdwell-certificate",
            "version": 1,
            "tau": int(self.tau),
            "N": self.N,
            "P": [np.asarray(P).tolist() for P in self.P],
            "H": [[np.asarray(h).tolist() for h in row] for row in self.H],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        if d.get("format") != "satdwell-certificate":
            raise InvalidArgumentError("not a certificate document")
        P = [np.array(p, dtype=float) for p in d["P"]]
        H = [[np.atleast_2d(np.array(h, dtype=float)) for h in row] for row in d["H"]]
        return cls(int(d["tau"]), P, H)


def save_certificate(cert: Certificate, path) -> Path:
    return atomic_write_text(path, json.dumps(cert.to_dict(), indent=2) + "\n")


def load_certificate(path) -> Certificate:
    return Certificate.from_dict(json.loads(Path(path).read_text()))


def spd_inverse(Q: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via eigendecomposition."""
    Q = 0.5 * (Q + Q.T)
    w, V = np.linalg.eigh(Q)
    if w[0] < SINGULAR_EIG:
        raise NumericalFailure(f"matrix is numerically singular (min eigenvalue {w[0]:.3g})")
    P = (V / w) @ V.T
    return 0.5 * (P + P.T)


def recover_certificate(sol: SdpSolution, tau: int) -> Certificate:
    """``P_i = Q_i^{-1}`` and ``H_{i,t} = Y_{i,t} P_i`` from an optimal solution."""
    if not sol.optimal:
        raise NumericalFailure(f"cannot recover a certificate from a {sol.status} solution")
    P, H = [], []
    i = 0
    while q_name(i) in sol.values:
        Pi = spd_inverse(sol.values[q_name(i)])
        P.append(Pi)
        H.append([sol.values[y_name(i, t)] @ Pi for t in range(1, tau + 1)])
        i += 1
    if not P:
        raise InvalidArgumentError("solution has no Q variables")
    return Certificate(int(tau), P, H)


def certificate_vector(p: LmiProblem, cert: Certificate) -> np.ndarray:
    """Decision vector ``z`` (``Q = P^{-1}``, ``Y = H Q``) of a certificate in ``p``'s layout."""
    values = {}
    for i, Pi in enumerate(cert.P):
        Q = spd_inverse(Pi)
        values[q_name(i)] = Q
        for t, h in enumerate(cert.H[i], start=1):
            if y_name(i, t) in {v.name for v in p.layout}:
                values[y_name(i, t)] = h @ Q
    return p.layout.pack(values)


@dataclass
class ValidationReport:
    """Per-condition worst margins; a condition passes when its margin clears the tolerance."""

    within_margin: float
    switching_margin: float
    band_margin: float
    pd_margin: float
    worst: dict = field(default_factory=dict)
    strict_tol: float = STRICT_TOL
    psd_tol: float = PSD_TOL

    @property
    def within_ok(self) -> bool:
        return self.within_margin >= -self.strict_tol

    @property
    def switching_ok(self) -> bool:
        return self.switching_margin >= -self.strict_tol

    @property
    def band_ok(self) -> bool:
        return self.band_margin >= -self.psd_tol

    @property
    def passed(self) -> bool:
        return self.pd_margin > 0 and self.within_ok and self.switching_ok and self.band_ok

    def summary(self) -> str:
        lines = [
            f"positive definite   min eig   {self.pd_margin:+.6e}  {'ok' if self.pd_margin > 0 else 'FAIL'}",
            f"within-mode         min eig   {self.within_margin:+.6e}  {'ok' if self.within_ok else 'FAIL'}",
            f"switching           min eig   {self.switching_margin:+.6e}  {'ok' if self.switching_ok else 'FAIL'}",
            f"band containment    min slack {self.band_margin:+.6e}  {'ok' if self.band_ok else 'FAIL'}",
            f"overall: {'PASS' if self.passed else 'FAIL'}",
        ]
        for k, v in self.worst.items():
            lines.append(f"  worst {k}: {v}")
        return "\n".join(lines) + "\n"


def band_margins(P: np.ndarray, H: np.ndarray) -> np.ndarray:
    """``1 - h P^{-1} h'`` for every row ``h`` of ``H``; non-negative iff ``E(P)`` lies in ``L(H)``."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    X = np.linalg.solve(P, H.T)
    return 1.0 - np.einsum("ja,aj->j", H, X)


def validate_certificate(sys: SwitchedSystem, cert: Certificate, strict_tol: float = STRICT_TOL, psd_tol: float = PSD_TOL) -> ValidationReport:
    """Check the quadratic-form conditions directly, independent of the LMI blocks.

    within:    P_i - E' P_i E > 0 for every one-step vertex ``E = theta0 + theta1 H_{i,1}``
    switching: P_i - E' P_j E > 0 for every tau-step vertex and ordered pair i != j
    band:      h P_i^{-1} h' <= 1 for every row h of every H_{i,t}
    """
    if cert.N != sys.N:
        raise InvalidArgumentError("certificate and system disagree on the number of modes")
    worst = {}
    pd = min(float(np.linalg.eigvalsh(0.5 * (P + P.T))[0]) for P in cert.P)

    def quad_margin(Pa, Pb, E):
        G = Pa - E.T @ Pb @ E
        return float(np.linalg.eigvalsh(0.5 * (G + G.T))[0])

    within = np.inf
    for i in range(sys.N):
        for S in enumerate_subsets(sys.m):
            th = theta(sys, i, (S,))
            E = th.theta0 + th.thetas[0] @ cert.H[i][0]
            mg = quad_margin(cert.P[i], cert.P[i], E)
            if mg < within:
                within, worst["within"] = mg, f"mode {i + 1}, S={S}"
    switching = np.inf
    for i in range(sys.N):
        fams = [theta(sys, i, tup) for tup in enumerate_tuples(sys.m, cert.tau)]
        Es = [th.theta0 + sum(c @ h for c, h in zip(th.thetas, cert.H[i])) for th in fams]
        for j in range(sys.N):
            if i == j:
                continue
            for th, E in zip(fams, Es):
                mg = quad_margin(cert.P[i], cert.P[j], E)
                if mg < switching:
                    label = ",".join(str(S) for S in th.tuple)
                    switching, worst["switching"] = mg, f"{i + 1}->{j + 1}, tuple ({label})"
    band = np.inf
    for i in range(sys.N):
        for t, h in enumerate(cert.H[i], start=1):
            mg = band_margins(cert.P[i], h)
            if mg.min() < band:
                band, worst["band"] = float(mg.min()), f"H_{i + 1},{t} row {int(mg.argmin()) + 1}"
    return ValidationReport(float(within), float(switching), float(band), pd, worst, strict_tol, psd_tol)


# ---------------------------------------------------------------------------
# SDPA sparse export
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def sdpa_text(p: LmiProblem) -> str:
    nz = p.nz
    lines = [
        f"* satdwell {__version__} LMI export: {p.meta.get('builder', 'custom')} "
        + " ".join(f"{k}={p.meta[k]}" for k in sorted(p.meta) if k != "builder"),
        "* minimize c'z s.t. sum_k z_k F_k - F_0 >= 0; c = -objective",
        str(nz),
        str(len(p.blocks)),
        " ".join(str(b.size) for b in p.blocks),
        " ".join(_fmt(-c) if c else "0" for c in p.objective),
    ]
    entries = []
    for bi, b in enumerate(p.blocks, start=1):
        F0 = b.margin * np.eye(b.size) - b.const
        mats = [F0] + list(b.coef)
        for k, F in enumerate(mats):
            r, c = np.nonzero(np.triu(F))
            for a, bb in zip(r, c):
                entries.append((k, bi, a + 1, bb + 1, F[a, bb]))
    entries.sort(key=lambda e: e[:4])
    lines.extend(f"{k} {bi} {a} {c} {_fmt(v)}" for k, bi, a, c, v in entries)
    return "\n".join(lines) + "\n"


def sdpa_index(p: LmiProblem) -> dict:
    return {
        "format": "satdwell-sdpa-index",
        "version": 1,
        "sense": "maximize objective = -c'z",
        "eps": p.eps,
        "meta": p.meta,
        "variables": [
            {"name": v.name, "shape": list(v.shape), "symmetric": v.symmetric, "offset": v.offset} for v in p.layout
        ],
        "entries": [[k + 1, name, a, b] for k, (name, a, b) in enumerate(p.layout.index())],
        "blocks": [
            {"block": bi, "family": b.family, "tag": b.tag, "kind": b.kind, "margin": b.margin, "size": b.size}
            for bi, b in enumerate(p.blocks, start=1)
        ],
    }


def index_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".index.json")


def export_sdpa(p: LmiProblem, path) -> tuple:
    """Write ``path`` (SDPA sparse) and ``path.index.json``; returns both paths."""
    path = Path(path)
    idx = index_path_for(path)
    atomic_write_text(path, sdpa_text(p))
    atomic_write_text(idx, json.dumps(sdpa_index(p), indent=1, sort_keys=True) + "\n")
    return path, idx


def read_sdpa(path, index_path=None) -> LmiProblem:
    """Parse an SDPA sparse file (plus sidecar when present) back into an :class:`LmiProblem`.

    Without a sidecar, variables become scalars ``z1..zm`` and every block is
    read as non-strict with margin 0.
    """
    path = Path(path)
    rows = [ln.strip() for ln in path.read_text().splitlines()]
    rows = [ln for ln in rows if ln and ln[0] not in '"*']
    m = int(rows[0].split()[0])
    nblocks = int(rows[1].split()[0])
    sizes = [abs(int(s)) for s in rows[2].replace(",", " ").replace("{", " ").replace("}", " ").split()[:nblocks]]
    c = np.array([float(s) for s in rows[3].replace(",", " ").replace("{", " ").replace("}", " ").split()[:m]])
    F0 = [np.zeros((s, s)) for s in sizes]
    F = [np.zeros((m, s, s)) for s in sizes]
    for ln in rows[4:]:
        k, bi, a, b, v = ln.split()
        k, bi, a, b, v = int(k), int(bi) - 1, int(a) - 1, int(b) - 1, float(v)
        target = F0[bi] if k == 0 else F[bi][k - 1]
        target[a, b] = v
        target[b, a] = v
    index_path = index_path_for(path) if index_path is None else Path(index_path)
    layout = VariableLayout()
    if index_path.exists():
        idx = json.loads(index_path.read_text())
        for v in idx["variables"]:
            layout.add(v["name"], tuple(v["shape"]), v["symmetric"])
        binfo = idx["blocks"]
        eps, meta = idx["eps"], idx["meta"]
    else:
        for k in range(m):
            layout.add(f"z{k + 1}", (1, 1))
        binfo = [{"family": "block", "tag": f"block {k + 1}", "kind": "psd", "margin": 0.0} for k in range(nblocks)]
        eps, meta = 0.0, {}
    if layout.nz != m:
        raise InvalidArgumentError("sidecar variable layout does not match the file")
    blocks = []
    for bi in range(nblocks):
        info = binfo[bi]
        margin = float(info["margin"])
        const = margin * np.eye(sizes[bi]) - F0[bi]
        blocks.append(BlockConstraint(info["family"], info["tag"], const, F[bi], info["kind"] == "strict_pd", margin))
    return LmiProblem(layout, blocks, -c + 0.0, eps, meta)
