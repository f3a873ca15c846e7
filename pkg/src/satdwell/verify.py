"""Simulation-based checks of a certificate against the saturated plant.

Per-trial seeds for the Monte-Carlo check are derived from the master seed
with splitmix64: ``seed_k = splitmix64(master + (k + 1) * 0x9E3779B97F4A7C15)``
(mod 2**64).  Each trial's start point and schedule depend on its seed only.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, InvalidArgumentError
from .ldi import hull_membership
from .model import SwitchedSystem, Trajectory, lyapunov_values, random_admissible_schedule
from .sdp import Certificate

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def trial_seed(master: int, k: int) -> int:
    return splitmix64((int(master) + (k + 1) * _GOLDEN) & _MASK64)


@dataclass
class LyapunovCheck:
    within_violations: list = field(default_factory=list)
    switch_violations: list = field(default_factory=list)
    switch_values: list = field(default_factory=list)
    switch_ratios: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.within_violations and not self.switch_violations


def check_lyapunov_decrease(sys: SwitchedSystem, cert: Certificate, traj: Trajectory, rtol: float = 1e-10) -> LyapunovCheck:
    """(i) ``V_i(x(t+1)) < V_i(x(t))`` at every step of mode ``i``; (ii) ``V`` decreases between switching instants.

    A decrease is accepted up to ``rtol`` relative to the current value; steps
    from the origin are skipped.
    """
    P = np.asarray(cert.P)
    X, modes = traj.states, traj.modes
    out = LyapunovCheck()
    for t in range(traj.horizon):
        i = modes[t]
        v0 = X[t] @ P[i] @ X[t]
        if v0 == 0.0:
            continue
        v1 = X[t + 1] @ P[i] @ X[t + 1]
        if v1 >= v0 * (1.0 + rtol):
            out.within_violations.append(t)
    V = lyapunov_values(P, X, modes)
    tk = traj.switch_indices()
    out.switch_values = [float(V[t]) for t in tk]
    for k in range(len(tk) - 1):
        a, b = V[tk[k]], V[tk[k + 1]]
        if a > 0.0:
            out.switch_ratios.append(float(b / a))
        if a > 0.0 and b >= a * (1.0 + rtol):
            out.switch_violations.append(k)
    return out


@dataclass
class LdiCheck:
    steps: int = 0
    invalid: list = field(default_factory=list)
    max_residual: float = 0.0
    tol: float = 1e-9

    @property
    def passed(self) -> bool:
        return not self.invalid and self.max_residual <= self.tol


def check_ldi_validity_along(sys: SwitchedSystem, cert: Certificate, traj: Trajectory, tol: float = 1e-9) -> LdiCheck:
    """Constructive hull membership of ``F_i^k(x(t))``, ``k = min(steps left in the interval, tau)``."""
    out = LdiCheck(tol=tol)
    T = traj.horizon
    times = list(traj.schedule.switch_times) + [T]
    for t in range(T):
        i = int(traj.modes[t])
        nxt = min(s for s in times if s > t) if any(s > t for s in times) else T
        k = min(min(nxt, T) - t, cert.tau)
        out.steps += 1
        try:
            w = hull_membership(sys, i, cert.H[i], traj.states[t], k, tol=tol)
        except DomainError as exc:
            out.invalid.append((t, str(exc)))
            continue
        if w.weights.min() < 0.0 or abs(w.weights.sum() - 1.0) > 1e-12:
            out.invalid.append((t, "weights are not convex"))
        out.max_residual = max(out.max_residual, w.residual)
    return out


@dataclass
class VerificationReport:
    trials: int
    horizon: int
    failures: list
    worst_switch_ratio: float
    final_norm_quantiles: dict
    psi_exits: int
    seed: int
    band_scope: str = "all"
    band_violations: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_text(self) -> str:
        q = ", ".join(f"{k}={v:.3e}" for k, v in self.final_norm_quantiles.items())
        lines = [
            f"trials: {self.trials}  horizon: {self.horizon}  seed: {self.seed}",
            f"failures: {len(self.failures)}",
            f"worst switching ratio V(t_k+1)/V(t_k): {self.worst_switch_ratio:.6f}",
            f"final-norm quantiles: {q}",
            f"trials leaving Psi transiently: {self.psi_exits}",
            f"band scope: {self.band_scope}  "
            + "  ".join(f"band violations ({k}): {v}" for k, v in self.band_violations.items()),
            f"result: {'PASS' if self.passed else 'FAIL'}",
        ]
        return "\n".join(lines) + "\n"

    def failures_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial_seed", "x0", "property"])
        for x0, s, prop in self.failures:
            w.writerow([s, " ".join(f"{c:.17g}" for c in x0), prop])
        return buf.getvalue()


def sample_psi_boundary(P_list, rng, max_tries: int = 100_000) -> np.ndarray:
    """A point of the boundary of ``∩ E(P_i)``: uniform on a random ellipsoid's boundary, kept if inside the rest."""
    P_list = [np.asarray(P, dtype=float) for P in P_list]
    n = P_list[0].shape[0]
    roots = []
    for P in P_list:
        w, V = np.linalg.eigh(P)
        roots.append((V / np.sqrt(w)) @ V.T)
    for _ in range(max_tries):
        i = int(rng.integers(len(P_list)))
        u = rng.standard_normal(n)
        x = roots[i] @ (u / np.linalg.norm(u))
        if all(x @ P @ x <= 1.0 + 1e-12 for P in P_list):
            return x
    raise DomainError("could not sample the boundary of the intersection")


def monte_carlo_doa(
    sys: SwitchedSystem,
    cert: Certificate,
    trials: int = 1000,
    horizon: int = None,
    seed: int = 0,
    conv_tol: float = 1e-6,
    member_tol: float = 1e-9,
    band: str = "all",
) -> VerificationReport:
    """Start on the boundary of ``∩ E(P_i)``, follow random dwell-time-admissible schedules.

    A trial fails if ``|x(horizon)| >= conv_tol``, if some ``x(t)`` leaves
    ``∪ E(P_i)``, or if some ``x(t)`` leaves the band region.  With
    ``band="all"`` that region is ``∩_{i,t} L(H_{i,t})``; with
    ``band="active"`` only the gains of the mode active at ``t`` count.
    Both counts are reported either way.  Leaving ``∩ E(P_i)`` itself is
    allowed and only counted.
    """
    if trials < 1:
        raise InvalidArgumentError("trials must be at least 1")
    if band not in ("all", "active"):
        raise InvalidArgumentError(f"band must be 'all' or 'active', not {band!r}")
    tau = cert.tau
    T = 200 * tau if horizon is None else int(horizon)
    seeds = [trial_seed(seed, k) for k in range(trials)]
    X0 = np.empty((trials, sys.n))
    modes = np.empty((trials, T + 1), dtype=np.int64)
    scheds = []
    for k, s in enumerate(seeds):
        rng = np.random.default_rng(s)
        X0[k] = sample_psi_boundary(cert.P, rng)
        sch = random_admissible_schedule(sys.N, tau, T + 1, rng)
        scheds.append(sch)
        modes[k] = sch.mode_sequence(T + 1)
    A, B, K = sys.stacked
    states = _kernels.rollout(A, B, K, np.ascontiguousarray(modes[:, :T]), X0)
    P = np.ascontiguousarray(np.asarray(cert.P, dtype=float))
    union_excess, band_all, final_norm = _kernels.membership(states, P, cert.band_gains())
    band_active = _active_band_excess(states, modes, cert)
    band_excess = band_all if band == "all" else band_active
    failures = []
    for k in range(trials):
        if not final_norm[k] < conv_tol:
            failures.append((X0[k].copy(), seeds[k], f"no convergence: |x(T)| = {final_norm[k]:.3e}"))
        if union_excess[k] > member_tol:
            failures.append((X0[k].copy(), seeds[k], f"left the union of ellipsoids by {union_excess[k]:.3e}"))
        if band_excess[k] > member_tol:
            failures.append((X0[k].copy(), seeds[k], f"left the band region by {band_excess[k]:.3e}"))
    quad = np.einsum("rta,iab,rtb->rti", states, P, states)
    psi_exits = int(np.sum(np.any(quad[:, 1:].max(axis=2) > 1.0 + member_tol, axis=1)))
    V = np.take_along_axis(quad, modes[:, :, None], axis=2)[:, :, 0]
    worst = 0.0
    for k, sch in enumerate(scheds):
        tk = [t for t in sch.switch_times if t <= T]
        for a, b in zip(tk, tk[1:]):
            if V[k, a] > 0.0:
                worst = max(worst, float(V[k, b] / V[k, a]))
    qs = {f"q{int(q * 100)}": float(np.quantile(final_norm, q)) for q in (0.5, 0.9, 0.99)}
    qs["max"] = float(final_norm.max())
    counts = {
        "all": int(np.sum(band_all > member_tol)),
        "active": int(np.sum(band_active > member_tol)),
    }
    return VerificationReport(trials, T, failures, worst, qs, psi_exits, int(seed), band, counts)


def _active_band_excess(states, modes, cert: Certificate) -> np.ndarray:
    """Per trial, ``max_t max_k |H_{sigma(t),k} x(t)|_inf - 1``."""
    H = np.asarray([np.vstack(row) for row in cert.H])  # (N, tau*m, n)
    v = np.einsum("rtkn,rtn->rtk", H[modes], states)
    return np.abs(v).max(axis=(1, 2)) - 1.0
