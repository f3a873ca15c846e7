"""Solver-agnostic block LMI problems.

A problem is a decision vector ``z`` (the stacked free entries of every
matrix variable) and a list of symmetric blocks ``F(z) = F0 + sum_k z_k F_k``.
Each block must satisfy ``F(z) >= margin * I``; strict inequalities carry
``margin = eps`` and non-strict ones ``margin = 0``.

Block order is canonical: mode-major, vertex tuples in bitmask-lexicographic
order.  Families are ``within`` (one-step decrease), ``switching`` (decrease
across a switch after a dwell of ``tau`` steps), ``band`` (ellipsoid inside a
saturation band) and ``pd`` (positivity of the ``Q_i`` variables).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgumentError
from .ldi import enumerate_subsets, enumerate_tuples, theta
from .model import SwitchedSystem

CONSTRAINT_FAMILIES = ("within", "switching", "band")


def q_name(i: int) -> str:
    return f"Q{i + 1}"


def y_name(i: int, t: int) -> str:
    return f"Y{i + 1}_{t}"


def p_name(i: int) -> str:
    return f"P{i + 1}"


@dataclass(frozen=True)
class Variable:
    name: str
    shape: tuple
    symmetric: bool
    offset: int

    @property
    def size(self) -> int:
        r, c = self.shape
        return r * (r + 1) // 2 if self.symmetric else r * c

    def entries(self):
        """(row, col) of each scalar entry: upper triangle row-major, or all entries row-major."""
        r, c = self.shape
        if self.symmetric:
            return [(a, b) for a in range(r) for b in range(a, r)]
        return [(a, b) for a in range(r) for b in range(c)]


class VariableLayout:
    """Ordered matrix variables and their slice of the decision vector."""

    def __init__(self):
        self._vars = {}
        self.nz = 0

    def add(self, name, shape, symmetric=False) -> Variable:
        if name in self._vars:
            raise InvalidArgumentError(f"duplicate variable {name}")
        if symmetric and shape[0] != shape[1]:
            raise InvalidArgumentError("symmetric variables are square")
        v = Variable(name, tuple(shape), symmetric, self.nz)
        self._vars[name] = v
        self.nz += v.size
        return v

    def __getitem__(self, name) -> Variable:
        return self._vars[name]

    def __iter__(self):
        return iter(self._vars.values())

    def __len__(self):
        return len(self._vars)

    def index(self):
        """One ``(name, row, col)`` per decision-vector entry."""
        out = []
        for v in self:
            out.extend((v.name, a, b) for a, b in v.entries())
        return out

    def unpack(self, z) -> dict:
        z = np.asarray(z, dtype=float)
        out = {}
        for v in self:
            M = np.zeros(v.shape)
            for k, (a, b) in enumerate(v.entries()):
                M[a, b] = z[v.offset + k]
                if v.symmetric:
                    M[b, a] = z[v.offset + k]
            out[v.name] = M
        return out

    def pack(self, values: dict) -> np.ndarray:
        z = np.zeros(self.nz)
        for v in self:
            M = np.asarray(values[v.name], dtype=float).reshape(v.shape)
            for k, (a, b) in enumerate(v.entries()):
                z[v.offset + k] = M[a, b]
        return z


class Affine:
    """Matrix-valued affine map ``z -> const + sum_k z_k coef[k]``."""

    __slots__ = ("const", "coef")
    # make ndarray @ Affine dispatch to __rmatmul__
    __array_ufunc__ = None

    def __init__(self, const, coef):
        self.const = np.asarray(const, dtype=float)
        self.coef = np.asarray(coef, dtype=float)

    @classmethod
    def constant(cls, M, nz):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(M, np.zeros((nz,) + M.shape))

    @classmethod
    def variable(cls, layout: VariableLayout, name: str):
        v = layout[name]
        coef = np.zeros((layout.nz,) + v.shape)
        for k, (a, b) in enumerate(v.entries()):
            coef[v.offset + k, a, b] = 1.0
            if v.symmetric:
                coef[v.offset + k, b, a] = 1.0
        return cls(np.zeros(v.shape), coef)

    @property
    def shape(self):
        return self.const.shape

    def __add__(self, other):
        return Affine(self.const + other.const, self.coef + other.coef)

    def __mul__(self, s):
        return Affine(self.const * s, self.coef * s)

    __rmul__ = __mul__

    def __rmatmul__(self, L):
        L = np.asarray(L, dtype=float)
        return Affine(L @ self.const, L @ self.coef)

    def __matmul__(self, R):
        R = np.asarray(R, dtype=float)
        return Affine(self.const @ R, self.coef @ R)

    @property
    def T(self):
        return Affine(self.const.T, np.swapaxes(self.coef, 1, 2))

    def __call__(self, z):
        return self.const + np.tensordot(np.asarray(z, dtype=float), self.coef, axes=1)

    @staticmethod
    def bmat(rows):
        const = np.block([[b.const for b in row] for row in rows])
        coef = np.block([[b.coef for b in row] for row in rows])
        return Affine(const, coef)


@dataclass(frozen=True, eq=False)
class BlockConstraint:
    """``const + sum_k z_k coef[k]  >=  margin * I`` for one symmetric block."""

    family: str
    tag: str
    const: np.ndarray
    coef: np.ndarray
    strict: bool
    margin: float

    @property
    def size(self) -> int:
        return self.const.shape[0]

    @property
    def kind(self) -> str:
        return "strict_pd" if self.strict else "psd"

    def evaluate(self, z) -> np.ndarray:
        return self.const + np.tensordot(np.asarray(z, dtype=float), self.coef, axes=1)

    def slack(self, z) -> float:
        """Smallest eigenvalue of ``F(z) - margin * I``."""
        F = self.evaluate(z)
        return float(np.linalg.eigvalsh(0.5 * (F + F.T))[0] - self.margin)


@dataclass(eq=False)
class LmiProblem:
    """Maximize ``objective @ z`` subject to every block; zero objective means feasibility."""

    layout: VariableLayout
    blocks: list
    objective: np.ndarray
    eps: float
    meta: dict = field(default_factory=dict)

    @property
    def nz(self) -> int:
        return self.layout.nz

    def family_counts(self) -> dict:
        out = {}
        for b in self.blocks:
            out[b.family] = out.get(b.family, 0) + 1
        return out

    def constraint_count(self) -> int:
        """Blocks excluding the ``pd`` positivity blocks."""
        return sum(1 for b in self.blocks if b.family != "pd")

    @property
    def is_feasibility(self) -> bool:
        return not np.any(self.objective)

    def slacks(self, z) -> np.ndarray:
        return np.array([b.slack(z) for b in self.blocks])


class LmiCounts(NamedTuple):
    within: int
    switching: int
    band: int

    @property
    def total(self) -> int:
        return self.within + self.switching + self.band


def count_constraints(N: int, m: int, n: int, tau: int) -> LmiCounts:
    """Block counts per family of the dwell-time saturated problem (``pd`` blocks excluded)."""
    if min(N, m, n, tau) < 1:
        raise InvalidArgumentError("N, m, n and tau must be positive")
    return LmiCounts(N * 2**m, N * (N - 1) * 2 ** (m * tau), N * tau * m)


def _check_tau_eps(tau, eps):
    if isinstance(tau, bool) or int(tau) != tau or tau < 1:
        raise InvalidArgumentError("tau must be a positive integer")
    if not eps > 0:
        raise InvalidArgumentError("eps must be positive")


def _schur(top: Affine, off: Affine, bottom: Affine) -> Affine:
    # [[top, off'], [off, bottom]]
    return Affine.bmat([[top, off.T], [off, bottom]])


def _band_block(Yrow: Affine, Q: Affine) -> Affine:
    one = Affine.constant(np.ones((1, 1)), Q.coef.shape[0])
    return _schur(one, Yrow.T, Q)


def _trace_objective(layout, names):
    c = np.zeros(layout.nz)
    for name in names:
        v = layout[name]
        for k, (a, b) in enumerate(v.entries()):
            if a == b:
                c[v.offset + k] = 1.0
    return c


def _positivity_blocks(layout, names, eps):
    return [BlockConstraint("pd", f"{nm} > 0", *_parts(Affine.variable(layout, nm)), True, eps) for nm in names]


def _parts(a: Affine):
    return a.const, a.coef


def build_corollary3(sys: SwitchedSystem, tau: int, eps: float = 1e-6) -> LmiProblem:
    """Dwell-time DOA problem over ``Q_i = P_i^{-1}`` and ``Y_{i,t} = H_{i,t} Q_i``.

    Maximizes ``sum_i tr(Q_i)``.  ``tau = 1`` gives the arbitrary-switching problem.
    """
    _check_tau_eps(tau, eps)
    n, m, N = sys.n, sys.m, sys.N
    layout = VariableLayout()
    for i in range(N):
        layout.add(q_name(i), (n, n), symmetric=True)
        for t in range(1, tau + 1):
            layout.add(y_name(i, t), (m, n))
    Q = [Affine.variable(layout, q_name(i)) for i in range(N)]
    Y = [[Affine.variable(layout, y_name(i, t)) for t in range(1, tau + 1)] for i in range(N)]
    blocks = []
    for i in range(N):
        for S in enumerate_subsets(m):
            th = theta(sys, i, (S,))
            off = th.theta0 @ Q[i] + th.thetas[0] @ Y[i][0]
            blk = _schur(Q[i], off, Q[i])
            blocks.append(BlockConstraint("within", f"within-mode {i + 1}, S={S}", *_parts(blk), True, eps))
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            for tup in enumerate_tuples(m, tau):
                th = theta(sys, i, tup)
                off = th.theta0 @ Q[i]
                for c, y in zip(th.thetas, Y[i]):
                    off = off + c @ y
                blk = _schur(Q[i], off, Q[j])
                label = ",".join(str(S) for S in tup)
                blocks.append(
                    BlockConstraint("switching", f"switch {i + 1}->{j + 1}, tuple ({label})", *_parts(blk), True, eps)
                )
    for i in range(N):
        for t in range(tau):
            for r in range(m):
                blk = _band_block(_row(Y[i][t], r), Q[i])
                blocks.append(
                    BlockConstraint("band", f"ellipsoid-in-band {i + 1},{t + 1},row {r + 1}", *_parts(blk), False, 0.0)
                )
    blocks.extend(_positivity_blocks(layout, [q_name(i) for i in range(N)], eps))
    objective = _trace_objective(layout, [q_name(i) for i in range(N)])
    return LmiProblem(layout, blocks, objective, eps, {"builder": "dwell_doa", "tau": int(tau), "N": N, "n": n, "m": m})


def _row(a: Affine, r: int) -> Affine:
    return Affine(a.const[r : r + 1], a.coef[:, r : r + 1])


def build_unsaturated(sys: SwitchedSystem, tau: int, eps: float = 1e-6) -> LmiProblem:
    """Feasibility of the linear closed loops with dwell time ``tau`` (variables ``P_i``)."""
    _check_tau_eps(tau, eps)
    n, N = sys.n, sys.N
    layout = VariableLayout()
    for i in range(N):
        layout.add(p_name(i), (n, n), symmetric=True)
    P = [Affine.variable(layout, p_name(i)) for i in range(N)]
    Abar = [md.closed_loop for md in sys.modes]
    blocks = []
    for i in range(N):
        blk = P[i] + (-1.0) * (Abar[i].T @ P[i] @ Abar[i])
        blocks.append(BlockConstraint("within", f"within-mode {i + 1}", *_parts(blk), True, eps))
    for i in range(N):
        At = np.linalg.matrix_power(Abar[i], tau)
        for j in range(N):
            if i == j:
                continue
            blk = P[i] + (-1.0) * (At.T @ P[j] @ At)
            blocks.append(BlockConstraint("switching", f"switch {i + 1}->{j + 1}", *_parts(blk), True, eps))
    blocks.extend(_positivity_blocks(layout, [p_name(i) for i in range(N)], eps))
    return LmiProblem(layout, blocks, np.zeros(layout.nz), eps, {"builder": "unsaturated", "tau": int(tau), "N": N, "n": n, "m": sys.m})


def build_baseline(sys: SwitchedSystem, lam: float, eps: float = 1e-6) -> LmiProblem:
    """Single-gain contraction problem: ``E' P_i E <= lam P_i`` per vertex and ``E(P_i)`` in ``L(H_i)``.

    Variables ``Q_i`` and ``Y_i = H_i Q_i`` (stored as ``Y{i}_1``).  The
    ``P_i <= mu P_j`` coupling is not imposed; ``mu`` is computed afterwards.
    """
    if not 0.0 < lam < 1.0:
        raise InvalidArgumentError("lambda must lie in (0, 1)")
    if not eps > 0:
        raise InvalidArgumentError("eps must be positive")
    n, m, N = sys.n, sys.m, sys.N
    layout = VariableLayout()
    for i in range(N):
        layout.add(q_name(i), (n, n), symmetric=True)
        layout.add(y_name(i, 1), (m, n))
    blocks = []
    for i in range(N):
        Q = Affine.variable(layout, q_name(i))
        Y = Affine.variable(layout, y_name(i, 1))
        for S in enumerate_subsets(m):
            th = theta(sys, i, (S,))
            off = th.theta0 @ Q + th.thetas[0] @ Y
            blk = _schur(lam * Q, off, Q)
            blocks.append(BlockConstraint("within", f"contraction {i + 1}, S={S}", *_parts(blk), False, 0.0))
    for i in range(N):
        Q = Affine.variable(layout, q_name(i))
        Y = Affine.variable(layout, y_name(i, 1))
        for r in range(m):
            blocks.append(
                BlockConstraint("band", f"ellipsoid-in-band {i + 1},1,row {r + 1}", *_parts(_band_block(_row(Y, r), Q)), False, 0.0)
            )
    blocks.extend(_positivity_blocks(layout, [q_name(i) for i in range(N)], eps))
    objective = _trace_objective(layout, [q_name(i) for i in range(N)])
    return LmiProblem(layout, blocks, objective, eps, {"builder": "baseline", "lambda": float(lam), "tau": 1, "N": N, "n": n, "m": m})
