"""Polytopic representation of nested saturations.

A subset ``S`` of input channels marks the channels whose saturated value is
replaced by an auxiliary feedback ``H x``; the others keep ``K x``.  Composing
``t`` such choices gives the vertices of a ``t``-step difference inclusion,
each of which is affine in the auxiliary products ``H_1 x, ..., H_t x``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, InvalidArgumentError
from .model import SwitchedSystem, iterate, saturate


@dataclass(frozen=True, order=True)
class SubsetS:
    """Subset of the input channels ``{0..m-1}`` stored as a bitmask."""

    mask: int
    m: int

    def __post_init__(self):
        if self.m < 1 or not 0 <= self.mask < (1 << self.m):
            raise InvalidArgumentError(f"mask {self.mask} is not a subset of {self.m} channels")

    def __contains__(self, j: int) -> bool:
        return bool(self.mask >> j & 1)

    @property
    def members(self) -> tuple:
        return tuple(j for j in range(self.m) if j in self)

    @property
    def complement(self) -> "SubsetS":
        return SubsetS(((1 << self.m) - 1) & ~self.mask, self.m)

    def __str__(self):
        return "{" + ",".join(str(j + 1) for j in self.members) + "}"


def enumerate_subsets(m: int) -> list:
    """All ``2**m`` subsets in increasing bitmask order."""
    if m < 1:
        raise InvalidArgumentError("m must be positive")
    return [SubsetS(k, m) for k in range(1 << m)]


def enumerate_tuples(m: int, t: int):
    """Canonical order of ``(S_1, ..., S_t)``: lexicographic in the bitmasks, ``S_1`` slowest."""
    return itertools.product(enumerate_subsets(m), repeat=t)


def selector(S: SubsetS) -> np.ndarray:
    return np.diag([1.0 if j in S else 0.0 for j in range(S.m)])


def vertex_matrix(sys: SwitchedSystem, i: int, S: SubsetS) -> np.ndarray:
    """``A_i + B_i D_{S^c} K_i``: the state coefficient of one vertex."""
    md = sys.modes[sys.check_mode(i)]
    return md.A + md.B @ selector(S.complement) @ md.K


@dataclass(frozen=True, eq=False)
class ThetaFamily:
    """Coefficients of ``E(x) = theta0 x + sum_k thetas[k] H_k x`` for one vertex tuple."""

    mode: int
    tuple: tuple
    theta0: np.ndarray
    thetas: tuple

    @property
    def t(self) -> int:
        return len(self.thetas)


def theta(sys: SwitchedSystem, i: int, tup: Sequence[SubsetS]) -> ThetaFamily:
    i = sys.check_mode(i)
    if len(tup) < 1:
        raise InvalidArgumentError("need at least one subset")
    B = sys.modes[i].B
    th0 = np.eye(sys.n)
    ths = []
    for S in tup:
        M = vertex_matrix(sys, i, S)
        th0 = M @ th0
        ths = [M @ c for c in ths]
        ths.append(B @ selector(S))
    return ThetaFamily(i, tuple(tup), th0, tuple(ths))


def theta_families(sys: SwitchedSystem, i: int, t: int) -> list:
    """``theta`` for every tuple of length ``t``, in canonical order."""
    return [theta(sys, i, tup) for tup in enumerate_tuples(sys.m, t)]


def vertex_eval(th: ThetaFamily, H_list, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if len(H_list) != th.t:
        raise InvalidArgumentError(f"need {th.t} auxiliary gains, got {len(H_list)}")
    out = th.theta0 @ x
    for c, H in zip(th.thetas, H_list):
        H = np.asarray(H, dtype=float)
        if H.shape != (c.shape[1], x.shape[0]):
            raise InvalidArgumentError(f"auxiliary gain has shape {H.shape}, expected {(c.shape[1], x.shape[0])}")
        out = out + c @ (H @ x)
    return out


@dataclass(frozen=True, eq=False)
class HullWitness:
    """Convex weights over all vertex tuples reproducing ``F_i^t(x)``."""

    tuples: list
    weights: np.ndarray
    vertices: np.ndarray
    target: np.ndarray

    @property
    def point(self) -> np.ndarray:
        return self.weights @ self.vertices

    @property
    def residual(self) -> float:
        return float(np.linalg.norm(self.point - self.target))


def hull_membership(sys: SwitchedSystem, i: int, H_list, x, t: int, tol: float = 1e-12) -> HullWitness:
    """Explicit convex combination of ``t``-step vertices equal to ``F_i^t(x)``.

    At level ``k`` the true control ``u = K_i x_{k-1}`` saturates to
    ``alpha u + (1 - alpha) v`` per channel with ``v = H_k x``; ``alpha`` is
    the weight of keeping ``u`` (channel not in ``S_k``).  Tuple weights are
    products of those factors.  Raises :class:`DomainError` when some
    ``|H_k x|`` exceeds one by more than ``tol``.
    """
    i = sys.check_mode(i)
    x = sys.check_state(x)
    if t < 1 or len(H_list) < t:
        raise InvalidArgumentError("need t >= 1 and at least t auxiliary gains")
    H_list = [np.asarray(H, dtype=float) for H in H_list[:t]]
    K = sys.modes[i].K
    m = sys.m
    # keep[k, j]: weight of the "u" branch for channel j at level k
    keep = np.empty((t, m))
    xk = x
    for k, H in enumerate(H_list):
        v = H @ x
        if np.max(np.abs(v)) > 1.0 + tol:
            raise DomainError(f"x is outside L(H_{k + 1}): max |H x| = {np.max(np.abs(v)):.6g}")
        u = K @ xk
        su = saturate(u)
        diff = u - v
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(np.abs(diff) > 0.0, (su - v) / diff, 1.0)
        keep[k] = np.clip(a, 0.0, 1.0)
        xk = iterate(sys, i, xk, 1)
    tuples = list(enumerate_tuples(m, t))
    weights = np.empty(len(tuples))
    vertices = np.empty((len(tuples), sys.n))
    for r, tup in enumerate(tuples):
        w = 1.0
        for k, S in enumerate(tup):
            for j in range(m):
                w *= (1.0 - keep[k, j]) if j in S else keep[k, j]
        weights[r] = w
        vertices[r] = vertex_eval(theta(sys, i, tup), H_list, x)
    return HullWitness(tuples, weights, vertices, xk)
