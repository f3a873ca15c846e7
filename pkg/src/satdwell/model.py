"""Saturated switched plant, switching schedules and exact rollouts.

Modes are indexed from 0 in the Python API; the CLI and the file formats use
1-based labels.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError


def _finite_matrix(a, shape, name):
    arr = np.array(a, dtype=float)
    if arr.ndim == 1 and len(shape) == 2 and 1 in shape:
        arr = arr.reshape(shape)
    if arr.shape != shape:
        raise InvalidArgumentError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mode:
    A: np.ndarray
    B: np.ndarray
    K: np.ndarray

    @property
    def closed_loop(self) -> np.ndarray:
        return self.A + self.B @ self.K


@dataclass(frozen=True, eq=False)
class SwitchedSystem:
    """N-mode plant ``x+ = A_i x + B_i sat(K_i x)`` with unit saturation limits.

    Scaling B and K so that the actuator limits are one is the caller's job.
    """

    modes: tuple
    labels: tuple = ()

    def __post_init__(self):
        if len(self.modes) < 1:
            raise InvalidArgumentError("a switched system needs at least one mode")
        n = np.asarray(self.modes[0].A).shape[0]
        m = np.atleast_2d(np.asarray(self.modes[0].K)).shape[0]
        if n < 1 or m < 1:
            raise InvalidArgumentError("state and input dimensions must be positive")
        checked = []
        for k, md in enumerate(self.modes):
            checked.append(
                Mode(
                    _finite_matrix(md.A, (n, n), f"mode {k + 1}: A"),
                    _finite_matrix(md.B, (n, m), f"mode {k + 1}: B"),
                    _finite_matrix(md.K, (m, n), f"mode {k + 1}: K"),
                )
            )
        object.__setattr__(self, "modes", tuple(checked))
        labels = tuple(self.labels) if self.labels else tuple(f"mode{k + 1}" for k in range(len(checked)))
        if len(labels) != len(checked):
            raise InvalidArgumentError("labels must match the number of modes")
        object.__setattr__(self, "labels", labels)
        stacks = tuple(np.ascontiguousarray(np.stack([getattr(md, f) for md in checked])) for f in "ABK")
        object.__setattr__(self, "_stacks", stacks)

    @classmethod
    def from_matrices(cls, A, B, K, labels=()):
        return cls(tuple(Mode(a, b, k) for a, b, k in zip(A, B, K)), tuple(labels))

    @property
    def n(self) -> int:
        return self.modes[0].A.shape[0]

    @property
    def m(self) -> int:
        return self.modes[0].B.shape[1]

    @property
    def N(self) -> int:
        return len(self.modes)

    @property
    def stacked(self):
        """``(A, B, K)`` as contiguous ``(N, ., .)`` arrays for the kernels."""
        return self._stacks

    def check_mode(self, i) -> int:
        if isinstance(i, bool) or not isinstance(i, (int, np.integer)) or not 0 <= i < self.N:
            raise InvalidArgumentError(f"mode index {i!r} outside 0..{self.N - 1}")
        return int(i)

    def check_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (self.n,):
            raise InvalidArgumentError(f"state has length {x.size}, expected {self.n}")
        return x


def two_mode_example() -> SwitchedSystem:
    """The two-mode single-input benchmark plant (n=2, m=1)."""
    return SwitchedSystem.from_matrices(
        A=[[[-0.7, 1.0], [-0.5, -1.2]], [[0.26, -1.0], [1.7, -1.5]]],
        B=[[[1.0], [0.0]], [[0.0], [-1.0]]],
        K=[[[1.1759, 0.1089]], [[1.5114, -0.7765]]],
    )


def saturate(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise InvalidArgumentError("saturate() needs finite input")
    return np.clip(u, -1.0, 1.0)


def step(sys: SwitchedSystem, i: int, x) -> np.ndarray:
    """One step ``A_i x + B_i sat(K_i x)``."""
    i = sys.check_mode(i)
    x = sys.check_state(x)
    A, B, K = sys.stacked
    return _kernels.rollout(A, B, K, np.array([[i]], dtype=np.int64), x[None, :])[0, 1]


def iterate(sys: SwitchedSystem, i: int, x, t: int) -> np.ndarray:
    """``t``-fold composition of mode ``i``'s map; ``t = 0`` returns ``x``."""
    i = sys.check_mode(i)
    x = sys.check_state(x)
    if t < 0:
        raise InvalidArgumentError("t must be non-negative")
    if t == 0:
        return x.copy()
    A, B, K = sys.stacked
    return _kernels.rollout(A, B, K, np.full((1, t), i, dtype=np.int64), x[None, :])[0, -1]


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant switching signal.

    ``modes[k]`` is active on ``[switch_times[k], switch_times[k + 1])``; the
    last interval runs to whatever horizon the schedule is evaluated on.
    """

    switch_times: tuple
    modes: tuple

    def __post_init__(self):
        times = tuple(int(t) for t in self.switch_times)
        modes = tuple(int(i) for i in self.modes)
        if not times or times[0] != 0:
            raise InvalidArgumentError("schedules start with a switch time of 0")
        if len(times) != len(modes):
            raise InvalidArgumentError("need one mode per interval")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidArgumentError("switch times must be strictly increasing")
        if any(i < 0 for i in modes):
            raise InvalidArgumentError("mode indices are non-negative")
        if any(a == b for a, b in zip(modes, modes[1:])):
            raise InvalidArgumentError("consecutive intervals must use different modes")
        object.__setattr__(self, "switch_times", times)
        object.__setattr__(self, "modes", modes)

    @classmethod
    def periodic(cls, mode_cycle: Sequence[int], period: int, horizon: int) -> "Schedule":
        """Cycle through ``mode_cycle`` switching every ``period`` steps."""
        if period < 1:
            raise InvalidArgumentError("period must be at least 1")
        times = list(range(0, max(horizon, 1), period))
        modes = [mode_cycle[k % len(mode_cycle)] for k in range(len(times))]
        return cls(tuple(times), tuple(modes))

    @property
    def gaps(self) -> tuple:
        t = self.switch_times
        return tuple(b - a for a, b in zip(t, t[1:]))

    def mode_at(self, t: int) -> int:
        k = int(np.searchsorted(self.switch_times, t, side="right")) - 1
        return self.modes[k]

    def mode_sequence(self, horizon: int) -> np.ndarray:
        """Active mode at each step ``0..horizon-1``."""
        t = np.arange(horizon)
        k = np.searchsorted(np.asarray(self.switch_times), t, side="right") - 1
        return np.asarray(self.modes, dtype=np.int64)[k]

    def check_modes(self, N: int) -> None:
        if any(i >= N for i in self.modes):
            raise InvalidArgumentError(f"schedule uses a mode outside 0..{N - 1}")


def is_dt_admissible(s: Schedule, tau: int) -> bool:
    return all(g >= tau for g in s.gaps)


def random_admissible_schedule(N: int, tau: int, horizon: int, seed) -> Schedule:
    """Random schedule with gaps uniform on ``[tau, 3*tau]``.

    The first mode is uniform on all modes, each later one uniform on the
    modes different from its predecessor.  ``N = 1`` yields no switches.
    """
    if tau < 1 or horizon < 1 or N < 1:
        raise InvalidArgumentError("need N >= 1, tau >= 1 and horizon >= 1")
    rng = np.random.default_rng(seed)
    mode = int(rng.integers(N))
    times, modes = [0], [mode]
    if N == 1:
        return Schedule((0,), (mode,))
    t = 0
    while True:
        t += int(rng.integers(tau, 3 * tau + 1))
        if t >= horizon:
            break
        nxt = int(rng.integers(N - 1))
        mode = nxt if nxt < mode else nxt + 1
        times.append(t)
        modes.append(mode)
    return Schedule(tuple(times), tuple(modes))


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    schedule: Schedule
    lyapunov_values: Optional[np.ndarray] = None
    modes: np.ndarray = field(default=None)

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    def switch_indices(self) -> list:
        """Switching instants ``t_k`` that fall inside the horizon (``t_0 = 0`` included)."""
        return [t for t in self.schedule.switch_times if t <= self.horizon]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.states.shape[1]
        w.writerow(["t"] + [f"x{k + 1}" for k in range(n)] + ["mode", "V"])
        for t, x in enumerate(self.states):
            v = "" if self.lyapunov_values is None else repr(float(self.lyapunov_values[t]))
            w.writerow([t] + [repr(float(c)) for c in x] + [int(self.modes[t]) + 1, v])
        return buf.getvalue()


def lyapunov_values(P_list, states, modes) -> np.ndarray:
    """``V(x(t)) = x(t)' P_{mode(t)} x(t)`` along a trajectory."""
    P = np.asarray(P_list, dtype=float)
    return np.einsum("ta,tab,tb->t", states, P[modes], states)


def simulate(sys: SwitchedSystem, s: Schedule, x0, T: int, cert=None) -> Trajectory:
    """Roll the plant out for ``T`` steps; attach ``V`` when a certificate is given.

    ``modes[t]`` in the result is the mode active from ``t`` to ``t + 1``; the
    entry at ``T`` repeats the schedule's mode at ``T`` so every state has one.
    """
    x0 = sys.check_state(x0)
    if T < 0:
        raise InvalidArgumentError("T must be non-negative")
    s.check_modes(sys.N)
    seq = s.mode_sequence(T + 1)
    A, B, K = sys.stacked
    states = _kernels.rollout(A, B, K, np.ascontiguousarray(seq[None, :T]), x0[None, :])[0]
    V = None if cert is None else lyapunov_values(cert.P, states, seq)
    return Trajectory(states=states, schedule=s, lyapunov_values=V, modes=seq)
