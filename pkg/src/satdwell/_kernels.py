"""Hot inner loops, compiled with numba when available.

Every kernel has two implementations with identical signatures: a scalar-loop
version compiled with ``numba.njit`` and a vectorized pure-numpy version.
Set ``SATDWELL_NUMBA=0`` in the environment (before import) to force the
numpy path; ``BACKEND`` reports which one is active.
"""
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("SATDWELL_NUMBA", "1").lower() not in ("0", "false", "no", "off")
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Batched trajectory rollout
#   A: (N, n, n)  B: (N, n, m)  K: (N, m, n)
#   modes: (R, T) int, active mode at each step
#   x0: (R, n)
#   returns states (R, T + 1, n)
# ---------------------------------------------------------------------------


def _rollout_loop(A, B, K, modes, x0):
    R, T = modes.shape
    n = A.shape[1]
    m = B.shape[2]
    out = np.empty((R, T + 1, n))
    for r in range(R):
        for k in range(n):
            out[r, 0, k] = x0[r, k]
        for t in range(T):
            i = modes[r, t]
            for k in range(n):
                acc = 0.0
                for l in range(n):
                    acc += A[i, k, l] * out[r, t, l]
                out[r, t + 1, k] = acc
            for j in range(m):
                u = 0.0
                for l in range(n):
                    u += K[i, j, l] * out[r, t, l]
                if u > 1.0:
                    u = 1.0
                elif u < -1.0:
                    u = -1.0
                for k in range(n):
                    out[r, t + 1, k] += B[i, k, j] * u
    return out


def _rollout_numpy(A, B, K, modes, x0):
    R, T = modes.shape
    out = np.empty((R, T + 1, A.shape[1]))
    out[:, 0] = x0
    for t in range(T):
        i = modes[:, t]
        x = out[:, t]
        u = np.clip(np.einsum("rjl,rl->rj", K[i], x), -1.0, 1.0)
        out[:, t + 1] = np.einsum("rkl,rl->rk", A[i], x) + np.einsum("rkj,rj->rk", B[i], u)
    return out


# ---------------------------------------------------------------------------
# Convex polygon clipping (Sutherland-Hodgman against a convex clip polygon)
#   subject: (p, 2), clip: (q, 2), both counter-clockwise
#   returns the vertices of the intersection (possibly empty)
# ---------------------------------------------------------------------------


def _clip_loop(subject, clip):
    q = clip.shape[0]
    cap = subject.shape[0] + q + 1
    cur = np.empty((cap + q, 2))
    nxt = np.empty((cap + q, 2))
    cnt = subject.shape[0]
    for k in range(cnt):
        cur[k, 0] = subject[k, 0]
        cur[k, 1] = subject[k, 1]
    for e in range(q):
        if cnt == 0:
            break
        ax = clip[e, 0]
        ay = clip[e, 1]
        bx = clip[(e + 1) % q, 0]
        by = clip[(e + 1) % q, 1]
        ex = bx - ax
        ey = by - ay
        out = 0
        px = cur[cnt - 1, 0]
        py = cur[cnt - 1, 1]
        sp = ex * (py - ay) - ey * (px - ax)
        for k in range(cnt):
            cx = cur[k, 0]
            cy = cur[k, 1]
            sc = ex * (cy - ay) - ey * (cx - ax)
            if sc >= 0.0:
                if sp < 0.0:
                    w = sp / (sp - sc)
                    nxt[out, 0] = px + w * (cx - px)
                    nxt[out, 1] = py + w * (cy - py)
                    out += 1
                nxt[out, 0] = cx
                nxt[out, 1] = cy
                out += 1
            elif sp >= 0.0:
                w = sp / (sp - sc)
                nxt[out, 0] = px + w * (cx - px)
                nxt[out, 1] = py + w * (cy - py)
                out += 1
            px = cx
            py = cy
            sp = sc
        cnt = out
        tmp = cur
        cur = nxt
        nxt = tmp
    return cur[:cnt].copy()


def _clip_numpy(subject, clip):
    poly = np.asarray(subject, dtype=float)
    q = clip.shape[0]
    for e in range(q):
        if poly.shape[0] == 0:
            break
        a = clip[e]
        d = clip[(e + 1) % q] - a
        s = d[0] * (poly[:, 1] - a[1]) - d[1] * (poly[:, 0] - a[0])
        prev = np.roll(poly, 1, axis=0)
        sp = np.roll(s, 1)
        inside = s >= 0.0
        crossing = inside != (sp >= 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = sp / (sp - s)
        w = np.where(crossing, w, 0.0)
        cross_pts = prev + w[:, None] * (poly - prev)
        # each vertex emits [crossing point], [itself if inside], in that order
        pts = np.stack([cross_pts, poly], axis=1).reshape(-1, 2)
        keep = np.stack([crossing, inside], axis=1).reshape(-1)
        poly = pts[keep]
    return poly


# ---------------------------------------------------------------------------
# Trajectory membership checks
#   states: (R, T + 1, n); P: (N, n, n); H: (M, m, n) stacked band gains
#   returns per-trajectory worst values:
#     union_excess[r]  = max_t (min_i x'P_i x) - 1
#     band_excess[r]   = max_t max_rows |H x| - 1
#     final_norm[r]    = ||x(T)||
# ---------------------------------------------------------------------------


def _membership_loop(states, P, H):
    R, T1, n = states.shape
    N = P.shape[0]
    M = H.shape[0]
    m = H.shape[1]
    union_excess = np.full(R, -np.inf)
    band_excess = np.full(R, -np.inf)
    final_norm = np.empty(R)
    for r in range(R):
        for t in range(T1):
            best = np.inf
            for i in range(N):
                v = 0.0
                for a in range(n):
                    for b in range(n):
                        v += states[r, t, a] * P[i, a, b] * states[r, t, b]
                if v < best:
                    best = v
            if best - 1.0 > union_excess[r]:
                union_excess[r] = best - 1.0
            for h in range(M):
                for j in range(m):
                    u = 0.0
                    for a in range(n):
                        u += H[h, j, a] * states[r, t, a]
                    if abs(u) - 1.0 > band_excess[r]:
                        band_excess[r] = abs(u) - 1.0
        s = 0.0
        for a in range(n):
            s += states[r, T1 - 1, a] ** 2
        final_norm[r] = np.sqrt(s)
    return union_excess, band_excess, final_norm


def _membership_numpy(states, P, H):
    quad = np.einsum("rta,iab,rtb->rti", states, P, states)
    union_excess = quad.min(axis=2).max(axis=1) - 1.0
    if H.shape[0]:
        band = np.abs(np.einsum("hja,rta->rthj", H, states))
        band_excess = band.reshape(band.shape[0], band.shape[1], -1).max(axis=(1, 2)) - 1.0
    else:
        band_excess = np.full(states.shape[0], -np.inf)
    final_norm = np.linalg.norm(states[:, -1], axis=1)
    return union_excess, band_excess, final_norm


numpy_impls = {"rollout": _rollout_numpy, "clip_convex": _clip_numpy, "membership": _membership_numpy}
_loop_impls = {"rollout": _rollout_loop, "clip_convex": _clip_loop, "membership": _membership_loop}
_compiled = {}


def jit_impls():
    """Compiled kernels keyed by name; empty when numba is not installed."""
    if not HAVE_NUMBA:
        return {}
    if not _compiled:
        for name, fn in _loop_impls.items():
            _compiled[name] = numba.njit(cache=True)(fn)
    return dict(_compiled)


if USE_NUMBA:
    _active = jit_impls()
else:
    _active = numpy_impls
rollout = _active["rollout"]
clip_convex = _active["clip_convex"]
membership = _active["membership"]
