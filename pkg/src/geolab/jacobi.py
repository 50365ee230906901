"""Matrix Jacobi fields ``X'' + K(t) X = 0`` along a geodesic.

Integration is classical fixed-step RK4 on the first-order system
``(X, X')' = (X', -K X)``.  Because the system is linear, one RK4 step is a
``2m x 2m`` matrix built from ``K`` at the step's start, midpoint and end;
those matrices are assembled in one vectorised pass and then applied in
sequence.  The arithmetic is the same as stepping the stages one at a time.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

SEEDS = ("A", "J1", "J2")
_ids = itertools.count()


class IntegrationError(RuntimeError):
    """Non-finite state during integration."""

    def __init__(self, last_valid_t):
        super().__init__(f"integration overflow after t={last_valid_t:.6g}")
        self.last_valid_t = last_valid_t


class ConjugatePointError(RuntimeError):
    """A Jacobi field that must stay invertible became singular."""

    def __init__(self, t, what="A"):
        super().__init__(f"conjugate point: {what} singular at t={t:.10g}")
        self.t = t
        self.what = what


class ProfileMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class JacobiTrajectory:
    """Sampled solution on an increasing grid.

    ``X`` and ``Xp`` have shape ``(N, m, p)``; ``K`` holds the curvature at
    the grid points (used for dense output of ``X'``).
    """

    profile: object
    grid: np.ndarray
    X: np.ndarray
    Xp: np.ndarray
    K: np.ndarray
    seed: str
    step: float
    method: str = "rk4"
    ident: int = -1

    @property
    def label(self):
        return f"{self.seed}#{self.ident}"

    @property
    def t_start(self):
        return float(self.grid[0])

    @property
    def t_end(self):
        return float(self.grid[-1])

    def det(self):
        return np.linalg.det(self.X)

    def at(self, t):
        """Dense output ``(X(t), X'(t))`` by cubic Hermite interpolation.

        ``X`` uses the stored ``(X, X')`` pairs; ``X'`` uses ``(X', X'')``
        with ``X'' = -K X`` at the nodes.
        """
        tq = np.asarray(t, dtype=float)
        flat = np.atleast_1d(tq)
        lo, hi = self.grid[0], self.grid[-1]
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if np.any(flat < lo - tol) or np.any(flat > hi + tol):
            raise ValueError(f"dense output requested outside [{lo:g}, {hi:g}]")
        flat = np.clip(flat, lo, hi)
        i = np.clip(np.searchsorted(self.grid, flat, side="right") - 1, 0, len(self.grid) - 2)
        t0 = self.grid[i]
        h = self.grid[i + 1] - t0
        th = ((flat - t0) / h)[:, None, None]
        hh = h[:, None, None]
        h00 = 2 * th**3 - 3 * th**2 + 1
        h10 = th**3 - 2 * th**2 + th
        h01 = -2 * th**3 + 3 * th**2
        h11 = th**3 - th**2
        x0, x1 = self.X[i], self.X[i + 1]
        v0, v1 = self.Xp[i], self.Xp[i + 1]
        a0 = -self.K[i] @ x0
        a1 = -self.K[i + 1] @ x1
        x = h00 * x0 + h10 * hh * v0 + h01 * x1 + h11 * hh * v1
        v = h00 * v0 + h10 * hh * a0 + h01 * v1 + h11 * hh * a1
        if tq.ndim == 0:
            return x[0], v[0]
        return x, v


def _steps(t_start, t_end, step):
    if step <= 0:
        raise ValueError("step must be positive")
    span = t_end - t_start
    n = max(1, int(np.ceil(abs(span) / step - 1e-9)))
    return t_start + (span / n) * np.arange(n + 1), span / n


def _propagators(profile, grid, h):
    """One RK4 step matrix per grid interval, shape ``(N-1, 2m, 2m)``."""
    m = profile.m
    k_nodes = profile.evaluate(grid)
    k_mid = profile.evaluate(grid[:-1] + 0.5 * h)

    def field(k):
        f = np.zeros((len(k), 2 * m, 2 * m))
        f[:, :m, m:] = np.eye(m)
        f[:, m:, :m] = -k
        return f

    f1, f2, f3 = field(k_nodes[:-1]), field(k_mid), field(k_nodes[1:])
    eye = np.eye(2 * m)
    s1 = f1
    s2 = f2 @ (eye + 0.5 * h * s1)
    s3 = f2 @ (eye + 0.5 * h * s2)
    s4 = f3 @ (eye + h * s3)
    return eye + (h / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4), k_nodes


def _run(profile, grid, h, x0, xp0, first=0):
    props, k_nodes = _propagators(profile, grid[first:], h)
    m = profile.m
    p = x0.shape[1]
    ys = np.empty((len(grid), 2 * m, p))
    y = np.concatenate([x0, xp0])
    ys[first] = y
    with np.errstate(over="ignore", invalid="ignore"):  # reported below
        for i, prop in enumerate(props, start=first + 1):
            y = prop @ y
            ys[i] = y
    if not np.all(np.isfinite(ys[first:])):
        bad = first + int(np.argmin(np.all(np.isfinite(ys[first:]), axis=(1, 2))))
        raise IntegrationError(float(grid[bad - 1]))
    if first:
        k_nodes = np.concatenate([profile.evaluate(grid[:first]), k_nodes])
    return ys[:, :m], ys[:, m:], k_nodes


def _finish(profile, grid, x, xp, k, seed, step):
    if grid[-1] < grid[0]:
        grid, x, xp, k = grid[::-1], x[::-1], xp[::-1], k[::-1]
    return JacobiTrajectory(
        profile=profile,
        grid=np.ascontiguousarray(grid),
        X=np.ascontiguousarray(x),
        Xp=np.ascontiguousarray(xp),
        K=np.ascontiguousarray(k),
        seed=seed,
        step=step,
        ident=next(_ids),
    )


def _seed_pair(seed, m):
    eye, zero = np.eye(m), np.zeros((m, m))
    if isinstance(seed, str):
        return {"A": (zero, eye), "J1": (eye, zero), "J2": (zero, eye)}[seed], seed
    x0, xp0 = (np.asarray(s, dtype=float) for s in seed)
    if x0.ndim == 1:
        x0, xp0 = x0[:, None], xp0[:, None]
    return (x0, xp0), "custom"


def integrate(profile, seed, t_start, t_end, step):
    """Integrate from ``t_start`` (where ``X = X0, X' = Xp0``) to ``t_end``.

    ``seed`` is ``"A"``, ``"J1"``, ``"J2"`` or a pair ``(X0, Xp0)`` of
    ``m x p`` arrays.  ``t_end < t_start`` integrates backward.  The grid is
    uniform with spacing at most ``step``.
    """
    if not profile.covers(min(t_start, t_end, 0.0), max(t_start, t_end, 0.0)):
        raise ValueError(f"profile horizon [{profile.t_min}, {profile.horizon}] does not cover [{t_start}, {t_end}]")
    (x0, xp0), label = _seed_pair(seed, profile.m)
    grid, h = _steps(float(t_start), float(t_end), step)
    x, xp, k = _run(profile, grid, h, x0, xp0)
    return _finish(profile, grid, x, xp, k, label, step)


def field_A(profile, t_end, step):
    """``A`` with ``A(0) = 0, A'(0) = 1``, started from a Taylor seed at ``t = h``.

    ``A(h) = h - h^3 K(0)/6`` and ``A'(h) = 1 - h^2 K(0)/2``; the grid still
    contains ``t = 0``.
    """
    if t_end == 0:
        raise ValueError("t_end must be nonzero")
    if not profile.covers(0.0, t_end):
        raise ValueError("profile horizon does not cover the requested range")
    m = profile.m
    grid, h = _steps(0.0, float(t_end), step)
    k0 = profile.evaluate(0.0)
    eye = np.eye(m)
    x1 = h * eye - (h**3 / 6.0) * k0
    xp1 = eye - (h * h / 2.0) * k0
    if len(grid) == 2:
        x = np.stack([np.zeros((m, m)), x1])
        xp = np.stack([eye, xp1])
        return _finish(profile, grid, x, xp, profile.evaluate(grid), "A", step)
    x, xp, k = _run(profile, grid, h, x1, xp1, first=1)
    x[0], xp[0] = 0.0, eye
    return _finish(profile, grid, x, xp, k, "A", step)


def fundamental(profile, t_end, step):
    """``(J1, J2)`` from one integration of the ``2m x 2m`` fundamental matrix."""
    m = profile.m
    eye, zero = np.eye(m), np.zeros((m, m))
    if not profile.covers(0.0, t_end):
        raise ValueError("profile horizon does not cover the requested range")
    grid, h = _steps(0.0, float(t_end), step)
    x, xp, k = _run(profile, grid, h, np.hstack([eye, zero]), np.hstack([zero, eye]))
    j1 = _finish(profile, grid, x[:, :, :m], xp[:, :, :m], k, "J1", step)
    j2 = _finish(profile, grid, x[:, :, m:], xp[:, :, m:], k, "J2", step)
    return j1, j2


@dataclass(frozen=True)
class WronskianValue:
    value: np.ndarray
    pair: tuple
    t: float


def wronskian_matrix(bx, bxp, cx, cxp):
    """``B^T C' - B'^T C`` (stack-aware)."""
    return np.swapaxes(bx, -1, -2) @ cxp - np.swapaxes(bxp, -1, -2) @ cx


def wronskian(b, c, t):
    """Wronskian of two trajectories at time ``t`` (constant in ``t`` in exact arithmetic)."""
    if b.profile is not c.profile and b.profile.spec != c.profile.spec:
        raise ProfileMismatchError("trajectories belong to different profiles")
    bx, bxp = b.at(t)
    cx, cxp = c.at(t)
    return WronskianValue(wronskian_matrix(bx, bxp, cx, cxp), (b.label, c.label), float(t))


def wronskian_drift(b, c):
    """``sup_t ||W(t) - W(t_0)||`` over the common grid, ``t_0`` the grid point nearest 0."""
    if len(b.grid) != len(c.grid) or not np.array_equal(b.grid, c.grid):
        raise ValueError("trajectories must share a grid")
    w = wronskian_matrix(b.X, b.Xp, c.X, c.Xp)
    i0 = int(np.argmin(np.abs(b.grid)))
    return float(np.max(np.linalg.norm(w - w[i0], ord=2, axis=(1, 2))))


def _sigma_min(x):
    return np.linalg.svd(x, compute_uv=False)[..., -1]


def first_conjugate_time(a):
    """First ``t != 0`` (moving away from 0) where the field ``A`` is singular.

    Candidates are sign changes of ``det A`` between grid points (refined by
    bisection) and local minima of the smallest singular value, refined by a
    bounded scalar minimisation; the latter catches even-multiplicity zeros
    where ``det A`` touches 0 without changing sign.  A candidate is kept when
    ``sigma_min < 1e-10 |t|^(n-1)``.  Returns ``None`` when there is none.
    """
    if a.seed not in ("A", "J2"):
        raise ValueError("first_conjugate_time expects an A-type trajectory")
    return _first_singular(a, 0.0)


def conjugate_pair(profile, a, b, step):
    """First time in ``(a, b]`` conjugate to ``a``, or ``None``.

    By the Morse index theorem the segment ``[a, b]`` is free of conjugate
    pairs exactly when the field vanishing at ``a`` stays invertible on
    ``(a, b]``.  This also catches pairs that straddle 0, which
    :func:`first_conjugate_time` cannot see.
    """
    if not b > a:
        raise ValueError("need a < b")
    traj = integrate(profile, "J2", a, b, step)
    return _first_singular(traj, float(a))


def _first_singular(a, origin):
    n = a.profile.n
    forward = a.grid[-1] > origin
    order = np.arange(len(a.grid)) if forward else np.arange(len(a.grid))[::-1]
    grid = a.grid[order]
    keep = grid != origin
    grid = grid[keep]
    xs = a.X[order][keep]
    if len(grid) < 2:
        return None
    dets = np.linalg.det(xs)
    sig = _sigma_min(xs)

    def threshold(t):
        return 1e-10 * abs(t - origin) ** (n - 1)

    def det_at(t):
        return np.linalg.det(a.at(t)[0])

    def sig_at(t):
        return float(_sigma_min(a.at(t)[0]))

    found = []
    flips = np.nonzero(np.sign(dets[:-1]) * np.sign(dets[1:]) < 0)[0]
    for i in flips:
        lo, hi = grid[i], grid[i + 1]
        dlo = det_at(lo)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            dm = det_at(mid)
            if dm == 0.0:
                lo = hi = mid
                break
            if np.sign(dm) == np.sign(dlo):
                lo, dlo = mid, dm
            else:
                hi = mid
        found.append(0.5 * (lo + hi))
        break  # later flips are further from the origin

    interior = np.nonzero((sig[1:-1] <= sig[:-2]) & (sig[1:-1] <= sig[2:]))[0] + 1
    low = np.nonzero(sig < threshold(grid))[0]
    for i in sorted(set(interior.tolist()) | set(low.tolist())):
        if found and abs(grid[i] - origin) > abs(found[0] - origin):
            break
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, len(grid) - 1)]
        lo, hi = min(lo, hi), max(lo, hi)
        if lo < origin < hi:
            continue
        # work in an offset from the bracket centre: the bounded method's
        # relative tolerance then scales with the offset, not with |t|
        c = grid[i]
        res = minimize_scalar(
            lambda u: sig_at(c + u), bounds=(lo - c, hi - c), method="bounded", options={"xatol": 1e-13}
        )
        tmin = float(c + res.x)
        if res.fun < threshold(tmin):
            found.append(tmin)
            break
    if not found:
        return None
    return min(found, key=lambda t: abs(t - origin))
