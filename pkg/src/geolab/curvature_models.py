"""Curvature operator curves ``K(t)`` along unit-speed geodesics.

A :class:`CurvatureProfile` is the symmetric ``(n-1) x (n-1)`` matrix curve
that enters the Jacobi equation ``X'' + K X = 0`` in a parallel orthonormal
frame.  Profiles come from three sources:

* constant sectional curvature (closed form),
* seeded diagonal profiles built from an exact Jacobi field
  ``w_i(t) = t exp(phi_i(t))``; these never have conjugate points but their
  curvature may change sign,
* a coordinate metric, through a joint geodesic / parallel-transport solve.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .expr import ExpressionSeed

DEFAULT_HORIZON = 64.0
BOUNDS_GRID_STEP = 1e-3


class ProfileError(ValueError):
    """Invalid profile construction input."""


class FrameDriftError(RuntimeError):
    """Parallel frame lost orthonormality during the metric solve."""

    def __init__(self, t, defect):
        super().__init__(f"frame orthonormality defect {defect:.3e} at t={t:.6g}")
        self.t = t
        self.defect = defect


class MetricDegenerateError(RuntimeError):
    """Metric tensor became (numerically) singular along the geodesic."""

    def __init__(self, t, cond):
        super().__init__(f"metric condition number {cond:.3e} at t={t:.6g}")
        self.t = t
        self.cond = cond


@dataclass(frozen=True, eq=False)
class CurvatureProfile:
    """Immutable curvature curve on ``[t_min, horizon]``.

    ``fn`` maps an array of times of shape ``(N,)`` to matrices ``(N, m, m)``
    with ``m = n - 1``.  ``oracle``, when present, maps times to the exact
    pair ``(A(t), A'(t))`` of the field with ``A(0) = 0, A'(0) = 1``.
    """

    n: int
    kind: str
    fn: Callable
    k_max: float
    k_lower: float
    horizon: float
    t_min: float
    spec: str = ""
    oracle: Optional[Callable] = None
    extras: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.n - 1

    @property
    def fingerprint(self):
        return hashlib.sha256(self.spec.encode()).hexdigest()[:16]

    def evaluate(self, t):
        """``K(t)``: a matrix for scalar ``t``, a stack for array ``t``."""
        arr = np.asarray(t, dtype=float)
        out = self.fn(np.atleast_1d(arr))
        return out[0] if arr.ndim == 0 else out

    def covers(self, a, b):
        lo, hi = min(a, b), max(a, b)
        slack = 1e-12 * max(1.0, abs(self.horizon), abs(self.t_min))
        return lo >= self.t_min - slack and hi <= self.horizon + slack


def _check_dim(n):
    if int(n) != n or n < 2:
        raise ProfileError(f"dimension must be an integer >= 2, got {n}")
    return int(n)


def constant_profile(n, c, horizon=DEFAULT_HORIZON):
    """Constant sectional curvature ``c``: ``K(t) = c * 1``."""
    n = _check_dim(n)
    m = n - 1
    c = float(c)
    eye = np.eye(m)

    def fn(t):
        return np.broadcast_to(c * eye, (len(t), m, m)).copy()

    if c <= 0.0:
        k = np.sqrt(-c)

        def oracle(t):
            t = np.asarray(t, dtype=float)
            if k == 0.0:
                a, ap = t, np.ones_like(t)
            else:
                a, ap = np.sinh(k * t) / k, np.cosh(k * t)
            return a[..., None, None] * eye, ap[..., None, None] * eye
    else:
        k = np.sqrt(c)

        def oracle(t):
            t = np.asarray(t, dtype=float)
            return (np.sin(k * t) / k)[..., None, None] * eye, np.cos(k * t)[..., None, None] * eye

    return CurvatureProfile(
        n=n,
        kind="constant",
        fn=fn,
        k_max=abs(c),
        k_lower=float(np.sqrt(max(-c, 0.0))),
        horizon=float(horizon),
        t_min=-float(horizon),
        spec=f"constant:n={n},c={c!r}",
        oracle=oracle,
        extras={"c": c},
    )


def _tanh_over_t(t):
    small = np.abs(t) < 1e-4
    safe = np.where(small, 1.0, t)
    return np.where(small, 1.0 - t * t / 3.0, np.tanh(safe) / safe)


class SinTanhSeed:
    """Closed-form seed ``phi(t) = tanh(t)^2 * sum_j a_j sin(w_j t + b_j)``.

    ``tanh^2`` vanishes to second order at 0, so ``phi(0) = phi'(0) = 0``
    whatever the trigonometric part.
    """

    def __init__(self, amps, freqs, phases):
        self.amps = np.asarray(amps, dtype=float)
        self.freqs = np.asarray(freqs, dtype=float)
        self.phases = np.asarray(phases, dtype=float)
        self.text = "tanh(t)^2*(" + "+".join(
            f"{float(a)!r}*sin({float(w)!r}*t+{float(b)!r})" for a, w, b in zip(self.amps, self.freqs, self.phases)
        ) + ")"

    def initial_values(self):
        return 0.0, 0.0

    def _g(self, t):
        arg = np.multiply.outer(t, self.freqs) + self.phases
        s, c = np.sin(arg), np.cos(arg)
        g = s @ self.amps
        g1 = c @ (self.amps * self.freqs)
        g2 = -(s @ (self.amps * self.freqs**2))
        return g, g1, g2

    @staticmethod
    def _h(t):
        th = np.tanh(t)
        sech2 = 1.0 - th * th
        h = th * th
        h1_over_t = 2.0 * _tanh_over_t(t) * sech2
        h1 = 2.0 * th * sech2
        h2 = 2.0 * sech2 * sech2 - 4.0 * th * th * sech2
        return h, h1, h1_over_t, h2, th

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return self._h(t)[0] * self._g(t)[0]

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        h, h1, _, _, _ = self._h(t)
        g, g1, _ = self._g(t)
        return h1 * g + h * g1

    def d1_over_t(self, t):
        t = np.asarray(t, dtype=float)
        _, _, h1_t, _, th = self._h(t)
        g, g1, _ = self._g(t)
        # h/t = tanh(t) * tanh(t)/t
        return h1_t * g + th * _tanh_over_t(t) * g1

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        h, h1, _, h2, _ = self._h(t)
        g, g1, g2 = self._g(t)
        return h2 * g + 2.0 * h1 * g1 + h * g2


def _as_seed(phi):
    if isinstance(phi, (str,)) or not hasattr(phi, "d1_over_t"):
        return ExpressionSeed(phi)
    return phi


def seeded_profile(phis, horizon=DEFAULT_HORIZON, spec=None):
    """Diagonal profile with exact Jacobi field ``diag(t exp(phi_i(t)))``.

    ``phis`` holds ``n - 1`` seeds: expression strings, sympy expressions or
    objects exposing ``value/d1/d2/d1_over_t``.  The curvature is
    ``K_i = -w_i''/w_i = -(2 phi'/t + phi'^2 + phi'')``, extended evenly to
    negative times.
    """
    seeds = [_as_seed(p) for p in phis]
    if not seeds:
        raise ProfileError("need at least one seed")
    for i, s in enumerate(seeds):
        v0, v1 = s.initial_values()
        if abs(v0) > 1e-12 or abs(v1) > 1e-12:
            raise ProfileError(f"seed {i} has phi(0)={v0:g}, phi'(0)={v1:g}; both must vanish")
    m = len(seeds)
    n = m + 1

    def diag_k(t):
        t = np.abs(t)
        out = np.zeros((len(t), m, m))
        for i, s in enumerate(seeds):
            d1 = s.d1(t)
            out[:, i, i] = -(2.0 * s.d1_over_t(t) + d1 * d1 + s.d2(t))
        return out

    def oracle(t):
        t = np.asarray(t, dtype=float)
        at = np.abs(t)
        a = np.zeros(t.shape + (m, m))
        ap = np.zeros(t.shape + (m, m))
        for i, s in enumerate(seeds):
            e = np.exp(s.value(at))
            a[..., i, i] = np.sign(t) * at * e
            ap[..., i, i] = e * (1.0 + at * s.d1(at))
        return a, ap

    if spec is None:
        spec = f"seeded:n={n},phi=" + ";".join(s.text for s in seeds)
    k_lower, k_max = _scan_bounds(diag_k, 0.0, horizon, BOUNDS_GRID_STEP)
    return CurvatureProfile(
        n=n,
        kind="diagonal-seeded",
        fn=diag_k,
        k_max=k_max,
        k_lower=k_lower,
        horizon=float(horizon),
        t_min=-float(horizon),
        spec=spec,
        oracle=oracle,
        extras={"seeds": seeds},
    )


def random_seeded_profile(n, seed, terms=3, amplitude=0.3, freq_range=(0.5, 2.0), horizon=DEFAULT_HORIZON):
    """Seeded profile with random :class:`SinTanhSeed` seeds (bounded coefficients)."""
    rng = np.random.default_rng(seed)
    seeds = []
    for _ in range(n - 1):
        seeds.append(
            SinTanhSeed(
                rng.uniform(-amplitude, amplitude, terms),
                rng.uniform(*freq_range, terms),
                rng.uniform(0.0, 2.0 * np.pi, terms),
            )
        )
    return seeded_profile(seeds, horizon=horizon, spec=f"random:n={n},seed={seed}")


def is_sign_changing(profile, step=1e-2):
    """True when ``K(t)`` has both positive and negative eigenvalues on ``[0, horizon]``."""
    ev = np.linalg.eigvalsh(profile.evaluate(np.arange(0.0, profile.horizon, step)))
    return bool(ev.min() < 0.0 < ev.max())


def conjugate_free_family(count, first_seed=0, dims=(2, 3, 4), window=10.0, horizon=16.0, step=5e-3):
    """Sign-changing random seeded profiles with no conjugate pair on ``[-window, window]``.

    A seeded profile's field ``t exp(phi)`` vanishes only at 0, so by Sturm
    separation any conjugate pair must straddle 0; such pairs do occur and
    are screened out here.  Dimensions cycle through ``dims``; seeds are
    tried in increasing order from ``first_seed``.  Returns ``count``
    profiles.
    """
    from .jacobi import conjugate_pair

    out = []
    seed = first_seed
    while len(out) < count:
        n = dims[len(out) % len(dims)]
        prof = random_seeded_profile(n, seed, horizon=horizon)
        seed += 1
        if is_sign_changing(prof) and conjugate_pair(prof, -window, window, step) is None:
            out.append(prof)
    return out


def rotate_profile(profile, q):
    """Conjugate a profile by a constant orthogonal matrix ``q`` (non-diagonal test cases)."""
    q = np.asarray(q, dtype=float)
    if not np.allclose(q @ q.T, np.eye(profile.m), atol=1e-12):
        raise ProfileError("rotation must be orthogonal")

    def fn(t):
        return q @ profile.fn(t) @ q.T

    def rotated_oracle(t):
        a, ap = profile.oracle(t)
        return q @ a @ q.T, q @ ap @ q.T

    oracle = rotated_oracle if profile.oracle is not None else None

    qtag = hashlib.sha256(q.tobytes()).hexdigest()[:8]
    return CurvatureProfile(
        n=profile.n,
        kind=profile.kind,
        fn=fn,
        k_max=profile.k_max,
        k_lower=profile.k_lower,
        horizon=profile.horizon,
        t_min=profile.t_min,
        spec=profile.spec + f"@rot{qtag}",
        oracle=oracle,
        extras=dict(profile.extras, rotation=q),
    )


def _scan_bounds(fn, t0, t1, step):
    t = np.arange(t0, t1 + 0.5 * step, step)
    ev = np.linalg.eigvalsh(0.5 * (fn(t) + np.swapaxes(fn(t), -1, -2)))
    k_max = float(np.max(np.abs(ev)))
    k_lower = float(np.sqrt(max(0.0, -float(ev.min()))))
    return k_lower, k_max


@dataclass(frozen=True)
class CurvatureBounds:
    k_lower: float
    k_max: float
    grid: np.ndarray


def estimate_bounds(profile, grid_step=BOUNDS_GRID_STEP):
    """Grid scan of ``K``: returns ``k_lower`` (``K >= -k_lower^2``) and ``k_max = sup ||K||``."""
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    grid = np.arange(profile.t_min, profile.horizon + 0.5 * grid_step, grid_step)
    grid = grid[grid <= profile.horizon]
    ev = np.linalg.eigvalsh(profile.evaluate(grid))
    return CurvatureBounds(
        k_lower=float(np.sqrt(max(0.0, -float(ev.min())))),
        k_max=float(np.max(np.abs(ev))),
        grid=grid,
    )


# ---------------------------------------------------------------------------
# coordinate metrics


@dataclass
class CoordinateMetric:
    """Metric ``g(x)`` on a coordinate chart of ``R^dim``.

    ``dg(x)[k, i, j] = d_k g_ij`` and ``ddg(x)[l, k, i, j] = d_l d_k g_ij``
    are optional; missing ones are replaced by central differences.
    """

    dim: int
    g: Callable
    dg: Optional[Callable] = None
    ddg: Optional[Callable] = None
    name: str = "metric"

    def _h(self, x, scale):
        return scale * (1.0 + np.linalg.norm(x))

    def metric_derivative(self, x):
        if self.dg is not None:
            return np.asarray(self.dg(x), dtype=float)
        return self.fd_metric_derivative(x)

    def fd_metric_derivative(self, x):
        h = self._h(x, 1e-5)
        out = np.empty((self.dim, self.dim, self.dim))
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            out[k] = (self.g(x + e) - self.g(x - e)) / (2.0 * h)
        return out

    def metric_second_derivative(self, x):
        if self.ddg is not None:
            return np.asarray(self.ddg(x), dtype=float)
        h = self._h(x, 1e-4)
        d = self.dim
        out = np.empty((d, d, d, d))
        for a in range(d):
            ea = np.zeros(d)
            ea[a] = h
            for b in range(a, d):
                eb = np.zeros(d)
                eb[b] = h
                val = (self.g(x + ea + eb) - self.g(x + ea - eb) - self.g(x - ea + eb) + self.g(x - ea - eb)) / (4 * h * h)
                out[a, b] = out[b, a] = val
        return out

    def christoffel(self, x, dg=None):
        """``Gamma[i, j, k]`` = ``Gamma^i_{jk}``."""
        ginv = np.linalg.inv(self.g(x))
        dg = self.metric_derivative(x) if dg is None else dg
        # S[l, j, k] = d_j g_lk + d_k g_lj - d_l g_jk
        s = dg.transpose(1, 0, 2) + dg.transpose(1, 2, 0) - dg
        return 0.5 * np.tensordot(ginv, s, axes=1)

    def christoffel_derivative(self, x):
        """``dGamma[m, i, j, k]`` = ``d_m Gamma^i_{jk}``."""
        ginv = np.linalg.inv(self.g(x))
        dg = self.metric_derivative(x)
        ddg = self.metric_second_derivative(x)
        s = np.einsum("jlk->ljk", dg) + np.einsum("klj->ljk", dg) - dg
        ds = np.einsum("mjlk->mljk", ddg) + np.einsum("mklj->mljk", ddg) - ddg
        dginv = -np.einsum("ia,mab,bl->mil", ginv, dg, ginv)
        return 0.5 * (np.einsum("mil,ljk->mijk", dginv, s) + np.einsum("il,mljk->mijk", ginv, ds))

    def riemann(self, x):
        """``R[i, j, k, l]`` with ``R(d_k, d_l) d_j = R^i_{jkl} d_i``."""
        gam = self.christoffel(x)
        dgam = self.christoffel_derivative(x)
        return (
            np.einsum("kilj->ijkl", dgam)
            - np.einsum("likj->ijkl", dgam)
            + np.einsum("ikp,plj->ijkl", gam, gam)
            - np.einsum("ilp,pkj->ijkl", gam, gam)
        )


def conformal_metric(dim, curvature, flat_dims=0, name=None):
    """``R^flat_dims x`` (conformal model of constant curvature ``kappa``).

    On the conformal block ``g = lam^2 * 1`` with ``lam = 2 / (1 + kappa |y|^2)``:
    ``kappa = -1`` is the Poincare ball, ``kappa = +1`` the stereographic
    sphere.  ``flat_dims = dim`` gives the Euclidean metric.
    """
    kappa = float(curvature)
    p = int(flat_dims)
    q = dim - p
    sl = slice(p, dim)

    def lam(x):
        y = x[sl]
        return 2.0 / (1.0 + kappa * (y @ y))

    def g(x):
        x = np.asarray(x, dtype=float)
        out = np.eye(dim)
        if q:
            out[sl, sl] *= lam(x) ** 2
        return out

    def dg(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros((dim, dim, dim))
        if q:
            lm = lam(x)
            for k in range(p, dim):
                # d_k lam = -kappa lam^2 y_k
                out[k, sl, sl] = -2.0 * kappa * lm**3 * x[k] * np.eye(q)
        return out

    def ddg(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros((dim, dim, dim, dim))
        if q:
            lm = lam(x)
            for a in range(p, dim):
                for b in range(p, dim):
                    coef = -2.0 * kappa * (-3.0 * kappa * lm**4 * x[a] * x[b] + lm**3 * (a == b))
                    out[a, b, sl, sl] = coef * np.eye(q)
        return out

    return CoordinateMetric(dim=dim, g=g, dg=dg, ddg=ddg, name=name or f"conformal(kappa={kappa},flat={p})")


CLOSED_FORM_METRICS = {
    "euclidean": lambda dim, **kw: conformal_metric(dim, 0.0, flat_dims=dim, name="euclidean"),
    "poincare_ball": lambda dim, **kw: conformal_metric(dim, -1.0, name="poincare_ball"),
    "sphere_stereographic": lambda dim, **kw: conformal_metric(dim, 1.0, name="sphere_stereographic"),
    "product_flat_poincare": lambda dim, flat_dims=1, **kw: conformal_metric(
        dim, -1.0, flat_dims=flat_dims, name=f"product_flat{flat_dims}_poincare"
    ),
}


@dataclass(frozen=True)
class GeodesicSpec:
    x: np.ndarray
    u: np.ndarray

    @classmethod
    def normalized(cls, metric, x, u):
        """Rescale ``u`` to unit ``g(x)``-length."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return cls(x, u / np.sqrt(u @ metric.g(x) @ u))

    def check(self, metric):
        norm = np.sqrt(self.u @ metric.g(self.x) @ self.u)
        if abs(norm - 1.0) > 1e-10:
            raise ProfileError(f"initial direction has g-norm {norm:.12g}, expected 1")


def _initial_frame(metric, geo):
    """Positively oriented g-orthonormal basis at x whose last vector is u."""
    g = metric.g(geo.x)
    d = metric.dim
    vecs = [geo.u]
    for e in np.eye(d):
        v = e.copy()
        for w in vecs:
            v = v - (w @ g @ v) * w
        nv = np.sqrt(v @ g @ v)
        if nv > 1e-8:
            vecs.append(v / nv)
        if len(vecs) == d:
            break
    frame = np.column_stack(vecs[1:] + vecs[:1])
    if np.linalg.det(frame) < 0:
        frame[:, 0] = -frame[:, 0]
    return frame


def _transport_rhs(metric, state, d):
    x = state[:d]
    v = state[d : 2 * d]
    e = state[2 * d :].reshape(d, d)
    gv = metric.christoffel(x) @ v
    acc = -(gv @ v)
    de = -(gv @ e)
    return np.concatenate([v, acc, de.ravel()])


def _solve_transport(metric, geo, t_end, step):
    """RK4 for the geodesic plus a parallel frame; returns times, points, frames."""
    d = metric.dim
    nsteps = max(1, int(np.ceil(abs(t_end) / step - 1e-9)))
    h = t_end / nsteps
    frame = _initial_frame(metric, geo)
    y = np.concatenate([geo.x, geo.u, frame.ravel()])
    ts = h * np.arange(nsteps + 1)
    xs = np.empty((nsteps + 1, d))
    frames = np.empty((nsteps + 1, d, d))
    for i in range(nsteps + 1):
        xs[i] = y[:d]
        frames[i] = y[2 * d :].reshape(d, d)
        g = metric.g(y[:d])
        cond = np.linalg.cond(g)
        if not np.isfinite(cond) or cond > 1e12:
            raise MetricDegenerateError(ts[i], cond)
        gram = frames[i].T @ g @ frames[i]
        defect = np.max(np.abs(gram - np.eye(d)))
        if defect > 1e-6:
            raise FrameDriftError(ts[i], defect)
        if i == nsteps:
            break
        k1 = _transport_rhs(metric, y, d)
        k2 = _transport_rhs(metric, y + 0.5 * h * k1, d)
        k3 = _transport_rhs(metric, y + 0.5 * h * k2, d)
        k4 = _transport_rhs(metric, y + h * k3, d)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return ts, xs, frames


def _curvature_matrix(metric, x, frame):
    g = metric.g(x)
    r = metric.riemann(x)
    v = frame[:, -1]
    es = frame[:, :-1]
    # K_ab = g(R(e_a, v) v, e_b)
    rv = np.einsum("ijkl,j,l->ik", r, v, v)
    k = np.einsum("im,mb,ik,ka->ab", g, es, rv, es)
    return 0.5 * (k + k.T)


def profile_from_metric(metric, geo, horizon, step=1e-2, spec=None):
    """Curvature profile along the geodesic ``t -> exp_x(t u)``, ``|t| <= horizon``.

    The geodesic and a parallel orthonormal frame (last vector = velocity)
    are integrated forward and backward; ``K`` is sampled at every step and
    interpolated by cubic splines.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    geo.check(metric)
    tf, xf, ef = _solve_transport(metric, geo, horizon, step)
    tb, xb, eb = _solve_transport(metric, geo, -horizon, step)
    ts = np.concatenate([tb[::-1], tf[1:]])
    xs = np.concatenate([xb[::-1], xf[1:]])
    frames = np.concatenate([eb[::-1], ef[1:]])
    ks = np.array([_curvature_matrix(metric, x, e) for x, e in zip(xs, frames)])
    spline = CubicSpline(ts, ks, axis=0)
    m = metric.dim - 1

    def fn(t):
        out = spline(t)
        return 0.5 * (out + np.swapaxes(out, -1, -2)).reshape(len(t), m, m)

    ev = np.linalg.eigvalsh(ks)
    if spec is None:
        spec = f"metric:{metric.name}:x={list(map(float, geo.x))}:u={list(map(float, geo.u))}"
    return CurvatureProfile(
        n=metric.dim,
        kind="sampled-from-metric",
        fn=fn,
        k_max=float(np.max(np.abs(ev))),
        k_lower=float(np.sqrt(max(0.0, -float(ev.min())))),
        horizon=float(horizon),
        t_min=-float(horizon),
        spec=spec,
        extras={"times": ts, "points": xs, "frames": frames, "samples": ks, "metric": metric},
    )


def frame_defect(profile):
    """Max ``|<e_i, e_j>_g - delta_ij|`` over the stored frames of a metric profile."""
    metric = profile.extras["metric"]
    worst = 0.0
    for x, e in zip(profile.extras["points"], profile.extras["frames"]):
        worst = max(worst, float(np.max(np.abs(e.T @ metric.g(x) @ e - np.eye(metric.dim)))))
    return worst


def sampled_profile(times, samples, spec="samples"):
    """Profile from tabulated ``K`` samples (cubic spline in ``t``)."""
    times = np.asarray(times, dtype=float)
    ks = np.asarray(samples, dtype=float)
    if ks.ndim == 1:
        ks = ks[:, None, None]
    if np.any(np.diff(times) <= 0):
        raise ProfileError("sample times must be strictly increasing")
    spline = CubicSpline(times, ks, axis=0)
    m = ks.shape[1]

    def fn(t):
        out = spline(t)
        return 0.5 * (out + np.swapaxes(out, -1, -2)).reshape(len(t), m, m)

    ev = np.linalg.eigvalsh(0.5 * (ks + np.swapaxes(ks, -1, -2)))
    return CurvatureProfile(
        n=m + 1,
        kind="sampled-from-metric",
        fn=fn,
        k_max=float(np.max(np.abs(ev))),
        k_lower=float(np.sqrt(max(0.0, -float(ev.min())))),
        horizon=float(times[-1]),
        t_min=float(times[0]),
        spec=spec,
    )


# ---------------------------------------------------------------------------
# profile strings


def _split_params(body):
    params = {}
    for part in body.split(","):
        if not part.strip():
            continue
        if "=" not in part:
            raise ProfileError(f"expected key=value, got {part!r}")
        key, value = part.split("=", 1)
        params[key.strip()] = value.strip()
    return params


def load_metric_file(path, overrides=None):
    """Read a metric JSON file; returns ``(metric, geodesic, horizon, step)``."""
    data = json.loads(Path(path).read_text())
    data.update(overrides or {})
    dim = int(data["dim"])
    kind = data["kind"]
    horizon = float(data.get("horizon", 10.0))
    step = float(data.get("step", 1e-2))
    if kind == "samples":
        return None, None, horizon, step
    if kind not in CLOSED_FORM_METRICS:
        raise ProfileError(f"unknown metric kind {kind!r}")
    extra = {k: data[k] for k in ("flat_dims",) if k in data}
    metric = CLOSED_FORM_METRICS[kind](dim, **extra)
    x = np.asarray(data.get("x", [0.0] * dim), dtype=float)
    u = np.asarray(data.get("u", [0.0] * (dim - 1) + [1.0]), dtype=float)
    return metric, GeodesicSpec.normalized(metric, x, u), horizon, step


def parse_profile(spec, overrides=None):
    """Build a profile from a CLI profile string.

    ``constant:n=<int>,c=<float>``, ``seeded:n=<int>,phi=<expr>[;<expr>...]``,
    ``random:n=<int>,seed=<int>`` or ``metric:<file>``.  All but ``metric``
    accept an optional ``horizon=<float>``.
    """
    kind, _, body = spec.partition(":")
    if kind == "metric":
        path = body
        data = json.loads(Path(path).read_text())
        data.update(overrides or {})
        if data.get("kind") == "samples":
            return sampled_profile(data["t"], data["K"], spec=spec)
        metric, geo, horizon, step = load_metric_file(path, overrides)
        tag = spec if not overrides else spec + json.dumps(overrides, sort_keys=True)
        return profile_from_metric(metric, geo, horizon, step, spec=tag)
    params = _split_params(body)
    horizon = float(params.pop("horizon", DEFAULT_HORIZON))
    try:
        n = int(params.pop("n"))
    except KeyError:
        raise ProfileError(f"profile {spec!r} is missing n") from None
    if kind == "constant":
        c = float(params.pop("c"))
        prof = constant_profile(n, c, horizon=horizon)
    elif kind == "seeded":
        phis = [p for p in params.pop("phi").split(";") if p.strip()]
        if len(phis) == 1:
            phis = phis * (n - 1)
        if len(phis) != n - 1:
            raise ProfileError(f"expected {n - 1} seed expressions, got {len(phis)}")
        prof = seeded_profile(phis, horizon=horizon, spec=spec)
    elif kind == "random":
        prof = random_seeded_profile(n, int(params.pop("seed")), horizon=horizon)
    else:
        raise ProfileError(f"unknown profile kind {kind!r}")
    if params:
        raise ProfileError(f"unknown keys {sorted(params)} in profile {spec!r}")
    return prof
