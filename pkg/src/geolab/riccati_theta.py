"""Riccati solutions, the volume densities Theta/vartheta and the lower-bound certificate.

For an invertible Jacobi field ``B``, ``V = B' B^{-1}`` solves
``V' + V^2 + K = 0``.  Two solutions matter here: ``U = A' A^{-1}`` and the
stable solution ``V`` of Green's limit field.  With ``M(t) = int_t^inf A^{-1}A^{-T}``,

    U - V = A^{-T} M^{-1} A^{-1},

and the comparison bound ``|V| <= k coth(kt)`` (valid when ``K >= -k^2``)
turns this into ``||A^{-1}(t)||^2 <= 2 k coth(kt) ||N_{s,s}||`` for
``t > s``, hence a lower bound on ``vartheta = det A``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._linalg import kcoth, opnorm, sym
from .boundary_fields import _cached_A, bridge_matrix, gram_integral, growth_matrix
from .jacobi import ConjugatePointError, conjugate_pair, first_conjugate_time, integrate

RESIDUAL_MARGIN = 0.2


@dataclass(frozen=True, eq=False)
class RiccatiTrajectory:
    grid: np.ndarray
    V: np.ndarray
    source: str
    trajectory: object
    symmetry_defect: float
    self_wronskian: float
    residual: float

    def at(self, t):
        x, xp = self.trajectory.at(t)
        return xp @ np.linalg.inv(x)


def _centered_derivative(v, h):
    """Five-point centred difference on the interior ``[2, N-2)``."""
    return (-v[4:] + 8.0 * v[3:-1] - 8.0 * v[1:-3] + v[:-4]) / (12.0 * h)


def riccati_from(trajectory, source=None, t_range=None):
    """``V = X' X^{-1}`` on the trajectory grid.

    ``t = 0`` is dropped for A-type trajectories (removable singularity);
    any other singular ``X`` raises :class:`ConjugatePointError`.
    ``t_range`` restricts the grid.  The recorded residual is
    ``max ||V' + V^2 + K|| / (1 + ||V||^2)`` with ``V'`` from centred
    differences, over points at least 0.2 away from the range ends and
    from ``t = 0``.
    """
    grid = trajectory.grid
    keep = np.ones(len(grid), dtype=bool)
    if trajectory.seed in ("A", "J2"):
        keep &= grid != 0.0
    if t_range is not None:
        keep &= (grid >= t_range[0]) & (grid <= t_range[1])
    idx = np.nonzero(keep)[0]
    x = trajectory.X[idx]
    xp = trajectory.Xp[idx]
    t = grid[idx]
    cond = np.linalg.cond(x)
    bad = np.nonzero(~np.isfinite(cond) | (cond > 1e12))[0]
    if len(bad):
        raise ConjugatePointError(float(t[bad[0]]), trajectory.seed)
    v = xp @ np.linalg.inv(x)
    asym = float(np.max(opnorm(v - np.swapaxes(v, -1, -2)))) if len(v) else 0.0
    w = np.swapaxes(x, -1, -2) @ xp - np.swapaxes(xp, -1, -2) @ x
    self_w = float(np.max(np.abs(w))) if len(w) else 0.0

    residual = float("nan")
    if len(t) >= 5:
        h = t[1] - t[0]
        dv = _centered_derivative(v, h)
        tc = t[2:-2]
        kk = trajectory.K[idx][2:-2]
        vc = v[2:-2]
        res = opnorm(dv + vc @ vc + kk) / (1.0 + opnorm(vc) ** 2)
        sel = (tc >= t[0] + RESIDUAL_MARGIN) & (tc <= t[-1] - RESIDUAL_MARGIN) & (np.abs(tc) >= RESIDUAL_MARGIN)
        if np.any(sel):
            residual = float(np.max(res[sel]))
    if source is None:
        source = {"A": "U", "J2": "U"}.get(trajectory.seed, "custom")
    return RiccatiTrajectory(t, v, source, trajectory, asym, self_w, residual)


def riccati_U(profile, t_end, step=1e-3):
    a = _cached_A(profile, float(t_end), step)
    tc = first_conjugate_time(a)
    if tc is not None:
        raise ConjugatePointError(tc, "A")
    return riccati_from(a, source="U")


def riccati_green(profile, t_end, step=1e-3, tol=1e-10, T=None):
    """Stable solution ``V`` on ``[0, t_end]`` from the truncated Green field.

    The field ``D_T`` (vanishing at ``T``) is obtained by integrating backward
    from ``X(T) = 0, X'(T) = 1``; right multiplication by a constant matrix
    does not change ``X' X^{-1}``.  ``T`` defaults to the truncation chosen by
    :func:`growth_matrix` at ``s = t_end``.
    """
    if T is None:
        T = growth_matrix(profile, max(t_end, 1e-3), step, tol).T_used
    m = profile.m
    traj = integrate(profile, (np.zeros((m, m)), np.eye(m)), T, 0.0, step)
    rt = riccati_from(traj, source="V", t_range=(0.0, t_end))
    return rt, T


@dataclass(frozen=True)
class RiccatiBoundReport:
    k: float
    t: np.ndarray
    ratios: np.ndarray
    max_ratio: float
    ok: bool
    witness: tuple = None


def riccati_bound_check(v, k, t_grid, rel=1e-6):
    """Check ``||V(t)|| <= k coth(kt) (1 + rel)`` at each ``t`` (``1/t`` for ``k = 0``)."""
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t_grid must be positive")
    norms = opnorm(sym(v.at(t)))
    bound = kcoth(float(k), t)
    ratios = norms / bound
    worst = int(np.argmax(ratios))
    ok = bool(ratios[worst] <= 1.0 + rel)
    witness = None if ok else (float(t[worst]), float(norms[worst]), float(bound[worst]))
    return RiccatiBoundReport(float(k), t, ratios, float(ratios[worst]), ok, witness)


@dataclass(frozen=True)
class ThetaSample:
    t: float
    theta: float
    vartheta: float
    log_vartheta: float


def _checked_A(profile, t_max, step):
    a = _cached_A(profile, float(t_max), step)
    tc = first_conjugate_time(a)
    if tc is not None and tc <= t_max:
        raise ConjugatePointError(tc, "A")
    return a


def theta(profile, t_grid, step=1e-3):
    """``Theta(t) = det A(t) / t^(n-1)`` and ``vartheta(t) = det A(t)``."""
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= 0) or t.max() > profile.horizon:
        raise ValueError("t_grid must lie in (0, horizon]")
    a = _checked_A(profile, t.max(), step)
    x, _ = a.at(t)
    sign, logdet = np.linalg.slogdet(x)
    vt = sign * np.exp(logdet)
    th = vt / t ** (profile.n - 1)
    return [ThetaSample(float(ti), float(a_), float(b_), float(c_)) for ti, a_, b_, c_ in zip(t, th, vt, logdet)]


def log_derivative_check(profile, t_grid, step=1e-3):
    """Max ``|d/dt log vartheta - Tr U|`` with a five-point centred difference."""
    t = np.asarray(t_grid, dtype=float)
    d = step
    if np.any(t - 2 * d <= 0):
        raise ValueError("t_grid too close to 0 for the difference stencil")
    a = _checked_A(profile, t.max() + 2 * d, step)

    def logdet(tt):
        return np.linalg.slogdet(a.at(tt)[0])[1]

    deriv = (-logdet(t + 2 * d) + 8 * logdet(t + d) - 8 * logdet(t - d) + logdet(t - 2 * d)) / (12 * d)
    x, xp = a.at(t)
    tr_u = np.trace(xp @ np.linalg.inv(x), axis1=-2, axis2=-1)
    return float(np.max(np.abs(deriv - tr_u)))


def _tail_integrals(a, t, T, step):
    """``int_{t_i}^T A^{-1} A^{-T}`` for every ``t_i``, accumulated from the right."""
    order = np.argsort(t)
    ts = t[order]
    out = np.empty((len(t), a.profile.m, a.profile.m))
    acc = gram_integral(a, ts[-1], T, step)
    out[order[-1]] = acc
    for j in range(len(ts) - 2, -1, -1):
        acc = acc + gram_integral(a, ts[j], ts[j + 1], step)
        out[order[j]] = acc
    return out


@dataclass(frozen=True)
class InverseNormReport:
    t: np.ndarray
    identity_residual: np.ndarray
    norm_ratio: np.ndarray
    bridge_ratio: np.ndarray
    growth_vs_bridge: np.ndarray
    T_used: float
    converged: bool

    @property
    def max_identity_residual(self):
        return float(np.max(self.identity_residual))

    @property
    def max_norm_ratio(self):
        return float(np.max(self.norm_ratio))


def inverse_norm_bound_check(profile, s, t_grid, k, step=1e-3, tol=1e-10):
    """Verify ``U - V = A^{-T} M^{-1} A^{-1}`` and the norm bounds that follow.

    ``M`` is truncated at the horizon ``T`` chosen by :func:`growth_matrix`;
    ``V`` is computed independently from the field vanishing at the same
    ``T``, for which the identity is exact.  Reported per ``t``:

    * relative residual of the identity,
    * ``||A^{-1}||^2 / (2 ||M|| k coth kt)`` (should be <= 1),
    * ``||A^{-1}||^2 / (2 k coth kt ||N_{s,s}||)`` for ``t > s``,
    * ``lambda_max(M(t) - N_{s,s})`` (should be <= 0 for ``t > s``).
    """
    t = np.asarray(t_grid, dtype=float)
    t_lo, t_hi = float(t.min()), float(t.max())
    gm = growth_matrix(profile, t_lo, step, tol)
    T = gm.T_used
    a = _cached_A(profile, profile.horizon, step)
    tc = first_conjugate_time(a)
    if tc is not None:
        raise ConjugatePointError(tc, "A")
    vr, _ = riccati_green(profile, t_hi, step, tol, T=T)
    x, xp = a.at(t)
    xinv = np.linalg.inv(x)
    u = xp @ xinv
    v = vr.at(t)
    ms = _tail_integrals(a, t, T, step)
    rhs = np.swapaxes(xinv, -1, -2) @ np.linalg.inv(ms) @ xinv
    ident = opnorm(sym(u - v) - sym(rhs)) / opnorm(sym(rhs))
    inv_sq = opnorm(xinv) ** 2
    kc = kcoth(float(k), t)
    norm_ratio = inv_sq / (2.0 * opnorm(ms) * kc)
    nss = bridge_matrix(profile, s, s, step).value
    bridge_ratio = np.where(t > s, inv_sq / (2.0 * kc * opnorm(nss)), np.nan)
    order = np.where(t > s, np.linalg.eigvalsh(ms - nss)[..., -1], np.nan)
    return InverseNormReport(t, ident, norm_ratio, bridge_ratio, order, T, gm.converged)


MARGIN_FLOOR = -1e-8


@dataclass
class LowerBoundCertificate:
    profile: str
    n: int
    s: float
    k: float
    bridge_norm: float
    t: np.ndarray
    rhs: np.ndarray
    vartheta: np.ndarray
    vartheta_inv: np.ndarray
    margin: np.ndarray
    C: float
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    @property
    def min_margin(self):
        return float(np.min(self.margin))

    def to_json(self):
        return {
            "profile": self.profile,
            "s": self.s,
            "k": self.k,
            "n": self.n,
            "bridge_norm": self.bridge_norm,
            "norm": "operator",
            "frobenius_factor": math.sqrt(self.n - 1),
            "entries": [
                {"t": float(t), "vartheta": float(v), "rhs": float(r), "margin": float(g)}
                for t, v, r, g in zip(self.t, self.vartheta, self.rhs, self.margin)
            ],
            "C": self.C,
            "violations": [list(v) for v in self.violations],
        }


def lower_bound_certificate(profile, s, t_grid, step=1e-3, tol=1e-10, k=None):
    """Check ``1/vartheta(t) <= (2 k coth(kt) ||N_{s,s}||)^((n-1)/2)`` for ``t > s``.

    ``k`` defaults to ``profile.k_lower``.  Any conjugate point on
    ``[-s, max t]`` raises :class:`ConjugatePointError`: first those of ``A``
    (from 0), then pairs straddling 0.  Margins below
    ``-1e-8`` are collected as ``(t, vartheta_inv, rhs)`` violations.
    ``C = min_t 1/rhs(t)`` is the induced lower bound for ``vartheta``.
    """
    t = np.asarray(t_grid, dtype=float)
    if s <= 0:
        raise ValueError("s must be positive")
    if np.any(t <= s):
        raise ValueError("certificate grid must lie strictly above s")
    k = profile.k_lower if k is None else float(k)
    n = profile.n
    bridge = bridge_matrix(profile, s, s, step)
    nn = bridge.norm
    samples = theta(profile, t, step)
    vt = np.array([x.vartheta for x in samples])
    tc = conjugate_pair(profile, -float(s), float(t.max()), step)
    if tc is not None:
        raise ConjugatePointError(tc, f"field vanishing at {-s:g}")
    rhs = (2.0 * kcoth(k, t) * nn) ** ((n - 1) / 2.0)
    inv = 1.0 / vt
    margin = rhs - inv
    bad = np.nonzero(margin < MARGIN_FLOOR)[0]
    violations = [(float(t[i]), float(inv[i]), float(rhs[i])) for i in bad]
    return LowerBoundCertificate(
        profile=profile.spec,
        n=n,
        s=float(s),
        k=float(k),
        bridge_norm=nn,
        t=t,
        rhs=rhs,
        vartheta=vt,
        vartheta_inv=inv,
        margin=margin,
        C=float(np.min(1.0 / rhs)),
        violations=violations,
    )


@dataclass(frozen=True)
class DivergenceReport:
    t: np.ndarray
    vartheta: np.ndarray
    increasing: bool
    increasing_tail: bool


def divergence_diagnostic(profile, t_grid, step=1e-3):
    """Samples of ``vartheta`` and whether they increase (overall / on the tail half).

    Purely descriptive: pointwise growth of ``vartheta`` need not be uniform,
    so nothing is asserted.
    """
    t = np.sort(np.asarray(t_grid, dtype=float))
    vt = np.array([x.vartheta for x in theta(profile, t, step)])
    d = np.diff(vt)
    half = len(d) // 2
    return DivergenceReport(t, vt, bool(np.all(d > 0)), bool(np.all(d[half:] > 0)))
