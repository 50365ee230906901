"""Two-point boundary fields along a geodesic and Green's limit.

``D_t`` is the Jacobi field with ``D_t(0) = 1`` and ``D_t(t) = 0``.  Its
initial slope is ``D_t'(0) = -J2(t)^{-1} J1(t)``; for ``0 < s < t`` the same
field is ``A(s) int_s^t A^{-1} A^{-T}``.  The growth matrix
``M(s) = int_s^inf A^{-1} A^{-T}`` and the bridge matrix
``N_{s,t} = D_{-s}'(0) - D_t'(0)`` are built from these.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson

from ._linalg import asym_norm, lambda_min, opnorm, sym
from .jacobi import ConjugatePointError, field_A, first_conjugate_time, fundamental

MIN_PANELS = 64


@lru_cache(maxsize=64)
def _cached_A(profile, t_end, step):
    return field_A(profile, t_end, step)


@lru_cache(maxsize=64)
def _cached_fundamental(profile, t_end, step):
    return fundamental(profile, t_end, step)


def clear_caches():
    _cached_A.cache_clear()
    _cached_fundamental.cache_clear()


@dataclass(frozen=True)
class BoundarySlope:
    t: float
    slope: np.ndarray
    method: str


@dataclass(frozen=True)
class GrowthMatrix:
    s: float
    value: np.ndarray
    T_used: float
    tail_increment: float
    converged: bool


@dataclass(frozen=True)
class BridgeMatrix:
    s: float
    t: float
    value: np.ndarray
    raw: np.ndarray
    asymmetry: float

    @property
    def lambda_min(self):
        return float(lambda_min(self.value))

    @property
    def norm(self):
        return float(opnorm(self.value))


@dataclass(frozen=True)
class GreenLimit:
    slope: np.ndarray
    alternative: np.ndarray
    residual: float
    T_used: float
    converged: bool


@dataclass(frozen=True)
class GreenField:
    s: float
    value: np.ndarray
    cond: float
    converged: bool


def _pieces(lo, hi):
    """Dyadic split of ``[lo, hi]`` near small ``lo`` where ``A^{-1}`` varies fast."""
    edges = [lo]
    while edges[-1] < min(1.0, hi) and 2.0 * edges[-1] < hi:
        edges.append(2.0 * edges[-1])
    if edges[-1] < hi:
        edges.append(hi)
    return edges


def gram_integral(a, lo, hi, step):
    """Composite Simpson integral of ``A^{-1} A^{-T}`` over ``[lo, hi]``.

    Nodes are spaced at most ``step`` apart, with at least ``MIN_PANELS``
    panels per dyadic piece.  ``A`` is read through the trajectory's dense
    output.
    """
    if hi < lo:
        raise ValueError("need lo <= hi")
    m = a.profile.m
    if hi == lo:
        return np.zeros((m, m))
    edges = _pieces(lo, hi)
    total = np.zeros((m, m))
    for x0, x1 in zip(edges[:-1], edges[1:]):
        panels = max(MIN_PANELS, int(np.ceil((x1 - x0) / step)))
        panels += panels % 2
        nodes = np.linspace(x0, x1, panels + 1)
        x, _ = a.at(nodes)
        inv = np.linalg.inv(x)
        vals = inv @ np.swapaxes(inv, -1, -2)
        total += simpson(vals, x=nodes, axis=0)
    return sym(total)


def slope_bvp(profile, t, step=1e-3):
    """``D_t'(0) = -J2(t)^{-1} J1(t)``; ``t < 0`` integrates backward."""
    if t == 0:
        raise ValueError("t must be nonzero")
    j1, j2 = _cached_fundamental(profile, float(t), step)
    tc = first_conjugate_time(j2)
    if tc is not None and abs(tc) <= abs(t):
        raise ConjugatePointError(tc, "J2")
    idx = -1 if t > 0 else 0
    x2 = j2.X[idx]
    if np.linalg.cond(x2) > 1e12:
        raise ConjugatePointError(float(t), "J2")
    return BoundarySlope(float(t), -np.linalg.solve(x2, j1.X[idx]), "bvp")


def slope_quadrature(profile, t, s_eval, step=1e-3):
    """``D_t(s) = A(s) int_s^t A^{-1} A^{-T}`` for ``0 < s < t``."""
    if not 0 < s_eval < t:
        raise ValueError("need 0 < s_eval < t")
    a = _cached_A(profile, float(t), step)
    _check_invertible(a, t)
    xs, _ = a.at(s_eval)
    return xs @ gram_integral(a, s_eval, t, step)


def _check_invertible(a, t):
    tc = first_conjugate_time(a)
    if tc is not None and abs(tc) <= abs(t):
        raise ConjugatePointError(tc, "A")


def growth_matrix(profile, s, step=1e-3, tol=1e-10):
    """``M(s)`` by horizon doubling from ``T = 4 max(1, s)``.

    Stops when the last doubling increment has norm below ``tol``.  If the
    profile horizon is reached first the result is flagged unconverged; the
    integrand is positive semidefinite so it is then a lower bound.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    horizon = profile.horizon
    T = min(4.0 * max(1.0, s), horizon)
    if T <= s:
        raise ValueError("horizon too short for the requested s")
    a = _cached_A(profile, horizon, step)
    _check_invertible(a, horizon)
    value = gram_integral(a, s, T, step)
    incr = float("inf")
    converged = False
    while True:
        if T >= horizon:
            break
        T_next = min(2.0 * T, horizon)
        inc = gram_integral(a, T, T_next, step)
        value = value + inc
        incr = float(opnorm(inc))
        T = T_next
        if incr < tol:
            converged = True
            break
    return GrowthMatrix(float(s), value, float(T), incr, converged)


def bridge_matrix(profile, s, t, step=1e-3):
    """``N_{s,t} = D_{-s}'(0) - D_t'(0)``, symmetrised; the asymmetry is kept."""
    if s <= 0 or t <= 0:
        raise ValueError("s and t must be positive")
    raw = slope_bvp(profile, -s, step).slope - slope_bvp(profile, t, step).slope
    return BridgeMatrix(float(s), float(t), sym(raw), raw, float(asym_norm(raw)))


def green_limit_slope(profile, s_fix, step=1e-3, tol=1e-10):
    """``D_{+inf}'(0)`` two ways: ``slope_bvp(T)`` and ``slope_bvp(s) + M_T(s)``."""
    gm = growth_matrix(profile, s_fix, step, tol)
    direct = slope_bvp(profile, gm.T_used, step).slope
    alt = slope_bvp(profile, s_fix, step).slope + gm.value
    return GreenLimit(direct, alt, float(opnorm(direct - alt)), gm.T_used, gm.converged)


def d_infinity(profile, s, step=1e-3, tol=1e-10):
    """``D_{+inf}(s) = A(s) M(s)``; the identity at ``s = 0``."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    if s == 0:
        return GreenField(0.0, np.eye(profile.m), 1.0, True)
    gm = growth_matrix(profile, s, step, tol)
    a = _cached_A(profile, profile.horizon, step)
    xs, _ = a.at(s)
    value = xs @ gm.value
    return GreenField(float(s), value, float(np.linalg.cond(value)), gm.converged)


def small_s_defect(profile, s_grid, step=1e-3):
    """``||D_s'(0) + 1/s|| / s`` per ``s``; bounded by a multiple of ``k_max``."""
    eye = np.eye(profile.m)
    out = []
    for s in s_grid:
        d = slope_bvp(profile, s, step).slope
        out.append(float(opnorm(sym(d + eye / s))) / s)
    return np.array(out)
