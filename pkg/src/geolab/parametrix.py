"""Hadamard parametrix coefficients on radially symmetric models.

On a model whose volume density ``vartheta(r)`` depends on the distance only,
the coefficients ``u_k(x, x')`` are functions of ``r = d(x, x')`` and the
Laplacian in ``x'`` acts as ``f'' + (vartheta'/vartheta) f'``.  The transport
recursions then reduce to cumulative one-dimensional quadratures:

    u_0 = Theta^{-1/2},
    u_{k+1}(r) = r^{-k-1} Theta(r)^{-1/2} int_0^r s^k Theta(s)^{1/2} (-Lap u_k)(s) ds,

and for the modified coefficients (weights written with ``1/u~_0``, whose
value at ``s = 0`` is 1, so the integrand has a finite limit there):

    u~_0 = (sinh(r)^{n-1} / vartheta)^{1/2},
    u~_{k+1}(r) = u~_0(r) sinh(r)^{-k-1}
                  int_0^r sinh(s)^k u~_0(s)^{-1} (-Lap + k^2 - n + 1) u~_k(s) ds.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid

from .jacobi import ConjugatePointError


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class RadialModel:
    """Volume density ``vartheta(r)`` and its log-derivative ``vartheta'/vartheta``."""

    n: int
    density: Callable
    log_derivative: Callable
    label: str = "radial"

    def theta(self, r):
        """``Theta = vartheta / r^(n-1)`` with ``Theta(0) = 1``."""
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, self.density(safe) / safe ** (self.n - 1), 1.0)


def flat_model(n):
    return RadialModel(n, lambda r: r ** (n - 1), lambda r: (n - 1) / r, f"flat:n={n}")


def constant_curvature_model(n, c):
    """``vartheta = s_c(r)^(n-1)`` with ``s_c`` the curvature-``c`` sine."""
    c = float(c)
    if c == 0.0:
        return flat_model(n)
    if c < 0:
        k = np.sqrt(-c)
        return RadialModel(
            n,
            lambda r: (np.sinh(k * r) / k) ** (n - 1),
            lambda r: (n - 1) * k / np.tanh(k * r),
            f"constant:n={n},c={c!r}",
        )
    k = np.sqrt(c)
    return RadialModel(
        n,
        lambda r: (np.sin(k * r) / k) ** (n - 1),
        lambda r: (n - 1) * k / np.tan(k * r),
        f"constant:n={n},c={c!r}",
    )


def hyperbolic_model(n):
    return constant_curvature_model(n, -1.0)


def model_from_profile(profile, r_max, step=1e-3):
    """Radial model whose density is ``det A`` of a curvature profile.

    ``vartheta'/vartheta = Tr(A' A^{-1})``.  Values come from the dense output
    of one integration of ``A`` on ``[0, r_max]``.

    The result is a smooth radial model only if ``vartheta`` is even in
    ``r``.  Seeded profiles with odd ``phi`` (for instance
    ``sin(t) tanh(t)^2``) give ``|r|^3`` terms, and ``u_2`` is then singular
    at the origin.
    """
    from .jacobi import field_A, first_conjugate_time

    a = field_A(profile, r_max, step)
    tc = first_conjugate_time(a)
    if tc is not None:
        raise ConjugatePointError(tc, "A")

    def density(r):
        return np.linalg.det(a.at(np.asarray(r, dtype=float))[0])

    def log_derivative(r):
        x, xp = a.at(np.asarray(r, dtype=float))
        return np.trace(xp @ np.linalg.inv(x), axis1=-2, axis2=-1)

    return RadialModel(profile.n, density, log_derivative, f"profile:{profile.spec}")


def parse_model(spec):
    """``flat:n=<int>`` or ``hyperbolic:n=<int>``."""
    kind, _, body = spec.partition(":")
    params = dict(p.split("=", 1) for p in body.split(",") if p)
    n = int(params.get("n", 2))
    if kind == "flat":
        return flat_model(n)
    if kind == "hyperbolic":
        return hyperbolic_model(n)
    raise ModelError(f"unknown model {spec!r}")


def _uniform(r_grid, min_points=5):
    r = np.asarray(r_grid, dtype=float)
    if len(r) < min_points:
        raise ModelError(f"grid too coarse: need at least {min_points} points")
    h = r[1] - r[0]
    if h <= 0 or not np.allclose(np.diff(r), h, rtol=1e-9, atol=1e-12 * max(1.0, abs(r[-1]))):
        raise ModelError("grid must be uniform and increasing")
    return r, h


def radial_laplacian(f, model, r_grid):
    """``f'' + (vartheta'/vartheta) f'`` by second-order differences.

    Centred stencils in the interior, one-sided second-order ones at the
    ends.  If the grid starts at ``r = 0`` the value there (where the
    operator has the finite limit ``n f''(0)``) is extrapolated from the
    first interior points.
    """
    r, h = _uniform(r_grid)
    f = np.asarray(f, dtype=float)
    d1 = np.empty_like(f)
    d2 = np.empty_like(f)
    d1[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    d2[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / (h * h)
    d1[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
    d1[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    d2[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / (h * h)
    d2[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / (h * h)
    out = np.empty_like(f)
    pos = r > 0
    out[pos] = d2[pos] + model.log_derivative(r[pos]) * d1[pos]
    if r[0] == 0.0:
        # quadratic extrapolation of the interior values; the direct limit
        # n f''(0) carries a different O(h^2) error constant and the jump
        # is amplified by later differentiations
        out[0] = 3.0 * out[1] - 3.0 * out[2] + out[3]
    return out


@dataclass(frozen=True)
class CoefficientTable:
    r: np.ndarray
    u: np.ndarray  # shape (K_max + 1, len(r))
    variant: str
    quad_order: int
    model: str

    @property
    def k_max(self):
        return self.u.shape[0] - 1


def _cumulative(y, r, quad_order):
    if quad_order == 4:
        return cumulative_simpson(y, x=r, initial=0.0)
    if quad_order == 2:
        return cumulative_trapezoid(y, x=r, initial=0.0)
    raise ModelError("quad_order must be 2 (trapezoid) or 4 (Simpson)")


def _check_grid(r):
    if r[0] != 0.0:
        raise ModelError("coefficient grids start at r = 0")


def hadamard_coefficients(model, k_max, r_grid, quad_order=4):
    """Standard coefficients ``u_0 .. u_K`` on a uniform grid starting at 0.

    Each level differentiates the previous one twice, so rounding noise grows
    roughly like ``h^(-3/2)`` per level; beyond ``k = 2`` refining the grid
    past ``h ~ 3e-3`` makes the result worse, not better.
    """
    r, _ = _uniform(r_grid)
    _check_grid(r)
    th = model.theta(r)
    if np.any(th <= 0):
        raise ModelError("Theta must be positive on the grid")
    sq = np.sqrt(th)
    rows = [1.0 / sq]
    pos = r > 0
    for k in range(k_max):
        lap = radial_laplacian(rows[-1], model, r)
        integral = _cumulative(r**k * sq * (-lap), r, quad_order)
        nxt = np.empty_like(r)
        nxt[pos] = integral[pos] / (r[pos] ** (k + 1) * sq[pos])
        nxt[0] = -lap[0] / (k + 1)
        rows.append(nxt)
    return CoefficientTable(r, np.array(rows), "standard", quad_order, model.label)


def modified_coefficients(model, k_max, r_grid, quad_order=4):
    """Modified coefficients ``u~_0 .. u~_K`` (hyperbolic-normalised weights).

    Near ``r = 0`` rounding noise in ``u~_k`` is divided by roughly ``h^2``
    per level, so ``u~_2`` and beyond are only meaningful away from the
    origin on fine grids.
    """
    r, _ = _uniform(r_grid)
    _check_grid(r)
    n = model.n
    th = model.theta(r)
    if np.any(th <= 0):
        raise ModelError("Theta must be positive on the grid")
    # sinh(r)^(n-1)/vartheta = (sinh(r)/r)^(n-1) / Theta, finite at 0
    shc = np.where(r > 0, np.sinh(r) / np.where(r > 0, r, 1.0), 1.0)
    u0 = np.sqrt(shc ** (n - 1) / th)
    rows = [u0]
    pos = r > 0
    sh = np.sinh(r)
    for k in range(k_max):
        cur = rows[-1]
        op = -radial_laplacian(cur, model, r) + (k * k - n + 1) * cur
        integral = _cumulative(sh**k / u0 * op, r, quad_order)
        nxt = np.empty_like(r)
        nxt[pos] = u0[pos] * integral[pos] / sh[pos] ** (k + 1)
        nxt[0] = op[0] / (k + 1)
        rows.append(nxt)
    return CoefficientTable(r, np.array(rows), "modified", quad_order, model.label)


@dataclass(frozen=True)
class GrowthEnvelope:
    k: int
    C: float
    alpha: float
    max_violation: float


ZERO_ROW = 1e-12


def growth_fit(table, r_min=0.0):
    """Per-row exponential envelope ``|u_k(r)| <= C exp(alpha r)``.

    ``alpha`` is the least-squares slope of ``log|u_k|`` on the tail half of
    the grid; ``C`` is then the smallest constant making the envelope hold
    on ``r >= r_min``.  ``max_violation`` is the largest ratio of ``|u_k|``
    to the raw fitted curve (before ``C`` is raised).  Rows with
    ``max |u_k| <= 1e-12`` return ``C = alpha = 0``.
    """
    out = []
    r = table.r
    sel = r >= r_min
    half = len(r) // 2
    for k, row in enumerate(table.u):
        a = np.abs(row)
        if np.max(a[sel]) <= ZERO_ROW:
            out.append(GrowthEnvelope(k, 0.0, 0.0, 0.0))
            continue
        tail = (np.arange(len(r)) >= half) & (a > 0)
        slope, icpt = np.polyfit(r[tail], np.log(a[tail]), 1)
        fitted = np.exp(icpt + slope * r[sel])
        ratio = a[sel] / fitted
        out.append(GrowthEnvelope(k, float(np.exp(icpt) * ratio.max()), float(slope), float(ratio.max())))
    return out
