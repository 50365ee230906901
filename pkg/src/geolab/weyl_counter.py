"""Eigenvalue counting on rectangular flat tori.

The Laplace spectrum of ``R^n / (L_1 Z x ... x L_n Z)`` is
``{sum_i (2 pi m_i / L_i)^2 : m in Z^n}`` and ``N(lambda)`` counts eigenvalues
``mu <= lambda^2`` with multiplicity.
"""

from dataclasses import dataclass
from math import ceil, e, floor, gamma, log, pi

import numpy as np

DEFAULT_CAP = 10**9
GUARD = 1e-12


class EnumerationCapError(RuntimeError):
    def __init__(self, size, cap):
        super().__init__(f"enumeration of {size} lattice points exceeds cap {cap}")
        self.size = size
        self.cap = cap


@dataclass(frozen=True)
class FlatTorusModel:
    lengths: tuple

    def __post_init__(self):
        lengths = tuple(float(x) for x in np.atleast_1d(self.lengths))
        if not lengths or any(not np.isfinite(x) or x <= 0 for x in lengths):
            raise ValueError("side lengths must be positive and finite")
        object.__setattr__(self, "lengths", lengths)

    @property
    def n(self):
        return len(self.lengths)

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    def scaled(self, factor):
        return FlatTorusModel(tuple(factor * x for x in self.lengths))


@dataclass(frozen=True)
class CountResult:
    lambda_grid: np.ndarray
    counts: np.ndarray
    leading: np.ndarray
    remainder: np.ndarray
    ratio: np.ndarray  # NaN where lambda <= e

    @property
    def ratio_sup(self):
        finite = self.ratio[np.isfinite(self.ratio)]
        return float(finite.max()) if finite.size else None


def _radii(model, lam):
    return [int(ceil(lam * L / (2 * pi))) for L in model.lengths]


def count_eigenvalues(model, lam, cap=DEFAULT_CAP):
    """Exact ``#{m in Z^n : sum (2 pi m_i / L_i)^2 <= lambda^2}``.

    All axes but the last are enumerated over ``|m_i| <= ceil(lambda L_i / 2 pi)``;
    along the last axis the admissible ``|m_n|`` form an interval counted in
    closed form.  Comparisons carry a relative guard band of ``1e-12`` so
    lattice points on the sphere are counted.
    """
    lam = float(lam)
    if not lam >= 0:
        raise ValueError("lambda must be nonnegative")
    radii = _radii(model, lam)
    size = int(np.prod([2 * r + 1 for r in radii], dtype=object))
    if size > cap:
        raise EnumerationCapError(size, cap)
    budget = lam * lam * (1.0 + GUARD)
    # partial sums of (m_i / L_i)^2 over the leading axes
    partial = np.zeros(1)
    for r, L in zip(radii[:-1], model.lengths[:-1]):
        m = np.arange(-r, r + 1, dtype=float)
        partial = (partial[:, None] + (m / L)[None, :] ** 2).ravel()
        partial = partial[4 * pi * pi * partial <= budget]
    rem = budget - 4 * pi * pi * partial
    L = model.lengths[-1]
    top = np.floor(L / (2 * pi) * np.sqrt(np.maximum(rem, 0.0)))
    top = np.minimum(top, radii[-1])
    return int(np.sum(2 * top.astype(np.int64) + 1))


def unit_ball_volume(n):
    return pi ** (n / 2) / gamma(n / 2 + 1)


def weyl_leading(model, lam):
    """``omega_n vol(T) lambda^n / (2 pi)^n``."""
    lam = float(lam)
    if not lam >= 0:
        raise ValueError("lambda must be nonnegative")
    n = model.n
    return unit_ball_volume(n) * model.volume * lam**n / (2 * pi) ** n


def remainder_diagnostic(model, lambda_grid, cap=DEFAULT_CAP):
    """Counts, leading term, remainder and ``|R| / (lambda^(n-1) / log lambda)``.

    The ratio is defined only for ``lambda > e``; other entries are NaN.
    """
    grid = np.asarray(lambda_grid, dtype=float).ravel()
    counts = np.array([count_eigenvalues(model, x, cap) for x in grid], dtype=np.int64)
    leading = np.array([weyl_leading(model, x) for x in grid])
    remainder = counts - leading
    n = model.n
    ratio = np.full(grid.shape, np.nan)
    for i, x in enumerate(grid):
        if x > e:
            ratio[i] = abs(remainder[i]) / (x ** (n - 1) / log(x))
    return CountResult(grid, counts, leading, remainder, ratio)


def circle_count(L, lam):
    """Closed form for ``n = 1``: ``2 floor(lambda L / 2 pi) + 1``."""
    return 2 * int(floor(lam * L / (2 * pi) * (1 + GUARD))) + 1


def parse_torus(spec):
    """``L=<f>[,<f>...]`` (the ``L=`` prefix is optional)."""
    body = spec.split("=", 1)[1] if spec.startswith("L=") else spec
    try:
        lengths = tuple(float(x) for x in body.split(",") if x.strip())
    except ValueError as exc:
        raise ValueError(f"bad torus string {spec!r}") from exc
    return FlatTorusModel(lengths)

