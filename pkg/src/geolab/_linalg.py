"""Small dense linear-algebra helpers shared by the numerical modules."""

import numpy as np


def sym(a):
    """Symmetric part of a matrix or a stack of matrices."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def asym_norm(a):
    """Spectral norm of ``a - a^T`` (stack-aware)."""
    return opnorm(a - np.swapaxes(a, -1, -2))


def opnorm(a):
    """Operator (spectral) norm, vectorised over leading axes.

    Symmetric inputs go through ``eigvalsh``; anything else through the
    largest singular value.
    """
    a = np.asarray(a, dtype=float)
    if np.allclose(a, np.swapaxes(a, -1, -2), rtol=0.0, atol=0.0):
        return np.max(np.abs(np.linalg.eigvalsh(a)), axis=-1)
    return np.linalg.svd(a, compute_uv=False)[..., 0]


def frobenius(a):
    return np.sqrt(np.sum(np.asarray(a) ** 2, axis=(-2, -1)))


def lambda_min(a):
    """Smallest eigenvalue of the symmetric part."""
    return np.linalg.eigvalsh(sym(np.asarray(a, dtype=float)))[..., 0]


def lambda_max(a):
    return np.linalg.eigvalsh(sym(np.asarray(a, dtype=float)))[..., -1]


def kcoth(k, t):
    """``k * coth(k t)`` with the ``k -> 0`` limit ``1/t``."""
    t = np.asarray(t, dtype=float)
    if k == 0.0:
        return 1.0 / t
    return k / np.tanh(k * t)
