import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geolab.curvature_models import constant_profile, random_seeded_profile, seeded_profile
from geolab.jacobi import (
    ConjugatePointError,
    IntegrationError,
    ProfileMismatchError,
    conjugate_pair,
    field_A,
    first_conjugate_time,
    fundamental,
    integrate,
    wronskian,
    wronskian_drift,
)

from .conftest import rel_err


def _closed_A(c, t):
    if c == 0:
        return t, np.ones_like(t)
    if c < 0:
        k = math.sqrt(-c)
        return np.sinh(k * t) / k, np.cosh(k * t)
    k = math.sqrt(c)
    return np.sin(k * t) / k, np.cos(k * t)


@pytest.mark.parametrize("c", [0.0, -1.0, -4.0, 0.5])
@pytest.mark.parametrize("n", [2, 4])
def test_field_A_against_closed_form(c, n):
    p = constant_profile(n, c, horizon=10.0)
    a = field_A(p, 4.0, 1e-3)
    ts = np.linspace(0.1, 4.0, 97)
    x, xp = a.at(ts)
    ax, axp = _closed_A(c, ts)
    eye = np.eye(n - 1)
    assert rel_err(x, ax[:, None, None] * eye) < 1e-10
    assert rel_err(xp, axp[:, None, None] * eye) < 1e-9


def test_rk4_is_fourth_order():
    p = constant_profile(2, -1.0)
    errs = []
    for h in (0.1, 0.05):
        a = field_A(p, 2.0, h)
        errs.append(abs(a.X[-1, 0, 0] - math.sinh(2.0)))
    assert 14.0 < errs[0] / errs[1] < 18.0


def test_fundamental_solutions_closed_form():
    p = constant_profile(3, -1.0)
    j1, j2 = fundamental(p, 3.0, 1e-3)
    assert j1.seed == "J1" and j2.seed == "J2"
    ts = np.linspace(0, 3, 31)
    assert rel_err(j1.at(ts)[0][:, 0, 0], np.cosh(ts)) < 1e-11
    assert rel_err(j2.at(ts)[0][:, 1, 1], np.sinh(ts)) < 1e-11


def test_backward_integration_and_grid_order():
    p = constant_profile(2, -1.0)
    tr = integrate(p, "J1", 0.0, -3.0, 1e-3)
    assert tr.grid[0] == -3.0 and tr.grid[-1] == 0.0
    assert np.all(np.diff(tr.grid) > 0)
    x, xp = tr.at(-2.5)
    assert x[0, 0] == pytest.approx(math.cosh(2.5), rel=1e-11)
    assert xp[0, 0] == pytest.approx(-math.sinh(2.5), rel=1e-11)


def test_custom_seed_and_vector_field():
    p = constant_profile(3, 0.0)
    tr = integrate(p, ([1.0, 2.0], [0.0, -1.0]), 0.0, 2.0, 1e-2)
    assert tr.X.shape[1:] == (2, 1)
    assert np.allclose(tr.X[-1, :, 0], [1.0, 0.0])


def test_dense_output_rejects_outside_range():
    a = field_A(constant_profile(2, 0.0), 1.0, 1e-2)
    with pytest.raises(ValueError):
        a.at(1.5)


def test_horizon_must_cover_range():
    p = random_seeded_profile(2, 0, horizon=5.0)
    with pytest.raises(ValueError):
        integrate(p, "A", 0.0, 6.0, 1e-2)


def test_overflow_is_reported():
    p = constant_profile(2, -1e6)
    with pytest.raises(IntegrationError) as info:
        integrate(p, "J1", 0.0, 20.0, 1e-1)
    assert 0.0 <= info.value.last_valid_t < 20.0


# ---------------------------------------------------------------------------
# Wronskian


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 4), st.integers(0, 5000))
def test_wronskian_conserved(n, seed):
    p = random_seeded_profile(n, seed, horizon=10.0)
    j1, j2 = fundamental(p, 10.0, 1e-3)
    w0 = wronskian(j1, j2, 0.0).value
    assert np.allclose(w0, np.eye(n - 1), atol=1e-14)
    scale = max(1.0, float(np.max(np.abs(j1.X))) * float(np.max(np.abs(j2.Xp))))
    assert wronskian_drift(j1, j2) <= 1e-8 * scale
    assert wronskian_drift(j2, j2) <= 1e-8 * scale


def test_wronskian_profile_mismatch():
    a = field_A(constant_profile(2, 0.0), 1.0, 1e-2)
    b = field_A(constant_profile(2, -1.0), 1.0, 1e-2)
    with pytest.raises(ProfileMismatchError):
        wronskian(a, b, 0.5)


def test_self_wronskian_zero_for_A():
    p = random_seeded_profile(3, 7, horizon=8.0)
    a = field_A(p, 8.0, 1e-3)
    w = wronskian(a, a, 5.0).value
    assert np.max(np.abs(w)) <= 1e-9 * (1 + np.max(np.abs(a.X)) * np.max(np.abs(a.Xp)))


# ---------------------------------------------------------------------------
# conjugate points


@pytest.mark.parametrize("n", [2, 3])
def test_sphere_conjugate_time(n):
    a = field_A(constant_profile(n, 1.0), 5.0, 1e-3)
    assert first_conjugate_time(a) == pytest.approx(math.pi, abs=1e-9)


def test_sphere_conjugate_time_backward():
    a = field_A(constant_profile(2, 4.0), -3.0, 1e-3)
    assert first_conjugate_time(a) == pytest.approx(-math.pi / 2, abs=1e-9)


def test_no_conjugate_time_for_nonpositive_curvature():
    for c in (0.0, -1.0):
        assert first_conjugate_time(field_A(constant_profile(3, c), 10.0, 1e-3)) is None


def test_even_multiplicity_touch_is_found():
    # one direction conjugate at pi, other never: det changes sign
    # both directions conjugate at pi: det ~ (t - pi)^2 touches zero
    p = constant_profile(3, 1.0)
    a = field_A(p, 4.0, 1e-2)
    dets = a.det()
    assert np.all(dets[1:] >= -1e-12)
    assert first_conjugate_time(a) == pytest.approx(math.pi, abs=1e-8)


def test_first_conjugate_time_needs_A_type():
    tr = integrate(constant_profile(2, 1.0), "J1", 0.0, 4.0, 1e-2)
    with pytest.raises(ValueError):
        first_conjugate_time(tr)


def test_conjugate_pair_straddling_zero():
    p = constant_profile(2, 1.0)
    assert conjugate_pair(p, -1.0, 3.0, 1e-3) == pytest.approx(math.pi - 1.0, abs=1e-9)
    assert conjugate_pair(p, -1.0, 2.0, 1e-3) is None
    with pytest.raises(ValueError):
        conjugate_pair(p, 1.0, 1.0, 1e-3)


def test_conjugate_pair_seen_only_across_zero():
    # the field from 0 stays invertible on [0, 10] but a pair across 0 exists
    p = random_seeded_profile(4, 2, horizon=16.0)
    assert first_conjugate_time(field_A(p, 10.0, 1e-3)) is None
    assert first_conjugate_time(field_A(p, -10.0, 1e-3)) is None
    tc = conjugate_pair(p, -5.0, 5.0, 1e-3)
    assert tc is not None and -5.0 < tc <= 5.0


def test_conjugate_point_error_fields():
    err = ConjugatePointError(1.5, "J2")
    assert err.t == 1.5 and err.what == "J2" and "1.5" in str(err)


def test_seeded_profile_oracle_against_integration():
    p = seeded_profile(["0.3*sin(t)*tanh(t)^2", "-0.2*sin(1.3*t)*tanh(0.5*t)^2"], horizon=10.0)
    a = field_A(p, 10.0, 1e-3)
    ts = np.linspace(0.1, 10.0, 100)
    ox, oxp = p.oracle(ts)
    x, xp = a.at(ts)
    assert rel_err(x, ox) < 1e-8
    assert rel_err(xp, oxp) < 1e-8
