import json
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from geolab.curvature_models import (
    CLOSED_FORM_METRICS,
    CoordinateMetric,
    FrameDriftError,
    GeodesicSpec,
    MetricDegenerateError,
    ProfileError,
    SinTanhSeed,
    conformal_metric,
    constant_profile,
    estimate_bounds,
    frame_defect,
    is_sign_changing,
    parse_profile,
    profile_from_metric,
    random_seeded_profile,
    rotate_profile,
    sampled_profile,
    seeded_profile,
)

T_GRID = np.linspace(0.0, 10.0, 501)


def _sympy_curvature(phi_text, ts):
    """-w''/w for w = t exp(phi), evaluated independently with sympy."""
    t = sp.Symbol("t", positive=True)
    phi = sp.sympify(phi_text.replace("^", "**"), locals={"t": t})
    w = t * sp.exp(phi)
    k = sp.lambdify(t, sp.simplify(-sp.diff(w, t, 2) / w), "mpmath")
    return np.array([float(k(x)) for x in ts])


# ---------------------------------------------------------------------------
# constant and seeded profiles


@pytest.mark.parametrize("n,c,kl,km", [(2, 0.0, 0.0, 0.0), (3, -1.0, 1.0, 1.0), (2, 1.0, 0.0, 1.0), (4, -4.0, 2.0, 4.0)])
def test_constant_profile(n, c, kl, km):
    p = constant_profile(n, c)
    assert p.m == n - 1
    assert np.array_equal(p.evaluate(1.7), c * np.eye(n - 1))
    assert p.evaluate(T_GRID).shape == (len(T_GRID), n - 1, n - 1)
    assert (p.k_lower, p.k_max) == (kl, km)
    b = estimate_bounds(p)
    assert (b.k_lower, b.k_max) == (kl, km)


def test_constant_profile_rejects_bad_dimension():
    with pytest.raises(ProfileError):
        constant_profile(1, 0.0)


def test_zero_seed_is_flat():
    p = seeded_profile(["0"], horizon=10.0)
    assert np.max(np.abs(p.evaluate(T_GRID))) == 0.0
    a, ap = p.oracle(T_GRID)
    assert np.allclose(a[:, 0, 0], T_GRID) and np.allclose(ap[:, 0, 0], 1.0)


def test_log_sinh_seed_is_hyperbolic():
    p = seeded_profile(["log(sinh(t)/t)"], horizon=10.0)
    assert np.max(np.abs(p.evaluate(T_GRID) + 1.0)) < 1e-12
    a, _ = p.oracle(T_GRID[1:])
    assert np.allclose(a[:, 0, 0], np.sinh(T_GRID[1:]), rtol=1e-13)


def test_sign_changing_seed_against_sympy():
    text = "0.3*sin(t)*tanh(t)^2"
    p = seeded_profile([text], horizon=10.0)
    ts = np.linspace(0.05, 10.0, 40)
    assert np.allclose(p.evaluate(ts)[:, 0, 0], _sympy_curvature(text, ts), rtol=1e-9, atol=1e-12)
    k = p.evaluate(T_GRID)[:, 0, 0]
    assert k.min() < 0 < k.max()
    assert is_sign_changing(p)
    a, _ = p.oracle(T_GRID[1:])
    assert np.all(a[:, 0, 0] > 0)


def test_seeded_profile_is_even():
    p = seeded_profile(["0.3*sin(t)*tanh(t)^2", "0.2*cos(2*t)*tanh(t)^2"], horizon=10.0)
    assert np.array_equal(p.evaluate(-T_GRID), p.evaluate(T_GRID))
    a_neg, _ = p.oracle(-T_GRID)
    a_pos, _ = p.oracle(T_GRID)
    assert np.allclose(a_neg, -a_pos)


@pytest.mark.parametrize("bad", ["1+t^2", "t", "sin(t)"])
def test_seed_must_vanish_to_second_order(bad):
    with pytest.raises(ProfileError):
        seeded_profile([bad])


def test_sin_tanh_seed_matches_expression_seed():
    seed = SinTanhSeed([0.2, -0.1], [0.7, 1.9], [0.3, 2.0])
    p1 = seeded_profile([seed], horizon=10.0)
    p2 = seeded_profile([seed.text], horizon=10.0)
    assert np.allclose(p1.evaluate(T_GRID), p2.evaluate(T_GRID), rtol=1e-10, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 4), st.integers(0, 10_000))
def test_profile_invariants(n, seed):
    p = random_seeded_profile(n, seed, horizon=12.0)
    k = p.evaluate(np.linspace(-12.0, 12.0, 2001))
    norms = np.linalg.norm(k, ord=2, axis=(1, 2))
    assert np.max(np.abs(k - np.swapaxes(k, 1, 2))) <= 1e-12 * (1 + norms.max())
    assert np.all(norms <= p.k_max * (1 + 1e-9) + 1e-12)
    shifted = k + p.k_lower**2 * np.eye(n - 1)
    assert np.linalg.eigvalsh(shifted).min() >= -1e-9
    b = estimate_bounds(p)
    # grid scan sits at or just below the refined bounds
    assert p.k_max * (1 - 1e-6) <= b.k_max <= p.k_max * (1 + 1e-12)
    assert b.k_lower <= p.k_lower * (1 + 1e-12) + 1e-15
    assert b.k_lower >= p.k_lower * (1 - 1e-6) - 1e-12


def test_random_profile_is_reproducible():
    a = random_seeded_profile(3, 11)
    b = random_seeded_profile(3, 11)
    assert a.fingerprint == b.fingerprint
    assert np.array_equal(a.evaluate(T_GRID), b.evaluate(T_GRID))
    assert a.fingerprint != random_seeded_profile(3, 12).fingerprint


def test_rotation_gives_non_diagonal_profile_with_same_spectrum():
    p = random_seeded_profile(3, 4, horizon=10.0)
    th = 0.4
    q = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    r = rotate_profile(p, q)
    k = r.evaluate(T_GRID)
    assert np.max(np.abs(k[:, 0, 1])) > 1e-3
    assert np.allclose(np.linalg.eigvalsh(k), np.linalg.eigvalsh(p.evaluate(T_GRID)), atol=1e-12)
    with pytest.raises(ProfileError):
        rotate_profile(p, 2 * np.eye(2))


def test_sampled_profile_interpolates():
    ts = np.linspace(-5, 5, 201)
    p = sampled_profile(ts, np.cos(ts))
    tq = np.linspace(-4.9, 4.9, 77)
    assert np.max(np.abs(p.evaluate(tq)[:, 0, 0] - np.cos(tq))) < 1e-6
    assert p.k_max == pytest.approx(1.0)
    with pytest.raises(ProfileError):
        sampled_profile(ts[::-1], np.cos(ts))


# ---------------------------------------------------------------------------
# coordinate metrics


def _sympy_gauss_curvature(kappa, point):
    """Gaussian curvature -Lap(log lam)/lam^2 of lam^2 (dx^2 + dy^2)."""
    x, y = sp.symbols("x y", real=True)
    lam = 2 / (1 + kappa * (x**2 + y**2))
    k = -(sp.diff(sp.log(lam), x, 2) + sp.diff(sp.log(lam), y, 2)) / lam**2
    return float(k.subs({x: point[0], y: point[1]}))


@pytest.mark.parametrize("kappa", [-1.0, 1.0])
def test_riemann_tensor_against_symbolic_gauss_curvature(kappa):
    metric = conformal_metric(2, kappa)
    pt = np.array([0.3, -0.2])
    r = metric.riemann(pt)
    g = metric.g(pt)
    r_low = np.einsum("im,mjkl->ijkl", g, r)
    sectional = r_low[0, 1, 0, 1] / np.linalg.det(g)
    assert sectional == pytest.approx(_sympy_gauss_curvature(kappa, pt), rel=1e-12)


def test_finite_difference_christoffels_close_to_closed_form():
    closed = conformal_metric(3, -1.0)
    fd = CoordinateMetric(3, closed.g, name="fd")
    pt = np.array([0.2, -0.1, 0.3])
    assert np.max(np.abs(fd.christoffel(pt) - closed.christoffel(pt))) < 1e-8
    assert np.max(np.abs(fd.christoffel_derivative(pt) - closed.christoffel_derivative(pt))) < 1e-5


def test_geodesic_spec_normalization():
    metric = conformal_metric(3, -1.0)
    geo = GeodesicSpec.normalized(metric, [0.2, 0.0, 0.1], [1.0, 2.0, -1.0])
    geo.check(metric)
    with pytest.raises(ProfileError):
        GeodesicSpec(np.zeros(3), np.array([1.0, 0.0, 0.0])).check(metric)


def test_euclidean_metric_is_flat():
    metric = CLOSED_FORM_METRICS["euclidean"](3)
    geo = GeodesicSpec.normalized(metric, [0.0, 1.0, 2.0], [1.0, 1.0, 0.0])
    p = profile_from_metric(metric, geo, 3.0, 0.05)
    assert np.max(np.abs(p.extras["samples"])) == 0.0


def test_poincare_disc_from_origin():
    metric = CLOSED_FORM_METRICS["poincare_ball"](2)
    geo = GeodesicSpec.normalized(metric, [0.0, 0.0], [1.0, 0.0])
    p = profile_from_metric(metric, geo, 5.0)
    assert np.max(np.abs(p.extras["samples"] + 1.0)) < 1e-8
    assert frame_defect(p) < 1e-6


def test_poincare_ball_off_centre_geodesic():
    metric = CLOSED_FORM_METRICS["poincare_ball"](3)
    geo = GeodesicSpec.normalized(metric, [0.1, -0.2, 0.05], [0.3, 1.0, -0.4])
    p = profile_from_metric(metric, geo, 4.0)
    ks = p.extras["samples"]
    assert np.max(np.abs(ks + np.eye(2))) < 1e-8
    assert p.k_lower == pytest.approx(1.0, abs=1e-8)
    assert frame_defect(p) < 1e-6
    # spline between samples
    assert np.max(np.abs(p.evaluate(np.linspace(-3.99, 3.99, 97)) + np.eye(2))) < 1e-8


def test_stereographic_sphere():
    metric = CLOSED_FORM_METRICS["sphere_stereographic"](3)
    geo = GeodesicSpec.normalized(metric, [0.0, 0.1, 0.0], [1.0, 0.0, 0.2])
    p = profile_from_metric(metric, geo, 1.5)
    assert np.max(np.abs(p.extras["samples"] - np.eye(2))) < 1e-8


def test_stereographic_chart_breaks_down_near_antipode():
    metric = CLOSED_FORM_METRICS["sphere_stereographic"](2)
    geo = GeodesicSpec.normalized(metric, [0.0, 0.0], [1.0, 0.0])
    with pytest.raises((FrameDriftError, MetricDegenerateError)):
        profile_from_metric(metric, geo, 5.0)


def test_product_metric_block_structure():
    metric = CLOSED_FORM_METRICS["product_flat_poincare"](3, flat_dims=1)
    geo = GeodesicSpec.normalized(metric, [0.0, 0.1, 0.0], [0.0, 1.0, 0.0])
    p = profile_from_metric(metric, geo, 3.0)
    ev = np.linalg.eigvalsh(p.extras["samples"])
    assert np.max(np.abs(ev[:, 0] + 1.0)) < 1e-8
    assert np.max(np.abs(ev[:, 1])) < 1e-8


def test_degenerate_metric_is_reported():
    def g(x):
        return np.diag([1.0, math.exp(-60.0 * x[0])])

    def dg(x):
        out = np.zeros((2, 2, 2))
        out[0, 1, 1] = -60.0 * math.exp(-60.0 * x[0])
        return out

    def ddg(x):
        out = np.zeros((2, 2, 2, 2))
        out[0, 0, 1, 1] = 3600.0 * math.exp(-60.0 * x[0])
        return out

    metric = CoordinateMetric(2, g, dg, ddg, name="squash")
    geo = GeodesicSpec.normalized(metric, [0.0, 0.0], [1.0, 0.0])
    with pytest.raises(MetricDegenerateError):
        profile_from_metric(metric, geo, 2.0, 1e-3)


# ---------------------------------------------------------------------------
# profile strings


def test_parse_profile_kinds(tmp_path):
    assert parse_profile("constant:n=3,c=-1").k_lower == 1.0
    p = parse_profile("seeded:n=3,phi=0.3*sin(t)*tanh(t)^2;0")
    assert p.n == 3 and p.kind == "diagonal-seeded"
    assert parse_profile("random:n=2,seed=5,horizon=12").horizon == 12.0
    f = tmp_path / "ball.json"
    f.write_text(json.dumps({"dim": 2, "kind": "poincare_ball", "horizon": 2.0}))
    pm = parse_profile(f"metric:{f}")
    assert pm.kind == "sampled-from-metric"
    pm2 = parse_profile(f"metric:{f}", {"u": [0.0, 1.0]})
    assert pm2.fingerprint != pm.fingerprint
    s = tmp_path / "samples.json"
    ts = np.linspace(-3, 3, 61)
    s.write_text(json.dumps({"dim": 2, "kind": "samples", "t": ts.tolist(), "K": (-np.ones_like(ts)).tolist()}))
    assert parse_profile(f"metric:{s}").k_lower == pytest.approx(1.0)


@pytest.mark.parametrize(
    "spec",
    ["constant:c=1", "constant:n=2,c=1,bogus=3", "warp:n=2", "seeded:n=3,phi=0;0;0", "seeded:n=2,phi=os(t)"],
)
def test_parse_profile_rejects(spec):
    with pytest.raises(ValueError):
        parse_profile(spec)


def test_fingerprint_depends_only_on_spec():
    a = parse_profile("constant:n=2,c=-1")
    b = constant_profile(2, -1.0)
    assert a.fingerprint == b.fingerprint
    assert len(a.fingerprint) == 16
