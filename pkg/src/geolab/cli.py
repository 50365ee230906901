"""Command-line scenario runner.

Every command builds a scenario (command, parameters, tolerances, outputs),
validates it against a strict schema, runs it and writes a CSV table plus a
JSON run report.  Exit codes: 0 all checks pass, 1 a numerical check failed,
2 invalid scenario, 3 conjugate point where none is allowed, 4 a bound that
must hold was violated.
"""

import argparse
import copy
import csv
import hashlib
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._linalg import opnorm
from .boundary_fields import bridge_matrix, growth_matrix, slope_bvp
from .curvature_models import (
    FrameDriftError,
    MetricDegenerateError,
    ProfileError,
    conjugate_free_family,
    constant_profile,
    parse_profile,
)
from .jacobi import (
    SEEDS,
    ConjugatePointError,
    IntegrationError,
    conjugate_pair,
    field_A,
    first_conjugate_time,
    fundamental,
    integrate,
    wronskian_drift,
)
from .parametrix import (
    ModelError,
    flat_model,
    growth_fit,
    hadamard_coefficients,
    hyperbolic_model,
    modified_coefficients,
    parse_model,
)
from .riccati_theta import (
    lower_bound_certificate,
    riccati_bound_check,
    riccati_green,
    riccati_U,
    theta,
)
from .weyl_counter import (
    EnumerationCapError,
    FlatTorusModel,
    count_eigenvalues,
    parse_torus,
    remainder_diagnostic,
    weyl_leading,
)

SCHEMA_VERSION = 1
COMMANDS = ("jacobi", "bridge", "theta-bound", "parametrix", "weyl", "sweep", "selftest")

EXIT_OK, EXIT_CHECK, EXIT_SCHEMA, EXIT_CONJUGATE, EXIT_FALSIFIED = 0, 1, 2, 3, 4
_SEVERITY = {"schema": EXIT_SCHEMA, "conjugate": EXIT_CONJUGATE, "falsification": EXIT_FALSIFIED, "check": EXIT_CHECK}
_PRECEDENCE = (EXIT_SCHEMA, EXIT_CONJUGATE, EXIT_FALSIFIED, EXIT_CHECK)

TOLERANCES = {
    "wronskian": 1e-8,
    "oracle_rel": 1e-6,
    "bridge_asym": 1e-9,
    "bridge_lambda_min": 1e-9,
    "margin_floor": 1e-8,
    "riccati_ratio": 1e-6,
    "growth": 1e-10,
    "flat_nullity": 1e-10,
}

DEFAULT_GRID = [0.1, 0.5, 1.0, 2.0, 5.0]
REQUIRED = object()


class ScenarioError(ValueError):
    pass


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"expected a number, got {v!r}")
    return float(v)


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(f"expected an integer, got {v!r}")
    return v


def _str(v):
    if not isinstance(v, str):
        raise ScenarioError(f"expected a string, got {v!r}")
    return v


def _floats(v):
    if isinstance(v, str):
        v = [x for x in v.split(",") if x.strip()]
        try:
            v = [float(x) for x in v]
        except ValueError:
            raise ScenarioError(f"bad number list {v!r}") from None
    if not isinstance(v, list):
        raise ScenarioError(f"expected a list of numbers, got {v!r}")
    out = [_float(x) for x in v]
    if not out:
        raise ScenarioError("empty number list")
    return out


def _dict(v):
    if not isinstance(v, dict):
        raise ScenarioError(f"expected an object, got {v!r}")
    return v


def _choice(*options):
    def check(v):
        if v not in options:
            raise ScenarioError(f"expected one of {options}, got {v!r}")
        return v

    return check


def _optional_float(v):
    return None if v is None else _float(v)


SCHEMA = {
    "jacobi": {
        "profile": (_str, REQUIRED),
        "seed": (_choice(*SEEDS), "A"),
        "t_max": (_float, 10.0),
        "step": (_float, 1e-3),
        "overrides": (_dict, {}),
    },
    "bridge": {
        "profile": (_str, REQUIRED),
        "s_grid": (_floats, DEFAULT_GRID),
        "t_grid": (_floats, DEFAULT_GRID),
        "step": (_float, 1e-3),
        "overrides": (_dict, {}),
    },
    "theta-bound": {
        "profile": (_str, REQUIRED),
        "s": (_float, 0.5),
        "t_min": (_optional_float, None),
        "t_max": (_float, 10.0),
        "t_count": (_int, 50),
        "step": (_float, 1e-3),
        "overrides": (_dict, {}),
    },
    "parametrix": {
        "model": (_str, "hyperbolic:n=3"),
        "k_max": (_int, 3),
        "r_max": (_float, 8.0),
        "r_count": (_int, 8001),
        "variant": (_choice("standard", "modified"), "standard"),
        "quad_order": (_choice(2, 4), 4),
    },
    "weyl": {
        "torus": (_str, REQUIRED),
        "lambda_max": (_float, 200.0),
        "lambda_count": (_int, 20),
        "cap": (_int, 10**9),
    },
    "selftest": {
        "step": (_float, 1e-3),
        "random_profiles": (_int, 0),
    },
}

SCENARIO_KEYS = {"command", "parameters", "tolerances", "outputs"}
SWEEP_KEYS = SCENARIO_KEYS | {"template", "axes"}
TEMPLATE_KEYS = {"command", "parameters", "tolerances"}
OUTPUT_KEYS = {"csv", "report"}


def _unknown(keys, allowed, where):
    extra = sorted(set(keys) - set(allowed))
    if extra:
        raise ScenarioError(f"unknown keys in {where}: {extra}")


def validate_parameters(command, params):
    """Fill defaults and type-check ``params`` for a non-sweep command."""
    if command not in SCHEMA:
        raise ScenarioError(f"unknown command {command!r}")
    params = _dict(params)
    schema = SCHEMA[command]
    _unknown(params, schema, f"{command} parameters")
    out = {}
    for key, (conv, default) in schema.items():
        if key in params:
            try:
                out[key] = conv(params[key])
            except ScenarioError as exc:
                raise ScenarioError(f"{command}.{key}: {exc}") from None
        elif default is REQUIRED:
            raise ScenarioError(f"{command}: missing required parameter {key!r}")
        else:
            out[key] = copy.deepcopy(default)
    for key in ("step", "t_max", "r_max", "lambda_max"):
        if key in out and not out[key] > 0:
            raise ScenarioError(f"{command}.{key} must be positive")
    for key in ("t_count", "r_count", "lambda_count", "k_max"):
        if key in out and out[key] < (0 if key == "k_max" else 1):
            raise ScenarioError(f"{command}.{key} out of range")
    return out


def validate_tolerances(tols, scale=1.0):
    tols = _dict(tols or {})
    _unknown(tols, TOLERANCES, "tolerances")
    if not (isinstance(scale, (int, float)) and scale > 0):
        raise ScenarioError("--tol-scale must be positive")
    out = dict(TOLERANCES)
    for key, value in tols.items():
        value = _float(value)
        if not value > 0:
            raise ScenarioError(f"tolerance {key!r} must be positive")
        out[key] = value
    return {k: v * scale for k, v in out.items()}


def validate_scenario(raw, tol_scale=1.0):
    """Normalise a scenario mapping; raises :class:`ScenarioError`."""
    raw = _dict(raw)
    command = raw.get("command")
    if command not in COMMANDS:
        raise ScenarioError(f"unknown or missing command {command!r}")
    _unknown(raw, SWEEP_KEYS if command == "sweep" else SCENARIO_KEYS, "scenario")
    outputs = _dict(raw.get("outputs", {}))
    _unknown(outputs, OUTPUT_KEYS, "outputs")
    for v in outputs.values():
        _str(v)
    scenario = {
        "command": command,
        "tolerances": validate_tolerances(raw.get("tolerances"), tol_scale),
        "outputs": dict(outputs),
    }
    if command != "sweep":
        scenario["parameters"] = validate_parameters(command, raw.get("parameters", {}))
        return scenario
    if "parameters" in raw:
        raise ScenarioError("sweep takes 'template' and 'axes', not 'parameters'")
    template = _dict(raw.get("template"))
    _unknown(template, TEMPLATE_KEYS, "template")
    inner = template.get("command")
    if inner not in SCHEMA or inner == "selftest":
        raise ScenarioError(f"sweep template needs a command from {sorted(set(SCHEMA) - {'selftest'})}")
    axes = _dict(raw.get("axes"))
    if not axes:
        raise ScenarioError("sweep needs at least one axis")
    for name, values in axes.items():
        if not isinstance(values, list) or not values:
            raise ScenarioError(f"axis {name!r} must be a nonempty list")
    base = _dict(template.get("parameters", {}))
    cells = []
    for combo in itertools.product(*axes.values()):
        params = copy.deepcopy(base)
        for name, value in zip(axes, combo):
            _assign(params, name, value)
        cells.append(validate_parameters(inner, params))
    merged = {**_dict(template.get("tolerances", {})), **_dict(raw.get("tolerances", {}))}
    scenario["template"] = {"command": inner, "parameters": base}
    scenario["axes"] = axes
    scenario["cells"] = cells
    scenario["tolerances"] = validate_tolerances(merged, tol_scale)
    return scenario


def _assign(params, dotted, value):
    """``a.b`` assigns ``params["a"]["b"]``; used for metric geodesic overrides."""
    keys = dotted.split(".")
    target = params
    for key in keys[:-1]:
        target = target.setdefault(key, {})
        if not isinstance(target, dict):
            raise ScenarioError(f"axis {dotted!r} does not address an object")
    target[keys[-1]] = value


# ---------------------------------------------------------------------------
# results


@dataclass
class Check:
    name: str
    passed: bool
    witness: dict = field(default_factory=dict)
    kind: str = "check"

    def to_json(self):
        return {"name": self.name, "status": "pass" if self.passed else "fail", "kind": self.kind, "witness": _jsonable(self.witness)}


@dataclass
class Outcome:
    checks: list = field(default_factory=list)
    header: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    fingerprints: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def exit_code(self):
        codes = {_SEVERITY[c.kind] for c in self.checks if not c.passed}
        for code in _PRECEDENCE:
            if code in codes:
                return code
        return EXIT_OK

    def check(self, name, passed, kind="check", **witness):
        self.checks.append(Check(name, bool(passed), witness, kind))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def fmt(x):
    """17 significant digits, enough to round-trip a double."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "" if math.isnan(x) else f"{x:.17g}"
    if x is None:
        return ""
    if isinstance(x, (list, dict)):
        return json.dumps(x, sort_keys=True)
    return str(x)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


# ---------------------------------------------------------------------------
# commands


def _profile(params, out, rng_seed=0):
    spec = params["profile"]
    if spec.startswith("random:") and "seed=" not in spec:
        spec = f"{spec},seed={rng_seed}"
    prof = parse_profile(spec, params.get("overrides") or None)
    out.fingerprints[prof.spec] = prof.fingerprint
    return prof


def run_jacobi(p, tol, out, rng_seed=0):
    prof = _profile(p, out, rng_seed)
    t_max, step, seed = p["t_max"], p["step"], p["seed"]
    traj = field_A(prof, t_max, step) if seed == "A" else integrate(prof, seed, 0.0, t_max, step)
    xn = opnorm(traj.X).max()
    xpn = opnorm(traj.Xp).max()
    drift = wronskian_drift(traj, traj)
    bound = tol["wronskian"] * (1.0 + xn * xpn)
    out.check("wronskian_conservation", drift <= bound, drift=drift, bound=bound)
    if seed == "A" and prof.oracle is not None:
        t = traj.grid
        xo, _ = prof.oracle(t)
        no = opnorm(xo)
        sel = (np.abs(t) >= 0.1) & (no >= 1e-3 * no.max())
        rel = opnorm(traj.X[sel] - xo[sel]) / no[sel]
        worst = int(np.argmax(rel))
        out.check("oracle_accuracy", rel[worst] <= tol["oracle_rel"], rel_error=rel[worst], t=t[sel][worst])
        out.summary["oracle_rel_error"] = float(rel[worst])
    if seed in ("A", "J2"):
        out.summary["first_conjugate_time"] = first_conjugate_time(traj)
    out.summary["wronskian_drift"] = drift
    m = prof.m
    idx = [(i, j) for i in range(m) for j in range(m)]
    out.header = ["t"] + [f"X_{i}{j}" for i, j in idx] + [f"Xp_{i}{j}" for i, j in idx] + ["detX"]
    dets = np.linalg.det(traj.X)
    flat_x = traj.X.reshape(len(traj.grid), -1)
    flat_xp = traj.Xp.reshape(len(traj.grid), -1)
    out.rows = [[t, *x, *xp, d] for t, x, xp, d in zip(traj.grid, flat_x, flat_xp, dets)]


def run_bridge(p, tol, out, rng_seed=0):
    prof = _profile(p, out, rng_seed)
    step = p["step"]
    # one Morse check on the widest window covers every (s, t) cell
    tc = conjugate_pair(prof, -max(p["s_grid"]), max(p["t_grid"]), step)
    if tc is not None:
        raise ConjugatePointError(tc, f"field vanishing at {-max(p['s_grid']):g}")
    out.header = ["s", "t", "lambda_min", "asymmetry", "M_norm", "tail_increment", "M_converged"]
    worst_l, worst_a = math.inf, 0.0
    bad_l, bad_a = [], []
    for s in p["s_grid"]:
        gm = growth_matrix(prof, s, step, tol["growth"])
        for t in p["t_grid"]:
            nb = bridge_matrix(prof, s, t, step)
            lam, asym = nb.lambda_min, nb.asymmetry
            out.rows.append([s, t, lam, asym, opnorm(gm.value), gm.tail_increment, gm.converged])
            worst_l = min(worst_l, lam)
            worst_a = max(worst_a, asym / (1.0 + nb.norm))
            if asym > tol["bridge_asym"] * (1.0 + nb.norm):
                bad_a.append((s, t, asym))
            if lam <= -tol["bridge_lambda_min"]:
                bad_l.append((s, t, lam))
    out.check("bridge_symmetric", not bad_a, "falsification", violations=bad_a[:5], worst_relative=worst_a)
    out.check("bridge_positive", not bad_l, "falsification", violations=bad_l[:5], min_lambda=worst_l)
    out.summary.update(min_lambda=worst_l, max_relative_asymmetry=worst_a)


def run_theta_bound(p, tol, out, rng_seed=0):
    prof = _profile(p, out, rng_seed)
    s, step = p["s"], p["step"]
    t_min = 2.0 * s if p["t_min"] is None else p["t_min"]
    grid = np.linspace(t_min, p["t_max"], p["t_count"])
    cert = lower_bound_certificate(prof, s, grid, step, tol["growth"])
    bad = np.nonzero(cert.margin < -tol["margin_floor"])[0]
    worst = int(np.argmin(cert.margin))
    out.check(
        "certificate_margin",
        bad.size == 0,
        "falsification",
        t=cert.t[worst],
        margin=cert.margin[worst],
        rhs=cert.rhs[worst],
        vartheta_inv=cert.vartheta_inv[worst],
    )
    u = riccati_U(prof, float(grid.max()), step)
    rb = riccati_bound_check(u, prof.k_lower, grid, tol["riccati_ratio"])
    out.check("riccati_bound", rb.ok, "falsification", max_ratio=rb.max_ratio, witness=rb.witness)
    out.summary.update(
        min_margin=cert.min_margin, C=cert.C, bridge_norm=cert.bridge_norm, k=cert.k, max_ratio=rb.max_ratio
    )
    out.extra["certificate"] = cert.to_json()
    out.header = ["t", "vartheta", "vartheta_inv", "rhs", "margin"]
    out.rows = [list(r) for r in zip(cert.t, cert.vartheta, cert.vartheta_inv, cert.rhs, cert.margin)]


def run_parametrix(p, tol, out, rng_seed=0):
    model = parse_model(p["model"])
    r = np.linspace(0.0, p["r_max"], p["r_count"])
    build = hadamard_coefficients if p["variant"] == "standard" else modified_coefficients
    table = build(model, p["k_max"], r, p["quad_order"])
    finite = bool(np.all(np.isfinite(table.u)))
    out.check("finite", finite)
    env = growth_fit(table)
    ok_env = all(math.isfinite(e.C) and math.isfinite(e.alpha) for e in env)
    out.check("growth_envelope_finite", ok_env, envelopes=[(e.k, e.C, e.alpha) for e in env])
    if p["model"].startswith("flat") and p["variant"] == "standard" and p["k_max"] >= 1:
        worst = float(np.max(np.abs(table.u[1:])))
        out.check("flat_nullity", worst <= tol["flat_nullity"], max_abs=worst)
    out.summary["envelopes"] = [{"k": e.k, "C": e.C, "alpha": e.alpha} for e in env]
    out.header = ["r"] + [f"u_{k}" for k in range(table.k_max + 1)]
    out.rows = [[x, *col] for x, col in zip(table.r, table.u.T)]
    out.fingerprints[model.label] = _fingerprint(model.label)


def run_weyl(p, tol, out, rng_seed=0):
    model = parse_torus(p["torus"])
    count = p["lambda_count"]
    grid = np.linspace(p["lambda_max"] / count, p["lambda_max"], count)
    res = remainder_diagnostic(model, grid, p["cap"])
    out.check("monotone", bool(np.all(np.diff(res.counts) >= 0)))
    n0 = count_eigenvalues(model, 0.0, p["cap"])
    out.check("zero_eigenvalue", n0 == 1, count=n0)
    if model.n == 1:
        lo, hi = float(res.remainder.min()), float(res.remainder.max())
        # the leading term is a float; allow its rounding only
        slack = 1e-12 * (1.0 + float(res.leading.max()))
        out.check("circle_remainder", lo >= -2 - slack and hi <= 1 + slack, min=lo, max=hi)
    finite = res.ratio[grid > math.e]
    out.check("ratio_finite", bool(np.all(np.isfinite(finite))), ratio_sup=res.ratio_sup)
    out.summary.update(ratio_sup=res.ratio_sup, max_count=int(res.counts.max()))
    out.header = ["lambda", "count", "leading", "remainder", "ratio"]
    out.rows = [list(r) for r in zip(res.lambda_grid, res.counts, res.leading, res.remainder, res.ratio)]
    spec = "torus:" + ",".join(repr(x) for x in model.lengths)
    out.fingerprints[spec] = _fingerprint(spec)


def _fingerprint(spec):
    return hashlib.sha256(spec.encode()).hexdigest()[:16]


def run_selftest(p, tol, out, rng_seed=0):
    """Closed-form constant-curvature suite plus exact lattice counts."""
    step = p["step"]
    out.header = ["check", "value", "expected", "error"]

    def close(name, value, expected, rel):
        err = abs(value - expected) / max(abs(expected), 1e-300)
        out.rows.append([name, value, expected, err])
        out.check(name, err <= rel, value=value, expected=expected, rel_error=err)

    t = np.linspace(0.1, 10.0, 100)
    for c in (0.0, -1.0, -4.0):
        for n in (2, 3, 4):
            prof = constant_profile(n, c, horizon=10.0)
            a = field_A(prof, 10.0, step)
            x, xp = a.at(t)
            xo, xpo = prof.oracle(t)
            err = max(
                float(np.max(opnorm(x - xo) / opnorm(xo))),
                float(np.max(opnorm(xp - xpo) / opnorm(xpo))),
            )
            out.rows.append([f"jacobi c={c} n={n}", err, 0.0, err])
            out.check(f"jacobi_oracle[c={c},n={n}]", err <= tol["oracle_rel"], rel_error=err)
    prof = constant_profile(2, -1.0)
    j1, j2 = fundamental(prof, 10.0, step)
    w = np.swapaxes(j1.X, 1, 2) @ j2.Xp - np.swapaxes(j1.Xp, 1, 2) @ j2.X
    drift = float(np.max(np.abs(w - 1.0)))
    out.check("wronskian_J1_J2", drift <= tol["wronskian"] * 1e4, drift=drift)
    close("slope c=-1 t=2", float(slope_bvp(prof, 2.0, step).slope[0, 0]), -1 / math.tanh(2.0), 1e-6)
    close("bridge c=-1 s=0.5 t=2", float(bridge_matrix(prof, 0.5, 2.0, step).value[0, 0]), 1 / math.tanh(0.5) + 1 / math.tanh(2.0), 1e-6)
    v, _ = riccati_green(prof, 5.0, step)
    close("green c=-1 V(3)", float(v.at(3.0)[0, 0]), -1.0, 1e-6)
    cert = lower_bound_certificate(prof, 0.5, [2.0], step)
    close("certificate |N|", cert.bridge_norm, 2 / math.tanh(0.5), 1e-6)
    close("certificate rhs", float(cert.rhs[0]), math.sqrt(2 / math.tanh(2.0) * 2 / math.tanh(0.5)), 1e-6)
    close("certificate 1/vartheta", float(cert.vartheta_inv[0]), 1 / math.sinh(2.0), 1e-6)
    out.check("certificate_margin", cert.ok, "falsification", min_margin=cert.min_margin)
    flat = lower_bound_certificate(constant_profile(2, 0.0), 1.0, [4.0], step)
    close("flat certificate margin", float(flat.margin[0]), 0.75, 1e-6)
    th = theta(prof, [2.0], step)[0]
    close("theta c=-1 t=2", th.theta, math.sinh(2.0) / 2.0, 1e-6)
    sphere = constant_profile(2, 1.0, horizon=4.0)
    tc = first_conjugate_time(field_A(sphere, 4.0, step))
    close("sphere conjugate time", tc if tc is not None else math.nan, math.pi, 1e-6 / math.pi)
    r = np.linspace(0.0, 8.0, 4001)
    flat_u = hadamard_coefficients(flat_model(3), 3, r).u
    worst = float(np.max(np.abs(flat_u[1:])))
    out.check("flat_nullity", worst <= tol["flat_nullity"], max_abs=worst)
    mod = modified_coefficients(hyperbolic_model(3), 2, r).u[0]
    close("hyperbolic modified u0", float(np.max(np.abs(mod - 1.0))) + 1.0, 1.0, 1e-10)
    sq = FlatTorusModel((2 * math.pi, 2 * math.pi))
    n81 = count_eigenvalues(sq, 5.0)
    out.rows.append(["weyl square lambda=5", n81, 81, n81 - 81])
    out.check("weyl_square_81", n81 == 81, count=n81)
    close("weyl leading", weyl_leading(sq, 5.0), 25 * math.pi, 1e-12)
    if p["random_profiles"]:
        worst_margin = math.inf
        for prof in conjugate_free_family(p["random_profiles"], first_seed=rng_seed):
            cert = lower_bound_certificate(prof, 0.5, np.linspace(1.0, 10.0, 19), step)
            worst_margin = min(worst_margin, cert.min_margin)
            out.fingerprints[prof.spec] = prof.fingerprint
        out.check("random_certificates", worst_margin >= -tol["margin_floor"], "falsification", min_margin=worst_margin)


RUNNERS = {
    "jacobi": run_jacobi,
    "bridge": run_bridge,
    "theta-bound": run_theta_bound,
    "parametrix": run_parametrix,
    "weyl": run_weyl,
    "selftest": run_selftest,
}


def execute(command, params, tolerances, rng_seed=0):
    """Run one validated command; failures become checks, never exceptions."""
    out = Outcome()
    try:
        RUNNERS[command](params, tolerances, out, rng_seed)
    except ConjugatePointError as exc:
        out.check("no_conjugate_point", False, "conjugate", t=exc.t, field=exc.what)
    except (ScenarioError, ProfileError, ModelError) as exc:
        out.check("scenario", False, "schema", error=str(exc))
    except (IntegrationError, FrameDriftError, MetricDegenerateError, EnumerationCapError) as exc:
        out.check("numerics", False, "check", error=str(exc), type=type(exc).__name__)
    except (ValueError, KeyError, OSError) as exc:
        out.check("scenario", False, "schema", error=str(exc), type=type(exc).__name__)
    return out


def _cell(args):
    command, params, tolerances, rng_seed = args
    return execute(command, params, tolerances, rng_seed)


def run_sweep(scenario, jobs=1, rng_seed=0):
    """Run every cell of the Cartesian product; results keep cell order."""
    command = scenario["template"]["command"]
    tasks = [(command, cell, scenario["tolerances"], rng_seed) for cell in scenario["cells"]]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell, tasks))
    else:
        results = [_cell(t) for t in tasks]
    axes = list(scenario["axes"])
    combos = list(itertools.product(*scenario["axes"].values()))
    keys = sorted({k for r in results for k, v in r.summary.items() if _scalar(v)})
    agg = Outcome()
    agg.header = ["index", *axes, "status", "exit_code", *keys]
    failed = []
    for i, (combo, res) in enumerate(zip(combos, results)):
        code = res.exit_code
        agg.rows.append([i, *combo, "pass" if code == 0 else "fail", code, *(res.summary.get(k) for k in keys)])
        agg.fingerprints.update(res.fingerprints)
        for c in res.checks:
            if not c.passed:
                failed.append((i, c))
    for kind in ("schema", "conjugate", "falsification", "check"):
        cells = [(i, c) for i, c in failed if c.kind == kind]
        if cells:
            agg.check(
                f"cells_{kind}",
                False,
                kind,
                cells=[{"index": i, "check": c.name, "witness": c.witness} for i, c in cells[:20]],
                count=len(cells),
            )
    if not failed:
        agg.check("all_cells", True, cells=len(results))
    for key, reducer in (("min_margin", min), ("C", min), ("min_lambda", min), ("max_ratio", max), ("ratio_sup", max)):
        vals = [r.summary[key] for r in results if isinstance(r.summary.get(key), (int, float))]
        if vals:
            agg.summary[f"{reducer.__name__}_{key}"] = reducer(vals)
    if len(axes) == 1:
        cs = [r.summary.get("C") for r in results]
        if all(isinstance(c, float) for c in cs) and len(cs) > 1:
            agg.summary[f"C_decreasing_along_{axes[0]}"] = bool(np.all(np.diff(cs) < 0))
    agg.summary["cells"] = len(results)
    return agg


def _scalar(v):
    return v is None or isinstance(v, (int, float, bool, str))


# ---------------------------------------------------------------------------
# entry point


def _parser():
    ap = argparse.ArgumentParser(prog="geolab", description=__doc__.split("\n\n")[0])
    ap.add_argument("--config", help="JSON scenario file")
    ap.add_argument("--out-dir", default=None, help="output root (default $GEOLAB_OUT_DIR or ./geolab-out)")
    ap.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")
    ap.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance")
    ap.add_argument("--seed", dest="rng_seed", type=int, default=0, help="seed for random profiles")
    ap.add_argument("--version", action="version", version=f"geolab {__version__}")
    sub = ap.add_subparsers(dest="command")
    S = argparse.SUPPRESS

    j = sub.add_parser("jacobi", help="integrate a Jacobi field and dump it")
    j.add_argument("--profile", default=S, help="profile string (required)")
    j.add_argument("--seed", dest="field_seed", choices=SEEDS, default=S, help="initial data (default A)")
    j.add_argument("--t-max", dest="t_max", type=float, default=S, help="end time (default 10)")
    j.add_argument("--step", type=float, default=S, help="RK4 step (default 1e-3)")
    j.add_argument("--out", default=S, help="CSV path")

    b = sub.add_parser("bridge", help="bridge matrices over an (s, t) grid")
    b.add_argument("--profile", default=S, help="profile string (required)")
    b.add_argument("--s-grid", dest="s_grid", default=S, help="comma-separated s values")
    b.add_argument("--t-grid", dest="t_grid", default=S, help="comma-separated t values")
    b.add_argument("--step", type=float, default=S, help="RK4 step (default 1e-3)")

    t = sub.add_parser("theta-bound", help="volume-density lower-bound certificate")
    t.add_argument("--profile", default=S, help="profile string (required)")
    t.add_argument("--s", type=float, default=S, help="bridge parameter (default 0.5)")
    t.add_argument("--t-min", dest="t_min", type=float, default=S, help="first t (default 2s)")
    t.add_argument("--t-max", dest="t_max", type=float, default=S, help="last t (default 10)")
    t.add_argument("--t-count", dest="t_count", type=int, default=S, help="grid points (default 50)")
    t.add_argument("--step", type=float, default=S, help="RK4 step (default 1e-3)")

    pm = sub.add_parser("parametrix", help="radial parametrix coefficients")
    pm.add_argument("--model", default=S, help="flat:n=<int> or hyperbolic:n=<int>")
    pm.add_argument("--k-max", dest="k_max", type=int, default=S, help="highest coefficient (default 3)")
    pm.add_argument("--r-max", dest="r_max", type=float, default=S, help="radius (default 8)")
    pm.add_argument("--r-count", dest="r_count", type=int, default=S, help="grid points (default 8001)")
    pm.add_argument("--variant", choices=("standard", "modified"), default=S)
    pm.add_argument("--quad-order", dest="quad_order", type=int, choices=(2, 4), default=S)

    w = sub.add_parser("weyl", help="eigenvalue counts on a flat torus")
    w.add_argument("--torus", default=S, help="side lengths, L=<f>[,<f>...] (required)")
    w.add_argument("--lambda-max", dest="lambda_max", type=float, default=S, help="largest lambda (default 200)")
    w.add_argument("--lambda-count", dest="lambda_count", type=int, default=S, help="grid points (default 20)")

    sub.add_parser("sweep", help="Cartesian sweep from --config (template + axes)")
    st = sub.add_parser("selftest", help="closed-form constant-curvature suite")
    st.add_argument("--random-profiles", dest="random_profiles", type=int, default=S, help="extra certificate runs")
    return ap


_NOT_PARAMS = {"config", "out_dir", "jobs", "tol_scale", "rng_seed", "command", "out"}


def _flags_to_params(ns):
    params = {k: v for k, v in vars(ns).items() if k not in _NOT_PARAMS}
    if "field_seed" in params:
        params["seed"] = params.pop("field_seed")
    return params


def _raw_scenario(ns):
    raw = {}
    if ns.config:
        try:
            raw = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot read config {ns.config}: {exc}") from None
        raw = _dict(raw)
        if ns.command and raw.get("command") not in (None, ns.command):
            raise ScenarioError(f"config command {raw.get('command')!r} does not match {ns.command!r}")
    command = ns.command or raw.get("command")
    if command is None:
        raise ScenarioError("no command given")
    raw["command"] = command
    flags = _flags_to_params(ns)
    if flags:
        if command == "sweep":
            raise ScenarioError("sweep is configured through --config only")
        raw["parameters"] = {**raw.get("parameters", {}), **flags}
    if getattr(ns, "out", None):
        raw.setdefault("outputs", {})["csv"] = ns.out
    return raw


def _emit(report, stream):
    for c in report["checks"]:
        tag = "PASS" if c["status"] == "pass" else "FAIL"
        extra = "" if c["status"] == "pass" else " " + json.dumps(c["witness"], sort_keys=True)
        print(f"{tag} {c['name']}{extra}", file=stream)
    print(f"exit {report['exit_code']}", file=stream)


def main(argv=None):
    ap = _parser()
    ns = ap.parse_args(argv)
    out_dir = Path(ns.out_dir or os.environ.get("GEOLAB_OUT_DIR") or "geolab-out")
    started = time.perf_counter()
    try:
        if ns.jobs < 1:
            raise ScenarioError("--jobs must be at least 1")
        raw = _raw_scenario(ns)
        scenario = validate_scenario(raw, ns.tol_scale)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    command = scenario["command"]
    if command == "sweep":
        outcome = run_sweep(scenario, ns.jobs, ns.rng_seed)
        echo = {k: scenario[k] for k in ("command", "template", "axes", "tolerances", "outputs")}
    else:
        outcome = execute(command, scenario["parameters"], scenario["tolerances"], ns.rng_seed)
        echo = {k: scenario[k] for k in ("command", "parameters", "tolerances", "outputs")}
    csv_path = Path(scenario["outputs"].get("csv") or out_dir / f"{command}.csv")
    report_path = Path(scenario["outputs"].get("report") or out_dir / f"{command}-report.json")
    if outcome.header:
        write_csv(csv_path, outcome.header, outcome.rows)
    report = {
        "schema_version": SCHEMA_VERSION,
        "tool": "geolab",
        "version": __version__,
        "scenario": echo,
        "checks": [c.to_json() for c in outcome.checks],
        "summary": outcome.summary,
        "fingerprints": outcome.fingerprints,
        "outputs": {"csv": str(csv_path) if outcome.header else None, "report": str(report_path)},
        "exit_code": outcome.exit_code,
        "timing": {"seconds": time.perf_counter() - started},
        **outcome.extra,
    }
    report = _jsonable(report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _emit(report, sys.stdout)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
