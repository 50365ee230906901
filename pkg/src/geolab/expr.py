"""Tiny expression language for seed functions ``phi(t)``.

Grammar: numbers, ``t``, ``pi``, ``+ - * / ^`` (and ``**``), parentheses and
the unary functions ``sin cos sinh cosh tanh exp log``.  Strings are checked
token by token before being handed to sympy, so nothing outside the grammar
ever reaches ``sympify``.
"""

import re

import numpy as np
import sympy as sp

_FUNCTIONS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "sinh": sp.sinh,
    "cosh": sp.cosh,
    "tanh": sp.tanh,
    "exp": sp.exp,
    "log": sp.log,
}
_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)|([A-Za-z_]\w*)|(\*\*|[-+*/^()]))")

T = sp.Symbol("t", real=True)

# below this |t| the ratio phi'(t)/t is taken from its Taylor polynomial
SERIES_CUTOFF = 1e-2
SERIES_ORDER = 10


class ExpressionError(ValueError):
    pass


def parse(text):
    """Parse ``text`` into a sympy expression in the symbol ``t``."""
    pos = 0
    names = []
    text = text.strip()
    if not text:
        raise ExpressionError("empty expression")
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExpressionError(f"unexpected character at {pos}: {text[pos:]!r}")
        if m.group(2) is not None:
            names.append(m.group(2))
        pos = m.end()
    for name in names:
        if name not in _FUNCTIONS and name not in ("t", "pi"):
            raise ExpressionError(f"unknown name {name!r}")
    local = dict(_FUNCTIONS, t=T, pi=sp.pi)
    try:
        return sp.sympify(text.replace("^", "**"), locals=local)
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ExpressionError(str(exc)) from exc


def _lambdify(expr):
    f = sp.lambdify(T, expr, modules="numpy")

    def call(t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(f(t), dtype=float), t.shape).copy()

    return call


class ExpressionSeed:
    """A seed ``phi`` given symbolically, with exact derivatives.

    ``dphi_over_t`` switches to a Taylor polynomial near ``t = 0`` so that
    seeds such as ``log(sinh(t)/t)`` are evaluated without cancellation.
    """

    def __init__(self, expr):
        if isinstance(expr, str):
            self.text = expr
            expr = parse(expr)
        else:
            self.text = str(expr)
        self.expr = sp.sympify(expr)
        d1 = sp.diff(self.expr, T)
        d2 = sp.diff(d1, T)
        self.phi = _lambdify(self.expr)
        self.dphi = _lambdify(d1)
        self.ddphi = _lambdify(d2)
        self._ratio = _lambdify(d1 / T)
        near0 = sp.series(d1 / T, T, 0, SERIES_ORDER).removeO()
        self._ratio0 = _lambdify(near0)
        self._phi0 = _lambdify(sp.series(self.expr, T, 0, SERIES_ORDER).removeO())
        self._d10 = _lambdify(sp.series(d1, T, 0, SERIES_ORDER).removeO())
        self._d20 = _lambdify(sp.series(d2, T, 0, SERIES_ORDER).removeO())

    def initial_values(self):
        """``(phi(0), phi'(0))`` computed symbolically."""
        v0 = sp.limit(self.expr, T, 0)
        v1 = sp.limit(sp.diff(self.expr, T), T, 0)
        return float(v0), float(v1)

    def _switch(self, t, far, near):
        t = np.asarray(t, dtype=float)
        small = np.abs(t) < SERIES_CUTOFF
        out = np.empty(t.shape)
        if np.any(small):
            out[small] = near(t[small])
        if np.any(~small):
            out[~small] = far(t[~small])
        return out

    def value(self, t):
        return self._switch(t, self.phi, self._phi0)

    def d1(self, t):
        return self._switch(t, self.dphi, self._d10)

    def d2(self, t):
        return self._switch(t, self.ddphi, self._d20)

    def d1_over_t(self, t):
        return self._switch(t, self._ratio, self._ratio0)
