"""Quartic toy potential V(x) = x^4 + b x^2 + c x.

The stationary points solve the depressed cubic x^3 + (b/2) x + c/4 = 0,
which is handled in closed form (trigonometric or Cardano branch) and then
polished with a single Newton step.
"""

import math
from dataclasses import dataclass

import numpy as np

KINDS = ("global_min", "local_min", "local_max", "inflection")


@dataclass(frozen=True)
class ToyParams:
    b: float
    c: float


@dataclass(frozen=True)
class StationaryPoint:
    x: float
    v: float
    kind: str


def eval_potential(x, p):
    return x**4 + p.b * x**2 + p.c * x


def _dv(x, p):
    return 4.0 * x**3 + 2.0 * p.b * x + p.c


def _d2v(x, p):
    return 12.0 * x**2 + 2.0 * p.b


def critical_coupling(c):
    """Value of b below which the potential develops a second well."""
    if c < 0:
        raise ValueError("critical_coupling expects c >= 0")
    return -1.5 * c ** (2.0 / 3.0)


def _cubic_roots(v1, v2):
    """Real roots of x^3 + v1 x + v2 = 0 as (roots, index_of_double_root)."""
    disc = v2 * v2 / 4.0 + v1**3 / 27.0
    scale = abs(v1) ** 3 / 27.0 + v2 * v2 / 4.0
    if scale == 0.0:
        return [0.0], 0
    if abs(disc) <= 1e-12 * scale:
        # b sits on the critical line: a simple root and a double root
        return [3.0 * v2 / v1, -1.5 * v2 / v1], 1
    if disc > 0:
        s = math.sqrt(disc)
        return [np.cbrt(-v2 / 2.0 + s) + np.cbrt(-v2 / 2.0 - s)], None
    r = 2.0 * math.sqrt(-v1 / 3.0)
    arg = (3.0 * v2 / (2.0 * v1)) * math.sqrt(-3.0 / v1)
    phi = math.acos(max(-1.0, min(1.0, arg))) / 3.0
    return [r * math.cos(phi - 2.0 * math.pi * k / 3.0) for k in range(3)], None


def critical_points(p):
    """All real stationary points of V, sorted by position and classified."""
    b, c = float(p.b), float(p.c)
    double = None
    if c == 0.0:
        xs = [0.0]
        if b < 0:
            h = math.sqrt(-b / 2.0)
            xs = [-h, 0.0, h]
        elif b == 0:
            double = 0
    else:
        xs, double = _cubic_roots(b / 2.0, c / 4.0)
    polished = []
    for i, x in enumerate(xs):
        d1 = _d2v(x, p)
        # Newton is only quadratic away from a double root
        if i != double and d1 != 0.0:
            x = x - _dv(x, p) / d1
        polished.append(float(x))
    polished.sort()

    tol = 1e-8 * (1.0 + abs(b))
    vals = [eval_potential(x, p) for x in polished]
    minima = [v for x, v in zip(polished, vals) if _d2v(x, p) >= tol]
    vmin = min(minima) if minima else None
    points = []
    for x, v in zip(polished, vals):
        d2 = _d2v(x, p)
        if abs(d2) < tol:
            kind = "inflection"
            if len(polished) == 1:
                # b = c = 0: flat bottom, still the ground state
                kind = "global_min"
        elif d2 > 0:
            tie = 1e-12 * (1.0 + abs(vmin))
            kind = "global_min" if v <= vmin + tie else "local_min"
        else:
            kind = "local_max"
        points.append(StationaryPoint(x, v, kind))
    return points


def scan_b(b_values, c):
    """Rows (b, c, x, V, kind) for every stationary point along a b sweep."""
    rows = []
    for b in b_values:
        for pt in critical_points(ToyParams(float(b), float(c))):
            rows.append((float(b), float(c), pt.x, pt.v, pt.kind))
    return rows
