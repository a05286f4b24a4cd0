"""Parameter sweeps over the quantum spectrum.

Level flow, Ĉ transients of a fixed level index, adiabatic couplings,
avoided-crossing gaps at extended precision and Landau-Zener estimates.
"""

import functools
import logging
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import linalg

from .errors import (IndexOutOfRange, InvalidProbability, NoApproachFound,
                     PrecisionExhausted, TransientNotBracketed)
from .parallel import pmap
from .precision import pair_gap
from .quantum import FockBasis, QuadratureBasis, banded_eigh, banded_upper, solve
from .semiclassical import critical_set

log = logging.getLogger(__name__)


@dataclass
class LevelFlow:
    g_grid: np.ndarray
    levels: np.ndarray      # (n_g, n_levels), NaN outside the window
    c_values: np.ndarray
    labels: np.ndarray


@dataclass
class CrossingReport:
    level_index: int
    zoom_trace: list
    gap: object
    g_at_min: object
    precision_bits: int
    slope: float = None
    omega0: float = None
    n_ph: int = None
    eps: float = None
    saturated: bool = True
    meta: dict = field(default_factory=dict)


# -- level flow --------------------------------------------------------------

def _flow_point(args):
    params, n_ph, lo, hi = args
    spec = solve(params, n_ph, with_c=True)
    eps = spec.reduced
    keep = (eps >= lo) & (eps <= hi)
    c = spec.c_diag if spec.c_diag is not None else np.full(len(eps), np.nan)
    lab = spec.labels if spec.labels is not None else np.zeros(len(eps), dtype=int)
    return eps[keep], c[keep], lab[keep]


def level_flow(params, g_grid, eps_window, n_ph, jobs=1):
    """Levels inside ``eps_window`` with their <C> and labels along ``g_grid``.

    Rows are padded with NaN (label 0) so every g carries the same width.
    """
    g_grid = np.asarray(g_grid, dtype=float)
    if np.any(np.diff(g_grid) <= 0):
        raise ValueError("g_grid must be strictly increasing")
    lo, hi = eps_window
    rows = pmap(_flow_point, [(params.with_g(g), n_ph, lo, hi) for g in g_grid], jobs)
    width = max(len(r[0]) for r in rows)
    levels = np.full((len(g_grid), width), np.nan)
    cvals = np.full((len(g_grid), width), np.nan)
    labels = np.zeros((len(g_grid), width), dtype=int)
    for i, (e, c, lab) in enumerate(rows):
        levels[i, :len(e)] = e
        cvals[i, :len(e)] = c
        labels[i, :len(e)] = lab
    return LevelFlow(g_grid, levels, cvals, labels)


# -- fixed-index transients --------------------------------------------------

def _c_of_levels(params, n_ph, indices, qbasis):
    ab = banded_upper(params, FockBasis(n_ph))
    lo, hi = min(indices), max(indices)
    w, v = banded_eigh(ab, lo, hi)
    crit = critical_set(params)
    if crit.q_c is None:
        return 2 * w / params.omega0, np.full(len(w), np.nan)
    return 2 * w / params.omega0, qbasis.c_expectations(v, crit.q_c)


def track_pair(params, eps_anchor, g_grid, n_ph, qbasis=None):
    """<C> of levels p and p-1 along g, p fixed at the first grid point.

    p is the level closest to ``eps_anchor`` at ``g_grid[0]``; afterwards the
    indices stay fixed rather than following levels adiabatically.
    """
    g_grid = np.asarray(g_grid, dtype=float)
    qbasis = qbasis or QuadratureBasis(n_ph)
    ab = banded_upper(params.with_g(g_grid[0]), FockBasis(n_ph))
    e_hi = (eps_anchor + 1.0) * params.omega0 / 2
    w = linalg.eigvals_banded(ab, select="v", select_range=(-np.inf, e_hi))
    p = int(np.argmin(np.abs(2 * w / params.omega0 - eps_anchor))) if len(w) else 0
    if p == 0:
        raise IndexOutOfRange("anchor selects the ground state; p-1 does not exist")
    eps = np.empty((len(g_grid), 2))
    cvals = np.empty((len(g_grid), 2))
    for i, g in enumerate(g_grid):
        e, c = _c_of_levels(params.with_g(g), n_ph, (p - 1, p), qbasis)
        eps[i], cvals[i] = e[::-1], c[::-1]
    return {"index": p, "g": g_grid, "eps_p": eps[:, 0], "eps_pm1": eps[:, 1],
            "c_p": cvals[:, 0], "c_pm1": cvals[:, 1]}


def transient_width(g, c):
    """Width g_0.05 - g_0.95 of a <C> transient.

    g_0.95 is the first g with 1 - <C>^2 <= 0.95 and g_0.05 the last g with
    1 - <C>^2 >= 0.05; both thresholds are taken literally.
    """
    g = np.asarray(g, dtype=float)
    u = 1.0 - np.asarray(c, dtype=float) ** 2
    first = np.nonzero(u <= 0.95)[0]
    last = np.nonzero(u >= 0.05)[0]
    if len(first) == 0 or len(last) == 0:
        raise TransientNotBracketed("1-<C>^2 never crosses both 0.95 and 0.05")
    return float(g[last[-1]] - g[first[0]])


def transient_scan(omega0, alpha, g_lo, g_hi, n_g, n_ph, eps_anchor=-0.8, omega=1.0):
    """track_pair on a uniform grid plus the resulting width (one omega0)."""
    from .semiclassical import ModelParams

    params = ModelParams(omega0, g_lo, alpha, omega)
    tr = track_pair(params, eps_anchor, np.linspace(g_lo, g_hi, n_g), n_ph)
    tr["width"] = transient_width(tr["g"], tr["c_p"])
    tr["omega0"] = omega0
    return tr


def power_law_fit(x, y):
    """Fit y = A x^(-z) in log-log; returns (z, A, rms residual in log10)."""
    lx, ly = np.log10(x), np.log10(y)
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    return float(-slope), float(10**icpt), float(np.sqrt(np.mean(resid**2)))


# -- adiabatic couplings -----------------------------------------------------

def adiabatic_coupling(spec, h_int):
    """<E_{n+1}|H_int|E_n>/(E_n - E_{n+1}) and C_nn C_{n+1,n+1} for adjacent pairs."""
    v = spec.vectors
    if v.shape[1] < 2:
        raise ValueError("need at least two levels")
    m = h_int.matrix if hasattr(h_int, "matrix") else h_int
    hv = m @ v[:, :-1]
    num = np.einsum("in,in->n", v[:, 1:], hv)
    ratio = num / (spec.energies[:-1] - spec.energies[1:])
    prod = None
    if spec.c_diag is not None:
        prod = spec.c_diag[:-1] * spec.c_diag[1:]
    return ratio, prod


# -- avoided-crossing zoom ---------------------------------------------------

def zoom_minimum(gap_fn, g_lo, g_hi, bits, n_parts=20, rtol=0.01, max_iter=200):
    """Iterated 20-part grid refinement around the smallest value of gap_fn.

    Returns (gap, g_min, trace, slope) where trace lists (dg, gap) per
    iteration and slope is the diabatic |d gap/dg| read off the first bracket.
    """
    with mpmath.workprec(bits):
        lo, hi = mpmath.mpf(g_lo), mpmath.mpf(g_hi)
        trace = []
        slope = None
        prev = None
        floor = mpmath.ldexp(1, -bits + 8)
        for it in range(max_iter):
            h = (hi - lo) / n_parts
            gs = [lo + h * i for i in range(n_parts + 1)]
            vals = [gap_fn(g) for g in gs]
            m = min(range(len(vals)), key=lambda i: vals[i])
            gap = vals[m]
            trace.append((h, gap))
            if it == 0 and m in (0, n_parts):
                raise NoApproachFound("gap is smallest at the search boundary")
            if gap == 0:
                raise PrecisionExhausted("exact degeneracy on the grid", bound=gap,
                                         report=(gap, gs[m], trace, slope))
            m = min(max(m, 1), n_parts - 1)
            # a repeated minimum only counts as saturation once the bottom is
            # also flat on the grid; otherwise the true minimum sits between
            # two grid points and the next bracket still contains it
            flat = max(vals[m - 1], vals[m + 1]) - gap < rtol * gap
            if prev is not None and abs(gap - prev) < rtol * prev and flat:
                return gap, gs[m], trace, slope
            if it == 0:
                # for a V-shaped gap the two bracket ends give the diabatic slope exactly
                slope = float((vals[0] + vals[-1]) / (h * n_parts))
            prev = gap
            lo, hi = gs[m - 1], gs[m + 1]
            if (hi - lo) < abs(gs[m]) * floor:
                raise PrecisionExhausted(
                    f"coupling resolution reached 2^-{bits - 8} before the gap saturated",
                    bound=gap, report=(gap, gs[m], trace, slope))
        raise PrecisionExhausted("zoom iteration budget exhausted", bound=gap,
                                 report=(gap, gs[m], trace, slope))


def find_crossings(params, n_ph, g_lo, g_hi, eps_lo, eps_hi, n_scan=201):
    """Interior minima of adjacent-level gaps in a double-precision scan.

    Returns a list of dicts (index, g, g_lo, g_hi, eps, gap) sorted by g, with
    [g_lo, g_hi] the two neighbouring scan points.
    """
    g = np.linspace(g_lo, g_hi, n_scan)
    rows = []
    basis = FockBasis(n_ph)
    for gi in g:
        ab = banded_upper(params.with_g(gi), basis)
        rows.append(linalg.eigvals_banded(ab, select="v",
                                          select_range=(-np.inf, (eps_hi + 0.5) * params.omega0 / 2)))
    k_max = min(len(r) for r in rows)
    e = np.array([r[:k_max] for r in rows]) * 2 / params.omega0
    d = np.diff(e, axis=1)
    found = []
    for k in range(k_max - 1):
        for i in range(1, n_scan - 1):
            mid = 0.5 * (e[i, k] + e[i, k + 1])
            if d[i, k] < d[i - 1, k] and d[i, k] <= d[i + 1, k] and eps_lo <= mid <= eps_hi:
                found.append({"index": k, "g": g[i], "g_lo": g[i - 1], "g_hi": g[i + 1],
                              "eps": mid, "gap": d[i, k]})
    found.sort(key=lambda r: r["g"])
    return found


def _reduced_gap(params, n_ph, index, bits, g):
    return pair_gap(params, n_ph, index, bits, g=g)[2] * 2 / params.omega0


def crossing_zoom(params, g_i, g_f, pair_anchor_eps, precision_bits, n_ph, level_index=None):
    """Saturated minimal gap (reduced units) of the pair nearest ``pair_anchor_eps``.

    Without ``level_index`` the pair is the adjacent couple whose mean
    energy at the window midpoint lies closest to the anchor.
    """
    if level_index is None:
        ab = banded_upper(params.with_g(0.5 * (g_i + g_f)), FockBasis(n_ph))
        e_hi = (pair_anchor_eps + 2.0) * params.omega0 / 2
        w = 2 * linalg.eigvals_banded(ab, select="v", select_range=(-np.inf, e_hi)) / params.omega0
        mids = 0.5 * (w[:-1] + w[1:])
        level_index = int(np.argmin(np.abs(mids - pair_anchor_eps)))
    fn = functools.partial(_reduced_gap, params, n_ph, level_index, precision_bits)
    gap, gm, trace, slope = zoom_minimum(fn, g_i, g_f, precision_bits)
    ab = banded_upper(params.with_g(float(gm)), FockBasis(n_ph))
    w = linalg.eigvals_banded(ab, select="i", select_range=(level_index, level_index))
    return CrossingReport(level_index, trace, gap, gm, precision_bits, slope=slope,
                          omega0=params.omega0, n_ph=n_ph, eps=float(2 * w[0] / params.omega0))


def gap_scaling(omega0s, gaps):
    """Least-squares fit log10(gap) = c - delta*omega0; returns (delta, c, rms residual)."""
    x = np.asarray(omega0s, dtype=float)
    if len(x) < 4:
        raise ValueError("gap_scaling needs at least 4 omega0 points")
    y = np.array([float(mpmath.log10(gp)) for gp in gaps])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    return float(-slope), float(icpt), float(np.sqrt(np.mean(resid**2)))


def lz_rate(gap, slope, p_nd):
    """Sweep speed dg/dt = -pi gap^2 / (2 ln P) / slope giving non-diabatic probability P."""
    if not 0 < p_nd < 1:
        raise InvalidProbability(f"p_nd must lie in (0, 1), got {p_nd}")
    if not slope > 0:
        raise ValueError("slope must be positive")
    return -math.pi * gap**2 / (2 * math.log(p_nd)) / slope


def lz_rate_log10(log10_gap, slope, p_nd):
    """log10 of lz_rate for gaps far below the double-precision range."""
    if not 0 < p_nd < 1:
        raise InvalidProbability(f"p_nd must lie in (0, 1), got {p_nd}")
    return (2 * log10_gap + math.log10(math.pi / (-2 * math.log(p_nd)))
            - math.log10(slope))
