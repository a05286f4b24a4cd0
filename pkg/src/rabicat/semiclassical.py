"""Classical limit of the deformed Rabi model on the low-energy spin sheet.

Energies are reduced energies eps = 2E/omega0. Internally the position is
rescaled to ``x = q * sqrt(omega/omega0)``, in which the potential

    V(x) = x**2 - sqrt(1 + 2 g**2 x**2) + 2 (alpha/sqrt(omega)) x

no longer depends on omega0. Public functions take and return the physical
quadrature ``q`` used by the quantum model.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .errors import EmptyBranch, SingularEnergy, WellCeiling


@dataclass(frozen=True)
class ModelParams:
    omega0: float
    g: float
    alpha: float = 0.5
    omega: float = 1.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if not self.omega0 > 0:
            raise ValueError(f"omega0 must be > 0, got {self.omega0}")
        if not self.g >= 0:
            raise ValueError(f"g must be >= 0, got {self.g}")

    def with_g(self, g):
        return ModelParams(self.omega0, float(g), self.alpha, self.omega)

    @property
    def q_scale(self):
        """Factor converting rescaled x into the quadrature q."""
        return math.sqrt(self.omega0 / self.omega)

    @property
    def _a(self):
        return self.alpha / math.sqrt(self.omega)


@dataclass(frozen=True)
class CriticalPoint:
    q: float
    p: float
    eps: float
    kind: str


@dataclass
class CriticalSet:
    points: list
    eps_gs: float
    eps_c1: float = None
    eps_c2: float = None
    q_c: float = None

    @property
    def has_esqpt(self):
        return self.eps_c2 is not None


@dataclass
class MomentumBranch:
    eps: float
    q_grid: np.ndarray
    p_values: np.ndarray
    turning_points: list
    well: str


# -- potential in rescaled coordinates ---------------------------------------

def _v(x, g, a):
    return x * x - np.sqrt(1.0 + 2.0 * g * g * x * x) + 2.0 * a * x


def _dv(x, g, a):
    return 2.0 * x - 2.0 * g * g * x / np.sqrt(1.0 + 2.0 * g * g * x * x) + 2.0 * a


def _d2v(x, g, a):
    return 2.0 - 2.0 * g * g / (1.0 + 2.0 * g * g * x * x) ** 1.5


def _delta_v(x0, t, g, a):
    """V(x0 + t) - V(x0) without cancellation for small t."""
    u = t * (2.0 * x0 + t)
    s0 = math.sqrt(1.0 + 2.0 * g * g * x0 * x0)
    s1 = np.sqrt(1.0 + 2.0 * g * g * (x0 + t) ** 2)
    return u - 2.0 * g * g * u / (s0 + s1) + 2.0 * a * t


def _inflections(g):
    """Zeros of V'' (exist only for g > 1)."""
    if g <= 1.0:
        return []
    xi = math.sqrt((g ** (4.0 / 3.0) - 1.0) / (2.0 * g * g))
    return [-xi, xi]


def classical_energy(p, q, params):
    w, w0 = params.omega, params.omega0
    return (w / w0) * (p * p + q * q) - np.sqrt(1.0 + 2.0 * w * params.g**2 * q * q / w0) \
        + 2.0 * params.alpha * q / math.sqrt(w0)


def potential(q, params):
    """Classical energy at zero momentum."""
    return classical_energy(0.0, q, params)


def _stationary_x(g, a, n_grid=10_000):
    """Roots of V'(x) as (x, kind) pairs sorted by x.

    Sign changes are scanned on a uniform grid augmented with the zeros of
    V'' so that nearly merging roots are still bracketed.
    """
    half = 3.0 + g / math.sqrt(2.0) + abs(a)
    infl = _inflections(g)
    grid = np.union1d(np.linspace(-half, half, n_grid), infl)
    f = _dv(grid, g, a)
    scale = 2.0 * (1.0 + g * g + abs(a))
    roots = []
    for xi in infl:
        if abs(_dv(xi, g, a)) <= 1e-13 * scale:
            roots.append((xi, "inflection"))
    taken = [r for r, _ in roots]
    for i in range(len(grid) - 1):
        f0, f1 = f[i], f[i + 1]
        if f0 == 0.0 and all(abs(grid[i] - r) > 1e-9 for r in taken):
            roots.append((grid[i], None))
            continue
        if f0 * f1 < 0:
            lo, hi = grid[i], grid[i + 1]
            if any(lo <= r <= hi for r in taken):
                continue
            x = optimize.brentq(_dv, lo, hi, args=(g, a), xtol=1e-15, rtol=8.9e-16)
            d2 = _d2v(x, g, a)
            if d2 != 0.0:
                x -= _dv(x, g, a) / d2
            roots.append((x, None))
    roots.sort()
    out = []
    for x, kind in roots:
        d2 = _d2v(x, g, a) if kind is None else 0.0
        if abs(d2) < 1e-8:
            # flat point: a quartic minimum (g = 1, a = 0) rises on both sides
            v0, h = _v(x, g, a), 1e-3
            left, right = _v(x - h, g, a) - v0, _v(x + h, g, a) - v0
            if left > 0 and right > 0:
                kind = "min"
            elif left < 0 and right < 0:
                kind = "local_max"
            else:
                kind = "inflection"
        else:
            kind = "min" if d2 > 0 else "local_max"
        out.append((float(x), kind))
    return out


def critical_set(params):
    g, a = params.g, params._a
    pts = _stationary_x(g, a)
    vals = [float(_v(x, g, a)) for x, _ in pts]
    minima = [v for (x, k), v in zip(pts, vals) if k == "min"]
    eps_gs = min(minima)
    points = []
    eps_c1 = eps_c2 = q_c = None
    for (x, kind), v in zip(pts, vals):
        q = x * params.q_scale
        if kind == "min":
            kind = "global_min" if v == eps_gs else "local_min"
            if kind == "local_min":
                eps_c1 = v
        elif kind == "local_max":
            eps_c2, q_c = v, q
        elif kind == "inflection":
            eps_c1 = eps_c2 = v
            q_c = q
        points.append(CriticalPoint(q, 0.0, v, kind))
    return CriticalSet(points, eps_gs, eps_c1, eps_c2, q_c)


def _count(g, a):
    return len(_stationary_x(g, a, n_grid=2000))


def g_star(alpha, omega=1.0):
    """Coupling at which the second well appears.

    Brackets the change in the number of stationary points by bisection and
    then solves V' = V'' = 0 on the side of the secondary well.
    """
    if alpha < 0:
        raise ValueError("g_star expects alpha >= 0")
    if alpha == 0:
        return 1.0
    a = alpha / math.sqrt(omega)
    lo, hi = 1.0, 2.0
    while _count(hi, a) < 3:
        lo, hi = hi, 2.0 * hi
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if _count(mid, a) >= 3:
            hi = mid
        else:
            lo = mid

    def merged(g):
        xi = _inflections(g)[1]  # secondary well sits on the alpha > 0 side
        return _dv(xi, g, a)

    lo = max(lo - 1e-6, 1.0 + 1e-12)
    hi = hi + 1e-6
    return optimize.brentq(merged, lo, hi, xtol=1e-15, rtol=8.9e-16)


# -- orbits ------------------------------------------------------------------

@dataclass
class _Interval:
    a: float
    b: float
    well: str
    peaks: list = field(default_factory=list)


def _turning(eps, g, a, x_in, direction):
    """Turning point of the orbit through x_in, searched toward +/- infinity."""
    step = 1.0
    x_out = x_in + direction * step
    while _v(x_out, g, a) < eps:
        step *= 2.0
        x_out = x_in + direction * step
    lo, hi = sorted((x_in, x_out))
    return optimize.brentq(lambda x: _v(x, g, a) - eps, lo, hi, xtol=1e-14, rtol=8.9e-16)


def _between(eps, g, a, x_lo, x_hi):
    return optimize.brentq(lambda x: _v(x, g, a) - eps, x_lo, x_hi, xtol=1e-14, rtol=8.9e-16)


def _intervals(eps, params, crit=None):
    """Classically allowed x-intervals at energy eps, labelled by well."""
    g, a = params.g, params._a
    crit = crit or critical_set(params)
    s = params.q_scale
    if eps < crit.eps_gs:
        return []
    mins = [p for p in crit.points if p.kind in ("global_min", "local_min")]
    if crit.eps_c2 is None or len(mins) < 2 or eps > crit.eps_c2:
        xs = [p.q / s for p in mins]
        xl, xr = min(xs), max(xs)
        if eps == crit.eps_gs:
            x0 = [p.q / s for p in mins if p.kind == "global_min"][0]
            return [_Interval(x0, x0, "joined")]
        peaks = [crit.q_c / s] if crit.q_c is not None else []
        return [_Interval(_turning(eps, g, a, xl, -1), _turning(eps, g, a, xr, +1), "joined", peaks)]
    xc = crit.q_c / s
    left = min(mins, key=lambda p: p.q)
    right = max(mins, key=lambda p: p.q)
    out = []
    for pt, name in ((left, "left"), (right, "right")):
        x0 = pt.q / s
        if eps < pt.eps:
            continue
        if eps == pt.eps:
            out.append(_Interval(x0, x0, name))
            continue
        if name == "left":
            lo = _turning(eps, g, a, x0, -1)
            hi = xc if eps == crit.eps_c2 else _between(eps, g, a, x0, xc)
        else:
            lo = xc if eps == crit.eps_c2 else _between(eps, g, a, xc, x0)
            hi = _turning(eps, g, a, x0, +1)
        out.append(_Interval(lo, hi, name))
    return out


def _pick(intervals, well):
    for iv in intervals:
        if well is None or iv.well == well:
            return iv
    raise EmptyBranch(f"no '{well}' well at this energy")


def momentum_branch(eps, params, well=None, n_grid=401):
    """Positive momenta p(eps, q) across one classically allowed interval."""
    crit = critical_set(params)
    if eps < crit.eps_gs:
        raise EmptyBranch(f"eps={eps} lies below the ground-state energy {crit.eps_gs}")
    ivs = _intervals(eps, params, crit)
    if well is None:
        gs_x = [p.q for p in crit.points if p.kind == "global_min"][0] / params.q_scale
        well = next(iv.well for iv in ivs if iv.a <= gs_x <= iv.b)
    iv = _pick(ivs, well)
    s = params.q_scale
    x = np.linspace(iv.a, iv.b, n_grid)
    rad = eps - _v(x, params.g, params._a)
    rad[0] = rad[-1] = 0.0
    p = np.sqrt(np.clip(rad, 0.0, None)) * s
    return MomentumBranch(eps, x * s, p, [iv.a * s, iv.b * s], iv.well)


def _half_integrals(iv, g, a, integrand):
    """Integrate integrand(radicand) over [a, b] with x = end +/- s**2 on each half."""
    if iv.b <= iv.a:
        return 0.0
    m = 0.5 * (iv.a + iv.b)
    total = 0.0
    for end, sign in ((iv.a, +1.0), (iv.b, -1.0)):
        width = abs(m - end)
        smax = math.sqrt(width)

        def f(s, end=end, sign=sign):
            t = sign * s * s
            rad = -_delta_v(end, t, g, a)
            if rad <= 0.0:
                return 0.0
            return 2.0 * s * integrand(rad)

        pts = [math.sqrt(abs(xp - end)) for xp in iv.peaks if 0 < sign * (xp - end) < width]
        val, _ = integrate.quad(f, 0.0, smax, points=pts or None, epsabs=0.0,
                                epsrel=1e-11, limit=400)
        total += val
    return total


def _check_regular(eps, crit):
    for ec in (crit.eps_c1, crit.eps_c2):
        if ec is not None and abs(eps - ec) <= 1e-14 * (1.0 + abs(ec)):
            raise SingularEnergy(f"level density is singular at eps={ec}")


def level_density(eps, params):
    """Classical level density; normalised so that g = alpha = 0 gives 1/2."""
    crit = critical_set(params)
    if eps <= crit.eps_gs:
        return 0.0
    _check_regular(eps, crit)
    g, a = params.g, params._a
    total = sum(_half_integrals(iv, g, a, lambda r: 1.0 / math.sqrt(r))
                for iv in _intervals(eps, params, crit))
    return total / (2.0 * math.pi)


def ebk_action(eps, params, well=None):
    """Closed-orbit action, twice the integral of p dq between turning points.

    ``well=None`` selects the orbit around the global minimum; ``'joined'``
    requires a connected orbit (single well, or eps at/above the separatrix).
    """
    crit = critical_set(params)
    ivs = _intervals(eps, params, crit)
    if not ivs:
        raise EmptyBranch(f"eps={eps} lies below the ground-state energy")
    g, a = params.g, params._a
    if well == "joined":
        on_separatrix = crit.eps_c2 is not None and eps == crit.eps_c2 and len(ivs) == 2
        if not (on_separatrix or ivs[0].well == "joined"):
            raise EmptyBranch("phase space is split into two wells at this energy")
        chosen = ivs
    elif well is None:
        gs_x = [p.q for p in crit.points if p.kind == "global_min"][0] / params.q_scale
        chosen = [next(iv for iv in ivs if iv.a <= gs_x <= iv.b)]
    else:
        chosen = [_pick(ivs, well)]
    val = sum(_half_integrals(iv, g, a, math.sqrt) for iv in chosen)
    return 2.0 * params.q_scale**2 * val


def phase_space_area(eps, params):
    """Area of {H <= eps} in the (q, p) plane, all wells together."""
    crit = critical_set(params)
    g, a = params.g, params._a
    total = sum(_half_integrals(iv, g, a, math.sqrt) for iv in _intervals(eps, params, crit))
    return 2.0 * params.q_scale**2 * total


def _well_range(params, well, crit):
    """(bottom, top) reduced energies of a well; top is None if unbounded."""
    mins = [p for p in crit.points if p.kind in ("global_min", "local_min")]
    double = crit.eps_c2 is not None and len(mins) == 2
    if well == "joined":
        if double:
            return crit.eps_c2, None
        return crit.eps_gs, None
    if not double:
        raise EmptyBranch(f"no '{well}' well: the potential has a single well")
    pt = min(mins, key=lambda p: p.q) if well == "left" else max(mins, key=lambda p: p.q)
    return pt.eps, crit.eps_c2


def ebk_levels(params, well, n_max, n_min=0):
    """Quantised energies of one well, shifted by the oscillator vacuum energy.

    Solves action(eps) = 2 pi (n + 1/2) for n = n_min..n_max.
    """
    crit = critical_set(params)
    bottom, top = _well_range(params, well, crit)
    targets = [2.0 * math.pi * (n + 0.5) for n in range(n_min, n_max + 1)]

    def action(e):
        return ebk_action(e, params, well)

    if top is not None:
        cap = action(top)
        if targets[-1] > cap:
            n_fit = int(cap / (2.0 * math.pi) - 0.5)
            raise WellCeiling(f"'{well}' well holds n <= {n_fit}, asked for n_max={n_max}")
        hi = top
    else:
        hi = bottom + 1.0
        while action(hi) < targets[-1]:
            hi = bottom + 2.0 * (hi - bottom)
    base = action(bottom) if well == "joined" and crit.eps_c2 is not None else 0.0

    # tabulate, then polish each level inside its bracket
    grid = bottom + (hi - bottom) * np.linspace(0.0, 1.0, 65) ** 2
    grid[-1] = hi  # rounding must not push the last node past the separatrix
    table = np.array([action(e) if (e > bottom or base > 0.0) else 0.0 for e in grid])
    shift = params.omega / params.omega0
    levels = []
    for t in targets:
        if t <= base:
            continue
        k = int(np.searchsorted(table, t))
        lo_e, hi_e = grid[max(k - 1, 0)], grid[min(k, len(grid) - 1)]
        e = optimize.brentq(lambda e: action(e) - t, lo_e, hi_e, xtol=1e-14, rtol=1e-13)
        levels.append(e - shift)
    return levels


# -- singularity detection ---------------------------------------------------

def density_curve(params, eps_values):
    out = []
    for e in eps_values:
        try:
            out.append(level_density(float(e), params))
        except SingularEnergy:
            out.append(float("nan"))
    return np.array(out)


def locate_singularities(params, eps_lo, eps_hi, step=1e-3):
    """Find density non-analyticities on a uniform energy grid.

    Returns a list of (eps, kind) with kind 'jump' or 'log', independent of
    the stationary-point analysis. Divergent peaks are reported as 'log'.
    """
    eps = np.arange(eps_lo, eps_hi + 0.5 * step, step)
    rho = density_curve(params, eps)
    d = np.diff(rho)
    med = np.nanmedian(np.abs(d))
    found = []
    # divergences: interior local maxima standing well above their neighbourhood
    for k in range(2, len(rho) - 2):
        if rho[k] > rho[k - 1] and rho[k] >= rho[k + 1]:
            base = min(rho[k - 2], rho[k + 2])
            if rho[k] - base > 50 * med and rho[k] - base > 1e-3:
                left_up = rho[k] - rho[k - 1] > 0
                right_up = rho[k] - rho[k + 1] >= 0
                if left_up and right_up:
                    # place the singularity toward the higher neighbour
                    e = eps[k] + 0.5 * step * np.sign(rho[k + 1] - rho[k - 1])
                    found.append((float(e), "log"))
    peaks = [e for e, _ in found]
    for k in range(1, len(d) - 1):
        if abs(d[k]) > 50 * med and abs(d[k]) > 1e-3:
            mid = 0.5 * (eps[k] + eps[k + 1])
            if any(abs(mid - e) < 3 * step for e in peaks):
                continue
            if abs(d[k - 1]) < 0.2 * abs(d[k]) and abs(d[k + 1]) < 0.2 * abs(d[k]):
                found.append((float(mid), "jump"))
    return sorted(found)


def classify_singularity(eps_c, params, decades=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6)):
    """Tell a finite jump from a divergence by shrinking the offset h.

    Returns 'jump' when rho(eps_c - h) and rho(eps_c + h) both settle to
    finite, distinct limits, and 'log' when the larger side keeps growing.
    """
    left = np.array([level_density(eps_c - h, params) for h in decades])
    right = np.array([level_density(eps_c + h, params) for h in decades])
    upper = np.maximum(left, right)
    growth = np.diff(upper)
    if np.all(growth[-2:] > 1e-3 * upper[0]) and growth[-1] > 0.5 * growth[0]:
        return "log"
    return "jump"


def ebk_ladder(params, well, eps_max=None, eps_min=None, with_n=False):
    """EBK levels of a well inside [eps_min, eps_max] (defaults: the whole well).

    With ``with_n`` the result is a list of (n, eps) pairs.
    """
    crit = critical_set(params)
    bottom, top = _well_range(params, well, crit)
    cap = eps_max if eps_max is not None else top
    if cap is None:
        raise ValueError("an unbounded well needs eps_max")
    if top is not None:
        cap = min(cap, top)
    if cap <= bottom:
        return []
    n_fit = int(ebk_action(cap, params, well) / (2.0 * math.pi) - 0.5)
    if n_fit < 0:
        return []
    n_lo = 0
    shift = params.omega / params.omega0
    if eps_min is not None and eps_min + shift > bottom:
        n_lo = max(0, int(math.ceil(ebk_action(eps_min + shift, params, well) / (2.0 * math.pi) - 0.5)) - 1)
    if n_lo > n_fit:
        return []
    levels = ebk_levels(params, well, n_fit, n_min=n_lo)
    lo = -math.inf if eps_min is None else eps_min
    out = [(n_lo + i, e) for i, e in enumerate(levels) if lo <= e <= cap]
    return out if with_n else [e for _, e in out]
