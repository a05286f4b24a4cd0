"""Equilibrium descriptions of a dephased cat state.

All energies here are reduced energies eps = 2E/omega0 unless a function
says otherwise; the microcanonical windows depend only on level order, so
the choice of unit does not change any average.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientLevels, UnassignedPopulation, UndefinedEnsemble, WindowOutOfRange

UNASSIGNED_BUDGET = 0.01


@dataclass
class SplitDistribution:
    plus: np.ndarray          # renormalized weights over plus-labeled levels (full length, zeros elsewhere)
    minus: np.ndarray
    p_plus: float
    p_minus: float
    mean_eps_plus: float
    mean_eps_minus: float
    unassigned: float = 0.0

    def mean_energy(self, omega0):
        """Absolute mean energies (E_plus, E_minus)."""
        return 0.5 * omega0 * self.mean_eps_plus, 0.5 * omega0 * self.mean_eps_minus


@dataclass
class EnsembleReport:
    observable: str
    diagonal: float
    microcanonical: float
    modified: float = None
    window_range: float = None
    n_window: int = None
    n_plus: int = None
    n_minus: int = None


def diagonal_average(dist, obs_diag):
    w = np.asarray(dist.weights if hasattr(dist, "weights") else dist, dtype=float)
    o = np.asarray(obs_diag, dtype=float)
    if w.shape != o.shape:
        raise ValueError("weights and observable lengths differ")
    nz = w > 0
    return float(w[nz] @ o[nz])


def _window(eps, center, half_window):
    eps = np.asarray(eps)
    i = int(np.argmin(np.abs(eps - center)))
    lo, hi = i - half_window, i + half_window
    if lo < 0 or hi >= len(eps):
        raise WindowOutOfRange(
            f"window of {2 * half_window + 1} levels around eps={center:.6g} leaves the spectrum")
    return np.arange(lo, hi + 1)


def microcanonical_average(eps, obs_diag, eps_target, half_window=30):
    """Unweighted mean of O_nn over the 2*half_window+1 levels nearest eps_target."""
    idx = _window(eps, eps_target, half_window)
    return float(np.mean(np.asarray(obs_diag)[idx]))


def split(dist, c_diag=None, budget=UNASSIGNED_BUDGET):
    """Partition a labeled distribution into its plus and minus parts.

    p_plus and p_minus come from the diagonal <C>, i.e. (1 +/- <C>)/2; the
    sub-distributions are the label-restricted weights, renormalized.
    """
    w = np.asarray(dist.weights, dtype=float)
    lab = np.asarray(dist.labels)
    c = dist.c_diag if c_diag is None else c_diag
    un = float(w[lab == 0].sum())
    if un > budget:
        raise UnassignedPopulation(f"{un:.3%} of the weight sits on unassigned levels")
    mean_c = float(np.nansum(w * np.asarray(c))) if c is not None else float(w @ lab)
    p_plus = 0.5 * (1.0 + mean_c)
    p_minus = 1.0 - p_plus
    eps = np.asarray(dist.eps_n, dtype=float)
    parts = []
    means = []
    for k in (1, -1):
        sub = np.where(lab == k, w, 0.0)
        tot = sub.sum()
        if tot > 0:
            sub = sub / tot
            means.append(float(sub @ eps))
        else:
            means.append(float("nan"))
        parts.append(sub)
    return SplitDistribution(parts[0], parts[1], p_plus, p_minus, means[0], means[1], un)


def _label_window(eps, labels, label, center, half_window):
    pos = np.nonzero(np.asarray(labels) == label)[0]
    if len(pos) == 0:
        raise WindowOutOfRange(f"no levels carry label {label:+d}")
    sub = _window(np.asarray(eps)[pos], center, half_window)
    return pos[sub]


def modified_microcanonical(eps, obs_diag, labels, sp, half_window=15, quantized=False,
                            eps_c2=None):
    """Two same-label microcanonical windows mixed with weights p_plus, p_minus.

    With ``quantized=True`` the observable is the constant of motion itself
    and each level contributes its label value (+1 or -1), so the result is
    p_plus - p_minus. A part with negligible weight is skipped.
    """
    if eps_c2 is None:
        raise UndefinedEnsemble("no separatrix: C is not a constant of motion here")
    obs = np.asarray(labels, dtype=float) if quantized else np.asarray(obs_diag, dtype=float)
    total = 0.0
    for label, p, center in ((1, sp.p_plus, sp.mean_eps_plus), (-1, sp.p_minus, sp.mean_eps_minus)):
        if p <= 1e-12:
            continue
        if not np.isfinite(center):
            raise UndefinedEnsemble(f"label {label:+d} has weight {p:.3g} but no labeled population")
        idx = _label_window(eps, labels, label, center, half_window)
        total += p * float(np.mean(obs[idx]))
    return total


def populated_range(eps, obs_diag, weights, mass=0.99):
    """Range of O_nn over the energy interval holding ``mass`` of the weight."""
    w = np.asarray(weights, dtype=float)
    eps = np.asarray(eps, dtype=float)
    order = np.argsort(eps)
    cum = np.cumsum(w[order])
    tail = 0.5 * (1.0 - mass)
    lo = eps[order][np.searchsorted(cum, tail)]
    hi = eps[order][min(np.searchsorted(cum, 1.0 - tail), len(eps) - 1)]
    sel = (eps >= lo) & (eps <= hi)
    o = np.asarray(obs_diag, dtype=float)[sel]
    return float(o.max() - o.min())


def _density(e_levels, e, width):
    z = (e - e_levels) / width
    return float(np.exp(-0.5 * z * z).sum() / (width * math.sqrt(2 * math.pi)))


def _spacing(e_levels, e, k=10):
    near = np.sort(e_levels[np.argsort(np.abs(e_levels - e))[:2 * k + 1]])
    return float((near[-1] - near[0]) / (len(near) - 1))


def two_temperatures(energies, labels, e_plus, e_minus, smoothing_width=None, min_levels=20,
                     spacings=10.0):
    """Temperatures from S(E+, E-) = ln(rho+(E+) + rho-(E-)).

    Densities are Gaussian-smoothed counts of same-label levels, by default
    with width equal to ``spacings`` mean level spacings around each energy. Energies
    and the returned temperatures share the unit of ``energies``.
    """
    energies = np.asarray(energies, dtype=float)
    labels = np.asarray(labels)
    out = []
    dens = {}
    for label, e in ((1, e_plus), (-1, e_minus)):
        lev = energies[labels == label]
        if len(lev) < min_levels:
            raise InsufficientLevels(f"only {len(lev)} levels carry label {label:+d}")
        width = smoothing_width or spacings * _spacing(lev, e)
        inside = np.count_nonzero(np.abs(lev - e) <= 2 * width)
        if inside < min_levels:
            raise InsufficientLevels(f"{inside} labeled levels within the smoothing window")
        h = 0.1 * width
        d = (_density(lev, e + h, width) - _density(lev, e - h, width)) / (2 * h)
        dens[label] = (_density(lev, e, width), d, width)
    total = dens[1][0] + dens[-1][0]
    for label in (1, -1):
        rho, drho, width = dens[label]
        beta = drho / total
        out.append(math.inf if abs(beta) * width < 1e-12 else 1.0 / beta)
    return tuple(out)


def ensemble_table(eps, diagonals, weights, labels, c_diag, eps_c2, half_window=30,
                   half_window_mod=15):
    """EnsembleReport rows for every observable in ``diagonals`` (name -> O_nn)."""
    from types import SimpleNamespace

    dist = SimpleNamespace(eps_n=eps, weights=weights, labels=labels, c_diag=c_diag)
    mean_eps = float(np.asarray(weights) @ np.asarray(eps))
    sp = None
    try:
        sp = split(dist)
    except UnassignedPopulation:
        pass
    rows = []
    for name, o in diagonals.items():
        diag = diagonal_average(weights, o)
        micro = microcanonical_average(eps, o, mean_eps, half_window)
        mod = None
        if sp is not None and eps_c2 is not None:
            mod = modified_microcanonical(eps, o, labels, sp, half_window_mod,
                                          quantized=(name == "c_op"), eps_c2=eps_c2)
        rows.append(EnsembleReport(name, diag, micro, mod,
                                   populated_range(eps, o, weights),
                                   2 * half_window + 1, 2 * half_window_mod + 1,
                                   2 * half_window_mod + 1))
    return rows, sp
