"""Stepped-quench protocol that prepares energy cat states.

The state is carried as amplitudes in the instantaneous eigenbasis. A
sudden quench re-expands them in the new eigenbasis, a relaxation
attaches exact phases exp(-i E_n tau).
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BasisMismatch, NormLeakage
from .quantum import (FockBasis, QuadratureBasis, Spectrum, banded_eigh_below, banded_upper,
                      build_hamiltonian, c_labels, diagonalize)
from .semiclassical import critical_set, g_star

log = logging.getLogger(__name__)

LABEL_NAMES = {-1: "minus", 0: "unassigned", 1: "plus"}
DEFAULT_SNAPSHOTS = (1.05, 1.34, 1.54, 1.94, 2.14, 2.25)


@dataclass
class QuenchState:
    g_current: float
    coeffs: np.ndarray
    spectrum: object = None
    norm: float = 1.0

    @property
    def weights(self):
        return np.abs(self.coeffs) ** 2


@dataclass
class EnergyDistribution:
    eps_n: np.ndarray
    weights: np.ndarray
    labels: np.ndarray
    c_diag: np.ndarray = None

    @property
    def mean_eps(self):
        return float(self.weights @ self.eps_n)

    def partial_sums(self):
        return {LABEL_NAMES[k]: float(self.weights[self.labels == k].sum()) for k in (-1, 0, 1)}


@dataclass
class PositionDistribution:
    q_n: np.ndarray
    probs: np.ndarray


@dataclass
class Snapshot:
    g: float
    g_over_gstar: float
    energy: EnergyDistribution
    position: PositionDistribution
    mean_c: float
    eps_c1: float = None
    eps_c2: float = None
    diagonals: dict = field(default_factory=dict)


def spectrum_at(params, n_ph, eps_cut=None):
    """Eigenpairs at ``params``; with ``eps_cut`` only levels with eps < eps_cut."""
    if eps_cut is None or not math.isfinite(eps_cut):
        spec = diagonalize(build_hamiltonian(params, FockBasis(n_ph)), omega0=params.omega0)
    else:
        ab = banded_upper(params, FockBasis(n_ph))
        w, v = banded_eigh_below(ab, 0.5 * params.omega0 * eps_cut)
        spec = Spectrum(w, v, omega0=params.omega0)
    spec.n_ph = n_ph
    spec.meta["g"] = params.g
    return spec


def ground_state(params, n_ph, spectrum=None, eps_cut=None):
    spec = spectrum or spectrum_at(params, n_ph, eps_cut)
    c = np.zeros(len(spec), dtype=complex)
    c[0] = 1.0
    return QuenchState(params.g, c, spec)


def sudden_quench(state, new_spectrum, new_g=None, renormalize=True):
    """Re-expand the state in ``new_spectrum``'s eigenbasis."""
    old = state.spectrum
    if old.vectors.shape[0] != new_spectrum.vectors.shape[0]:
        raise BasisMismatch(f"dimension {old.vectors.shape[0]} != {new_spectrum.vectors.shape[0]}")
    psi = old.vectors @ state.coeffs
    c = new_spectrum.vectors.T @ psi
    norm = float(np.vdot(c, c).real)
    if renormalize and norm > 0:
        c = c / math.sqrt(norm)
    g = new_spectrum.meta.get("g") if new_g is None else new_g
    return QuenchState(g, c, new_spectrum, norm)


def relax(state, tau):
    """Free evolution for time tau (hbar = 1) in the current eigenbasis."""
    if tau == 0:
        return QuenchState(state.g_current, state.coeffs.copy(), state.spectrum, state.norm)
    phase = np.exp(-1j * np.mod(state.spectrum.energies * tau, 2 * math.pi))
    return QuenchState(state.g_current, state.coeffs * phase, state.spectrum, state.norm)


def energy_distribution(state, spectrum=None, labels=None, c_diag=None):
    spec = spectrum or state.spectrum
    if labels is None:
        labels = spec.labels if spec.labels is not None else np.zeros(len(spec), dtype=int)
    return EnergyDistribution(spec.reduced.copy(), state.weights, np.asarray(labels),
                              c_diag if c_diag is not None else spec.c_diag)


def _populated(weights, cut=1e-14):
    return np.nonzero(weights > cut)[0]


def position_distribution(state, spectrum=None, qbasis=None, cut=1e-14):
    """P(q_n) of the dephased mixture sum_m P_m |m><m|, spin summed."""
    spec = spectrum or state.spectrum
    qbasis = qbasis or QuadratureBasis(spec.n_ph)
    w = state.weights
    idx = _populated(w, cut)
    comp = qbasis.components(spec.vectors[:, idx])
    dens = (comp**2).sum(axis=1)
    probs = dens @ w[idx]
    return PositionDistribution(qbasis.q.copy(), probs / probs.sum())


def _diag_number_displacement(vectors):
    nb = vectors.shape[0] // 2
    w = vectors.reshape(nb, 2, -1)
    num = np.einsum("n,nsm->m", np.arange(nb, dtype=float), w**2)
    root = np.sqrt(np.arange(1, nb, dtype=float))
    disp = 2.0 * np.einsum("n,nsm,nsm->m", root, w[:-1], w[1:])
    return num, disp


def annotate(spec, params, qbasis, idx=None):
    """Attach <C>, labels and critical energies to a protocol spectrum."""
    crit = critical_set(params)
    spec.meta.update(eps_c1=crit.eps_c1, eps_c2=crit.eps_c2, q_c=crit.q_c)
    n = len(spec)
    c = np.full(n, np.nan)
    if crit.q_c is not None:
        sel = np.arange(n) if idx is None else idx
        c[sel] = qbasis.c_expectations(spec.vectors[:, sel], crit.q_c)
        spec.labels = np.zeros(n, dtype=int)
        spec.labels[sel] = c_labels(c[sel], spec.reduced[sel], crit.eps_c2)
    else:
        spec.labels = np.zeros(n, dtype=int)
    spec.c_diag = c
    return crit


def edge_weight(state, frac=0.9):
    """Weight of the state on the top photon numbers n >= frac*n_ph."""
    spec = state.spectrum
    psi = spec.vectors @ state.coeffs
    nb = spec.n_ph + 1
    start = int(frac * spec.n_ph)
    return float((np.abs(psi.reshape(nb, 2)[start:]) ** 2).sum())


def make_snapshot(state, params, qbasis, gs):
    spec = state.spectrum
    idx = _populated(state.weights)
    crit = annotate(spec, params, qbasis)
    num, disp = _diag_number_displacement(spec.vectors)
    ed = energy_distribution(state)
    pd = position_distribution(state, qbasis=qbasis)
    mean_c = float(np.nansum(ed.weights[idx] * spec.c_diag[idx])) if crit.q_c is not None else float("nan")
    return Snapshot(params.g, params.g / gs, ed, pd, mean_c, crit.eps_c1, crit.eps_c2,
                    diagonals={"c_op": spec.c_diag.copy(), "number": num, "displacement": disp})


def stepped_protocol(params, n_ph, g_ini=None, g_fin=None, delta_g=2e-5, tau=1e6,
                     snapshots=DEFAULT_SNAPSHOTS, leakage_limit=0.01, eps_cut=None, progress=None):
    """Quench from the ground state at g_ini to g_fin, then ramp g upward in steps.

    ``g_ini``/``g_fin`` default to 2.5 g* and 1.05 g*; ``snapshots`` are given
    as g/g*. With ``eps_cut`` each step keeps only the eigenpairs below that
    reduced energy; the weight dropped by the cut is counted as leakage.

    Returns (snapshots, trace) where trace holds per-step arrays g, mean_eps,
    mean_C, unassigned (weight on unlabeled levels) and norm_leakage (weight
    on the top photon states plus cumulative weight lost to the cut).
    """
    gs = g_star(params.alpha, params.omega)
    g_ini = 2.5 * gs if g_ini is None else g_ini
    g_fin = 1.05 * gs if g_fin is None else g_fin
    if not delta_g > 0:
        raise ValueError("delta_g must be positive")
    targets = sorted(float(s) * gs for s in snapshots)
    if targets and targets[0] < g_fin - 1e-12:
        raise ValueError("snapshots must not lie below g_fin")
    g_end = targets[-1] if targets else g_fin
    n_steps = int(math.ceil((g_end - g_fin) / delta_g - 1e-9))
    qbasis = QuadratureBasis(n_ph)

    state = ground_state(params.with_g(g_ini), n_ph, eps_cut=eps_cut)
    spec = spectrum_at(params.with_g(g_fin), n_ph, eps_cut)
    state = sudden_quench(state, spec, g_fin)
    lost = 1.0 - state.norm

    keys = ("g", "mean_eps", "mean_C", "unassigned", "norm_leakage")
    trace = {k: np.empty(n_steps + 1) for k in keys}
    snaps = []
    pending = list(targets)
    for step in range(n_steps + 1):
        g = g_fin + step * delta_g
        if step:
            state = relax(state, tau)
            spec = spectrum_at(params.with_g(g), n_ph, eps_cut)
            state = sudden_quench(state, spec, g)
            lost += 1.0 - state.norm
        p = params.with_g(g)
        w = state.weights
        crit = critical_set(p)
        idx = _populated(w)
        unassigned = float(w.sum())
        if crit.q_c is not None:
            c = qbasis.c_expectations(spec.vectors[:, idx], crit.q_c)
            mean_c = float(w[idx] @ c)
            lab = c_labels(c, spec.reduced[idx], crit.eps_c2)
            unassigned = float(w[idx][lab == 0].sum())
        else:
            mean_c = float("nan")
        leak = edge_weight(state) + lost
        trace["g"][step] = g
        trace["mean_eps"][step] = float(w @ spec.reduced)
        trace["mean_C"][step] = mean_c
        trace["unassigned"][step] = unassigned
        trace["norm_leakage"][step] = leak
        if leak > leakage_limit:
            raise NormLeakage(f"leakage {leak:.3g} at g={g:.6g}; raise n_ph or eps_cut")
        while pending and g >= pending[0] - 0.5 * delta_g:
            snaps.append(make_snapshot(state, p, qbasis, gs))
            pending.pop(0)
        if progress and step % 100 == 0:
            progress(step, n_steps, g)
    return snaps, trace
