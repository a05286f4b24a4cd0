"""Truncated Fock-space quantum model.

Basis ordering is boson-major, spin-minor: index ``2*n + s`` with photon
number ``n`` and ``s = 0`` for m_z = +1/2, ``s = 1`` for m_z = -1/2. The
Hamiltonian is

    H = w a+a + w0 Jz + sqrt(w w0) g (a+ + a) Jx + sqrt(w0/2) alpha (a+ + a)

which is banded with half-bandwidth 3 in this ordering.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import NoConvergence
from .semiclassical import critical_set, g_star

log = logging.getLogger(__name__)

LABEL_THRESHOLD = 0.95
OBSERVABLES = ("number", "jx", "jz", "quadrature_q", "displacement", "h_int", "c_op")


@dataclass(frozen=True)
class FockBasis:
    n_ph: int

    def __post_init__(self):
        if self.n_ph < 1:
            raise ValueError("n_ph must be >= 1")

    @property
    def dim(self):
        return 2 * (self.n_ph + 1)

    @property
    def n_boson(self):
        return self.n_ph + 1


@dataclass
class ObservableMatrix:
    name: str
    matrix: np.ndarray


@dataclass
class Spectrum:
    energies: np.ndarray
    vectors: np.ndarray
    omega0: float = None
    c_diag: np.ndarray = None
    labels: np.ndarray = None
    n_ph: int = None
    meta: dict = field(default_factory=dict)

    @property
    def reduced(self):
        return 2.0 * self.energies / self.omega0

    def __len__(self):
        return len(self.energies)


# -- operators ---------------------------------------------------------------

def _boson_x(n_boson):
    """Matrix of a+ + a in the truncated number basis."""
    off = np.sqrt(np.arange(1, n_boson, dtype=float))
    return np.diag(off, 1) + np.diag(off, -1)


_JZ = np.diag([0.5, -0.5])
_JX = np.array([[0.0, 0.5], [0.5, 0.0]])


def operator(name, basis, params=None, q_c=None):
    """Observable ``name`` as a dense matrix on the full spin-boson space."""
    nb = basis.n_boson
    eye_b, eye_s = np.eye(nb), np.eye(2)
    if name == "number":
        m = np.kron(np.diag(np.arange(nb, dtype=float)), eye_s)
    elif name == "jx":
        m = np.kron(eye_b, _JX)
    elif name == "jz":
        m = np.kron(eye_b, _JZ)
    elif name == "quadrature_q":
        m = np.kron(_boson_x(nb) / math.sqrt(2.0), eye_s)
    elif name == "displacement":
        m = np.kron(_boson_x(nb), eye_s)
    elif name == "h_int":
        m = math.sqrt(params.omega * params.omega0) * params.g * np.kron(_boson_x(nb), _JX)
    elif name == "c_op":
        return build_c_operator(q_c, basis)
    else:
        raise ValueError(f"unknown observable {name!r}; expected one of {OBSERVABLES}")
    return ObservableMatrix(name, m)


def hamiltonian_bands(params, basis):
    """Upper diagonals (main, +1, +2, +3) of the Hamiltonian."""
    w, w0, g, al = params.omega, params.omega0, params.g, params.alpha
    nb, dim = basis.n_boson, basis.dim
    n = np.repeat(np.arange(nb, dtype=float), 2)
    spin = np.tile([0.5, -0.5], nb)
    d0 = w * n + w0 * spin
    d1 = np.zeros(dim - 1)
    d2 = np.zeros(dim - 2)
    d3 = np.zeros(dim - 3)
    root = np.sqrt(np.arange(1, nb, dtype=float))
    cpl = math.sqrt(w * w0) * g * 0.5
    lin = math.sqrt(w0 / 2.0) * al
    # (n, up) <-> (n+1, down) sits at offset 3, (n, down) <-> (n+1, up) at offset 1
    d3[0::2] = cpl * root
    d1[1::2] = cpl * root
    d2[:] = lin * np.repeat(root, 2)
    return d0, d1, d2, d3


def banded_upper(params, basis):
    """LAPACK upper banded storage (4, dim) for scipy.linalg banded routines."""
    d0, d1, d2, d3 = hamiltonian_bands(params, basis)
    dim = basis.dim
    ab = np.zeros((4, dim))
    ab[3] = d0
    ab[2, 1:] = d1
    ab[1, 2:] = d2
    ab[0, 3:] = d3
    return ab


def build_hamiltonian(params, basis):
    d0, d1, d2, d3 = hamiltonian_bands(params, basis)
    h = np.diag(d0)
    for k, d in ((1, d1), (2, d2), (3, d3)):
        h += np.diag(d, k)
        h += np.diag(d, -k)
    return h


def banded_matvec(ab, x):
    """y = H x for upper banded storage; x may be (dim,) or (dim, m)."""
    kd = ab.shape[0] - 1
    y = ab[kd][:, None] * x if x.ndim == 2 else ab[kd] * x
    for k in range(1, kd + 1):
        d = ab[kd - k, k:]
        if x.ndim == 2:
            d = d[:, None]
        y[:-k] += d * x[k:]
        y[k:] += d * x[:-k]
    return y


# -- eigensolvers ------------------------------------------------------------

def diagonalize(matrix, mode="standard", bits=128, omega0=None, max_sweeps=60):
    """Full eigendecomposition, ascending.

    ``mode='standard'`` uses LAPACK in double precision. ``mode='high_precision'``
    runs cyclic Jacobi rotations with ``bits`` of working precision and returns
    object arrays of mpmath numbers.
    """
    if mode == "standard":
        a = np.asarray(matrix, dtype=float)
        w, v = np.linalg.eigh(a)
        return Spectrum(w, v, omega0=omega0)
    if mode == "high_precision":
        if bits < 128:
            raise ValueError("high_precision mode needs at least 128 bits")
        w, v = jacobi_eigh(matrix, bits, max_sweeps=max_sweeps)
        return Spectrum(w, v, omega0=omega0, meta={"bits": bits})
    raise ValueError(f"unknown mode {mode!r}")


def jacobi_eigh(matrix, bits, max_sweeps=60):
    """Cyclic Jacobi eigensolver carried entirely at ``bits`` of precision."""
    import mpmath

    with mpmath.workprec(bits):
        mpf = mpmath.mpf
        n = len(matrix)
        a = [[mpf(matrix[i][j]) for j in range(n)] for i in range(n)]
        v = [[mpf(1) if i == j else mpf(0) for j in range(n)] for i in range(n)]
        tol = mpmath.ldexp(1, -bits + 4)
        off = None
        norm = mpmath.sqrt(mpmath.fsum(a[i][j] ** 2 for i in range(n) for j in range(n)))
        if norm == 0:
            norm = mpf(1)
        for sweep in range(max_sweeps):
            off = mpmath.sqrt(mpmath.fsum(a[i][j] ** 2 for i in range(n) for j in range(n) if i != j))
            if off <= tol * norm:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p][q]
                    if apq == 0:
                        continue
                    theta = (a[q][q] - a[p][p]) / (2 * apq)
                    t = 1 / (abs(theta) + mpmath.sqrt(1 + theta * theta))
                    if theta < 0:
                        t = -t
                    c = 1 / mpmath.sqrt(1 + t * t)
                    s = t * c
                    for k in range(n):
                        akp, akq = a[k][p], a[k][q]
                        a[k][p] = c * akp - s * akq
                        a[k][q] = s * akp + c * akq
                    for k in range(n):
                        apk, aqk = a[p][k], a[q][k]
                        a[p][k] = c * apk - s * aqk
                        a[q][k] = s * apk + c * aqk
                    for k in range(n):
                        vkp, vkq = v[k][p], v[k][q]
                        v[k][p] = c * vkp - s * vkq
                        v[k][q] = s * vkp + c * vkq
        else:
            raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps",
                                sweeps=max_sweeps, off_norm=off)
        order = sorted(range(n), key=lambda i: a[i][i])
        w = np.array([a[i][i] for i in order], dtype=object)
        vec = np.array([[v[k][i] for i in order] for k in range(n)], dtype=object)
    return w, vec


def _clusters(w, tol):
    groups, cur = [], [0]
    for i in range(1, len(w)):
        if w[i] - w[i - 1] < tol:
            cur.append(i)
        else:
            groups.append(cur)
            cur = [i]
    groups.append(cur)
    return groups


def banded_eigh(ab, lo, hi, iterations=3, seed=0):
    """Eigenpairs lo..hi (inclusive, ascending) of an upper-banded symmetric matrix.

    Eigenvalues come from LAPACK band reduction; eigenvectors from (block)
    inverse iteration with banded LU solves, which keeps the cost O(dim)
    per vector instead of the O(dim^3) of forming the band reduction's Q.
    """
    dim = ab.shape[1]
    lo_x, hi_x = max(lo - 1, 0), min(hi + 1, dim - 1)
    w = linalg.eigvals_banded(ab, select="i", select_range=(lo_x, hi_x))
    return _inverse_iteration(ab, w, lo_x, lo, hi, iterations, seed)


def banded_eigh_below(ab, e_max, iterations=3, seed=0):
    """All eigenpairs with eigenvalue below ``e_max`` (the highest one found is
    only used to separate clusters at the cut and is dropped)."""
    w = linalg.eigvals_banded(ab, select="v", select_range=(-np.inf, e_max))
    if len(w) < 2:
        w = linalg.eigvals_banded(ab, select="i", select_range=(0, 1))
    return _inverse_iteration(ab, w, 0, 0, len(w) - 2, iterations, seed)


def _inverse_iteration(ab, w, lo_x, lo, hi, iterations, seed):
    dim = ab.shape[1]
    scale = max(1.0, float(np.max(np.abs(ab))))
    groups = _clusters(w, 1e-7 * scale)
    kd = ab.shape[0] - 1
    full = np.zeros((2 * kd + 1, dim))
    full[:kd + 1] = ab
    for k in range(1, kd + 1):
        full[kd + k, :-k] = ab[kd - k, k:]
    rng = np.random.default_rng(seed)
    vals, vecs = [], []
    for grp in groups:
        if grp[-1] + lo_x < lo or grp[0] + lo_x > hi:
            continue
        m = len(grp)
        sigma = float(np.mean(w[grp]))
        sigma += 1e-11 * scale * (1.0 if m == 1 else 0.5)
        shifted = full.copy()
        shifted[kd] -= sigma
        y = rng.standard_normal((dim, m))
        for _ in range(iterations):
            y = linalg.solve_banded((kd, kd), shifted, y, check_finite=False)
            y, _ = np.linalg.qr(y)
        hy = banded_matvec(ab, y)
        small = y.T @ hy
        mu, u = np.linalg.eigh(0.5 * (small + small.T))
        y = y @ u
        for j, idx in enumerate(grp):
            if lo <= idx + lo_x <= hi:
                vals.append(mu[j])
                vecs.append(y[:, j])
    order = np.argsort(vals)
    return np.array(vals)[order], np.array(vecs).T[:, order]


def lowest_levels(params, n_ph, k, vectors=False):
    """Lowest k eigenvalues (and optionally vectors) via the band solver."""
    ab = banded_upper(params, FockBasis(n_ph))
    if not vectors:
        return linalg.eigvals_banded(ab, select="i", select_range=(0, k - 1))
    return banded_eigh(ab, 0, k - 1)


# -- the two-valued constant of motion ---------------------------------------

class QuadratureBasis:
    """Eigenbasis of the truncated quadrature q = (a+ + a)/sqrt(2)."""

    def __init__(self, n_ph):
        nb = n_ph + 1
        off = np.sqrt(np.arange(1, nb, dtype=float) / 2.0)
        self.n_ph = n_ph
        self.q, self.u = linalg.eigh_tridiagonal(np.zeros(nb), off)

    def signs(self, q_c):
        s = np.sign(self.q - q_c)
        tie = np.abs(self.q - q_c) <= 1e-12
        if tie.any():
            log.warning("quadrature eigenvalue coincides with q_c=%g; assigning +1", q_c)
            s[tie] = 1.0
        return s

    def components(self, vectors):
        """Amplitudes <q_k, s | v> with shape (n_boson, 2, n_vectors)."""
        nb = self.n_ph + 1
        w = vectors.reshape(nb, 2, -1)
        return np.einsum("nk,nsm->ksm", self.u, w, optimize=True)

    def c_expectations(self, vectors, q_c):
        """Diagonal elements <v|C|v> for each column of vectors."""
        comp = self.components(vectors)
        dens = (np.abs(comp) ** 2).sum(axis=1)
        return self.signs(q_c) @ dens


def build_c_operator(q_c, basis):
    """sign(q - q_c) on the boson factor, identity on the spin."""
    qb = QuadratureBasis(basis.n_ph)
    cb = (qb.u * qb.signs(q_c)) @ qb.u.T
    return ObservableMatrix("c_op", np.kron(cb, np.eye(2)))


def c_labels(c_diag, reduced=None, eps_c2=None, threshold=LABEL_THRESHOLD):
    """Integer labels: -1 (left well), +1 (right well), 0 (unassigned).

    Levels at or above eps_c2 stay unassigned; with ``eps_c2=None`` (no
    separatrix) every level is unassigned.
    """
    lab = np.zeros(len(c_diag), dtype=int)
    if eps_c2 is None:
        return lab
    below = np.asarray(reduced) < eps_c2
    lab[(c_diag <= -threshold) & below] = -1
    lab[(c_diag >= threshold) & below] = 1
    return lab


def solve(params, n_ph, with_c=True, qbasis=None):
    """Diagonalize H at params and attach <C> and labels when a separatrix exists."""
    basis = FockBasis(n_ph)
    h = build_hamiltonian(params, basis)
    spec = diagonalize(h, omega0=params.omega0)
    spec.n_ph = n_ph
    crit = critical_set(params)
    spec.meta.update(g=params.g, alpha=params.alpha, omega=params.omega,
                     eps_gs=crit.eps_gs, eps_c1=crit.eps_c1, eps_c2=crit.eps_c2, q_c=crit.q_c)
    if with_c and crit.q_c is not None:
        qbasis = qbasis or QuadratureBasis(n_ph)
        spec.c_diag = qbasis.c_expectations(spec.vectors, crit.q_c)
        # exactly degenerate energies are ordered by <C> so outputs are deterministic
        order = np.lexsort((spec.c_diag, spec.energies))
        if np.any(order != np.arange(len(order))):
            spec.energies, spec.vectors = spec.energies[order], spec.vectors[:, order]
            spec.c_diag = spec.c_diag[order]
        spec.labels = c_labels(spec.c_diag, spec.reduced, crit.eps_c2)
    return spec


def diagonal_expectation(spec, obs):
    m = obs.matrix if isinstance(obs, ObservableMatrix) else obs
    v = spec.vectors
    return np.einsum("in,in->n", v, m @ v)


def diagonal_observables(spec, names=("number", "displacement", "jx")):
    """Cheap diagonal elements of the standard observables, keyed by name."""
    v = spec.vectors
    nb = v.shape[0] // 2
    w = v.reshape(nb, 2, -1)
    out = {}
    for name in names:
        if name == "number":
            out[name] = np.einsum("n,nsm->m", np.arange(nb, dtype=float), w**2)
        elif name == "displacement":
            root = np.sqrt(np.arange(1, nb, dtype=float))
            out[name] = 2.0 * np.einsum("n,nsm,nsm->m", root, w[:-1], w[1:])
        elif name == "jx":
            out[name] = np.einsum("nm,nm->m", w[:, 0, :], w[:, 1, :])
        elif name == "jz":
            out[name] = 0.5 * ((w[:, 0, :] ** 2).sum(0) - (w[:, 1, :] ** 2).sum(0))
        elif name == "c_op":
            out[name] = spec.c_diag
        else:
            raise ValueError(f"no cheap diagonal for {name!r}")
    return out


# -- ground-state indicators and convergence ---------------------------------

def gs_indicators(alpha, g_grid, omega0, n_ph, omega=1.0):
    """Ground-state energy, photon number and their finite-difference derivatives.

    Returns a dict of arrays over ``g_grid`` (which must be uniform); the end
    points of the derivative columns are NaN.
    """
    from .semiclassical import ModelParams

    g_grid = np.asarray(g_grid, dtype=float)
    h = np.diff(g_grid)
    if len(g_grid) < 3 or not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise ValueError("g_grid must be uniform with at least 3 points")
    h = h[0]
    basis = FockBasis(n_ph)
    eps = np.empty(len(g_grid))
    num = np.empty(len(g_grid))
    nvec = np.repeat(np.arange(basis.n_boson, dtype=float), 2)
    for i, g in enumerate(g_grid):
        ab = banded_upper(ModelParams(omega0, g, alpha, omega), basis)
        w, v = banded_eigh(ab, 0, 0)
        eps[i] = 2.0 * w[0] / omega0
        num[i] = float(nvec @ v[:, 0] ** 2)
    d2 = np.full_like(eps, np.nan)
    d2[1:-1] = (eps[2:] - 2 * eps[1:-1] + eps[:-2]) / h**2
    dn = np.full_like(num, np.nan)
    dn[1:-1] = (num[2:] - num[:-2]) / (2 * h)
    return {"g": g_grid, "eps_gs": eps, "d2eps_gs": d2, "n_gs": num, "dn_gs": dn}


def truncation_check(params, n_ph, k_levels):
    """Largest shift of the lowest k reduced levels when n_ph is doubled."""
    if n_ph < 2:
        raise ValueError("n_ph must be >= 2")
    a = lowest_levels(params, n_ph, k_levels)
    b = lowest_levels(params, 2 * n_ph, k_levels)
    return float(np.max(np.abs(a - b)) * 2.0 / params.omega0)


def choose_n_ph(params, eps_max, tol=1e-8, start=50):
    """Smallest n_ph (doubling search) converging all levels below eps_max to tol."""
    n = start
    while True:
        ab = banded_upper(params, FockBasis(2 * n))
        w = linalg.eigvals_banded(ab, select="v", select_range=(-np.inf, eps_max * params.omega0 / 2))
        k = len(w)
        if k and k < 2 * (n + 1):
            if truncation_check(params, n, k) <= tol:
                return n
        n *= 2


def g_star_of(params):
    return g_star(params.alpha, params.omega)
