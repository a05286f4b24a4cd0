"""Extended-precision refinement of a nearly degenerate level pair.

Full Jacobi diagonalization at several hundred bits is O(D^3) in
pure-Python arithmetic and impractical beyond a few dozen states. For
avoided-crossing gaps only the two participating eigenvalues matter, so
they are refined here by block inverse iteration on the banded
Hamiltonian, entirely at the working precision:

1. the Hamiltonian band is assembled with mpmath entries (square roots
   evaluated at full precision),
2. H - sigma is factored by a banded LU with partial pivoting,
3. a two-column block started from double-precision eigenvectors is
   iterated until the 2x2 Rayleigh quotient stops moving,
4. the gap comes from the closed-form eigenvalues of that 2x2 block.
"""

import mpmath

from .errors import NoConvergence

KD = 3


def band_mp(omega, omega0, g, alpha, n_ph):
    """Upper diagonals (main, +1, +2, +3) as lists of mpf at the current precision."""
    mpf = mpmath.mpf
    w, w0, g, al = mpf(omega), mpf(omega0), mpf(g), mpf(alpha)
    nb = n_ph + 1
    dim = 2 * nb
    half = mpf(1) / 2
    d0 = [w * (i // 2) + (w0 * half if i % 2 == 0 else -w0 * half) for i in range(dim)]
    root = [mpmath.sqrt(n) for n in range(1, nb)]
    cpl = mpmath.sqrt(w * w0) * g * half
    lin = mpmath.sqrt(w0 / 2) * al
    zero = mpf(0)
    d1 = [zero] * (dim - 1)
    d2 = [lin * root[i // 2] for i in range(dim - 2)]
    d3 = [zero] * (dim - 3)
    for n in range(nb - 1):
        d3[2 * n] = cpl * root[n]
        d1[2 * n + 1] = cpl * root[n]
    return [d0, d1, d2, d3]


def _rows(band, sigma):
    dim = len(band[0])
    rows = [dict() for _ in range(dim)]
    for i in range(dim):
        rows[i][i] = band[0][i] - sigma
        for k in range(1, KD + 1):
            if i + k < dim:
                v = band[k][i]
                if v:
                    rows[i][i + k] = v
                    rows[i + k][i] = v
    return rows


class BandLU:
    """LU factorization of (H - sigma) with partial pivoting inside the band."""

    def __init__(self, band, sigma):
        rows = _rows(band, sigma)
        dim = len(rows)
        self.ops = []
        for j in range(dim):
            last = min(j + KD, dim - 1)
            piv = max(range(j, last + 1), key=lambda r: abs(rows[r].get(j, 0)))
            if piv != j:
                rows[j], rows[piv] = rows[piv], rows[j]
            pivot = rows[j].get(j, 0)
            if pivot == 0:
                pivot = mpmath.ldexp(1, -mpmath.mp.prec) * (1 + abs(sigma))
                rows[j][j] = pivot
            upper = [(c, v) for c, v in rows[j].items() if c > j]
            factors = []
            for r in range(j + 1, last + 1):
                a = rows[r].pop(j, 0)
                if a:
                    f = a / pivot
                    row = rows[r]
                    for c, v in upper:
                        row[c] = row.get(c, 0) - f * v
                    factors.append((r, f))
            self.ops.append((piv, factors))
        self.u = [(rows[j][j], [(c, v) for c, v in rows[j].items() if c > j]) for j in range(dim)]

    def solve(self, b):
        x = list(b)
        for j, (piv, factors) in enumerate(self.ops):
            if piv != j:
                x[j], x[piv] = x[piv], x[j]
            xj = x[j]
            for r, f in factors:
                x[r] -= f * xj
        for j in range(len(x) - 1, -1, -1):
            d, upper = self.u[j]
            s = x[j]
            for c, v in upper:
                s -= v * x[c]
            x[j] = s / d
        return x


def matvec(band, x):
    dim = len(x)
    y = [band[0][i] * x[i] for i in range(dim)]
    for k in range(1, KD + 1):
        dk = band[k]
        for i in range(dim - k):
            v = dk[i]
            if v:
                y[i] += v * x[i + k]
                y[i + k] += v * x[i]
    return y


def _dot(a, b):
    return mpmath.fsum(x * y for x, y in zip(a, b))


def _orthonormalize(cols):
    out = []
    for c in cols:
        for q in out:
            p = _dot(q, c)
            c = [ci - p * qi for ci, qi in zip(c, q)]
        n = mpmath.sqrt(_dot(c, c))
        out.append([ci / n for ci in c])
    return out


def refine_pair(band, start, sigma, max_iter=40):
    """Two eigenvalues closest to sigma, starting from a (dim, 2) block.

    Returns (lower, upper, gap) as mpf numbers. ``gap`` is evaluated from the
    2x2 Rayleigh block without subtracting the two eigenvalues.
    """
    tol = mpmath.ldexp(1, -mpmath.mp.prec + 12)
    lu = BandLU(band, sigma)
    cols = _orthonormalize([[mpmath.mpf(float(v)) for v in start[:, j]] for j in range(2)])
    prev = None
    for it in range(max_iter):
        cols = _orthonormalize([lu.solve(c) for c in cols])
        h0, h1 = matvec(band, cols[0]), matvec(band, cols[1])
        a, b, d = _dot(cols[0], h0), _dot(cols[0], h1), _dot(cols[1], h1)
        half_diff = (a - d) / 2
        root = mpmath.sqrt(half_diff * half_diff + b * b)
        mid = (a + d) / 2
        lo, hi = mid - root, mid + root
        if prev is not None:
            scale = 1 + abs(mid)
            if abs(lo - prev[0]) <= tol * scale and abs(hi - prev[1]) <= tol * scale:
                return lo, hi, 2 * root
        prev = (lo, hi)
    raise NoConvergence(f"pair refinement did not settle in {max_iter} iterations", sweeps=max_iter)


def pair_gap(params, n_ph, index, bits, g=None):
    """Extended-precision gap E_{index+1} - E_index (absolute energy units).

    ``g`` may be an mpf to evaluate at couplings finer than double precision;
    the double-precision starting block uses its rounded value.
    """
    from .quantum import FockBasis, banded_eigh, banded_upper

    g = params.g if g is None else g
    with mpmath.workprec(bits):
        gd = float(g)
        ab = banded_upper(params.with_g(gd), FockBasis(n_ph))
        w, v = banded_eigh(ab, index, index + 1)
        band = band_mp(params.omega, params.omega0, g, params.alpha, n_ph)
        # the pair midpoint is the point nearest both levels and farthest from the rest
        sigma = (mpmath.mpf(float(w[0])) + mpmath.mpf(float(w[1]))) / 2
        lo, hi, gap = refine_pair(band, v, sigma)
    return lo, hi, gap
