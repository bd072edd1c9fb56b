"""Exact vacuum (hole) probabilities and count distributions on regions.

For a determinantal process of rank n, the count in a bounded region A is a
sum of independent Bernoulli(lambda_k) variables, where lambda_k are the
eigenvalues of the Gram matrix G_{jk} = int_A phi_j conj(phi_k).  Everything
here flows from that: vacuum = prod(1 - lambda_k), full count pmf by
Bernoulli convolution, Palm conditioning by a rank-one projection of the
coefficient matrix.

Rotation-invariant regions make G exactly diagonal with entries given by
regularized incomplete gamma functions (no quadrature); general disk and
annulus atoms are integrated by tensor Gauss-Legendre rules in polar
coordinates with order doubling until successive matrices agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammainc, gammaincc

from .core import (
    Annulus,
    CenteredDisk,
    DifferenceRegion,
    Disk,
    PointLike,
    Region,
    UnionRegion,
    AmbiguousMeasureError,
    UnsupportedRegionError,
    as_complex,
    is_radially_symmetric,
    radial_intervals,
)
from .kernel import phi_matrix

__all__ = [
    "GramSpectrum",
    "CountDistribution",
    "InfiniteVacuum",
    "SandwichResult",
    "QuadratureError",
    "gram_matrix",
    "gram_spectrum",
    "vacuum_probability",
    "log_vacuum_probability",
    "count_distribution",
    "log_count_tail",
    "mean_count",
    "infinite_centered_disk_vacuum",
    "hole_ratio",
    "palm_vacuum",
    "log_palm_vacuum",
    "sandwich_check",
]

_EIG_CLAMP = 1e-10
_QUAD_TOL = 1e-9
_MAX_RADIAL_ORDER = 3072
_MODE_CUT = 1e-15


class QuadratureError(RuntimeError):
    """Gauss-Legendre refinement failed to converge; carries the trace."""

    def __init__(self, message, trace):
        super().__init__(f"{message}; refinement trace {trace}")
        self.trace = trace


@dataclass(frozen=True)
class GramSpectrum:
    """Eigenvalues (clamped to [0,1]) of the kernel restricted to a region."""

    n: int
    region: Region
    eigenvalues: np.ndarray
    quadrature_order: int  # 0 when the closed-form diagonal path was used


@dataclass(frozen=True)
class CountDistribution:
    """Distribution of the number of points falling in a region."""

    pmf: np.ndarray  # length n+1, indices 0..n
    mean: float


@dataclass(frozen=True)
class InfiniteVacuum:
    """Truncated-product value of P(xi(B_r(0)) = 0) with a certified error.

    `value` underflows to 0.0 for large r; `log_value` is always usable.
    `mult_error` bounds the relative amount by which the reported value can
    exceed the true infinite product (the truncation only drops factors < 1).
    """

    value: float
    log_value: float
    mult_error: float
    terms: int


@dataclass(frozen=True)
class SandwichResult:
    lower_ok: bool
    ratio: float


# ---------------------------------------------------------------------------
# Stable gamma-tail helpers
# ---------------------------------------------------------------------------

def _log_gammaincc(k: np.ndarray, x: float) -> np.ndarray:
    """log Q(k, x) elementwise, stable when Q underflows (x >> k)."""
    k = np.asarray(k, dtype=np.float64)
    q = gammaincc(k, x)
    out = np.empty_like(q)
    ok = q > 1e-280
    with np.errstate(divide="ignore"):
        out[ok] = np.log(q[ok])
    if np.any(~ok):
        # asymptotic series Q(k,x) = e^-x x^{k-1}/Gamma(k) (1 + (k-1)/x + ...)
        for i in np.nonzero(~ok)[0]:
            ki = float(k.flat[i])
            s, term, j = 1.0, 1.0, 1
            while True:
                term *= (ki - j) / x
                if term <= 0 or abs(term) < 1e-18 * s or j > 60:
                    break
                s += term
                j += 1
            out.flat[i] = -x + (ki - 1) * math.log(x) - math.lgamma(ki) + math.log(s)
    return out


def _poisson_tail_sum_bound(k_next: int, x: float) -> float:
    """Upper bound on sum_{k >= k_next} P(Gamma(k,1) <= x), valid for k_next >= 2x."""
    if k_next < 2 * x:
        raise ValueError("tail bound needs k_next >= 2x")
    # P(Gamma(k) <= x) = P(Poisson(x) >= k) drops by at least x/(k+1) per step
    return 2.0 * float(gammainc(k_next, x))


def _log_tail_product(k_lo: int, k_hi: int, r2: float, tol: float = 1e-13):
    """(sum_{k=k_lo..k_hi} log Q(k, r2), bound on dropped magnitude).

    Factors with k far above r2 are exponentially close to 1; they are
    dropped once a Chernoff-style bound certifies their total log-mass is
    below `tol`.
    """
    if k_hi < k_lo:
        return 0.0, 0.0
    cut = int(math.ceil(2 * r2 + 8 * math.sqrt(r2) + 32))
    k_stop = min(k_hi, max(cut, k_lo))
    ks = np.arange(k_lo, k_stop + 1, dtype=np.float64)
    total = float(np.sum(_log_gammaincc(ks, r2)))
    dropped = 0.0
    if k_hi > k_stop:
        # |log(1-p)| <= 2p for p <= 1/2; summed tail bounded via Poisson Chernoff
        dropped = 2.0 * _poisson_tail_sum_bound(k_stop + 1, r2)
        if dropped > tol:
            raise RuntimeError(
                f"tail product cutoff failed to certify {tol} (bound {dropped:.3e})"
            )
    return total, dropped


# ---------------------------------------------------------------------------
# Gram matrices
# ---------------------------------------------------------------------------

def _diag_gram_entries(n: int, region: Region) -> np.ndarray:
    """Diagonal Gram entries for a rotation-invariant region (exact)."""
    ks = np.arange(1, n + 1, dtype=np.float64)
    diag = np.zeros(n)
    for a, b in radial_intervals(region):
        diag += gammainc(ks, b * b) - gammainc(ks, a * a)
    return np.clip(diag, 0.0, 1.0)


def _signed_atoms(region: Region):
    """Decompose into signed full annulus/disk atoms (center, r_lo, r_hi)."""
    if isinstance(region, CenteredDisk):
        return [(1.0, 0j, 0.0, region.r)]
    if isinstance(region, Disk):
        return [(1.0, complex(region.center), 0.0, region.r)]
    if isinstance(region, Annulus):
        return [(1.0, complex(region.center), region.r_in, region.r_out)]
    if isinstance(region, UnionRegion):
        if not region.disjoint:
            raise AmbiguousMeasureError(
                "union integrals require disjoint=True (overlaps double count)"
            )
        atoms = []
        for p in region.parts:
            atoms.extend(_signed_atoms(p))
        return atoms
    if isinstance(region, DifferenceRegion):
        if not _provably_contained(region.b, region.a):
            raise UnsupportedRegionError(
                "difference integrals need the subtrahend provably inside the "
                "minuend; rewrite the region or use concentric shapes"
            )
        atoms = _signed_atoms(region.a)
        atoms.extend((-s, c, lo, hi) for s, c, lo, hi in _signed_atoms(region.b))
        return atoms
    raise UnsupportedRegionError(f"unknown region type {type(region).__name__}")


def _provably_contained(inner: Region, outer: Region) -> bool:
    if isinstance(inner, UnionRegion):
        return all(_provably_contained(p, outer) for p in inner.parts)
    if isinstance(inner, DifferenceRegion):
        return _provably_contained(inner.a, outer)
    if isinstance(outer, UnionRegion):
        return any(_provably_contained(inner, p) for p in outer.parts)
    if isinstance(outer, DifferenceRegion):
        from .core import _provably_disjoint

        return _provably_contained(inner, outer.a) and _provably_disjoint(inner, outer.b)
    try:
        ci = 0j if isinstance(inner, CenteredDisk) else complex(inner.center)
        co = 0j if isinstance(outer, CenteredDisk) else complex(outer.center)
    except AttributeError:
        return False
    d = abs(ci - co)
    ri_out = inner.r_out if isinstance(inner, Annulus) else inner.r
    if isinstance(outer, (CenteredDisk, Disk)):
        return d + ri_out <= outer.r
    if isinstance(outer, Annulus):
        ri_in = inner.r_in if isinstance(inner, Annulus) else 0.0
        if ci == co:
            return outer.r_in <= ri_in and ri_out <= outer.r_out
        return d + ri_out <= outer.r_out and outer.r_in <= max(0.0, ri_in - d) and (
            outer.r_in == 0.0 or d + outer.r_in <= ri_in
        )
    return False


def _mode_window(n: int, atoms, extra_radii=()) -> tuple:
    """Contiguous mode range whose Gram entries can exceed ~_MODE_CUT.

    Each atom sits inside the origin-centered annulus with radii
    (|c|-r_hi)_+ .. |c|+r_hi; the diagonal Gram entry over that annulus
    bounds the atom's entry, and it decays double-exponentially away from
    k ~ radius^2.
    """
    lo2 = min(max(0.0, abs(c) - hi) for _, c, _, hi in atoms)
    hi2 = max(abs(c) + hi for _, c, _, hi in atoms)
    for r in extra_radii:
        lo2 = min(lo2, r)
        hi2 = max(hi2, r)
    ks = np.arange(1, n + 1, dtype=np.float64)
    bound = gammainc(ks, hi2 * hi2) - gammainc(ks, lo2 * lo2)
    active = np.nonzero(bound > _MODE_CUT)[0]
    if active.size == 0:
        return 1, 1, float(np.sum(bound))
    k_lo = int(active[0]) + 1
    k_hi = int(active[-1]) + 1
    excluded = float(np.sum(bound[: k_lo - 1]) + np.sum(bound[k_hi:]))
    return k_lo, k_hi, excluded


def _atom_quadrature_points(center: complex, r_lo: float, r_hi: float,
                            m_r: int, m_th: int):
    xr, wr = leggauss(m_r)
    r = 0.5 * (r_hi + r_lo) + 0.5 * (r_hi - r_lo) * xr
    wr = wr * 0.5 * (r_hi - r_lo)
    xt, wt = leggauss(m_th)
    th = math.pi * (xt + 1.0)
    wt = wt * math.pi
    pts = (center + np.outer(r, np.exp(1j * th))).ravel()
    w = np.outer(wr * r, wt).ravel()
    return pts, w


def _angular_order(k_hi: int, k_lo: int, center: complex, r_hi: float) -> int:
    c = abs(center)
    if c <= 1.5 * r_hi:
        freq = k_hi - 1
    else:
        freq = max(k_hi - k_lo, int(math.ceil((k_hi - 1) * r_hi / (c - r_hi))))
    return max(32, int(1.2 * freq) + 24)


def _gram_block(atoms, k_lo: int, k_hi: int, m_r: int) -> np.ndarray:
    """Windowed Gram matrix at a fixed radial order (angular order derived)."""
    dim = k_hi - k_lo + 1
    g = np.zeros((dim, dim), dtype=np.complex128)
    for sign, c, lo, hi in atoms:
        if hi <= lo:
            continue
        m_th = _angular_order(k_hi, k_lo, c, hi)
        pts, w = _atom_quadrature_points(c, lo, hi, m_r, m_th)
        # chunk so the phi matrix stays within memory
        max_rows = max(1, int(4e6) // dim)
        for start in range(0, pts.size, max_rows):
            sl = slice(start, start + max_rows)
            phi = phi_matrix(pts[sl], k_hi, k_lo)
            b = phi.conj() * np.sqrt(w[sl])[:, None]
            g += sign * (b.conj().T @ b)
    return g


def _gram_window_refined(atoms, k_lo, k_hi, m_r0: int, tol: float):
    """Order-double the radial rule until successive Gram blocks agree."""
    trace = []
    m_r = m_r0
    g_prev = _gram_block(atoms, k_lo, k_hi, m_r)
    while m_r <= _MAX_RADIAL_ORDER:
        m_r2 = 2 * m_r
        g_next = _gram_block(atoms, k_lo, k_hi, m_r2)
        delta = float(np.max(np.abs(g_next - g_prev)))
        trace.append((m_r2, delta))
        if delta <= tol:
            return g_next, m_r2, trace
        g_prev, m_r = g_next, m_r2
    raise QuadratureError("Gram quadrature did not converge", trace)


_spectrum_cache: dict = {}


def gram_matrix(n: int, region: Region, order: int | None = None,
                tol: float = _QUAD_TOL, method: str = "auto") -> np.ndarray:
    """Hermitian n x n Gram matrix of the basis over a bounded region.

    Rotation-invariant regions come out exactly diagonal via incomplete
    gamma functions.  Everything else is integrated atom by atom with a
    polar tensor Gauss-Legendre rule; `order` is the starting radial order
    (>= 4), doubled until successive matrices agree entrywise within `tol`.
    `method` forces one path ("closed_form" / "quadrature") for
    cross-validation; "auto" picks the closed form whenever it applies.
    """
    if order is not None and order < 4:
        raise ValueError(f"quadrature order must be >= 4, got {order}")
    if method not in ("auto", "closed_form", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    if method != "quadrature" and is_radially_symmetric(region):
        return np.diag(_diag_gram_entries(n, region)).astype(np.complex128)
    if method == "closed_form":
        raise UnsupportedRegionError("closed form needs a rotation-invariant region")
    atoms = _signed_atoms(region)
    k_lo, k_hi, _ = _mode_window(n, atoms)
    g_win, _, _ = _gram_window_refined(atoms, k_lo, k_hi, order or 16, tol)
    g = np.zeros((n, n), dtype=np.complex128)
    g[k_lo - 1:k_hi, k_lo - 1:k_hi] = g_win
    return g


def gram_spectrum(n: int, region: Region, order: int | None = None,
                  tol: float = _QUAD_TOL, method: str = "auto") -> GramSpectrum:
    """Eigenvalues of the restricted kernel, clamped to [0,1]."""
    key = (n, region, order, tol, method)
    hit = _spectrum_cache.get(key)
    if hit is not None:
        return hit
    if method != "quadrature" and is_radially_symmetric(region):
        eig = _diag_gram_entries(n, region)
        spec = GramSpectrum(n, region, np.sort(eig)[::-1], 0)
    else:
        atoms = _signed_atoms(region)
        k_lo, k_hi, _ = _mode_window(n, atoms)
        g_win, used, _ = _gram_window_refined(atoms, k_lo, k_hi, order or 16, tol)
        eig_win = np.linalg.eigvalsh(g_win)
        eig = np.zeros(n)
        eig[: eig_win.size] = eig_win[::-1]
        if eig.min() < -_EIG_CLAMP or eig.max() > 1 + _EIG_CLAMP:
            raise ArithmeticError(
                f"Gram eigenvalues outside [0,1] beyond clamp tolerance: "
                f"[{eig.min():.3e}, {eig.max():.3e}]"
            )
        eig = np.clip(eig, 0.0, 1.0)
        spec = GramSpectrum(n, region, np.sort(eig)[::-1], used)
    _spectrum_cache[key] = spec
    return spec


# ---------------------------------------------------------------------------
# Vacuum and count distributions
# ---------------------------------------------------------------------------

def vacuum_probability(n: int, region: Region, order: int | None = None) -> float:
    """P(no points in region) = prod_k (1 - lambda_k)."""
    lam = gram_spectrum(n, region, order).eigenvalues
    return float(np.prod(1.0 - lam))


def log_vacuum_probability(n: int, region: Region) -> float:
    """log P(no points in region); -inf if some eigenvalue rounds to 1."""
    if is_radially_symmetric(region):
        ivs = radial_intervals(region)
        if len(ivs) == 1 and ivs[0][0] == 0.0:
            total, _ = _log_tail_product(1, n, ivs[0][1] ** 2)
            return total
    lam = gram_spectrum(n, region).eigenvalues
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log1p(-lam)))


def count_distribution(n: int, region: Region, order: int | None = None) -> CountDistribution:
    """Exact pmf of the point count, by Bernoulli convolution (descending lambda)."""
    lam = np.sort(gram_spectrum(n, region, order).eigenvalues)[::-1]
    pmf = np.zeros(n + 1)
    pmf[0] = 1.0
    top = 0
    for l in lam:
        if l == 0.0:
            continue
        pmf[1:top + 2] = pmf[1:top + 2] * (1 - l) + pmf[:top + 1] * l
        pmf[0] *= 1 - l
        top += 1
    return CountDistribution(pmf=pmf, mean=float(np.sum(lam)))


def mean_count(n: int, region: Region) -> float:
    """E[number of points in region] = trace of the Gram matrix."""
    return float(np.sum(gram_spectrum(n, region).eigenvalues))


def log_count_tail(n: int, region: Region, max_count: int) -> float:
    """log P(count <= max_count), stable deep in the lower tail.

    Uses elementary symmetric polynomials of the Bernoulli odds; for
    rotation-invariant regions the odds come straight from incomplete gamma
    pairs so they stay accurate even when lambda_k rounds to 1.
    """
    if max_count < 0:
        return -math.inf
    if max_count > 8:
        raise ValueError("lower-tail helper is meant for small counts (<= 8)")
    ivs = radial_intervals(region) if is_radially_symmetric(region) else None
    if ivs is not None and len(ivs) == 1 and ivs[0][0] == 0.0:
        # disk: 1 - lambda_k = Q(k, r^2) exactly, so the odds stay accurate
        # even when lambda_k rounds to 1 in double precision
        ks = np.arange(1, n + 1, dtype=np.float64)
        r2 = ivs[0][1] ** 2
        log_one_minus = _log_gammaincc(ks, r2)
        if float(np.min(log_one_minus)) < -600.0:
            raise ValueError(
                "count tail too deep for double-precision odds; shrink the region"
            )
        p_in = gammainc(ks, r2)
        odds = p_in * np.exp(-log_one_minus)
    else:
        lam = np.clip(gram_spectrum(n, region).eigenvalues, 0.0, 1.0 - 1e-16)
        log_one_minus = np.log1p(-lam)
        odds = lam / (1.0 - lam)
    esym = np.zeros(max_count + 1)
    esym[0] = 1.0
    for o in odds:
        for j in range(max_count, 0, -1):
            esym[j] += o * esym[j - 1]
    return float(np.sum(log_one_minus) + math.log(np.sum(esym)))


# ---------------------------------------------------------------------------
# Infinite process
# ---------------------------------------------------------------------------

def infinite_centered_disk_vacuum(r: float, tol: float = 1e-10) -> InfiniteVacuum:
    """P(infinite process has no point in B_r(0)) = prod_k Q(k, r^2).

    The product is truncated at K terms once the dropped factors are
    certified (via the Poisson Chernoff tail) to change the value by a
    relative amount below `tol`; the certificate is returned, never silent.
    """
    if r <= 0:
        return InfiniteVacuum(1.0, 0.0, 0.0, 0)
    r2 = r * r
    k_total = max(int(math.ceil(2 * r2)) + 8, 32)
    while True:
        err = _poisson_tail_sum_bound(k_total + 1, r2)
        if err <= tol:
            break
        k_total = int(k_total * 1.5) + 8
        if k_total > 10**6:
            raise RuntimeError(f"truncation tolerance {tol} unreachable within 1e6 terms")
    ks = np.arange(1, k_total + 1, dtype=np.float64)
    log_value = float(np.sum(_log_gammaincc(ks, r2)))
    return InfiniteVacuum(math.exp(log_value) if log_value > -745 else 0.0,
                          log_value, err, k_total)


def hole_ratio(r: float) -> float:
    """-log P(xi(B_r(0)) = 0) / r^4; approaches 1/4 as r grows."""
    if r < 1:
        raise ValueError(f"hole ratio is tracked for r >= 1, got {r}")
    iv = infinite_centered_disk_vacuum(r, tol=1e-10)
    return -iv.log_value / r**4


def sandwich_check(n: int, r: float) -> SandwichResult:
    """Finite-n vacuum over B_r(0) against the infinite product.

    ratio = P(xi_n empty) / P(xi empty) = 1 / prod_{k>n} Q(k, r^2) >= 1,
    decaying to 1 geometrically in n at fixed r.
    """
    if not r <= 0.9 * math.sqrt(n):
        raise ValueError("sandwich check needs r <= 0.9 sqrt(n)")
    r2 = r * r
    k_total = max(int(math.ceil(2 * r2)) + 8, n + 8, 32)
    while _poisson_tail_sum_bound(k_total + 1, r2) > 1e-14:
        k_total = int(k_total * 1.5) + 8
    ks = np.arange(n + 1, k_total + 1, dtype=np.float64)
    log_ratio = -float(np.sum(_log_gammaincc(ks, r2)))
    return SandwichResult(lower_ok=log_ratio >= 0.0, ratio=math.exp(log_ratio))


# ---------------------------------------------------------------------------
# Palm vacuum
# ---------------------------------------------------------------------------

def _palm_window_matrix(n: int, x: complex, region: Region,
                        order: int | None, tol: float):
    """(P G P on the active mode window, k_lo) for the Palm vacuum."""
    atoms = _signed_atoms(region)
    k_lo, k_hi, _ = _mode_window(n, atoms, extra_radii=(abs(x),))
    g_win, _, _ = _gram_window_refined(atoms, k_lo, k_hi, order or 16, tol)
    c_full = np.conj(phi_matrix(np.array([x]), k_hi=n)[0])
    norm2 = float(np.sum(np.abs(c_full) ** 2))
    if not norm2 > 1e-300:
        raise ValueError(f"Palm anchor too far out: K_n(x,x) = {norm2!r} underflows")
    c = c_full[k_lo - 1:k_hi]
    w = g_win @ c
    # P G P with P = I - c c^H / |c|^2, restricted to the window
    m = g_win.copy()
    m -= np.outer(c, w.conj()) / norm2
    m -= np.outer(w, c.conj()) / norm2
    quad = np.vdot(c, w).real / norm2**2
    m += quad * np.outer(c, c.conj())
    return m, k_lo


def _palm_eigenvalues(n: int, x: complex, region: Region,
                      order: int | None = None, tol: float = _QUAD_TOL) -> np.ndarray:
    x = as_complex(x)
    if x == 0j and is_radially_symmetric(region):
        lam = _diag_gram_entries(n, region)
        return lam[1:]  # the projection removes exactly mode k = 1
    m, _ = _palm_window_matrix(n, x, region, order, tol)
    mu = np.linalg.eigvalsh(m)
    if mu.min() < -_EIG_CLAMP or mu.max() > 1 + _EIG_CLAMP:
        raise ArithmeticError(
            f"Palm Gram eigenvalues outside [0,1] beyond clamp tolerance: "
            f"[{mu.min():.3e}, {mu.max():.3e}]"
        )
    return np.clip(mu, 0.0, 1.0)


def palm_vacuum(n: int, anchor: PointLike, region: Region,
                order: int | None = None, tol: float = _QUAD_TOL) -> float:
    """P(reduced Palm process at `anchor` has no point in region).

    Realizes the Palm kernel as the rank-one projection P = I - c c^H/|c|^2
    of the coefficient matrix (c_k = conj(phi_k(anchor))), so the vacuum is
    the finite determinant det(I - P G P).
    """
    mu = _palm_eigenvalues(n, as_complex(anchor), region, order, tol)
    return float(np.prod(1.0 - mu))


def log_palm_vacuum(n: int, anchor: PointLike, region: Region,
                    order: int | None = None, tol: float = _QUAD_TOL,
                    tail_tol: float = 1e-13) -> float:
    """log of `palm_vacuum`; the origin/disk case uses the gamma-tail product."""
    x = as_complex(anchor)
    if x == 0j and is_radially_symmetric(region):
        ivs = radial_intervals(region)
        if len(ivs) == 1 and ivs[0][0] == 0.0:
            total, _ = _log_tail_product(2, n, ivs[0][1] ** 2, tol=tail_tol)
            return total
    mu = _palm_eigenvalues(n, x, region, order, tol)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log1p(-mu)))
