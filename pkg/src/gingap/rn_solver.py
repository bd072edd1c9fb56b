"""Critical thinning radius: the smallest r with n P(Palm vacuum of B_r(z)) rho_n(z) <= kappa.

g(r) = n * P(reduced Palm process at z puts nothing in B_r(z)) * rho_n(z) is
continuous and strictly decreasing, with g(0) = n rho_n(z), so the radius is
found by certified bracketing.  The anchor is rotated onto the positive real
axis first (the kernel is rotation covariant, so r_n depends on |z| only).

All radii live in unscaled coordinates (eigenvalues at radius ~ sqrt(n));
rescaling by 1/sqrt(n) happens downstream in the thinning step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import cache as _cache
from . import vacuum as _vac
from .core import PointLike, as_complex
from .kernel import phi_matrix

__all__ = [
    "RadiusQuery",
    "RadiusResult",
    "RnScalingRow",
    "RnTable",
    "solve_rn",
    "verify_requality",
    "rn_scaling_table",
    "build_rn_table",
]

_BULK_FRACTIONS = (
    0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8,
    0.85, 0.9, 0.94, 0.97, 0.99, 1.0,
)


@dataclass(frozen=True)
class RadiusQuery:
    n: int
    z: complex
    kappa: float
    tol: float = 1e-8  # tolerance on |g(r) - kappa|

    def __post_init__(self):
        object.__setattr__(self, "z", as_complex(self.z))
        if self.kappa <= 1:
            raise ValueError(f"kappa must exceed 1, got {self.kappa}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if abs(self.z) > math.sqrt(self.n):
            raise ValueError("anchor must satisfy |z| <= sqrt(n)")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class RadiusResult:
    r: float
    g_at_r: float
    iterations: int
    boundary: bool = False  # True when g never exceeds kappa and the inf is 0


@dataclass(frozen=True)
class RnScalingRow:
    n: int
    r: float
    ratio: float  # r^4 / (4 log n)
    g_at_r: float
    boundary: bool


class _GEvaluator:
    """Evaluate g(r) with a quadrature order calibrated once and then reused.

    The origin anchor reduces to the closed-form gamma-tail product; offset
    anchors integrate the windowed Gram block over B_r(|z|).
    """

    def __init__(self, n: int, z: PointLike, quad_tol: float = 1e-9):
        self.n = n
        self.z = abs(as_complex(z))  # rotation covariance
        self.quad_tol = quad_tol
        self.m_r = None
        self.history: list = []  # (r, g) pairs for monotonicity certification
        if self.z == 0.0:
            self.rho = 1.0 / math.pi
            self.phi = None
        else:
            self.phi = phi_matrix(np.array([self.z]), k_hi=n)[0]
            self.rho = float(np.sum(np.abs(self.phi) ** 2))

    # -- raw evaluations -----------------------------------------------

    def _g_origin(self, r: float, tail_tol: float = 1e-13) -> float:
        total, _ = _vac._log_tail_product(2, self.n, r * r, tol=tail_tol)
        return self.n * self.rho * math.exp(total)

    def _g_offset(self, r: float, m_r: int) -> float:
        atoms = [(1.0, complex(self.z), 0.0, r)]
        k_lo, k_hi, _ = _vac._mode_window(self.n, atoms, extra_radii=(self.z,))
        g_win = _vac._gram_block(atoms, k_lo, k_hi, m_r)
        c = np.conj(self.phi[k_lo - 1:k_hi])
        norm2 = self.rho
        w = g_win @ c
        m = g_win - np.outer(c, w.conj()) / norm2 - np.outer(w, c.conj()) / norm2
        m += (np.vdot(c, w).real / norm2**2) * np.outer(c, c.conj())
        mu = np.clip(np.linalg.eigvalsh(m), 0.0, 1.0)
        return self.n * float(np.prod(1.0 - mu)) * self.rho

    def calibrate(self, r: float) -> None:
        if self.z == 0.0 or self.m_r is not None:
            return
        m_r = 12
        prev = self._g_offset(r, m_r)
        while m_r <= 1024:
            cur = self._g_offset(r, 2 * m_r)
            if abs(cur - prev) <= max(self.quad_tol, 1e-7 * max(abs(cur), 1.0)):
                self.m_r = 2 * m_r
                return
            prev, m_r = cur, 2 * m_r
        raise _vac.QuadratureError("g(r) quadrature calibration failed", [(m_r, prev)])

    def g(self, r: float, refine: int = 1) -> float:
        if r <= 0.0:
            return self.n * self.rho
        if self.z == 0.0:
            val = self._g_origin(r, tail_tol=1e-13 / refine)
        else:
            self.calibrate(r)
            val = self._g_offset(r, self.m_r * refine)
        self._record(r, val)
        return val

    def _record(self, r: float, val: float) -> None:
        slack = 1e-9 * max(1.0, self.n * self.rho)
        for r0, g0 in self.history:
            if abs(r0 - r) < 1e-12:
                continue
            if (r0 < r and g0 < val - slack) or (r0 > r and g0 > val + slack):
                raise ArithmeticError(
                    f"g(r) not monotone: g({r0}) = {g0}, g({r}) = {val}; "
                    f"history {sorted(self.history)}"
                )
        self.history.append((r, val))


def solve_rn(q: RadiusQuery) -> RadiusResult:
    """Smallest r > 0 with g(r) <= kappa, or r = 0 (flagged) when g(0+) <= kappa.

    The root is bracketed by expansion and then refined with bisection steps
    accelerated by log-linear interpolation (the bracket certificate is kept;
    pure midpoint bisection at matching tolerance costs ~4x more g-evals,
    which matters because each offset evaluation assembles a Gram block).
    """
    ev = _GEvaluator(q.n, q.z)
    g0 = q.n * ev.rho
    if g0 <= q.kappa:
        return RadiusResult(r=0.0, g_at_r=g0, iterations=0, boundary=True)

    cap = 3.0 * math.sqrt(4.0 * math.log(max(q.n, 2)))
    hi = min(1.1 * (4.0 * math.log(max(q.n, 2))) ** 0.25 + 0.5, cap)
    ev.calibrate(hi)
    g_hi = ev.g(hi)
    while g_hi > q.kappa:
        hi *= 1.4
        if hi > cap:
            raise RuntimeError(
                f"no crossing of kappa below r = {cap:.3f}; vacuum module suspect"
            )
        g_hi = ev.g(hi)
    lo, g_lo = 0.0, g0

    it = 0
    r, g_r = hi, g_hi
    for it in range(1, 61):
        width = hi - lo
        cand = lo + 0.5 * width
        if g_lo > 0 and g_hi > 0:
            # log g is close to linear in r^4; interpolate there, kept
            # safely interior to the bracket so the certificate survives
            t = (math.log(g_lo) - math.log(q.kappa)) / (math.log(g_lo) - math.log(g_hi))
            interp = (lo**4 + t * (hi**4 - lo**4)) ** 0.25
            if lo + 0.02 * width < interp < hi - 0.02 * width:
                cand = interp
        g_c = ev.g(cand)
        if abs(g_c - q.kappa) <= q.tol:
            return RadiusResult(r=cand, g_at_r=g_c, iterations=it)
        if g_c > q.kappa:
            lo, g_lo = cand, g_c
        else:
            hi, g_hi = cand, g_c
        r, g_r = cand, g_c
    raise RuntimeError(
        f"bisection exhausted 60 iterations (last g = {g_r} at r = {r}); "
        f"tolerance {q.tol} may be below the quadrature noise floor"
    )


def verify_requality(result: RadiusResult, q: RadiusQuery) -> bool:
    """Recompute g at the solved radius with doubled quadrature order."""
    if result.boundary:
        return True
    ev = _GEvaluator(q.n, q.z)
    ev.calibrate(result.r)
    g = ev.g(result.r, refine=2)
    return abs(g - q.kappa) <= 2.0 * q.tol


def rn_scaling_table(n_list, kappa: float, z: PointLike = 0.0,
                     tol: float = 1e-8) -> list:
    """Rows (n, r, r^4/(4 log n)) tracking the scaling toward 1."""
    rows = []
    for n in n_list:
        if n < 2:
            raise ValueError("scaling table needs n >= 2")
        res = solve_rn(RadiusQuery(n=n, z=as_complex(z), kappa=kappa, tol=tol))
        ratio = res.r**4 / (4.0 * math.log(n))
        rows.append(RnScalingRow(n=n, r=res.r, ratio=ratio,
                                 g_at_r=res.g_at_r, boundary=res.boundary))
    return rows


# ---------------------------------------------------------------------------
# Bulk interpolation table
# ---------------------------------------------------------------------------

@dataclass
class RnTable:
    """r_n(z) on a radial grid with cubic interpolation in |z|.

    Certified against direct solves at grid midpoints; `max_cert_rel_err`
    records the worst relative interpolation error seen during certification.
    """

    n: int
    kappa: float
    radii: np.ndarray
    rn: np.ndarray
    g_tol: float
    max_cert_rel_err: float
    _spline: CubicSpline = field(repr=False, default=None)

    def __post_init__(self):
        if self._spline is None:
            bc = ((1, 0.0), "not-a-knot")  # r_n is even in z, so dr/d|z|(0) = 0
            object.__setattr__(
                self, "_spline", CubicSpline(self.radii, self.rn, bc_type=bc)
            )

    def __call__(self, z):
        """r_n at complex points (or radii) clipped to the table's domain."""
        a = np.abs(np.asarray(z))
        if np.any(a > self.radii[-1] * (1 + 1e-9)):
            raise ValueError("query radius outside the tabulated range")
        return self._spline(np.minimum(a, self.radii[-1]))


def build_rn_table(n: int, kappa: float, g_tol: float | None = None,
                   certify_rel: float = 1e-6, max_nodes: int = 64,
                   cache_dir=None) -> RnTable:
    """Solve r_n on a radial grid spanning |z| in [0, sqrt(n)] and certify.

    Midpoints of every grid cell are solved directly and compared with the
    spline; cells that miss `certify_rel` relative accuracy are split until
    they pass (or `max_nodes` is exhausted).
    """
    if g_tol is None:
        # |dg/dr| ~ kappa r^3 near the root maps g-tolerance to ~1e-7 in r
        g_tol = kappa * 40.0 * certify_rel
    cdir = _cache.resolve_cache_dir(cache_dir)
    key = _cache.cache_key("rn_table", {
        "n": n, "kappa": kappa, "g_tol": g_tol, "certify_rel": certify_rel,
        "fractions": list(_BULK_FRACTIONS), "v": 1,
    })
    hit = _cache.load_arrays(cdir, key)
    if hit is not None:
        return RnTable(n=n, kappa=kappa, radii=hit["radii"], rn=hit["rn"],
                       g_tol=g_tol, max_cert_rel_err=float(hit["cert"][0]))

    sqrt_n = math.sqrt(n)
    radii = [f * sqrt_n for f in _BULK_FRACTIONS]
    solved: dict = {}

    def solve_at(a: float) -> float:
        if a not in solved:
            res = solve_rn(RadiusQuery(n=n, z=a, kappa=kappa, tol=g_tol))
            if res.boundary:
                raise RuntimeError(
                    f"r_n hit the r = 0 boundary at |z| = {a}; n too small for a table"
                )
            solved[a] = res.r
        return solved[a]

    worst = math.inf
    while True:
        values = np.array([solve_at(a) for a in radii])
        grid = np.array(radii)
        table = RnTable(n=n, kappa=kappa, radii=grid, rn=values,
                        g_tol=g_tol, max_cert_rel_err=0.0)
        mids = 0.5 * (grid[:-1] + grid[1:])
        errs = np.array([
            abs(table(m) - solve_at(m)) / solve_at(m) for m in mids
        ])
        worst = float(errs.max())
        if worst <= certify_rel:
            break
        if len(radii) + int(np.sum(errs > certify_rel)) > max_nodes:
            raise RuntimeError(
                f"r_n table not certified at {certify_rel} with {max_nodes} nodes "
                f"(worst {worst:.2e})"
            )
        radii = sorted(set(radii) | {float(m) for m, e in zip(mids, errs)
                                     if e > certify_rel})
    table = RnTable(n=n, kappa=kappa, radii=grid, rn=values,
                    g_tol=g_tol, max_cert_rel_err=worst)
    _cache.save_arrays(cdir, key, radii=grid, rn=values, cert=np.array([worst]))
    return table
