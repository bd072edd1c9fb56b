"""Ginibre basis functions, finite/infinite/Palm kernels, and correlations.

The basis function phi_k(z) = z^{k-1} exp(-|z|^2/2) / sqrt(pi (k-1)!) is
evaluated by the recurrence phi_{k+1} = z phi_k / sqrt(k) with an explicit
mantissa/exponent split, so intermediate factorials and Gaussian factors
never overflow or underflow even at k ~ 1e5, |z| ~ 1e3.  Values whose true
magnitude is below the smallest subnormal come out as exact zeros; vanished
modes contribute nothing to kernel sums, which keeps that harmless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union as TUnion

import numpy as np

from .core import PointLike, as_complex

__all__ = [
    "FiniteGinibre",
    "InfiniteGinibre",
    "PalmKernel",
    "KernelSpec",
    "eval_phi",
    "phi_log_abs",
    "phi_matrix",
    "eval_kernel",
    "kernel_matrix",
    "rho_1",
    "rho_m",
    "decay_margin",
]

_LOG_PI = math.log(math.pi)
_LD = np.longdouble
_LN2_LD = np.log(_LD(2.0))
_HALF_LOG_PI_LD = np.log(_LD(np.pi)) / 2

# renormalization bounds for the scaled recurrence
_RENORM_EVERY = 8
_MANT_LO = 2.0**-400
_MANT_HI = 2.0**400


@dataclass(frozen=True)
class FiniteGinibre:
    """Kernel of the n-eigenvalue ensemble: K_n(z,w) = sum_k phi_k(z) conj(phi_k(w))."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"ensemble dimension must be >= 1, got {self.n}")


@dataclass(frozen=True)
class InfiniteGinibre:
    """Stationary bulk kernel K(z,w) = exp(-|z|^2/2 - |w|^2/2 + z conj(w)) / pi."""


@dataclass(frozen=True)
class PalmKernel:
    """Reduced Palm kernel of a finite ensemble conditioned on a point at `anchor`."""

    base: FiniteGinibre
    anchor: complex

    def __post_init__(self):
        object.__setattr__(self, "anchor", as_complex(self.anchor))


KernelSpec = TUnion[FiniteGinibre, InfiniteGinibre, PalmKernel]


# ---------------------------------------------------------------------------
# Basis functions
# ---------------------------------------------------------------------------

def _initial_mantissa_exponent(zs: np.ndarray):
    """phi_1(z) = exp(-|z|^2/2)/sqrt(pi) as (float64 mantissa in [1,2), base-2 exponent).

    The exponent argument is reduced in extended precision; at |z| ~ 1e3 the
    plain float64 route would lose ~5e-11 of relative accuracy here.
    """
    re = zs.real.astype(_LD)
    im = zs.imag.astype(_LD)
    t = -(re * re + im * im) / 2 - _HALF_LOG_PI_LD
    e2 = np.floor(t / _LN2_LD)
    mant = np.exp(t - e2 * _LN2_LD).astype(np.float64)
    return mant, e2.astype(np.int64)


def _renormalize(mant: np.ndarray, e2: np.ndarray):
    mag = np.abs(mant)
    bad = ((mag > _MANT_HI) | ((mag > 0) & (mag < _MANT_LO)))
    if np.any(bad):
        shift = np.zeros_like(e2)
        shift[bad] = np.floor(np.log2(mag[bad])).astype(np.int64)
        mant = np.ldexp(mant.real, -shift) + 1j * np.ldexp(mant.imag, -shift)
        e2 = e2 + shift
    return mant, e2


def phi_matrix(zs, k_hi: int, k_lo: int = 1) -> np.ndarray:
    """Evaluate phi_k(z) for k = k_lo..k_hi at every z; shape (len(zs), k_hi-k_lo+1).

    Underflowed entries are exact zeros.
    """
    if k_lo < 1 or k_hi < k_lo:
        raise ValueError(f"need 1 <= k_lo <= k_hi, got ({k_lo}, {k_hi})")
    zs = np.atleast_1d(np.asarray(zs, dtype=np.complex128))
    mant0, e2 = _initial_mantissa_exponent(zs)
    mant = mant0.astype(np.complex128)
    out = np.zeros((zs.size, k_hi - k_lo + 1), dtype=np.complex128)

    def emit(k, mant, e2):
        if k_lo <= k <= k_hi:
            vals = np.ldexp(mant.real, e2) + 1j * np.ldexp(mant.imag, e2)
            out[:, k - k_lo] = vals

    emit(1, mant, e2)
    for k in range(1, k_hi):
        mant = mant * (zs / math.sqrt(k))
        if k % _RENORM_EVERY == 0:
            mant, e2 = _renormalize(mant, e2)
        emit(k + 1, mant, e2)
    return out


def eval_phi(k: int, z: PointLike) -> complex:
    """phi_k(z) = z^{k-1} exp(-|z|^2/2) / sqrt(pi (k-1)!); exact 0 on underflow."""
    if k < 1:
        raise ValueError(f"basis index must be >= 1, got {k}")
    z = as_complex(z)
    return complex(phi_matrix(np.array([z]), k_hi=k, k_lo=k)[0, 0])


def phi_log_abs(k: int, z: PointLike) -> float:
    """log |phi_k(z)|; -inf at z = 0 for k >= 2.  Underflow diagnostic."""
    if k < 1:
        raise ValueError(f"basis index must be >= 1, got {k}")
    z = as_complex(z)
    a = abs(z)
    if a == 0.0:
        return -0.5 * _LOG_PI if k == 1 else -math.inf
    return (k - 1) * math.log(a) - 0.5 * a * a - 0.5 * math.lgamma(k) - 0.5 * _LOG_PI


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def _finite_kernel_scalar(n: int, z: complex, w: complex) -> complex:
    """K_n(z,w) by the scaled term recurrence t_k = t_{k-1} (z conj(w)) / k."""
    u = z * np.conj(w)
    zs = np.array([z, w])
    re = zs.real.astype(_LD)
    im = zs.imag.astype(_LD)
    t = -(re * re + im * im).sum() / 2 - np.log(_LD(np.pi))
    e2 = int(np.floor(t / _LN2_LD))
    mant = complex(float(np.exp(t - e2 * _LN2_LD)), 0.0)

    total = 0.0 + 0.0j
    comp = 0.0 + 0.0j  # Kahan compensation
    for k in range(n):
        if k > 0:
            mant *= u / k
            mag = abs(mant)
            if mag == 0.0:
                break
            if mag > _MANT_HI or mag < _MANT_LO:
                shift = int(math.floor(math.log2(mag)))
                mant = complex(math.ldexp(mant.real, -shift), math.ldexp(mant.imag, -shift))
                e2 += shift
        term = complex(math.ldexp(mant.real, e2), math.ldexp(mant.imag, e2))
        y = term - comp
        s = total + y
        comp = (s - total) - y
        total = s
    return total


def eval_kernel(spec: KernelSpec, z: PointLike, w: PointLike) -> complex:
    """Evaluate the kernel named by `spec` at (z, w)."""
    z = as_complex(z)
    w = as_complex(w)
    if isinstance(spec, FiniteGinibre):
        return _finite_kernel_scalar(spec.n, z, w)
    if isinstance(spec, InfiniteGinibre):
        expo = -0.5 * abs(z) ** 2 - 0.5 * abs(w) ** 2 + z * np.conj(w)
        return complex(np.exp(expo) / math.pi)
    if isinstance(spec, PalmKernel):
        x = spec.anchor
        base = spec.base
        kxx = _finite_kernel_scalar(base.n, x, x).real
        if not kxx > 1e-300:
            raise ValueError(
                f"Palm anchor too far out: K_n(x,x) = {kxx!r} underflows"
            )
        kzw = _finite_kernel_scalar(base.n, z, w)
        kzx = _finite_kernel_scalar(base.n, z, x)
        kxw = _finite_kernel_scalar(base.n, x, w)
        return kzw - kzx * kxw / kxx
    raise TypeError(f"unknown kernel spec {spec!r}")


def kernel_matrix(spec: KernelSpec, points) -> np.ndarray:
    """Hermitian matrix K(z_i, z_j) over a small point list."""
    pts = np.asarray([as_complex(p) for p in np.atleast_1d(points)], dtype=np.complex128)
    if isinstance(spec, FiniteGinibre):
        phi = phi_matrix(pts, k_hi=spec.n)
        return phi @ phi.conj().T
    if isinstance(spec, InfiniteGinibre):
        zz = np.abs(pts) ** 2
        expo = -0.5 * zz[:, None] - 0.5 * zz[None, :] + pts[:, None] * pts.conj()[None, :]
        return np.exp(expo) / math.pi
    if isinstance(spec, PalmKernel):
        x = spec.anchor
        base = spec.base
        aug = np.concatenate([pts, [x]])
        phi = phi_matrix(aug, k_hi=base.n)
        full = phi @ phi.conj().T
        kxx = full[-1, -1].real
        if not kxx > 1e-300:
            raise ValueError(
                f"Palm anchor too far out: K_n(x,x) = {kxx!r} underflows"
            )
        kzx = full[:-1, -1]
        return full[:-1, :-1] - np.outer(kzx, kzx.conj()) / kxx
    raise TypeError(f"unknown kernel spec {spec!r}")


def rho_1(spec: KernelSpec, z: PointLike) -> float:
    """One-point correlation (intensity) rho(z) = K(z,z)."""
    return eval_kernel(spec, z, z).real


def rho_m(spec: KernelSpec, points) -> float:
    """m-point correlation det(K(z_i, z_j)); tiny negative rounding clamps to 0."""
    pts = np.atleast_1d(points)
    if pts.size < 1:
        raise ValueError("need at least one point")
    mat = kernel_matrix(spec, pts)
    det = np.linalg.det(mat)
    val = det.real
    scale = float(np.prod(np.maximum(np.abs(np.diag(mat)), 1e-300)))
    if val < 0:
        if val >= -1e-10 * scale:
            return 0.0
        raise ArithmeticError(
            f"correlation determinant {val:.3e} is negative beyond rounding "
            f"tolerance (scale {scale:.3e}); kernel evaluation looks broken"
        )
    return float(val)


def decay_margin(n: int, z: PointLike, w: PointLike) -> float:
    """Gap between log |K_n(sqrt(n) z, sqrt(n) w)| and its Gaussian envelope.

    Negative means the term exp(-n|z-w|^2/2)/pi alone already covers the
    kernel value; the envelope holds up to an exponentially small additive
    correction, so small positive margins can occur.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    z = as_complex(z)
    w = as_complex(w)
    if not (abs(z) < 1 and abs(w) < 1):
        raise ValueError("decay bound applies to bulk points with |z|, |w| < 1")
    s = math.sqrt(n)
    val = abs(eval_kernel(FiniteGinibre(n), s * z, s * w))
    envelope_log = -_LOG_PI - 0.5 * n * abs(z - w) ** 2
    if val == 0.0:
        return -math.inf
    return math.log(val) - envelope_log
