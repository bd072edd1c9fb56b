"""Shared geometry, configuration, and randomness-stream types.

Planar regions form a small closed algebra (disks, annuli, disjoint unions,
differences) rather than arbitrary measurable sets: everything downstream
(Gram matrices, hole probabilities, thinning windows) only ever needs these
shapes.  Membership uses the closed-ball convention (boundaries included).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union as TUnion

import numpy as np

__all__ = [
    "ComplexPoint",
    "Scale",
    "PointConfiguration",
    "Region",
    "CenteredDisk",
    "Disk",
    "Annulus",
    "UnionRegion",
    "DifferenceRegion",
    "RandomStream",
    "AmbiguousMeasureError",
    "UnsupportedRegionError",
    "as_complex",
    "region_to_json",
    "region_from_json",
    "area",
    "contains",
    "is_radially_symmetric",
    "radial_intervals",
]

PointLike = TUnion["ComplexPoint", complex, float, int]


class AmbiguousMeasureError(ValueError):
    """Union members may overlap and no disjointness flag was given."""


class UnsupportedRegionError(ValueError):
    """The requested operation is not defined for this region shape."""


@dataclass(frozen=True)
class ComplexPoint:
    """A point of the complex plane with finite coordinates."""

    re: float
    im: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise ValueError(f"coordinates must be finite, got ({self.re}, {self.im})")

    def __complex__(self) -> complex:
        return complex(self.re, self.im)

    def __abs__(self) -> float:
        return math.hypot(self.re, self.im)

    @staticmethod
    def from_complex(z: complex) -> "ComplexPoint":
        return ComplexPoint(float(z.real), float(z.imag))


def as_complex(p: PointLike) -> complex:
    """Coerce a ComplexPoint / complex / real scalar to a Python complex."""
    if isinstance(p, ComplexPoint):
        return complex(p)
    return complex(p)


class Scale(Enum):
    """Coordinate convention: raw eigenvalues sit at radius ~sqrt(n)."""

    UNSCALED = "unscaled"
    RESCALED_BY_SQRT_N = "rescaled_by_sqrt_n"


@dataclass(frozen=True)
class PointConfiguration:
    """A finite planar point set tagged with its ensemble dimension and scale.

    ``len(points) == n`` for exact n-point samples; derived configurations
    (Palm oracles, restrictions) may carry fewer points.
    """

    points: np.ndarray  # complex128, shape (m,)
    n: int
    scale: Scale = Scale.UNSCALED

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.complex128).ravel()
        if pts.size and not np.all(np.isfinite(pts)):
            raise ValueError("configuration contains non-finite points")
        if self.n < 1:
            raise ValueError(f"ensemble dimension must be positive, got {self.n}")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.size


# ---------------------------------------------------------------------------
# Region algebra
# ---------------------------------------------------------------------------

class Region:
    """Base class for the planar region algebra."""

    def area(self, tol: float = 1e-9) -> float:
        return area(self, tol=tol)

    def contains(self, p: PointLike) -> bool:
        return contains(self, p)

    def is_radially_symmetric(self) -> bool:
        return is_radially_symmetric(self)

    def bounding_radius(self) -> float:
        return _bounding_radius(self)

    def to_json(self) -> dict:
        return region_to_json(self)


@dataclass(frozen=True)
class CenteredDisk(Region):
    r: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r >= 0):
            raise ValueError(f"radius must be a nonnegative real, got {self.r}")


@dataclass(frozen=True)
class Disk(Region):
    center: ComplexPoint
    r: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r >= 0):
            raise ValueError(f"radius must be a nonnegative real, got {self.r}")


@dataclass(frozen=True)
class Annulus(Region):
    center: ComplexPoint
    r_in: float
    r_out: float

    def __post_init__(self):
        if not (0 <= self.r_in <= self.r_out and math.isfinite(self.r_out)):
            raise ValueError(
                f"need 0 <= r_in <= r_out < inf, got ({self.r_in}, {self.r_out})"
            )


@dataclass(frozen=True)
class UnionRegion(Region):
    parts: tuple
    disjoint: bool = False

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ValueError("union needs at least one part")


@dataclass(frozen=True)
class DifferenceRegion(Region):
    a: Region
    b: Region


def _center_of(region: Region) -> complex:
    if isinstance(region, CenteredDisk):
        return 0j
    if isinstance(region, (Disk, Annulus)):
        return complex(region.center)
    raise UnsupportedRegionError(f"no single center for {type(region).__name__}")


def contains(region: Region, p: PointLike) -> bool:
    """Closed-ball membership: boundaries belong to the region."""
    z = as_complex(p)
    if isinstance(region, CenteredDisk):
        return abs(z) <= region.r
    if isinstance(region, Disk):
        return abs(z - complex(region.center)) <= region.r
    if isinstance(region, Annulus):
        d = abs(z - complex(region.center))
        return region.r_in <= d <= region.r_out
    if isinstance(region, UnionRegion):
        return any(contains(part, z) for part in region.parts)
    if isinstance(region, DifferenceRegion):
        return contains(region.a, z) and not contains(region.b, z)
    raise UnsupportedRegionError(f"unknown region type {type(region).__name__}")


def contains_many(region: Region, pts: np.ndarray) -> np.ndarray:
    """Vectorized membership test for a complex array of points."""
    z = np.asarray(pts, dtype=np.complex128)
    if isinstance(region, CenteredDisk):
        return np.abs(z) <= region.r
    if isinstance(region, Disk):
        return np.abs(z - complex(region.center)) <= region.r
    if isinstance(region, Annulus):
        d = np.abs(z - complex(region.center))
        return (d >= region.r_in) & (d <= region.r_out)
    if isinstance(region, UnionRegion):
        out = np.zeros(z.shape, dtype=bool)
        for part in region.parts:
            out |= contains_many(part, z)
        return out
    if isinstance(region, DifferenceRegion):
        return contains_many(region.a, z) & ~contains_many(region.b, z)
    raise UnsupportedRegionError(f"unknown region type {type(region).__name__}")


def is_radially_symmetric(region: Region) -> bool:
    """True iff the region is (syntactically) rotation invariant about 0."""
    if isinstance(region, CenteredDisk):
        return True
    if isinstance(region, Disk):
        return complex(region.center) == 0j
    if isinstance(region, Annulus):
        return complex(region.center) == 0j
    if isinstance(region, UnionRegion):
        return all(is_radially_symmetric(p) for p in region.parts)
    if isinstance(region, DifferenceRegion):
        return is_radially_symmetric(region.a) and is_radially_symmetric(region.b)
    raise UnsupportedRegionError(f"unknown region type {type(region).__name__}")


def _bounding_radius(region: Region) -> float:
    if isinstance(region, CenteredDisk):
        return region.r
    if isinstance(region, Disk):
        return abs(region.center) + region.r
    if isinstance(region, Annulus):
        return abs(region.center) + region.r_out
    if isinstance(region, UnionRegion):
        return max(_bounding_radius(p) for p in region.parts)
    if isinstance(region, DifferenceRegion):
        return _bounding_radius(region.a)
    raise UnsupportedRegionError(f"unknown region type {type(region).__name__}")


# ---- radial interval decomposition (radially symmetric regions only) ------

def _merge_intervals(ivs):
    ivs = sorted((a, b) for a, b in ivs if b > a)
    out = []
    for a, b in ivs:
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def _subtract_intervals(base, cut):
    out = list(base)
    for ca, cb in cut:
        nxt = []
        for a, b in out:
            if cb <= a or ca >= b:
                nxt.append((a, b))
                continue
            if a < ca:
                nxt.append((a, ca))
            if cb < b:
                nxt.append((cb, b))
        out = nxt
    return [(a, b) for a, b in out if b > a]


def radial_intervals(region: Region) -> list:
    """Decompose a rotation-invariant region into disjoint radius intervals.

    The region equals { r e^{i t} : r in some interval, t in [0, 2pi) };
    set semantics (overlaps merged, differences cut).  Raises for regions
    that are not radially symmetric.
    """
    if not is_radially_symmetric(region):
        raise UnsupportedRegionError("radial intervals need a rotation-invariant region")
    if isinstance(region, CenteredDisk):
        return [(0.0, region.r)] if region.r > 0 else []
    if isinstance(region, Disk):
        return [(0.0, region.r)] if region.r > 0 else []
    if isinstance(region, Annulus):
        return [(region.r_in, region.r_out)] if region.r_out > region.r_in else []
    if isinstance(region, UnionRegion):
        ivs = []
        for p in region.parts:
            ivs.extend(radial_intervals(p))
        return _merge_intervals(ivs)
    if isinstance(region, DifferenceRegion):
        return _subtract_intervals(
            radial_intervals(region.a), radial_intervals(region.b)
        )
    raise UnsupportedRegionError(f"unknown region type {type(region).__name__}")


# ---------------------------------------------------------------------------
# Area
# ---------------------------------------------------------------------------

def _disk_disk_intersection_area(c1: complex, r1: float, c2: complex, r2: float) -> float:
    d = abs(c1 - c2)
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        rm = min(r1, r2)
        return math.pi * rm * rm
    # standard circular lens
    a1 = r1 * r1 * math.acos((d * d + r1 * r1 - r2 * r2) / (2 * d * r1))
    a2 = r2 * r2 * math.acos((d * d + r2 * r2 - r1 * r1) / (2 * d * r2))
    tri = 0.5 * math.sqrt(
        max(0.0, (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2))
    )
    return a1 + a2 - tri


def _own_radius(region: Region) -> float:
    """Radius of the smallest disk about the region's own center covering it."""
    if isinstance(region, (CenteredDisk, Disk)):
        return region.r
    if isinstance(region, Annulus):
        return region.r_out
    raise UnsupportedRegionError(f"no primitive radius for {type(region).__name__}")


def _provably_disjoint(a: Region, b: Region) -> bool:
    """Cheap sufficient test; False means 'unknown', not 'overlapping'."""
    try:
        ca, cb = _center_of(a), _center_of(b)
        ra, rb = _own_radius(a), _own_radius(b)
    except UnsupportedRegionError:
        return False
    d = abs(ca - cb)
    if d > ra + rb:
        return True
    if ca == cb:
        ia = radial_intervals_about(a, ca)
        ib = radial_intervals_about(b, cb)
        if ia is not None and ib is not None:
            return all(xb <= ya or yb <= xa for xa, xb in ia for ya, yb in ib)
    return False


def radial_intervals_about(region: Region, center: complex):
    """Radius intervals about an arbitrary center, or None if not concentric."""
    if isinstance(region, CenteredDisk):
        return [(0.0, region.r)] if center == 0j else None
    if isinstance(region, Disk):
        return [(0.0, region.r)] if complex(region.center) == center else None
    if isinstance(region, Annulus):
        if complex(region.center) == center:
            return [(region.r_in, region.r_out)]
        return None
    if isinstance(region, UnionRegion):
        ivs = []
        for p in region.parts:
            sub = radial_intervals_about(p, center)
            if sub is None:
                return None
            ivs.extend(sub)
        return _merge_intervals(ivs)
    if isinstance(region, DifferenceRegion):
        ia = radial_intervals_about(region.a, center)
        ib = radial_intervals_about(region.b, center)
        if ia is None or ib is None:
            return None
        return _subtract_intervals(ia, ib)
    return None


def area(region: Region, tol: float = 1e-9) -> float:
    """Lebesgue measure of a region.

    Disks and annuli are closed form.  Unions require the disjoint flag
    (otherwise the measure is ambiguous and we reject).  Differences use
    |A| - |A ∩ B| where the intersection is closed form for concentric
    shapes, contained shapes, and disk pairs; anything else falls back to
    certified adaptive cell subdivision with absolute tolerance ``tol``.
    """
    if isinstance(region, CenteredDisk):
        return math.pi * region.r * region.r
    if isinstance(region, Disk):
        return math.pi * region.r * region.r
    if isinstance(region, Annulus):
        return math.pi * (region.r_out**2 - region.r_in**2)
    if isinstance(region, UnionRegion):
        if not region.disjoint:
            raise AmbiguousMeasureError(
                "union area requires disjoint=True (overlaps make the sum ambiguous)"
            )
        for i, p in enumerate(region.parts):
            for q in region.parts[i + 1:]:
                if _certainly_overlapping(p, q):
                    raise AmbiguousMeasureError(
                        "union flagged disjoint but members provably overlap"
                    )
        return sum(area(p, tol=tol) for p in region.parts)
    if isinstance(region, DifferenceRegion):
        a, b = region.a, region.b
        inter = _intersection_area(a, b, tol)
        return max(0.0, area(a, tol=tol) - inter)
    raise UnsupportedRegionError(f"unknown region type {type(region).__name__}")


def _certainly_overlapping(a: Region, b: Region) -> bool:
    """True only when a positive-area overlap is provable for primitive pairs."""
    if isinstance(a, (CenteredDisk, Disk)) and isinstance(b, (CenteredDisk, Disk)):
        return abs(_center_of(a) - _center_of(b)) < (a.r + b.r) and a.r > 0 and b.r > 0
    try:
        ca, cb = _center_of(a), _center_of(b)
    except UnsupportedRegionError:
        return False
    if ca == cb:
        ia = radial_intervals_about(a, ca)
        ib = radial_intervals_about(b, cb)
        if ia is not None and ib is not None:
            return any(min(xb, yb) > max(xa, ya) for xa, xb in ia for ya, yb in ib)
    return False


def _intersection_area(a: Region, b: Region, tol: float) -> float:
    # concentric shapes: exact via radius intervals
    try:
        ca = _center_of(a)
        ia = radial_intervals_about(a, ca)
        ib = radial_intervals_about(b, ca)
    except UnsupportedRegionError:
        ia = ib = None
    if ia is not None and ib is not None:
        total = 0.0
        for xa, xb in ia:
            for ya, yb in ib:
                lo, hi = max(xa, ya), min(xb, yb)
                if hi > lo:
                    total += math.pi * (hi * hi - lo * lo)
        return total
    if isinstance(a, (CenteredDisk, Disk)) and isinstance(b, (CenteredDisk, Disk)):
        return _disk_disk_intersection_area(_center_of(a), a.r, _center_of(b), b.r)
    if _provably_disjoint(a, b):
        return 0.0
    inter = _IntersectionShim(a, b)
    return _adaptive_area(inter, tol)


class _IntersectionShim(Region):
    """Internal region-like wrapper so adaptive subdivision can see A ∩ B."""

    def __init__(self, a: Region, b: Region):
        self.a = a
        self.b = b


# ---- adaptive cell subdivision -------------------------------------------

_INSIDE, _OUTSIDE, _PARTIAL = 1, 0, -1


def _box_vs_region(region, cx, cy, half):
    """Classify the axis-aligned square [cx±half]x[cy±half] against region."""
    if isinstance(region, _IntersectionShim):
        ca = _box_vs_region(region.a, cx, cy, half)
        cb = _box_vs_region(region.b, cx, cy, half)
        if ca == _OUTSIDE or cb == _OUTSIDE:
            return _OUTSIDE
        if ca == _INSIDE and cb == _INSIDE:
            return _INSIDE
        return _PARTIAL
    if isinstance(region, (CenteredDisk, Disk)):
        c = _center_of(region)
        dx = max(abs(cx - c.real) - half, 0.0)
        dy = max(abs(cy - c.imag) - half, 0.0)
        dmin = math.hypot(dx, dy)
        dmax = math.hypot(abs(cx - c.real) + half, abs(cy - c.imag) + half)
        if dmax <= region.r:
            return _INSIDE
        if dmin > region.r:
            return _OUTSIDE
        return _PARTIAL
    if isinstance(region, Annulus):
        c = complex(region.center)
        dx = max(abs(cx - c.real) - half, 0.0)
        dy = max(abs(cy - c.imag) - half, 0.0)
        dmin = math.hypot(dx, dy)
        dmax = math.hypot(abs(cx - c.real) + half, abs(cy - c.imag) + half)
        if dmin >= region.r_in and dmax <= region.r_out:
            return _INSIDE
        if dmax < region.r_in or dmin > region.r_out:
            return _OUTSIDE
        return _PARTIAL
    if isinstance(region, UnionRegion):
        states = [_box_vs_region(p, cx, cy, half) for p in region.parts]
        if any(s == _INSIDE for s in states):
            return _INSIDE
        if all(s == _OUTSIDE for s in states):
            return _OUTSIDE
        return _PARTIAL
    if isinstance(region, DifferenceRegion):
        ca = _box_vs_region(region.a, cx, cy, half)
        cb = _box_vs_region(region.b, cx, cy, half)
        if ca == _OUTSIDE or cb == _INSIDE:
            return _OUTSIDE
        if ca == _INSIDE and cb == _OUTSIDE:
            return _INSIDE
        return _PARTIAL
    raise UnsupportedRegionError(f"unknown region type {type(region).__name__}")


def _adaptive_area(region, tol: float, max_depth: int = 40) -> float:
    if isinstance(region, _IntersectionShim):
        rad = min(_bounding_radius(region.a), _bounding_radius(region.b))
        # center the root box on A's bounding region
        c = 0j
    else:
        rad = _bounding_radius(region)
        c = 0j
    half = rad if rad > 0 else 1.0
    inside = 0.0
    frontier = [(c.real, c.imag, half)]
    depth = 0
    while frontier and depth <= max_depth:
        partial_area = sum((2 * h) ** 2 for _, _, h in frontier)
        if partial_area < 2 * tol:
            break
        nxt = []
        for cx, cy, h in frontier:
            hh = h / 2
            for sx in (-hh, hh):
                for sy in (-hh, hh):
                    st = _box_vs_region(region, cx + sx, cy + sy, hh)
                    if st == _INSIDE:
                        inside += (2 * hh) ** 2
                    elif st == _PARTIAL:
                        nxt.append((cx + sx, cy + sy, hh))
        frontier = nxt
        depth += 1
    partial_area = sum((2 * h) ** 2 for _, _, h in frontier)
    if partial_area >= 2 * tol:
        raise RuntimeError(
            f"adaptive area did not certify tolerance {tol} "
            f"(residual boundary area {partial_area:.3e})"
        )
    return inside + 0.5 * partial_area


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def region_to_json(region: Region) -> dict:
    if isinstance(region, CenteredDisk):
        return {"kind": "centered_disk", "r": region.r}
    if isinstance(region, Disk):
        return {"kind": "disk", "cx": region.center.re, "cy": region.center.im, "r": region.r}
    if isinstance(region, Annulus):
        return {
            "kind": "annulus",
            "cx": region.center.re,
            "cy": region.center.im,
            "r_in": region.r_in,
            "r_out": region.r_out,
        }
    if isinstance(region, DifferenceRegion):
        return {"kind": "difference", "a": region_to_json(region.a), "b": region_to_json(region.b)}
    if isinstance(region, UnionRegion):
        return {
            "kind": "union",
            "parts": [region_to_json(p) for p in region.parts],
            "disjoint": region.disjoint,
        }
    raise UnsupportedRegionError(f"unknown region type {type(region).__name__}")


def region_from_json(obj: dict) -> Region:
    kind = obj.get("kind")
    if kind == "centered_disk":
        return CenteredDisk(float(obj["r"]))
    if kind == "disk":
        return Disk(ComplexPoint(float(obj["cx"]), float(obj["cy"])), float(obj["r"]))
    if kind == "annulus":
        return Annulus(
            ComplexPoint(float(obj["cx"]), float(obj["cy"])),
            float(obj["r_in"]),
            float(obj["r_out"]),
        )
    if kind == "difference":
        return DifferenceRegion(region_from_json(obj["a"]), region_from_json(obj["b"]))
    if kind == "union":
        return UnionRegion(
            tuple(region_from_json(p) for p in obj["parts"]),
            disjoint=bool(obj.get("disjoint", False)),
        )
    raise ValueError(f"unknown region kind {kind!r}")


# ---------------------------------------------------------------------------
# Reproducible randomness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RandomStream:
    """A (seed, substream) pair; equal pairs reproduce identical draws.

    Substreams are spawned through numpy's SeedSequence tree, so distinct
    stream ids are statistically independent and stable across platforms.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.default_rng(ss)

    def substream(self, k: int) -> "RandomStream":
        if self.stream_id != 0:
            raise ValueError("substreams are spawned from a root stream only")
        return RandomStream(self.seed, k)
