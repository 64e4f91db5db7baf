"""Models of the hyperbolic plane, its isometries and boundary quantities.

Three charts are used: the Poincare disk (``DiskPoint``), the upper half-plane
and its logarithmic form ``(u, w)`` with ``z = u + i*exp(w)`` (``HalfPlanePoint``).
Half-plane points always store ``w = log Im z``; the imaginary part itself is
never needed by the distance formulas and underflows for particles that have
drifted far toward the boundary.

The array functions (``hdist``, ``hdist_origin``, ``halfplane_angle``, ...)
take numpy arrays of log coordinates and are what the simulation engine uses.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from hypbbm.errors import OverflowNearBoundary

TWO_PI = 2.0 * math.pi
LOG2 = math.log(2.0)
BOUNDARY_TOL = 1e-12

DEFAULT_HEAT_CONST = 10.0
DEFAULT_EXCURSION_K = 10.0


def normalize_angle(phi: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.remainder(phi, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


def normalize_angles(phi: np.ndarray) -> np.ndarray:
    a = np.remainder(np.asarray(phi, dtype=float) + math.pi, TWO_PI) - math.pi
    return np.where(a <= -math.pi, a + TWO_PI, a)


@dataclass(frozen=True)
class DiskPoint:
    re: float
    im: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise ValueError("disk point coordinates must be finite")
        if self.re * self.re + self.im * self.im >= 1.0:
            raise ValueError(f"|z| >= 1 is not a point of the open disk: {self.z!r}")

    @classmethod
    def from_complex(cls, z: complex) -> "DiskPoint":
        return cls(z.real, z.imag)

    @property
    def z(self) -> complex:
        return complex(self.re, self.im)

    def __abs__(self):
        return math.hypot(self.re, self.im)


@dataclass(frozen=True)
class HalfPlanePoint:
    """The point ``u + i*exp(w)`` of the upper half-plane."""

    u: float
    w: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.w)):
            raise ValueError("half-plane log coordinates must be finite")

    @property
    def v(self) -> float:
        # may underflow to 0.0; prefer w
        return math.exp(self.w)

    @classmethod
    def from_complex(cls, z: complex) -> "HalfPlanePoint":
        if z.imag <= 0:
            raise ValueError("half-plane points need Im z > 0")
        return cls(z.real, math.log(z.imag))


ORIGIN_H = HalfPlanePoint(0.0, 0.0)
ORIGIN_D = DiskPoint(0.0, 0.0)


@dataclass(frozen=True, eq=False)
class BoundaryPoint:
    """The point ``exp(i*angle)`` of the unit circle; angle in (-pi, pi]."""

    angle: float

    def __post_init__(self):
        object.__setattr__(self, "angle", normalize_angle(float(self.angle)))

    def __eq__(self, other):
        if not isinstance(other, BoundaryPoint):
            return NotImplemented
        return abs(math.remainder(self.angle - other.angle, TWO_PI)) <= BOUNDARY_TOL

    __hash__ = None

    @property
    def xi(self) -> complex:
        return cmath.exp(1j * self.angle)


@dataclass(frozen=True)
class MoebiusMap:
    """``z -> (a z + c) / (conj(c) z + conj(a))`` with ``|a|^2 - |c|^2 = 1``.

    The pair is renormalized on construction.  ``aff`` marks members of the
    subgroup fixing the boundary point 1 (``a + c`` real).
    """

    a: complex
    c: complex = 0j
    aff: bool = field(default=False)

    def __post_init__(self):
        a, c = complex(self.a), complex(self.c)
        det = abs(a) ** 2 - abs(c) ** 2
        if not det > 0 or not math.isfinite(det):
            raise ValueError("Moebius pair needs |a|^2 - |c|^2 > 0")
        s = 1.0 / math.sqrt(det)
        a, c = a * s, c * s
        if self.aff and abs((a + c).imag) > 1e-9 * max(1.0, abs(a)):
            raise ValueError("a + c is not real; map does not fix the boundary point 1")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)

    @classmethod
    def identity(cls) -> "MoebiusMap":
        return cls(1 + 0j, 0j, aff=True)

    @classmethod
    def rotation(cls, theta: float) -> "MoebiusMap":
        return cls(cmath.exp(0.5j * theta), 0j)

    def __call__(self, z):
        return apply(self, z)

    def __matmul__(self, other: "MoebiusMap") -> "MoebiusMap":
        return compose(self, other)


# ---------------------------------------------------------------------------
# chart changes

def disk_to_halfplane(z: DiskPoint) -> HalfPlanePoint:
    """Image under ``z -> i(1+z)/(1-z)``, stored as ``(u, log v)``."""
    x, y = z.re, z.im
    one_minus_sq = (1.0 - math.hypot(x, y)) * (1.0 + math.hypot(x, y))
    d2 = (1.0 - x) ** 2 + y * y
    return HalfPlanePoint(-2.0 * y / d2, math.log(one_minus_sq) - math.log(d2))


def _to_disk_parts(u, w):
    """Return (re, im, log(1-|z|^2)) of ``(z - i)/(z + i)`` for ``z = u + i e^w``."""
    v = np.exp(w)
    s = np.maximum(np.abs(u), v + 1.0)
    us, vs = u / s, (v + 1.0) / s
    dn = us * us + vs * vs  # |z + i|^2 / s^2
    re = 1.0 - 2.0 * vs / (s * dn)
    im = -2.0 * us / (s * dn)
    log_gap = LOG2 * 2 + w - (2 * np.log(s) + np.log(dn))
    return re, im, log_gap


def halfplane_to_disk(p: HalfPlanePoint) -> DiskPoint:
    """Inverse chart ``z -> (z - i)/(z + i)``.

    Raises OverflowNearBoundary when the image rounds onto the unit circle.
    """
    if p.w > 709.0:
        raise OverflowNearBoundary(f"Im z = exp({p.w}) overflows float64")
    re, im, _ = _to_disk_parts(p.u, p.w)
    if not re * re + im * im < 1.0:
        raise OverflowNearBoundary(
            f"point (u={p.u}, w={p.w}) is within float64 resolution of the unit circle"
        )
    return DiskPoint(float(re), float(im))


def to_halfplane(p) -> HalfPlanePoint:
    if isinstance(p, HalfPlanePoint):
        return p
    if isinstance(p, DiskPoint):
        return disk_to_halfplane(p)
    raise TypeError(f"not a point: {p!r}")


def to_disk(p) -> DiskPoint:
    if isinstance(p, DiskPoint):
        return p
    if isinstance(p, HalfPlanePoint):
        return halfplane_to_disk(p)
    raise TypeError(f"not a point: {p!r}")


# ---------------------------------------------------------------------------
# distances

def _arcosh1p_from_log(log_y):
    """arcosh(1 + y) given log y, stable for y from denormal to overflow."""
    log_y = np.asarray(log_y, dtype=float)
    out = np.empty_like(log_y)
    small = log_y < 0.0
    if np.any(small):
        y = np.exp(log_y[small])
        out[small] = np.log1p(y + np.sqrt(y * (y + 2.0)))
    big = ~small
    if np.any(big):
        e = np.exp(-log_y[big])
        out[big] = log_y[big] + np.log(1.0 + e + np.sqrt(1.0 + 2.0 * e))
    return out


def hdist(u1, w1, u2, w2):
    """Hyperbolic distance between half-plane points in log coordinates (arrays).

    ``cosh(rho) = 1 + ((u1-u2)^2 + (v1-v2)^2) / (2 v1 v2)``, evaluated in logs.
    """
    u1, w1, u2, w2 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (u1, w1, u2, w2)))
    du = np.abs(u1 - u2)
    wmax = np.maximum(w1, w2)
    dw = np.abs(w1 - w2)
    with np.errstate(divide="ignore"):
        log_du = np.log(du)
        log_dv = wmax + np.log(-np.expm1(-dw))
        log_sq = np.logaddexp(2.0 * log_du, 2.0 * log_dv)
    log_y = log_sq - LOG2 - w1 - w2
    out = np.zeros(log_y.shape)
    nz = np.isfinite(log_y)
    out[nz] = _arcosh1p_from_log(log_y[nz])
    return out


def hdist_origin(u, w):
    """Distance from the half-plane origin i (array form)."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if u.size and np.abs(w).max() < 300.0 and np.abs(u).max() < 1e50:
        y = 0.5 * (u * u + np.expm1(w) ** 2) * np.exp(-w)
        return np.log1p(y + np.sqrt(y) * np.sqrt(y + 2.0))
    return hdist(u, w, 0.0, 0.0)


def dist_halfplane(p: HalfPlanePoint, q: HalfPlanePoint) -> float:
    return float(hdist(p.u, p.w, q.u, q.w))


def dist_halfplane_formula(p: HalfPlanePoint, q: HalfPlanePoint) -> float:
    """Direct ``log((|z - conj w| + |z - w|)/(|z - conj w| - |z - w|))``; unstable near the boundary."""
    z = complex(p.u, math.exp(p.w))
    w = complex(q.u, math.exp(q.w))
    a, b = abs(z - w.conjugate()), abs(z - w)
    return math.log((a + b) / (a - b))


def dist_disk(z: DiskPoint, w: DiskPoint) -> float:
    zz, ww = z.z, w.z
    a = abs(1 - zz * ww.conjugate())
    b = abs(zz - ww)
    if b == 0.0:
        return 0.0
    r = b / a
    if r < 0.5:
        return 2.0 * math.atanh(r)
    gz = (1.0 - abs(zz)) * (1.0 + abs(zz))
    gw = (1.0 - abs(ww)) * (1.0 + abs(ww))
    # (a - b)(a + b) = (1 - |z|^2)(1 - |w|^2)
    return 2.0 * math.log(a + b) - math.log(gz) - math.log(gw)


def dist_disk_formula(z: DiskPoint, w: DiskPoint) -> float:
    zz, ww = z.z, w.z
    a = abs(1 - zz * ww.conjugate())
    b = abs(zz - ww)
    return math.log((a + b) / (a - b))


def distance(p, q) -> float:
    """Distance between two points given in any chart."""
    if isinstance(p, DiskPoint) and isinstance(q, DiskPoint):
        return dist_disk(p, q)
    return dist_halfplane(to_halfplane(p), to_halfplane(q))


def rho_minus_log_im(p: HalfPlanePoint) -> float:
    """``rho(z, i) + log Im z`` for ``z = u + i*exp(w)``.

    Equals ``log((1 + |z|^2 + sqrt((1+|z|^2)^2 - 4 y^2)) / 2)``; the square root is
    factored as ``(u^2 + (1-y)^2)(u^2 + (1+y)^2)`` to avoid cancellation.
    """
    if abs(p.w) > 300.0:
        return dist_halfplane(p, ORIGIN_H) + p.w
    y = math.exp(p.w)
    u2 = p.u * p.u
    root = math.sqrt((u2 + (1.0 - y) ** 2) * (u2 + (1.0 + y) ** 2))
    return math.log(0.5 * (1.0 + u2 + y * y + root))


# ---------------------------------------------------------------------------
# isometries

def gamma(z0: DiskPoint) -> MoebiusMap:
    """The unique map fixing the boundary point 1 that sends 0 to ``z0``."""
    z = z0.z
    n2 = abs(z) ** 2
    return MoebiusMap(1 - z, z - n2, aff=True)


def compose(g: MoebiusMap, h: MoebiusMap) -> MoebiusMap:
    """``g o h``."""
    a = g.a * h.a + g.c * h.c.conjugate()
    c = g.a * h.c + g.c * h.a.conjugate()
    return MoebiusMap(a, c, aff=g.aff and h.aff)


def inverse(g: MoebiusMap) -> MoebiusMap:
    return MoebiusMap(g.a.conjugate(), -g.c, aff=g.aff)


def apply(g: MoebiusMap, z):
    if isinstance(z, BoundaryPoint):
        xi = z.xi
        img = (g.a * xi + g.c) / (g.c.conjugate() * xi + g.a.conjugate())
        return BoundaryPoint(cmath.phase(img))
    if isinstance(z, DiskPoint):
        zz = z.z
        img = (g.a * zz + g.c) / (g.c.conjugate() * zz + g.a.conjugate())
        return DiskPoint(img.real, img.imag)
    if isinstance(z, HalfPlanePoint):
        return disk_to_halfplane(apply(g, halfplane_to_disk(z)))
    raise TypeError(f"cannot apply a Moebius map to {z!r}")


def affine_of(g: MoebiusMap) -> tuple[float, float]:
    """For ``g`` fixing 1, return ``(b, log a)`` of its half-plane form ``z -> a z + b``."""
    if not g.aff:
        raise ValueError("only maps fixing the boundary point 1 are affine in the half-plane")
    p = disk_to_halfplane(apply(g, ORIGIN_D))
    return p.u, p.w


def gamma_from_halfplane(p: HalfPlanePoint) -> MoebiusMap:
    """``gamma`` of the disk image of ``p``, built without leaving log coordinates.

    Its half-plane form is ``z -> exp(w) z + u``; conjugating back gives
    ``a = (e^{w/2} + e^{-w/2} + i u e^{-w/2}) / 2`` and
    ``c = (e^{w/2} - e^{-w/2} - i u e^{-w/2}) / 2`` (up to the real-normalization).
    """
    h = math.exp(0.5 * p.w)
    hi = math.exp(-0.5 * p.w)
    a = 0.5 * complex(h + hi, p.u * hi)
    c = 0.5 * complex(h - hi, -p.u * hi)
    return MoebiusMap(a, c, aff=True)


# ---------------------------------------------------------------------------
# boundary

def poisson_kernel(z0: DiskPoint, xi: BoundaryPoint) -> float:
    z = z0.z
    return (1.0 - abs(z) ** 2) / abs(xi.xi - z) ** 2


def poisson_arc_masses(z0: DiskPoint, edges) -> np.ndarray:
    """Harmonic measure ``(1/2pi) int_arc P(z0, xi) dphi`` of consecutive arcs.

    ``edges`` are increasing angles; arc k is ``[edges[k], edges[k+1]]``.
    Uses the antiderivative ``(1/pi) atan(((1+r)/(1-r)) tan((phi - theta)/2))``.
    """
    edges = np.asarray(edges, dtype=float)
    r = abs(z0)
    theta = cmath.phase(z0.z) if r > 0 else 0.0
    x = 0.5 * (edges - theta)
    # unwrap to a continuous antiderivative along the increasing edges
    f = np.arctan2((1.0 + r) * np.sin(x), (1.0 - r) * np.cos(x)) / math.pi
    f = f + 2.0 * np.floor((x + math.pi) / TWO_PI)
    return np.diff(f)


def radial_projection(z) -> BoundaryPoint:
    """Angle of the point as seen from the disk center; 0 for the center itself."""
    if isinstance(z, DiskPoint):
        if z.re == 0.0 and z.im == 0.0:
            return BoundaryPoint(0.0)
        return BoundaryPoint(math.atan2(z.im, z.re))
    if isinstance(z, HalfPlanePoint):
        return BoundaryPoint(float(halfplane_angle(z.u, z.w)))
    raise TypeError(f"not a point: {z!r}")


def halfplane_angle(u, w):
    """Disk angle of ``(u + i e^w - i)/(u + i e^w + i)`` (array form)."""
    u = np.asarray(u, dtype=float)
    v = np.exp(np.asarray(w, dtype=float))
    a = np.arctan2(v - 1.0, u) - np.arctan2(v + 1.0, u)
    out = normalize_angles(a)
    # the disk center maps to angle 0 by convention
    return np.where((u == 0.0) & (np.asarray(w) == 0.0), 0.0, out)


def halfplane_boundary_gap(u, w):
    """``1 - |z|`` of the disk image, computed without cancellation."""
    re, im, log_gap = _to_disk_parts(np.asarray(u, dtype=float), np.asarray(w, dtype=float))
    r = np.hypot(re, im)
    return np.exp(log_gap) / (1.0 + np.minimum(r, 1.0))


def halfplane_to_disk_arrays(u, w):
    re, im, _ = _to_disk_parts(np.asarray(u, dtype=float), np.asarray(w, dtype=float))
    return re, im


# ---------------------------------------------------------------------------
# bounds

def psi(x: float) -> float:
    return x ** 1.5 if x <= 1.0 else x ** 0.5


def heat_tail_bound(R: float, t: float, const: float = DEFAULT_HEAT_CONST) -> float:
    """Upper bound for the heat kernel of Delta/2 at distance R and time t."""
    if R < 0 or t <= 0:
        raise ValueError("need R >= 0 and t > 0")
    return const * psi((1.0 + R) / t) / math.sqrt(1.0 + R) * math.exp(-((R + 0.5 * t) ** 2) / (2.0 * t))


def max_excursion_bound(c: float, K: float = DEFAULT_EXCURSION_K) -> float:
    """Gaussian-rate ceiling for P[max_{s<=1} rho(B_s, B_0) >= c]."""
    if c <= 0:
        raise ValueError("need c > 0")
    return K * math.exp(-0.5 * (c - 0.5) ** 2)
