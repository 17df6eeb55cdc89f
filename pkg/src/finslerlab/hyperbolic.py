"""Poincare disc model of curvature -1: points, geodesics, Mobius isometries.

Points live in polar-hyperbolic coordinates (theta, rho) with euclidean
chart coordinate z = tanh(rho/2) e^{i theta}.  Storing rho instead of |z|
keeps every formula well conditioned near the rim, where 1 - |z| ~ 2 e^{-rho}
underflows long before rho reaches the truncation radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Global truncation radius: beyond ~30 hyperbolic units double precision can
# no longer resolve boundary approach.  All limit procedures truncate here.
R_MAX = 30.0

# Tolerance for equality of boundary angles.
TOL_ANGLE = 1e-9

TWO_PI = 2.0 * math.pi


class DiscError(ValueError):
    """Invalid hyperbolic-geometry input."""


class TruncationError(DiscError):
    """A point left the numerically trustworthy disc (rho > R_MAX)."""


class DegenerateGeodesicError(DiscError):
    """Coincident boundary endpoints define no geodesic."""


def wrap_angle(theta: float) -> float:
    """Reduce an angle to [0, 2*pi)."""
    t = math.fmod(theta, TWO_PI)
    return t + TWO_PI if t < 0.0 else t


def angle_gap(t1, t2):
    """Circular distance between two angles, in [0, pi]."""
    d = np.abs(np.asarray(t1) - np.asarray(t2)) % TWO_PI
    return np.minimum(d, TWO_PI - d)


@dataclass(frozen=True)
class DiscPoint:
    """Point of the open disc: direction theta and hyperbolic radius rho."""

    theta: float
    rho: float

    def __post_init__(self):
        if not (self.rho >= 0.0):
            raise DiscError(f"rho must be nonnegative, got {self.rho}")
        if self.rho > R_MAX:
            raise TruncationError(f"rho={self.rho} exceeds R_MAX={R_MAX}")
        object.__setattr__(self, "theta", wrap_angle(self.theta) if self.rho > 0 else 0.0)

    @property
    def z(self) -> complex:
        return math.tanh(0.5 * self.rho) * complex(math.cos(self.theta), math.sin(self.theta))

    @classmethod
    def from_euclidean(cls, z: complex) -> "DiscPoint":
        r = abs(z)
        if r >= 1.0:
            raise DiscError(f"|z|={r} not inside the unit disc")
        return cls(math.atan2(z.imag, z.real), 2.0 * math.atanh(r))

    def is_close(self, other: "DiscPoint", tol: float = 1e-12) -> bool:
        return dist_g(self, other) <= tol


ORIGIN = DiscPoint(0.0, 0.0)


@dataclass(frozen=True)
class BoundaryPoint:
    """Point of the circle at infinity, as an angle in [0, 2*pi)."""

    xi: float

    def __post_init__(self):
        object.__setattr__(self, "xi", wrap_angle(self.xi))

    def is_close(self, other: "BoundaryPoint", tol: float = TOL_ANGLE) -> bool:
        return float(angle_gap(self.xi, other.xi)) <= tol


# ---------------------------------------------------------------------------
# distance


def dist_polar(th1, rho1, th2, rho2):
    """Curvature -1 distance between polar-hyperbolic points (vectorized).

    Hyperbolic haversine form of d = 2 artanh |(z1-z2)/(1-conj(z2) z1)|:

        sinh^2(d/2) = sinh^2((rho1-rho2)/2)
                      + sinh(rho1) sinh(rho2) sin^2((th1-th2)/2)

    All terms are nonnegative, so there is no cancellation near the rim.
    """
    s = np.sinh(0.5 * (np.asarray(rho1) - rho2)) ** 2 + (
        np.sinh(rho1) * np.sinh(rho2) * np.sin(0.5 * (np.asarray(th1) - th2)) ** 2
    )
    return 2.0 * np.arcsinh(np.sqrt(np.maximum(s, 0.0)))


def dist_g(p: DiscPoint, q: DiscPoint) -> float:
    """Hyperbolic distance between two disc points."""
    if p.rho > R_MAX or q.rho > R_MAX:
        raise TruncationError("point beyond R_MAX")
    return float(dist_polar(p.theta, p.rho, q.theta, q.rho))


def conformal_factor(rho):
    """lambda(rho) with |v|_g = lambda * |v|_euclidean; lambda = 2 cosh^2(rho/2).

    Equals 2/(1-|z|^2) evaluated without forming 1-|z|^2.
    """
    return 2.0 * np.cosh(0.5 * np.asarray(rho)) ** 2


def g_norm(p: DiscPoint, v: complex) -> float:
    """Norm of a chart tangent vector v at p."""
    return float(conformal_factor(p.rho)) * abs(v)


# ---------------------------------------------------------------------------
# Mobius isometries


@dataclass(frozen=True)
class MobiusMap:
    """Disc isometry z -> (a z + b) / (conj(b) z + conj(a)), |a|^2 - |b|^2 = 1."""

    a: complex
    b: complex

    def __post_init__(self):
        det = abs(self.a) ** 2 - abs(self.b) ** 2
        if det <= 0:
            raise DiscError("not a disc-preserving map: |a|^2 - |b|^2 <= 0")
        s = math.sqrt(det)
        object.__setattr__(self, "a", self.a / s)
        object.__setattr__(self, "b", self.b / s)

    @classmethod
    def identity(cls) -> "MobiusMap":
        return cls(1.0 + 0.0j, 0.0j)

    @classmethod
    def rotation(cls, phi: float) -> "MobiusMap":
        return cls(complex(math.cos(0.5 * phi), math.sin(0.5 * phi)), 0.0j)

    @classmethod
    def translation_to_origin(cls, p: DiscPoint) -> "MobiusMap":
        """Map sending p to the origin: z -> (z - z_p)/(1 - conj(z_p) z)."""
        zp = p.z
        s = 1.0 / math.cosh(0.5 * p.rho)  # sqrt(1 - |z_p|^2), computed stably
        return cls(1.0 / s, -zp / s)

    @classmethod
    def axis_translation(cls, length: float) -> "MobiusMap":
        """Translation by `length` along the real diameter, oriented -1 -> +1."""
        return cls(math.cosh(0.5 * length) + 0.0j, math.sinh(0.5 * length) + 0.0j)

    def compose(self, other: "MobiusMap") -> "MobiusMap":
        a1, b1, a2, b2 = self.a, self.b, other.a, other.b
        return MobiusMap(a1 * a2 + b1 * np.conj(b2), a1 * b2 + b1 * np.conj(a2))

    def __matmul__(self, other: "MobiusMap") -> "MobiusMap":
        return self.compose(other)

    def inverse(self) -> "MobiusMap":
        return MobiusMap(np.conj(self.a), -self.b)

    def is_identity(self, tol: float = 1e-9) -> bool:
        return identity_residual(self) <= tol

    def trace_size(self) -> float:
        """|a + conj(a)| = 2 |Re a|; hyperbolic maps have trace_size > 2."""
        return 2.0 * abs(self.a.real)

    def derivative(self, p: DiscPoint) -> complex:
        """Complex chart derivative at p (conformal scaling of tangent vectors)."""
        return 1.0 / (np.conj(self.b) * p.z + np.conj(self.a)) ** 2


def identity_residual(m: MobiusMap) -> float:
    """Distance of (a, b) from +-(1, 0); zero iff m is the identity map."""
    rp = abs(m.a - 1.0) + abs(m.b)
    rm = abs(m.a + 1.0) + abs(m.b)
    return min(rp, rm)


def mobius_residual(m1: MobiusMap, m2: MobiusMap) -> float:
    """Matrix distance between two maps, modulo the (a,b) ~ (-a,-b) sign."""
    rp = abs(m1.a - m2.a) + abs(m1.b - m2.b)
    rm = abs(m1.a + m2.a) + abs(m1.b + m2.b)
    return min(rp, rm)


def apply_mobius_polar(a: complex, b: complex, theta, rho):
    """Apply the map to polar-hyperbolic arrays; stable at large rho.

    Uses 1 - |w|^2 = (1 - |z|^2)/|conj(b) z + conj(a)|^2 (unit determinant),
    so the output radius never suffers 1 - |w| cancellation.
    """
    theta = np.asarray(theta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    z = np.tanh(0.5 * rho) * np.exp(1j * theta)
    num = a * z + b
    den = np.conj(b) * z + np.conj(a)
    th_out = np.angle(num) - np.angle(den)
    u = 1.0 / np.cosh(0.5 * rho) ** 2  # 1 - |z|^2, no cancellation
    u_out = u / np.abs(den) ** 2
    absw = np.abs(num) / np.abs(den)
    # small |w|: artanh directly; otherwise sinh(rho/2) = |w| / sqrt(1-|w|^2)
    rho_out = np.where(
        absw < 0.5,
        2.0 * np.arctanh(np.minimum(absw, 0.999999999999)),
        2.0 * np.arcsinh(absw / np.sqrt(np.maximum(u_out, 1e-300))),
    )
    return np.mod(th_out, TWO_PI), rho_out


def apply_mobius(m: MobiusMap, p: DiscPoint) -> DiscPoint:
    """Image of a disc point under the isometry; errors if it leaves R_MAX."""
    th, rho = apply_mobius_polar(m.a, m.b, p.theta, p.rho)
    rho = float(rho)
    if rho > R_MAX:
        raise TruncationError(f"image radius {rho} exceeds R_MAX")
    return DiscPoint(float(th), rho)


def apply_mobius_boundary(m: MobiusMap, xi: BoundaryPoint) -> BoundaryPoint:
    """Boundary action: same fractional-linear formula restricted to |z| = 1."""
    z = complex(math.cos(xi.xi), math.sin(xi.xi))
    w = (m.a * z + m.b) / (np.conj(m.b) * z + np.conj(m.a))
    return BoundaryPoint(math.atan2(w.imag, w.real))


def boundary_angles_mobius(m: MobiusMap, xi):
    """Vectorized boundary action on an array of angles."""
    z = np.exp(1j * np.asarray(xi, dtype=float))
    w = (m.a * z + m.b) / (np.conj(m.b) * z + np.conj(m.a))
    return np.mod(np.angle(w), TWO_PI)


# ---------------------------------------------------------------------------
# geodesics


def _triple_map(z1: complex, z2: complex, z3: complex, w1: complex, w2: complex, w3: complex) -> MobiusMap:
    """Disc automorphism sending the ccw boundary triple (z1,z2,z3) to (w1,w2,w3)."""

    def to_01inf(p, q, r):
        # FLT sending (p, q, r) -> (0, 1, inf), as a 2x2 complex matrix
        return np.array([[q - r, -p * (q - r)], [q - p, -r * (q - p)]], dtype=complex)

    mz = to_01inf(z1, z2, z3)
    mw = to_01inf(w1, w2, w3)
    m = np.linalg.inv(mw) @ mz
    m = m / np.sqrt(np.linalg.det(m))
    # a disc automorphism has the form [[a, b], [conj(b), conj(a)]] up to sign;
    # symmetrize to absorb roundoff
    a = 0.5 * (m[0, 0] + np.conj(m[1, 1]))
    b = 0.5 * (m[0, 1] + np.conj(m[1, 0]))
    return MobiusMap(a, b)


class HyperbolicGeodesic:
    """Oriented g-geodesic with boundary endpoints xi_minus -> xi_plus.

    Unit-speed parameterization; parameter 0 sits at the point of the
    geodesic closest (euclidean sense) to the disc centre.
    """

    def __init__(self, xi_minus: BoundaryPoint, xi_plus: BoundaryPoint):
        if angle_gap(xi_minus.xi, xi_plus.xi) < TOL_ANGLE:
            raise DegenerateGeodesicError("geodesic endpoints coincide")
        self.xi_minus = xi_minus
        self.xi_plus = xi_plus
        zm = np.exp(1j * xi_minus.xi)
        zp = np.exp(1j * xi_plus.xi)
        # midpoint of the ccw boundary arc from xi_plus to xi_minus = the
        # boundary of the left side; it maps to +i in the aligned frame
        gap_ccw = (xi_minus.xi - xi_plus.xi) % TWO_PI
        zl = np.exp(1j * (xi_plus.xi + 0.5 * gap_ccw))
        # aligned frame: geodesic becomes the real diameter -1 -> +1
        self._to_aligned = _triple_map(zm, zl, zp, -1.0 + 0j, 1j, 1.0 + 0j)
        self._from_aligned = self._to_aligned.inverse()

    def point_at(self, t: float) -> DiscPoint:
        aligned = DiscPoint(0.0 if t >= 0 else math.pi, abs(t))
        return apply_mobius(self._from_aligned, aligned)

    def points_at(self, ts) -> tuple[np.ndarray, np.ndarray]:
        ts = np.asarray(ts, dtype=float)
        th = np.where(ts >= 0, 0.0, math.pi)
        return apply_mobius_polar(self._from_aligned.a, self._from_aligned.b, th, np.abs(ts))

    def to_aligned(self, p: DiscPoint) -> DiscPoint:
        return apply_mobius(self._to_aligned, p)

    def from_aligned_polar(self, theta, rho):
        return apply_mobius_polar(self._from_aligned.a, self._from_aligned.b, theta, rho)

    def euclidean_circle(self) -> tuple[complex, float]:
        """Euclidean centre and radius of the supporting circle (inf radius = diameter)."""
        zm = np.exp(1j * self.xi_minus.xi)
        zp = np.exp(1j * self.xi_plus.xi)
        dot = (zm * np.conj(zp)).real
        if dot < -1.0 + 1e-14:  # antipodal: a euclidean diameter
            return complex(math.inf, math.inf), math.inf
        c = (zm + zp) / (1.0 + dot)
        r = math.sqrt(max(abs(c) ** 2 - 1.0, 0.0))
        return complex(c), r


def geodesic_through(xi_minus: BoundaryPoint, xi_plus: BoundaryPoint) -> HyperbolicGeodesic:
    """The unique oriented g-geodesic with the given distinct endpoints."""
    return HyperbolicGeodesic(xi_minus, xi_plus)


def geodesic_through_points(p: DiscPoint, q: DiscPoint) -> HyperbolicGeodesic:
    """Oriented g-geodesic extending the segment p -> q."""
    t = MobiusMap.translation_to_origin(p)
    q1 = apply_mobius(t, q)
    if q1.rho < 1e-14:
        raise DegenerateGeodesicError("coincident points define no geodesic")
    phi = q1.theta
    ti = t.inverse()
    xi_plus = apply_mobius_boundary(ti, BoundaryPoint(phi))
    xi_minus = apply_mobius_boundary(ti, BoundaryPoint(phi + math.pi))
    return HyperbolicGeodesic(xi_minus, xi_plus)


def direction_from(p: DiscPoint, q: DiscPoint) -> BoundaryPoint:
    """Boundary endpoint of the g-ray from p through q."""
    t = MobiusMap.translation_to_origin(p)
    q1 = apply_mobius(t, q)
    if q1.rho < 1e-14:
        raise DegenerateGeodesicError("ray direction undefined for coincident points")
    return apply_mobius_boundary(t.inverse(), BoundaryPoint(q1.theta))


def point_toward(p: DiscPoint, xi: BoundaryPoint, r: float) -> DiscPoint:
    """Point at hyperbolic distance r from p along the g-ray toward xi."""
    t = MobiusMap.translation_to_origin(p)
    xi1 = apply_mobius_boundary(t, xi)
    return apply_mobius(t.inverse(), DiscPoint(xi1.xi, r))


def geodesic_interpolate(p: DiscPoint, q: DiscPoint, fracs) -> tuple[np.ndarray, np.ndarray]:
    """Points on the g-geodesic edge p->q at fractions of arclength (vectorized)."""
    t = MobiusMap.translation_to_origin(p)
    q1 = apply_mobius(t, q)
    d = q1.rho
    fr = np.asarray(fracs, dtype=float)
    ti = t.inverse()
    return apply_mobius_polar(ti.a, ti.b, np.full_like(fr, q1.theta), fr * d)


def project_polar(geo: HyperbolicGeodesic, theta, rho):
    """Foot parameter and signed offset of points w.r.t. the geodesic (vectorized).

    Positive offsets lie left of the orientation.  Uses the aligned frame:
    tanh t = tanh(rho*) cos(theta*), sinh n = sinh(rho*) sin(theta*).
    """
    th_a, rho_a = apply_mobius_polar(geo._to_aligned.a, geo._to_aligned.b, theta, rho)
    n = np.arcsinh(np.sinh(rho_a) * np.sin(th_a))
    c = np.tanh(rho_a) * np.cos(th_a)
    t = np.arctanh(np.clip(c, -1.0 + 1e-16, 1.0 - 1e-16))
    return t, n


def project_to_geodesic(p: DiscPoint, geo: HyperbolicGeodesic) -> tuple[float, float]:
    """Parameter of the nearest geodesic point and the orthogonal distance to it."""
    t, n = project_polar(geo, p.theta, p.rho)
    return float(t), float(abs(n))


def fermi_polar(geo: HyperbolicGeodesic, t, n):
    """Global polar coordinates of Fermi points (t, n) along the geodesic.

    In the aligned frame: cosh rho = cosh t cosh n, sin th = sinh n / sinh rho,
    cos th = sinh t cosh n / sinh rho (a unit-speed orthogonal fibration).
    """
    t = np.asarray(t, dtype=float)
    n = np.asarray(n, dtype=float)
    ch = np.cosh(t) * np.cosh(n)
    rho = np.arccosh(np.maximum(ch, 1.0))
    sr = np.sinh(rho)
    safe = np.where(sr > 0, sr, 1.0)
    s = np.where(sr > 0, np.sinh(n) / safe, 0.0)
    c = np.where(sr > 0, np.sinh(t) * np.cosh(n) / safe, 1.0)
    th_a = np.arctan2(s, c)
    return geo.from_aligned_polar(th_a, rho)
