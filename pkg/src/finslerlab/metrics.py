"""Invariant Finsler metrics on the disc: hyperbolic, conformal, exact-Randers.

The conformal factor is a group-invariant field

    f(z) = 1 + A * sum over orbit points w(o), |w| <= L, of exp(-s d_g(z, w o)^2),

evaluated by first reducing z into the fundamental octagon so the truncation
error is uniform.  The exact-Randers family F = |v|_g + eps * df(v) uses the
differential of the same field; its length functional differs from the
hyperbolic one by endpoint terms only, which is the closed-form oracle the
geodesic engine is tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .group import BallCache, GeneratorSet, batch_reduce
from .hyperbolic import (
    DiscError,
    DiscPoint,
    MobiusMap,
    conformal_factor,
    dist_polar,
)

FD_STEP = 1e-5  # hyperbolic units; balances truncation against roundoff


class MetricError(ValueError):
    """Invalid Finsler-metric input or construction."""


class PositivityError(MetricError):
    """Randers data violates eps * |df|_g < 1."""


class InvariantField:
    """Gamma-invariant sum of Gaussian bumps on orbit points of the origin."""

    def __init__(self, amplitude: float, shape: float, cutoff: int, gens: GeneratorSet, cache: BallCache | None = None):
        if amplitude < 0 or shape <= 0:
            raise MetricError("need amplitude >= 0 and shape > 0")
        self.amplitude = float(amplitude)
        self.shape = float(shape)
        self.cutoff = int(cutoff)
        self.gens = gens
        self.cache = cache or BallCache(gens)
        th, rho = self.cache.orbit_of_origin(self.cutoff)
        # orbit points further than reach + octagon radius never contribute
        # more than ~1e-18 to values inside the fundamental domain
        reach = math.sqrt(42.0 / self.shape)  # exp(-s d^2) < 1e-18 beyond
        keep = rho <= gens.circumradius + reach
        self._orbit_theta = th[keep]
        self._orbit_rho = rho[keep]
        self.orbit_size = int(keep.sum())
        self.tail_bound = self._tail_bound()

    def _tail_bound(self) -> float:
        """Crude truncation bound: word counts 8*7^(l-1), displacement per letter
        estimated from the enumerated ball, Gaussian tail summed explicitly."""
        if self.amplitude == 0:
            return 0.0
        ball = self.cache.ball(self.cutoff)
        per_letter = min(
            (2.0 * np.arctanh(abs(m.b / np.conj(m.a))) / len(w) for w, m in ball if w),
            default=1.0,
        )
        total = 0.0
        for ell in range(self.cutoff + 1, self.cutoff + 40):
            d = max(ell * per_letter - self.gens.circumradius, 0.0)
            total += 8.0 * 7.0 ** (ell - 1) * math.exp(-self.shape * d * d)
        return self.amplitude * total

    def values(self, theta, rho) -> np.ndarray:
        """Field values at polar points (vectorized); reduces to the octagon first."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if self.amplitude == 0.0:
            return np.ones(theta.shape)
        th0, rho0 = batch_reduce(theta, rho, self.gens)
        d = dist_polar(th0[:, None], rho0[:, None], self._orbit_theta[None, :], self._orbit_rho[None, :])
        return 1.0 + self.amplitude * np.exp(-self.shape * d * d).sum(axis=1)

    def value(self, p: DiscPoint) -> float:
        return float(self.values(p.theta, p.rho)[0])

    def value_gradient(self, p: DiscPoint) -> tuple[float, complex]:
        """(value, chart gradient) with central differences of step FD_STEP.

        The step is FD_STEP hyperbolic units, i.e. FD_STEP / lambda(rho) in
        the chart; the returned gradient is in chart coordinates (du(v) =
        gx * Re v + gy * Im v).
        """
        lam = float(conformal_factor(p.rho))
        h = FD_STEP / lam
        z = p.z
        zs = np.array([z + h, z - h, z + 1j * h, z - 1j * h])
        rr = np.abs(zs)
        if np.any(rr >= 1.0):
            raise MetricError("finite-difference stencil leaves the disc")
        ths = np.angle(zs)
        rhs = 2.0 * np.arctanh(rr)
        vals = self.values(ths, rhs)
        gx = (vals[0] - vals[1]) / (2.0 * h)
        gy = (vals[2] - vals[3]) / (2.0 * h)
        return self.value(p), complex(gx, gy)

    def gradient_gnorm(self, p: DiscPoint) -> float:
        """|df|_g at p: dual norm of the differential, |grad_chart| / lambda."""
        _, g = self.value_gradient(p)
        return abs(g) / float(conformal_factor(p.rho))


class FieldBatch:
    """Fast repeated field evaluation along a slowly moving set of points.

    Greedy reduction maps are locally constant along an optimization
    trajectory, so they are cached per point together with the orbit pulled
    back through them; then f and its derivative along a prescribed normal
    field come out of a single distance-matrix pass (law-of-cosines form:
    cosh d = cosh r1 cosh r2 - sinh r1 sinh r2 cos dth).  A cached map is
    revalidated each call and rebuilt when its point drifts out of the
    fundamental copy by more than the margin (the frozen-word value differs
    from the re-reduced one only by the truncation asymmetry, ~1e-13).
    """

    MARGIN = 0.35

    def __init__(self, field: InvariantField, size: int, frame=None):
        self.field = field
        self.size = size
        self.frame = frame  # MobiusMap from the working frame to global, or None
        self._map_a = np.ones(size, dtype=complex)
        self._map_b = np.zeros(size, dtype=complex)
        self._have = np.zeros(size, dtype=bool)
        # Gaussian reach: beyond it a bump contributes < 1e-17, so per-vertex
        # orbit slices are pruned to this radius (plus the drift margin)
        self._reach = math.sqrt(39.0 / field.shape) + 2.0 * self.MARGIN
        self._slots = 0
        self._orb_th = None
        self._orb_rho = None
        self._orb_ch = None
        self._orb_sh = None

    def _ensure_slots(self, k: int):
        if self._slots >= k:
            return
        k = max(k + 16, 2 * self._slots)
        new = []
        for arr, fill in ((self._orb_th, 0.0), (self._orb_rho, 25.0), (self._orb_ch, math.cosh(25.0)), (self._orb_sh, math.sinh(25.0))):
            a = np.full((self.size, k), fill)
            if arr is not None:
                a[:, : self._slots] = arr
            new.append(a)
        self._orb_th, self._orb_rho, self._orb_ch, self._orb_sh = new
        self._slots = k

    def _rebuild(self, idx: np.ndarray, theta: np.ndarray, rho: np.ndarray):
        from .group import batch_reduce
        from .hyperbolic import apply_mobius_polar

        th_w, rho_w = theta[idx], rho[idx]
        if self.frame is not None:
            th_g, rho_g = apply_mobius_polar(self.frame.a, self.frame.b, th_w, rho_w)
        else:
            th_g, rho_g = th_w, rho_w
        _, _, A, B = batch_reduce(th_g, rho_g, self.field.gens, collect_maps=True)
        if self.frame is not None:
            # total map working-frame -> octagon: W_reduce o frame
            fa, fb = self.frame.a, self.frame.b
            A, B = A * fa + B * np.conj(fb), A * fb + B * np.conj(fa)
        self._map_a[idx] = A
        self._map_b[idx] = B
        self._ensure_slots(8)
        # pull the orbit back through each point's inverse map; keep only the
        # points within Gaussian reach of the vertex (pad the rest far away)
        for j, i in enumerate(idx):
            ia, ib = np.conj(A[j]), -B[j]
            th_p, rho_p = apply_mobius_polar(ia, ib, self.field._orbit_theta, self.field._orbit_rho)
            d = dist_polar(float(theta[i]), float(rho[i]), th_p, rho_p)
            keep = d <= self._reach
            k = int(keep.sum())
            self._ensure_slots(k)
            self._orb_th[i, :k] = th_p[keep]
            self._orb_rho[i, :k] = rho_p[keep]
            self._orb_th[i, k:] = 0.0
            self._orb_rho[i, k:] = 25.0
        self._orb_ch[idx] = np.cosh(self._orb_rho[idx])
        self._orb_sh[idx] = np.sinh(self._orb_rho[idx])
        self._have[idx] = True

    def _validate(self, theta: np.ndarray, rho: np.ndarray):
        from .hyperbolic import apply_mobius_polar

        stale = ~self._have
        if np.any(self._have):
            idx = np.flatnonzero(self._have)
            _, rho_red = apply_mobius_polar_arrays(self._map_a[idx], self._map_b[idx], theta[idx], rho[idx])
            out = rho_red > self.field.gens.circumradius + self.MARGIN
            stale[idx[out]] = True
        if np.any(stale):
            self._rebuild(np.flatnonzero(stale), theta, rho)

    def values_and_normal_derivative(self, theta, rho, drho_dn=None, dth_dn=None):
        """f at each point and, if normal data is given, df/dn along it."""
        if self.field.amplitude == 0.0:
            f = np.ones(len(theta))
            return (f, np.zeros(len(theta))) if drho_dn is not None else (f, None)
        self._validate(theta, rho)
        ch1 = np.cosh(rho)[:, None]
        sh1 = np.sinh(rho)[:, None]
        cdth = np.cos(theta[:, None] - self._orb_th)
        x = ch1 * self._orb_ch - sh1 * self._orb_sh * cdth
        x = np.maximum(x, 1.0)
        d = np.arccosh(x)
        w = np.exp(-self.field.shape * d * d)
        f = 1.0 + self.field.amplitude * w.sum(axis=1)
        if drho_dn is None:
            return f, None
        # d(dist)/dn = (dx/dn) / sinh(dist); d/sinh(d) -> 1 at coincidence
        sinh_d = np.sqrt(np.maximum(x * x - 1.0, 0.0))
        ratio = np.where(sinh_d > 1e-12, d / np.where(sinh_d > 1e-12, sinh_d, 1.0), 1.0)
        sdth = np.sin(theta[:, None] - self._orb_th)
        dx_drho = sh1 * self._orb_ch - ch1 * self._orb_sh * cdth
        dx_dth = sh1 * self._orb_sh * sdth
        coeff = -2.0 * self.field.shape * self.field.amplitude * w * ratio
        dfdn = (coeff * (dx_drho * drho_dn[:, None] + dx_dth * dth_dn[:, None])).sum(axis=1)
        return f, dfdn


def apply_mobius_polar_arrays(a_arr, b_arr, theta, rho):
    """apply_mobius_polar with per-point map coefficients."""
    z = np.tanh(0.5 * rho) * np.exp(1j * theta)
    num = a_arr * z + b_arr
    den = np.conj(b_arr) * z + np.conj(a_arr)
    th_out = np.angle(num) - np.angle(den)
    u = 1.0 / np.cosh(0.5 * rho) ** 2
    u_out = u / np.abs(den) ** 2
    absw = np.abs(num) / np.abs(den)
    rho_out = np.where(
        absw < 0.5,
        2.0 * np.arctanh(np.minimum(absw, 0.999999999999)),
        2.0 * np.arcsinh(absw / np.sqrt(np.maximum(u_out, 1e-300))),
    )
    return np.mod(th_out, 2.0 * math.pi), rho_out


def eval_field(fieldobj: InvariantField, p: DiscPoint, tolerance: float | None = None) -> tuple[float, complex]:
    """Value and chart-gradient covector of the invariant field at p."""
    if p.rho > 28.0:
        raise MetricError("field evaluation requires rho <= R_MAX - 2")
    if tolerance is not None and fieldobj.tail_bound > tolerance:
        raise MetricError(
            f"truncation bound {fieldobj.tail_bound:.3e} exceeds requested tolerance {tolerance:.3e}"
        )
    return fieldobj.value_gradient(p)


@dataclass(frozen=True)
class FinslerMetric:
    """Evaluable metric F(x, v); kind is 'hyperbolic', 'conformal' or 'randers'.

    hyperbolic: F = |v|_g
    conformal:  F = f(x) |v|_g
    randers:    F = |v|_g + eps * df_x(v)   (an exact-form perturbation)
    """

    kind: str
    field: InvariantField | None = None
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in ("hyperbolic", "conformal", "randers"):
            raise MetricError(f"unknown metric kind {self.kind!r}")
        if self.kind != "hyperbolic" and self.field is None:
            raise MetricError(f"{self.kind} metric needs a field")
        if self.kind == "randers":
            self._check_positivity()

    def _check_positivity(self):
        rng = np.random.default_rng(7)
        sup = 0.0
        for _ in range(60):
            p = DiscPoint(rng.uniform(0, 2 * math.pi), rng.uniform(0, self.field.gens.circumradius))
            sup = max(sup, self.field.gradient_gnorm(p))
        if self.epsilon * sup >= 1.0:
            raise PositivityError(
                f"eps * sup|df|_g = {self.epsilon * sup:.3f} >= 1: not a positive Finsler metric"
            )

    @property
    def metric_id(self) -> str:
        if self.kind == "hyperbolic":
            return "hyperbolic"
        f = self.field
        tag = f"A={f.amplitude:g},s={f.shape:g},L={f.cutoff}"
        if self.kind == "conformal":
            return f"conformal({tag})"
        return f"randers({tag},eps={self.epsilon:g})"

    def is_exact_randers(self) -> bool:
        return self.kind == "randers"

    def field_values(self, theta, rho) -> np.ndarray:
        if self.field is None:
            return np.ones(np.atleast_1d(np.asarray(theta)).shape)
        return self.field.values(theta, rho)


def hyperbolic_metric() -> FinslerMetric:
    return FinslerMetric("hyperbolic")


def conformal_metric(field: InvariantField) -> FinslerMetric:
    return FinslerMetric("conformal", field=field)


def randers_metric(field: InvariantField, epsilon: float) -> FinslerMetric:
    return FinslerMetric("randers", field=field, epsilon=epsilon)


def eval_metric(F: FinslerMetric, p: DiscPoint, v: complex) -> float:
    """F(p, v) for a chart tangent vector v at p."""
    gn = float(conformal_factor(p.rho)) * abs(v)
    if F.kind == "hyperbolic":
        return gn
    if F.kind == "conformal":
        return F.field.value(p) * gn
    _, grad = F.field.value_gradient(p)
    beta = F.epsilon * (grad.real * v.real + grad.imag * v.imag)
    if abs(v) > 0:
        unit_beta = abs(F.epsilon) * abs(grad) / float(conformal_factor(p.rho))
        if unit_beta >= 1.0:
            raise PositivityError(f"eps*|df|_g = {unit_beta:.3f} >= 1 at evaluation point")
    return gn + beta


@dataclass(frozen=True)
class EquivalenceConstant:
    """Certified-on-a-grid uniform equivalence constant between F and |.|_g."""

    c_F: float
    grid_points: int
    angular_samples: int


def estimate_c_F(F: FinslerMetric, grid_resolution: float = 0.35, angular: int = 24) -> EquivalenceConstant:
    """Sampled equivalence constant: max of F/|v|_g and |v|_g/F on unit vectors.

    Sampling covers the fundamental octagon (invariance makes that enough)
    times an angular grid in the fiber.
    """
    gens = F.field.gens if F.field is not None else None
    r_max = gens.circumradius if gens is not None else 2.5
    pts = [(0.0, 0.0)]
    nr = max(2, int(r_max / grid_resolution))
    for i in range(1, nr + 1):
        rho = r_max * i / nr
        m = max(6, int(2 * math.pi * math.sinh(rho) / grid_resolution))
        for k in range(m):
            pts.append((2 * math.pi * k / m, rho))
    if gens is not None:
        th = np.array([t for t, _ in pts])
        rh = np.array([r for _, r in pts])
        keep = gens.contains_in_domain(th, rh, tol=1e-9)
        pts = [pt for pt, k in zip(pts, keep) if k]

    worst = 1.0
    phis = np.linspace(0.0, 2 * math.pi, angular, endpoint=False)
    for th, rho in pts:
        p = DiscPoint(th, rho)
        lam = float(conformal_factor(rho))
        if F.kind == "hyperbolic":
            continue
        if F.kind == "conformal":
            fval = F.field.value(p)
            worst = max(worst, fval, 1.0 / fval)
            continue
        _, grad = F.field.value_gradient(p)
        for phi in phis:
            v = complex(math.cos(phi), math.sin(phi)) / lam  # unit g-vector
            val = 1.0 + F.epsilon * (grad.real * v.real + grad.imag * v.imag)
            if val <= 0:
                raise PositivityError("sampled F <= 0 on the unit bundle")
            worst = max(worst, val, 1.0 / val)
    return EquivalenceConstant(c_F=float(worst), grid_points=len(pts), angular_samples=angular)


def legendre_grad(F: FinslerMetric, p: DiscPoint, du: complex, angular_tol: float = 1e-10) -> complex:
    """Unit vector maximizing du(v) subject to F(p, v) = 1.

    Golden-section search over the fiber angle after a coarse scan; for the
    hyperbolic metric this returns the normalized g-dual of du.  A second
    separated local maximum within tolerance signals a convexity violation.
    """
    if abs(du) == 0:
        raise MetricError("zero covector has no Legendre dual")

    def pay(phi):
        v = complex(math.cos(phi), math.sin(phi))
        scale = eval_metric(F, p, v)
        return (du.real * v.real + du.imag * v.imag) / scale

    m = 720
    phis = np.linspace(0.0, 2 * math.pi, m, endpoint=False)
    vals = np.array([pay(t) for t in phis])
    k = int(np.argmax(vals))

    # convexity check: any other local max of comparable height, away from k
    sep = m // 8
    for j in range(m):
        if min((j - k) % m, (k - j) % m) <= sep:
            continue
        if vals[j] > vals[(j - 1) % m] and vals[j] > vals[(j + 1) % m]:
            if vals[j] > vals[k] - 1e-9:
                raise MetricError("non-unique Legendre maximizer: fiber convexity violated")

    lo = phis[k] - 2 * math.pi / m
    hi = phis[k] + 2 * math.pi / m
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - gr * (hi - lo)
    x2 = lo + gr * (hi - lo)
    f1, f2 = pay(x1), pay(x2)
    while hi - lo > angular_tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + gr * (hi - lo)
            f2 = pay(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - gr * (hi - lo)
            f1 = pay(x1)
    phi = 0.5 * (lo + hi)
    v = complex(math.cos(phi), math.sin(phi))
    return v / eval_metric(F, p, v)


def unit_ball_boundary(F: FinslerMetric, p: DiscPoint, samples: int = 360) -> np.ndarray:
    """Chart points of {v : F(p, v) = 1} at equally spaced fiber angles."""
    phis = np.linspace(0.0, 2 * math.pi, samples, endpoint=False)
    out = np.empty(samples, dtype=complex)
    for i, phi in enumerate(phis):
        v = complex(math.cos(phi), math.sin(phi))
        out[i] = v / eval_metric(F, p, v)
    return out


def fiber_convexity_defect(F: FinslerMetric, p: DiscPoint, samples: int = 360) -> float:
    """Most negative turn (cross product) along the sampled unit-ball boundary.

    Nonnegative within tolerance iff the sampled fiber ball is convex.
    """
    b = unit_ball_boundary(F, p, samples)
    prev = np.roll(b, 1)
    nxt = np.roll(b, -1)
    e1 = b - prev
    e2 = nxt - b
    cross = e1.real * e2.imag - e1.imag * e2.real
    return float(np.min(cross))
