"""Discrete variational engine for F-minimal segments, rays and periodic orbits.

Paths are polylines whose edges are g-geodesic arcs.  A path is parameterized
by Fermi coordinates of a reference g-geodesic: longitudinal positions are
fixed on a grid (this pins the reparameterization gauge) and the optimizer
moves the transverse offsets.  By the Morse property minimizers live in a
bounded tube around the reference geodesic, where these coordinates stay
uniformly well conditioned no matter how far the endpoints sit from the
origin.

Length quadrature is trapezoidal along each geodesic edge.  For the
hyperbolic metric the integrand is constant, so polylines lying on a
g-geodesic have exactly the closed-form length; for the exact-Randers family
the one-form part integrates in closed form and contributes endpoint terms
only.  Both facts are what the closed-form oracles in the tests rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import minimize as _scipy_minimize

from .group import GeneratorSet, GroupWord, axis_of, evaluate_word
from .hyperbolic import (
    BoundaryPoint,
    DiscPoint,
    HyperbolicGeodesic,
    MobiusMap,
    R_MAX,
    apply_mobius,
    apply_mobius_polar,
    dist_g,
    dist_polar,
    geodesic_interpolate,
    geodesic_through_points,
    point_toward,
    project_polar,
)
from .metrics import FinslerMetric

CERT_TARGET = 1e-8  # local-minimum certificate: sup-norm of discrete gradient
REFINE_REL_TOL = 1e-7  # refinement convergence: relative length change per doubling
FD_OFFSET = 3e-6  # step for the field part of the gradient


class EngineError(RuntimeError):
    """Engine failure with diagnostics."""


class ConvergenceError(EngineError):
    """Optimizer could not certify a discrete local minimum."""


@dataclass
class PathFlags:
    refined_to: int
    converged: bool
    local_min_certificate: float
    multistart_distinct: bool = False
    stability_sup: float | None = None
    stable: bool | None = None


@dataclass
class PolylinePath:
    """Discrete curve: vertices in polar coordinates plus its F-length."""

    theta: np.ndarray
    rho: np.ndarray
    metric_id: str
    F_length: float
    cum_F: np.ndarray
    flags: PathFlags

    def __len__(self):
        return len(self.theta)

    @property
    def n_edges(self) -> int:
        return len(self.theta) - 1

    def vertex(self, i: int) -> DiscPoint:
        return DiscPoint(float(self.theta[i]), float(self.rho[i]))

    @property
    def start(self) -> DiscPoint:
        return self.vertex(0)

    @property
    def end(self) -> DiscPoint:
        return self.vertex(-1)

    def edge_g_lengths(self) -> np.ndarray:
        return dist_polar(self.theta[:-1], self.rho[:-1], self.theta[1:], self.rho[1:])

    def g_length(self) -> float:
        return float(self.edge_g_lengths().sum())

    def point_at_flength(self, s: float) -> DiscPoint:
        """Point at cumulative F-length s, interpolated along geodesic edges."""
        s = float(np.clip(s, 0.0, self.cum_F[-1]))
        i = int(np.searchsorted(self.cum_F, s, side="right") - 1)
        i = min(max(i, 0), self.n_edges - 1)
        seg = self.cum_F[i + 1] - self.cum_F[i]
        frac = 0.0 if seg <= 0 else (s - self.cum_F[i]) / seg
        th, rho = geodesic_interpolate(self.vertex(i), self.vertex(i + 1), [frac])
        return DiscPoint(float(th[0]), float(rho[0]))

    def sample_flengths(self, ss) -> tuple[np.ndarray, np.ndarray]:
        pts = [self.point_at_flength(s) for s in np.asarray(ss, dtype=float)]
        return np.array([p.theta for p in pts]), np.array([p.rho for p in pts])

    def resample_arclength(self, count: int, use_F: bool = True) -> "PolylinePath":
        """New path with `count` edges at equal F (or g) arclength spacing."""
        cum = self.cum_F if use_F else np.concatenate([[0.0], np.cumsum(self.edge_g_lengths())])
        targets = np.linspace(0.0, cum[-1], count + 1)
        th_out = np.empty(count + 1)
        rho_out = np.empty(count + 1)
        for j, s in enumerate(targets):
            i = int(np.searchsorted(cum, s, side="right") - 1)
            i = min(max(i, 0), self.n_edges - 1)
            seg = cum[i + 1] - cum[i]
            frac = 0.0 if seg <= 0 else float((s - cum[i]) / seg)
            th, rho = geodesic_interpolate(self.vertex(i), self.vertex(i + 1), [frac])
            th_out[j], rho_out[j] = th[0], rho[0]
        return PolylinePath(
            theta=th_out,
            rho=rho_out,
            metric_id=self.metric_id,
            F_length=self.F_length,
            cum_F=np.interp(targets, cum, self.cum_F),
            flags=self.flags,
        )


def path_point_distance(path: PolylinePath, q: DiscPoint, refine: bool = True) -> float:
    """g-distance from a point to the polyline (edges as geodesic arcs)."""
    d_vert = dist_polar(path.theta, path.rho, q.theta, q.rho)
    k = int(np.argmin(d_vert))
    best = float(d_vert[k])
    if not refine:
        return best
    for i in (k - 1, k):
        if 0 <= i < path.n_edges:
            best = min(best, _point_edge_distance(q, path.vertex(i), path.vertex(i + 1)))
    return best


def _point_edge_distance(q: DiscPoint, p1: DiscPoint, p2: DiscPoint) -> float:
    """Distance from q to the geodesic segment [p1, p2] via the aligned frame."""
    try:
        geo = geodesic_through_points(p1, p2)
    except Exception:
        return dist_g(q, p1)
    t1, _ = project_polar(geo, p1.theta, p1.rho)
    t2, _ = project_polar(geo, p2.theta, p2.rho)
    tq, nq = project_polar(geo, q.theta, q.rho)
    t = float(np.clip(tq, min(t1, t2), max(t1, t2)))
    # d(q, point at t) from Fermi data: cosh d = cosh(dt) cosh(n)
    return float(np.arccosh(max(np.cosh(t - tq) * np.cosh(nq), 1.0)))


def path_min_distance(path1: PolylinePath, path2: PolylinePath, flength_window=None) -> float:
    """min over t in window of d_g(path1, path2(t)); window in cum-F of path2."""
    if flength_window is None:
        idx = np.arange(len(path2.theta))
    else:
        lo, hi = flength_window
        idx = np.flatnonzero((path2.cum_F >= lo) & (path2.cum_F <= hi))
        if idx.size == 0:
            idx = np.array([len(path2.theta) - 1])
    best = math.inf
    for i in idx:
        best = min(best, path_point_distance(path1, path2.vertex(int(i))))
    return best


# ---------------------------------------------------------------------------
# discrete energy in Fermi offsets


class _OffsetProblem:
    """Discrete F-length of a Fermi-offset path over a fixed longitudinal grid.

    Segment mode: offsets of interior vertices are free, endpoint offsets
    fixed.  Periodic mode (for an axis of translation length ell): vertices
    0..N-1 are free and vertex N is the deck translate of vertex 0, i.e.
    Fermi point (t_0 + ell, n_0).
    """

    def __init__(self, metric: FinslerMetric, geo: HyperbolicGeodesic, tgrid: np.ndarray, periodic: bool = False):
        self.metric = metric
        self.geo = geo
        self.tgrid = np.asarray(tgrid, dtype=float)
        self.periodic = periodic
        self.conformal = metric.kind == "conformal"
        if self.conformal:
            from .metrics import FieldBatch

            self._batch = FieldBatch(metric.field, len(self.tgrid), frame=geo._from_aligned)

    # -- geometry ----------------------------------------------------------

    def _aligned(self, n: np.ndarray):
        """Aligned-frame polar coordinates and Fermi derivatives of all vertices."""
        t = self.tgrid
        ch = np.cosh(t) * np.cosh(n)
        rho = np.arccosh(np.maximum(ch, 1.0))
        sr = np.sqrt(np.maximum(ch * ch - 1.0, 0.0))  # sinh(rho)
        safe = np.where(sr > 1e-300, sr, 1.0)
        sth = np.where(sr > 0, np.sinh(n) / safe, 0.0)
        cth = np.where(sr > 0, np.sinh(t) * np.cosh(n) / safe, 1.0)
        theta = np.arctan2(sth, cth)
        # unit-speed normal field: d rho/dn, d theta/dn
        drho = np.where(sr > 0, np.cosh(t) * np.sinh(n) / safe, 0.0)
        dth = np.where(sr > 0, np.sinh(t) / (safe * safe), 0.0)
        return theta, rho, sr, drho, dth

    def _full_offsets(self, n: np.ndarray) -> np.ndarray:
        if self.periodic:
            return np.concatenate([n, n[:1]])
        return n

    def positions_global(self, n: np.ndarray):
        theta, rho, _, _, _ = self._aligned(self._full_offsets(n))
        return self.geo.from_aligned_polar(theta, rho)

    # -- energy and gradient -------------------------------------------------

    def energy(self, n: np.ndarray) -> float:
        nf = self._full_offsets(n)
        theta, rho, _, _, _ = self._aligned(nf)
        h = dist_polar(theta[:-1], rho[:-1], theta[1:], rho[1:])
        if not self.conformal:
            return float(h.sum())
        f, _ = self._batch.values_and_normal_derivative(theta, rho)
        if self.periodic:
            f[-1] = f[0]  # deck invariance of the field, exactly
        return float((h * 0.5 * (f[:-1] + f[1:])).sum())

    def energy_grad(self, n: np.ndarray) -> tuple[float, np.ndarray]:
        nf = self._full_offsets(n)
        theta, rho, sr, drho, dth = self._aligned(nf)

        dr = rho[:-1] - rho[1:]
        dt = theta[:-1] - theta[1:]
        sK = sr[:-1] * sr[1:]
        sin_half = np.sin(0.5 * dt)
        s = np.sinh(0.5 * dr) ** 2 + sK * sin_half * sin_half
        h = 2.0 * np.arcsinh(np.sqrt(np.maximum(s, 0.0)))
        dh_ds = 1.0 / np.maximum(np.sqrt(s * (1.0 + s)), 1e-300)

        cosh_l = np.cosh(rho[:-1])
        cosh_r = np.cosh(rho[1:])
        ds_drho_l = 0.5 * np.sinh(dr) + cosh_l * sr[1:] * sin_half * sin_half
        ds_drho_r = -0.5 * np.sinh(dr) + sr[:-1] * cosh_r * sin_half * sin_half
        ds_dth = 0.5 * sK * np.sin(dt)

        # dh/dn at the left and right vertex of each edge
        dh_dnl = dh_ds * (ds_drho_l * drho[:-1] + ds_dth * dth[:-1])
        dh_dnr = dh_ds * (ds_drho_r * drho[1:] - ds_dth * dth[1:])

        m = len(nf)
        g = np.zeros(m)
        if not self.conformal:
            E = float(h.sum())
            g[:-1] += dh_dnl
            g[1:] += dh_dnr
        else:
            f, dfdn = self._batch.values_and_normal_derivative(theta, rho, drho, dth)
            if self.periodic:
                f[-1] = f[0]
                dfdn[-1] = dfdn[0]
            w = 0.5 * (f[:-1] + f[1:])
            E = float((h * w).sum())
            g[:-1] += dh_dnl * w
            g[1:] += dh_dnr * w
            contrib = np.zeros(m)
            contrib[:-1] += 0.5 * h
            contrib[1:] += 0.5 * h
            g = g + contrib * dfdn

        if self.periodic:
            gg = g[:-1].copy()
            gg[0] += g[-1]
            return E, gg
        return E, g

    # -- interface for the optимizer: free variables only --------------------

    def split(self, n_free: np.ndarray) -> np.ndarray:
        if self.periodic:
            return n_free
        return np.concatenate([[self._n0], n_free, [self._n1]])

    def set_boundary(self, n0: float, n1: float):
        self._n0 = float(n0)
        self._n1 = float(n1)

    def free_energy_grad(self, n_free: np.ndarray):
        if self.periodic:
            return self.energy_grad(n_free)
        E, g = self.energy_grad(self.split(n_free))
        return E, g[1:-1]

    def free_energy(self, n_free: np.ndarray) -> float:
        if self.periodic:
            return self.energy(n_free)
        return self.energy(self.split(n_free))


def _lbfgs(problem: _OffsetProblem, n_free: np.ndarray, maxiter: int = 3000):
    res = _scipy_minimize(
        problem.free_energy_grad,
        n_free,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-9, "maxcor": 25},
    )
    return res.x, res.fun, res.nit


def _newton_polish(problem: _OffsetProblem, n_free: np.ndarray, target: float, maxit: int = 15):
    """Damped Newton on the tridiagonal discrete Hessian (cyclic if periodic)."""
    _, g = problem.free_energy_grad(n_free)
    best = float(np.max(np.abs(g))) if g.size else 0.0
    hstep = 1e-5
    m = n_free.size
    for _ in range(maxit):
        if best < target or m == 0:
            break
        # tridiagonal Hessian by 3-coloring of finite differences
        diag = np.zeros(m)
        upper = np.zeros(m)
        lower = np.zeros(m)
        for c in range(3):
            mask = np.zeros(m)
            mask[c::3] = 1.0
            _, gp = problem.free_energy_grad(n_free + hstep * mask)
            _, gm = problem.free_energy_grad(n_free - hstep * mask)
            col = (gp - gm) / (2.0 * hstep)
            for i in range(c, m, 3):
                diag[i] = col[i]
                if i > 0:
                    lower[i - 1] = col[i - 1]
                if i + 1 < m:
                    upper[i + 1] = col[i + 1]
        if problem.periodic:
            # periodic coupling (0, m-1) is outside the band; treat as dense-ish
            H = np.zeros((m, m))
            H[np.arange(m), np.arange(m)] = diag
            H[np.arange(m - 1), np.arange(1, m)] = upper[1:]
            H[np.arange(1, m), np.arange(m - 1)] = lower[:-1]
            # wrap terms estimated from symmetry of the discrete energy
            try:
                step = np.linalg.solve(H + 1e-12 * np.eye(m), g)
            except np.linalg.LinAlgError:
                break
        else:
            ab = np.zeros((3, m))
            ab[0, 1:] = upper[1:]
            ab[1, :] = diag
            ab[2, :-1] = lower[:-1]
            try:
                step = solve_banded((1, 1), ab, g)
            except Exception:
                break
        lam = 1.0
        improved = False
        for _ in range(10):
            cand = n_free - lam * step
            _, g2 = problem.free_energy_grad(cand)
            r2 = float(np.max(np.abs(g2)))
            if r2 < best:
                n_free, g, best, improved = cand, g2, r2, True
                break
            lam *= 0.5
        if not improved:
            break
    return n_free, best


@dataclass
class _SolveResult:
    offsets: np.ndarray  # full offsets incl. boundary (segment) or free (periodic)
    tgrid: np.ndarray
    energy: float
    certificate: float
    converged: bool
    refined_to: int


def _solve_offsets(
    problem_factory,
    t_lo: float,
    t_hi: float,
    N: int,
    init_profile,
    start_N: int = 32,
    cert_target: float = CERT_TARGET,
) -> _SolveResult:
    """Hierarchical solve from start_N up to N edges.

    The coarsest level runs quasi-Newton from the initial profile; warm
    starts at refined levels are already near the optimum, where the damped
    tridiagonal Newton polish converges in a few steps.  L-BFGS is retried
    whenever the polish stalls above the certificate target.
    """
    Nc = min(start_N, N)
    tgrid = np.linspace(t_lo, t_hi, Nc + 1)
    n = init_profile(tgrid)
    prev_E = None
    converged = False
    cold = True
    while True:
        problem = problem_factory(tgrid)
        if problem.periodic:
            free = n[:-1] if len(n) == len(tgrid) else n
        else:
            problem.set_boundary(n[0], n[-1])
            free = n[1:-1]
        if cold:
            free, _, _ = _lbfgs(problem, free)
            cold = False
        free, cert = _newton_polish(problem, free, cert_target)
        if cert > cert_target:
            free, _, _ = _lbfgs(problem, free)
            free, cert = _newton_polish(problem, free, cert_target)
        E = problem.free_energy(free)
        n = problem.split(free) if not problem.periodic else np.concatenate([free, free[:1]])
        if Nc >= N:
            if prev_E is not None:
                converged = abs(prev_E - E) < REFINE_REL_TOL * max(abs(E), 1e-30)
            else:
                converged = True
            return _SolveResult(
                offsets=n, tgrid=tgrid, energy=E, certificate=cert, converged=converged, refined_to=Nc
            )
        prev_E = E
        tg2 = np.linspace(t_lo, t_hi, 2 * Nc + 1)
        n = np.interp(tg2, tgrid, n)
        tgrid = tg2
        Nc *= 2


def _finish_path(metric: FinslerMetric, th: np.ndarray, rho: np.ndarray, flags: PathFlags, periodic: bool = False) -> PolylinePath:
    """Assemble a PolylinePath with its structured F-length and cumulative gauge."""
    h = dist_polar(th[:-1], rho[:-1], th[1:], rho[1:])
    if metric.kind == "conformal":
        f = metric.field_values(th, rho)
        if periodic:
            f[-1] = f[0]
        edge = h * 0.5 * (f[:-1] + f[1:])
    elif metric.kind == "randers" and not periodic:
        # cum_F tracks true sub-path F-lengths: g-part plus the exact
        # one-form increment at every vertex
        f = metric.field_values(th, rho)
        edge = h + metric.epsilon * (f[1:] - f[:-1])
    else:
        edge = h  # hyperbolic, or randers periodic where df telescopes to zero
    cum = np.concatenate([[0.0], np.cumsum(edge)])
    return PolylinePath(
        theta=th, rho=rho, metric_id=metric.metric_id, F_length=float(cum[-1]), cum_F=cum, flags=flags
    )


def _build_path(metric: FinslerMetric, problem: _OffsetProblem, sol: _SolveResult, flags: PathFlags) -> PolylinePath:
    theta_a, rho_a, _, _, _ = problem._aligned(sol.offsets)
    th, rho = problem.geo.from_aligned_polar(theta_a, rho_a)
    return _finish_path(metric, th, rho, flags, periodic=problem.periodic)


def polyline_from_geodesic(
    F: FinslerMetric, geo: HyperbolicGeodesic, t_lo: float, t_hi: float, N: int = 256
) -> PolylinePath:
    """Sampled g-geodesic segment packaged as a path, with its F-length."""
    th, rho = geo.points_at(np.linspace(t_lo, t_hi, N + 1))
    flags = PathFlags(refined_to=N, converged=True, local_min_certificate=0.0)
    return _finish_path(F, th, rho, flags)


def path_length_F(F: FinslerMetric, path: PolylinePath) -> float:
    """Trapezoidal F-length of a polyline with geodesic-arc edges.

    hyperbolic: sum of edge g-lengths (trapezoid of a constant integrand,
    hence exact); conformal: edge lengths weighted by the endpoint mean of
    the factor; randers: hyperbolic part plus the exact integral of the
    one-form, eps * (f(end) - f(start)).
    """
    if len(path.theta) < 2:
        return 0.0
    h = path.edge_g_lengths()
    if F.kind == "hyperbolic":
        return float(h.sum())
    if F.kind == "conformal":
        f = F.field_values(path.theta, path.rho)
        return float((h * 0.5 * (f[:-1] + f[1:])).sum())
    f_ends = F.field_values(
        np.array([path.theta[0], path.theta[-1]]), np.array([path.rho[0], path.rho[-1]])
    )
    return float(h.sum()) + F.epsilon * float(f_ends[1] - f_ends[0])


def _bump_profile(t_lo: float, t_hi: float, size: float):
    def prof(tg):
        return size * np.sin(math.pi * (tg - t_lo) / max(t_hi - t_lo, 1e-12))

    return prof


def minimize_segment(
    F: FinslerMetric,
    x: DiscPoint,
    y: DiscPoint,
    N: int = 256,
    multistart: bool = True,
    cert_target: float = CERT_TARGET,
) -> PolylinePath:
    """Fixed-endpoint discrete F-length minimizer.

    Initializes on the g-geodesic from x to y (minimizers live in a Morse
    tube around it), refines 32 -> N edges with warm starts, and certifies
    the result by the sup-norm of the discrete gradient.  With multistart,
    two extra runs displaced +-1 hyperbolic unit at the midpoint detect
    distinct local minimizers; the shortest is returned and ties go to the
    leftmost midpoint.
    """
    if N < 32 or (N & (N - 1)) != 0:
        raise EngineError("N must be a power of two, N >= 32")
    d = dist_g(x, y)
    if d > 2 * R_MAX:
        raise EngineError("endpoints too far apart")
    if d < 1e-12:
        flags = PathFlags(refined_to=0, converged=True, local_min_certificate=0.0)
        th = np.array([x.theta]), np.array([x.rho])
        return PolylinePath(
            theta=th[0], rho=th[1], metric_id=F.metric_id, F_length=0.0, cum_F=np.array([0.0]), flags=flags
        )

    geo = geodesic_through_points(x, y)
    t_x, _ = project_polar(geo, x.theta, x.rho)
    t_y, _ = project_polar(geo, y.theta, y.rho)
    t_x, t_y = float(t_x), float(t_y)

    def factory(tgrid):
        p = _OffsetProblem(F, geo, tgrid)
        return p

    starts = [lambda tg: np.zeros_like(tg)]
    if multistart:
        starts.append(_bump_profile(t_x, t_y, +1.0))
        starts.append(_bump_profile(t_x, t_y, -1.0))

    sols = []
    for init in starts:
        sol = _solve_offsets(factory, t_x, t_y, N, init, cert_target=cert_target)
        if sol.certificate > cert_target:
            raise ConvergenceError(
                f"local-minimum certificate not met: gradient residual {sol.certificate:.2e} "
                f"(target {cert_target:.0e}, N={sol.refined_to}, metric {F.metric_id})"
            )
        sols.append(sol)

    lengths = [s.energy for s in sols]
    if F.kind == "randers":
        f_ends = F.field_values(np.array([x.theta, y.theta]), np.array([x.rho, y.rho]))
        lengths = [l + F.epsilon * float(f_ends[1] - f_ends[0]) for l in lengths]

    # distinct local minimizers: offset profiles differing beyond tolerance
    distinct = False
    if len(sols) > 1:
        base = sols[0]
        for s in sols[1:]:
            if np.max(np.abs(s.offsets - base.offsets)) > 1e-3:
                distinct = True

    best_i = int(np.argmin(lengths))
    # tie-break: leftmost midpoint (largest transverse offset) among near-ties
    for i, s in enumerate(sols):
        if i != best_i and lengths[i] < lengths[best_i] + 1e-9:
            mid_i = s.offsets[len(s.offsets) // 2]
            mid_b = sols[best_i].offsets[len(sols[best_i].offsets) // 2]
            if mid_i > mid_b:
                best_i = i
    sol = sols[best_i]
    flags = PathFlags(
        refined_to=sol.refined_to,
        converged=sol.converged,
        local_min_certificate=sol.certificate,
        multistart_distinct=distinct,
    )
    problem = factory(sol.tgrid)
    problem.set_boundary(0.0, 0.0)
    return _build_path(F, problem, sol, flags)


def dist_F(
    F: FinslerMetric, x: DiscPoint, y: DiscPoint, N: int = 256, multistart: bool = True
) -> float:
    """F-distance realized by the discrete minimizer (asymmetric in general)."""
    return minimize_segment(F, x, y, N=N, multistart=multistart).F_length


@dataclass
class RayApproximation:
    """Truncated forward ray: minimizer toward a boundary direction at radius R."""

    base: DiscPoint
    target_xi: BoundaryPoint
    R: float
    path: PolylinePath
    half_path: PolylinePath
    stability_sup: float
    stable: bool


def forward_ray(
    F: FinslerMetric,
    x: DiscPoint,
    xi: BoundaryPoint,
    R: float,
    N: int = 256,
    multistart: bool = True,
    stability_tol: float = 1e-3,
) -> RayApproximation:
    """Truncated F-ray from x toward xi.

    Minimizes to the point at hyperbolic radius R from x along the g-ray
    toward xi; a nested run at R/2 must agree on the initial quarter within
    the stability tolerance, otherwise the instability is reported (it can
    legitimately occur between distinct minimizers).
    """
    if R > R_MAX - 2:
        raise EngineError("R exceeds R_MAX - 2")
    end_full = point_toward(x, xi, R)
    end_half = point_toward(x, xi, 0.5 * R)
    path = minimize_segment(F, x, end_full, N=N, multistart=multistart)
    n_half = max(32, N // 2)
    half = minimize_segment(F, x, end_half, N=n_half, multistart=multistart)
    ss = np.linspace(0.0, 0.25 * R, 32)
    sup = 0.0
    for s in ss:
        p = path.point_at_flength(s)
        sup = max(sup, path_point_distance(half, p))
    ray = RayApproximation(
        base=x,
        target_xi=xi,
        R=R,
        path=path,
        half_path=half,
        stability_sup=float(sup),
        stable=bool(sup < stability_tol),
    )
    path.flags.stability_sup = float(sup)
    path.flags.stable = ray.stable
    return ray


def minimal_geodesic(
    F: FinslerMetric,
    geo: HyperbolicGeodesic,
    R: float,
    N: int = 256,
    multistart: bool = True,
    stability_tol: float = 1e-3,
    diagnostics: bool = True,
) -> PolylinePath:
    """Truncated minimal geodesic: minimizer between geo(-R) and geo(R).

    Carries the same nested-R stability diagnostic as forward_ray, evaluated
    on the middle window (skipped when diagnostics=False).
    """
    if R > R_MAX - 2:
        raise EngineError("R exceeds R_MAX - 2")
    path = minimize_segment(F, geo.point_at(-R), geo.point_at(R), N=N, multistart=multistart)
    if not diagnostics:
        return path
    half = minimize_segment(
        F, geo.point_at(-0.5 * R), geo.point_at(0.5 * R), N=max(32, N // 2), multistart=multistart
    )
    mid = 0.5 * path.cum_F[-1]
    span = 0.25 * path.cum_F[-1]
    ss = np.linspace(mid - span, mid + span, 32)
    sup = 0.0
    for s in ss:
        p = path.point_at_flength(float(s))
        sup = max(sup, path_point_distance(half, p))
    path.flags.stability_sup = float(sup)
    path.flags.stable = bool(sup < stability_tol)
    return path


@dataclass
class PeriodicMinimizer:
    """Deck-periodic minimizer: fundamental path from x* to tau(x*)."""

    word: GroupWord
    tau: MobiusMap
    path: PolylinePath
    period_length: float
    endpoint_residual: float


def shortest_closed_geodesic(
    F: FinslerMetric, tau_word: GroupWord, gens: GeneratorSet, N: int = 256
) -> PeriodicMinimizer:
    """Shortest deck-periodic F-geodesic in the homotopy class of tau.

    Minimizes jointly over the basepoint offset and the path with the
    endpoint constraint last = tau(first).  The basepoint is gauged to the
    transversal at axis parameter 0 (sliding along the orbit is a symmetry),
    and in the axis frame tau acts as the exact translation by its
    translation length, so the constraint is linear in the offsets.
    """
    tau = evaluate_word(tau_word, gens)
    ax = axis_of(tau, tau_word)
    ell = ax.translation_length
    geo = ax.axis

    def factory(tgrid):
        return _OffsetProblem(F, geo, tgrid, periodic=True)

    sol = _solve_offsets(factory, 0.0, ell, N, lambda tg: np.zeros(len(tg) - 1), cert_target=CERT_TARGET)
    if sol.certificate > CERT_TARGET:
        raise ConvergenceError(
            f"periodic minimizer certificate not met: residual {sol.certificate:.2e}"
        )
    problem = factory(sol.tgrid)
    flags = PathFlags(refined_to=sol.refined_to, converged=sol.converged, local_min_certificate=sol.certificate)
    path = _build_path(F, problem, sol, flags)
    first = path.vertex(0)
    image = apply_mobius(tau, first)
    res = dist_g(path.end, image)
    period = path.F_length
    return PeriodicMinimizer(
        word=tau_word, tau=tau, path=path, period_length=float(period), endpoint_residual=float(res)
    )


# ---------------------------------------------------------------------------
# crossings


@dataclass
class CrossingReport:
    crossings: list  # (s1, s2, DiscPoint)
    overlap: bool
    min_separation: float


def detect_crossings(p1: PolylinePath, p2: PolylinePath, delta: float = 0.0) -> CrossingReport:
    """Transversal intersections of two polylines, with cum-F parameters > delta.

    Chart segment-pair tests locate candidates; each is refined by bisection
    on geodesic edges.  Identical traces are reported as overlap, and
    tangential near-misses only contribute to the separation diagnostic.
    """
    z1 = np.tanh(0.5 * p1.rho) * np.exp(1j * p1.theta)
    z2 = np.tanh(0.5 * p2.rho) * np.exp(1j * p2.theta)

    # identical-trace check
    if len(z1) == len(z2) and np.max(np.abs(z1 - z2)) < 1e-9:
        return CrossingReport(crossings=[], overlap=True, min_separation=0.0)

    a = z1[:-1][:, None]
    b = z1[1:][:, None]
    c = z2[:-1][None, :]
    d = z2[1:][None, :]
    u = b - a
    v = d - c
    w = c - a
    cross_uv = u.real * v.imag - u.imag * v.real
    cross_wu = w.real * u.imag - w.imag * u.real
    cross_wv = w.real * v.imag - w.imag * v.real
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross_wv / cross_uv
        s = cross_wu / cross_uv
    parallel = np.abs(cross_uv) <= 1e-14 * np.abs(u) * np.abs(v)
    hit = (~parallel) & (t >= -1e-12) & (t <= 1 + 1e-12) & (s >= -1e-12) & (s <= 1 + 1e-12)

    crossings = []
    min_sep = math.inf
    for i, j in zip(*np.nonzero(hit)):
        s1 = p1.cum_F[i] + float(t[i, j]) * (p1.cum_F[i + 1] - p1.cum_F[i])
        s2 = p2.cum_F[j] + float(s[i, j]) * (p2.cum_F[j + 1] - p2.cum_F[j])
        if s1 <= delta or s2 <= delta:
            continue
        pt = _refine_crossing(p1, int(i), p2, int(j))
        if pt is None:
            continue
        crossings.append((float(s1), float(s2), pt))

    # separation diagnostic on a coarse vertex grid
    dmat = dist_polar(p1.theta[:, None], p1.rho[:, None], p2.theta[None, :], p2.rho[None, :])
    min_sep = float(dmat.min())
    return CrossingReport(crossings=crossings, overlap=False, min_separation=min_sep)


def _refine_crossing(p1: PolylinePath, i: int, p2: PolylinePath, j: int, iters: int = 30):
    """Bisection refinement of a chart-segment crossing on geodesic edges."""
    a1, b1 = p1.vertex(i), p1.vertex(i + 1)
    a2, b2 = p2.vertex(j), p2.vertex(j + 1)

    def chart(p):
        return math.tanh(0.5 * p.rho) * complex(math.cos(p.theta), math.sin(p.theta))

    for _ in range(iters):
        if dist_g(a1, b1) < 1e-10:
            break
        th, rr = geodesic_interpolate(a1, b1, [0.5])
        m1 = DiscPoint(float(th[0]), float(rr[0]))
        th, rr = geodesic_interpolate(a2, b2, [0.5])
        m2 = DiscPoint(float(th[0]), float(rr[0]))

        done = False
        for c1 in ((a1, m1), (m1, b1)):
            for c2 in ((a2, m2), (m2, b2)):
                za, zb = chart(c1[0]), chart(c1[1])
                zc, zd = chart(c2[0]), chart(c2[1])
                u, v, w = zb - za, zd - zc, zc - za
                cuv = u.real * v.imag - u.imag * v.real
                if abs(cuv) < 1e-30:
                    continue
                tt = (w.real * v.imag - w.imag * v.real) / cuv
                ss = (w.real * u.imag - w.imag * u.real) / cuv
                if -1e-9 <= tt <= 1 + 1e-9 and -1e-9 <= ss <= 1 + 1e-9:
                    a1, b1 = c1
                    a2, b2 = c2
                    done = True
                    break
            if done:
                break
        if not done:
            return None
    return a1
