"""Asymptotic directions, Morse deviations, bounding geodesics, horofunctions
and width functionals.

Horofunctions are computed from their defining limit

    u(x) = lim_n  d_F(o, x_n) - d_F(x, x_n),        x_n -> xi,

with all distances realized by the geodesic engine; convergence is tracked
as the sup-change between successive stages on the sampled window.  Width
estimates replace the liminf over an infinite tail by the minimum over a
finite terminal window, reported per truncation radius so trends (not limit
values) are the assertable quantity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CloughTocher2DInterpolator

from .engine import (
    PolylinePath,
    RayApproximation,
    forward_ray,
    minimal_geodesic,
    minimize_segment,
    path_point_distance,
)
from .hyperbolic import (
    BoundaryPoint,
    DiscPoint,
    HyperbolicGeodesic,
    MobiusMap,
    ORIGIN,
    apply_mobius,
    apply_mobius_boundary,
    angle_gap,
    dist_g,
    dist_polar,
    geodesic_through,
    geodesic_through_points,
    point_toward,
    project_polar,
    wrap_angle,
)
from .metrics import FinslerMetric


class AnalysisError(RuntimeError):
    pass


class GridCoverageError(AnalysisError):
    """Pushforward preimages fall outside the sampled grid."""


class StripClassifyError(AnalysisError):
    pass


# ---------------------------------------------------------------------------
# Morse deviation


@dataclass
class DeviationReport:
    """Sup of d_g(reference geodesic, path) over the path vertices."""

    metric_id: str
    max_deviation: float
    argmax_param: float
    reference: HyperbolicGeodesic

    def record_lines(self):
        return [
            ("metric", self.metric_id),
            ("max_deviation", self.max_deviation),
            ("argmax_param", self.argmax_param),
        ]


def morse_deviation(path: PolylinePath) -> DeviationReport:
    """Deviation of a converged path from the g-geodesic joining its endpoints."""
    ref = geodesic_through_points(path.start, path.end)
    _, n = project_polar(ref, path.theta, path.rho)
    k = int(np.argmax(np.abs(n)))
    return DeviationReport(
        metric_id=path.metric_id,
        max_deviation=float(np.abs(n[k])),
        argmax_param=float(path.cum_F[k]),
        reference=ref,
    )


def asymptotic_direction(ray: RayApproximation) -> tuple[BoundaryPoint, dict]:
    """Direction estimate from the terminal vertex, with the half-R drift."""
    from .hyperbolic import direction_from

    xi_full = direction_from(ray.base, ray.path.end)
    xi_half = direction_from(ray.base, ray.half_path.end)
    drift = float(angle_gap(xi_full.xi, xi_half.xi))
    return xi_full, {"angular_drift": drift, "R": ray.R, "stability_sup": ray.stability_sup}


# ---------------------------------------------------------------------------
# bounding geodesics


@dataclass
class BoundingReport:
    """Left/right limits of minimizers for one-sided endpoint perturbations."""

    c0: PolylinePath  # right limit
    c1: PolylinePath  # left limit
    gap: float
    geo: HyperbolicGeodesic
    n_values: tuple
    stabilization: dict  # side -> list of sup-changes between successive n
    tgrid: np.ndarray
    offsets0: np.ndarray
    offsets1: np.ndarray


def _perturbed_geodesic(geo: HyperbolicGeodesic, d: float, side: str) -> HyperbolicGeodesic:
    """Endpoints rotated by d into the left (or right) boundary arc."""
    s = 1.0 if side == "left" else -1.0
    return geodesic_through(
        BoundaryPoint(geo.xi_minus.xi - s * d),
        BoundaryPoint(geo.xi_plus.xi + s * d),
    )


def bounding_geodesics(
    F: FinslerMetric,
    geo: HyperbolicGeodesic,
    R: float,
    delta: float,
    N: int = 256,
    n_values: tuple = (1, 2, 4, 8),
    window: float | None = None,
    stab_tol: float = 1e-3,
):
    """Bounding minimal geodesics of the strip over geo, and their middle gap.

    Minimizers for endpoint pairs rotated by delta/n off geo's endpoints
    (disjoint closures) are computed for increasing n on each side; their
    transverse offset profiles over the middle window converge linearly in
    delta/n, so the returned paths are the Richardson limits of the last two
    stages.  gap realizes the w0 estimate as the minimal distance between
    the two limit paths over the window.
    """
    if not (0.0 < delta <= 0.5):
        raise AnalysisError("delta must lie in (0, 0.5]")
    W = window if window is not None else 0.5 * R
    tgrid = np.linspace(-W, W, max(64, N // 2) + 1)
    profiles = {"left": [], "right": []}
    stab = {"left": [], "right": []}
    for side in ("left", "right"):
        for n in n_values:
            gp = _perturbed_geodesic(geo, delta / n, side)
            path = minimal_geodesic(F, gp, R, N=N, multistart=False, diagnostics=False)
            t_all, n_all = project_polar(geo, path.theta, path.rho)
            order = np.argsort(t_all)
            prof = np.interp(tgrid, t_all[order], n_all[order])
            if profiles[side]:
                stab[side].append(float(np.max(np.abs(prof - profiles[side][-1]))))
            profiles[side].append(prof)

    def extrapolate(side):
        ds = [delta / n for n in n_values]
        v1, v2 = profiles[side][-2], profiles[side][-1]
        d1, d2 = ds[-2], ds[-1]
        return (d1 * v2 - d2 * v1) / (d1 - d2)

    off1 = extrapolate("left")
    off0 = extrapolate("right")
    c1 = _path_from_offsets(F, geo, tgrid, off1)
    c0 = _path_from_offsets(F, geo, tgrid, off0)
    gap = math.inf
    for i in range(len(tgrid)):
        gap = min(gap, path_point_distance(c0, c1.vertex(i)))
    stabilized = all(s[-1] < stab_tol for s in stab.values() if s)
    return BoundingReport(
        c0=c0,
        c1=c1,
        gap=float(max(gap, 0.0)),
        geo=geo,
        n_values=tuple(n_values),
        stabilization={"left": stab["left"], "right": stab["right"], "stabilized": stabilized},
        tgrid=tgrid,
        offsets0=off0,
        offsets1=off1,
    )


def _path_from_offsets(F: FinslerMetric, geo: HyperbolicGeodesic, tgrid, offsets) -> PolylinePath:
    from .engine import PathFlags, _finish_path
    from .hyperbolic import fermi_polar

    th, rho = fermi_polar(geo, tgrid, offsets)
    flags = PathFlags(refined_to=len(tgrid) - 1, converged=True, local_min_certificate=float("nan"))
    return _finish_path(F, th, rho, flags)


# ---------------------------------------------------------------------------
# horofunction fields


@dataclass(frozen=True)
class GridSpec:
    """Polar grid over the disc of hyperbolic radius `radius` at `spacing`."""

    radius: float = 4.0
    spacing: float = 0.25

    def build(self):
        thetas = [0.0]
        rhos = [0.0]
        ring_of = [0]
        n_rings = max(1, int(round(self.radius / self.spacing)))
        for j in range(1, n_rings + 1):
            rho = self.spacing * j
            m = max(6, int(math.ceil(2.0 * math.pi * math.sinh(rho) / self.spacing)))
            for k in range(m):
                thetas.append(2.0 * math.pi * k / m)
                rhos.append(rho)
                ring_of.append(j)
        theta = np.array(thetas)
        rho = np.array(rhos)
        pairs = []
        ring_of = np.array(ring_of)
        start = {j: int(np.argmax(ring_of == j)) for j in range(n_rings + 1)}
        counts = {j: int((ring_of == j).sum()) for j in range(n_rings + 1)}
        for j in range(1, n_rings + 1):
            s, m = start[j], counts[j]
            for k in range(m):
                pairs.append((s + k, s + (k + 1) % m))  # angular neighbor
            # radial neighbor: nearest angle on the inner ring
            si, mi = start[j - 1], counts[j - 1]
            for k in range(m):
                if mi == 1:
                    pairs.append((si, s + k))
                else:
                    kk = int(round(theta[s + k] / (2 * math.pi) * mi)) % mi
                    pairs.append((si + kk, s + k))
        return theta, rho, pairs


@dataclass(frozen=True)
class ApproachSpec:
    """x_n along the g-geodesic from `base` into the target direction."""

    base: DiscPoint = ORIGIN
    radii: tuple = (4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0)

    def points(self, xi: BoundaryPoint) -> list[DiscPoint]:
        return [point_toward(self.base, xi, r) for r in self.radii]

    def describe(self) -> str:
        b = self.base
        return f"geodesic(base=({b.theta:.6f},{b.rho:.6f}), radii={','.join(f'{r:g}' for r in self.radii)})"


@dataclass
class HorofunctionField:
    """Grid-sampled horofunction with normalization u(o) = 0."""

    xi: BoundaryPoint
    origin: DiscPoint
    theta: np.ndarray
    rho: np.ndarray
    values: np.ndarray
    stage_values: dict  # approach radius -> value array
    convergence_series: list
    sequence_spec: str
    metric_id: str
    grid: GridSpec | None
    decreasing: bool
    calibration: dict | None = None

    def origin_index(self) -> int:
        d = dist_polar(self.theta, self.rho, self.origin.theta, self.origin.rho)
        return int(np.argmin(d))

    def chart_points(self) -> np.ndarray:
        return np.tanh(0.5 * self.rho) * np.exp(1j * self.theta)


def _grid_arrays(K) -> tuple[np.ndarray, np.ndarray, GridSpec | None]:
    if isinstance(K, GridSpec):
        th, rho, _ = K.build()
        return th, rho, K
    th, rho = K
    return np.asarray(th, dtype=float), np.asarray(rho, dtype=float), None


def horofunction(
    F: FinslerMetric,
    xi: BoundaryPoint,
    approach: ApproachSpec | None = None,
    K: GridSpec | tuple = GridSpec(),
    origin: DiscPoint = ORIGIN,
    N: int = 128,
    extra_points: tuple = (),
) -> HorofunctionField:
    """Horofunction of direction xi from the defining limit on a sampled grid.

    Grid distances use the engine with multistart disabled (a scalar
    distance does not need the width diagnostic).  The convergence series
    is flagged when it fails to decrease, which is only expected at fixed
    directions.
    """
    approach = approach or ApproachSpec(base=origin)
    theta, rho, gridspec = _grid_arrays(K)
    if np.max(rho) > 8.0 + 1e-9:
        raise AnalysisError("horofunction grid must stay within rho <= 8")
    targets = list(zip(approach.radii, approach.points(xi)))
    return _horofunction_from_targets(
        F, xi, targets, theta, rho, origin, N,
        extra_points=extra_points, spec=approach.describe(), gridspec=gridspec,
    )


def dist_F_engine(F: FinslerMetric, x: DiscPoint, y: DiscPoint, N: int = 128) -> float:
    """Engine distance used by field evaluations: single-start minimization."""
    return minimize_segment(F, x, y, N=N, multistart=False).F_length


def busemann_of_ray(
    F: FinslerMetric,
    ray: RayApproximation,
    K: GridSpec | tuple = GridSpec(),
    N: int = 128,
    calib_count: int = 9,
) -> HorofunctionField:
    """Busemann field of a computed ray: approach points on the ray itself.

    Stores the calibration profile u(c(t)) - u(c(0)) - t along the
    generating ray, which must vanish within engine tolerance.
    """
    total = float(ray.path.cum_F[-1])
    radii = [r for r in (4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0) if r < total - 0.5]
    if len(radii) < 2:
        radii = [0.5 * total, 0.75 * total]
    xs = [ray.path.point_at_flength(r) for r in radii]

    ts = np.linspace(0.0, min(total * 0.5, max(radii) * 0.5), calib_count)
    calib_pts = tuple(ray.path.point_at_flength(float(t)) for t in ts)

    theta, rho, gridspec = _grid_arrays(K)
    field = _horofunction_from_targets(
        F, ray.target_xi, list(zip(radii, xs)), theta, rho, ray.base, N,
        extra_points=calib_pts,
        spec=f"busemann(ray R={ray.R:g})", gridspec=gridspec,
    )
    base_idx = len(field.theta) - len(calib_pts)
    uvals = field.values[base_idx:]
    field.calibration = {
        "t": ts,
        "residual": uvals - uvals[0] - ts,
    }
    return field


def _horofunction_from_targets(F, xi, targets, theta, rho, origin, N, extra_points=(), spec="", gridspec=None):
    if extra_points:
        theta = np.concatenate([theta, [p.theta for p in extra_points]])
        rho = np.concatenate([rho, [p.rho for p in extra_points]])
    d0 = dist_polar(theta, rho, origin.theta, origin.rho)
    io = int(np.argmin(d0))
    if float(d0[io]) > 1e-12:
        theta = np.concatenate([[origin.theta], theta])
        rho = np.concatenate([[origin.rho], rho])
        io = 0
    pts = [DiscPoint(float(t), float(r)) for t, r in zip(theta, rho)]
    stage_values: dict = {}
    prev = None
    series = []
    for r_n, x_n in targets:
        vals = np.array([dist_F_engine(F, p, x_n, N) for p in pts])
        u_n = vals[io] - vals
        stage_values[float(r_n)] = u_n
        if prev is not None:
            series.append(float(np.max(np.abs(u_n - prev))))
        prev = u_n
    decreasing = all(series[i + 1] <= series[i] + 2e-4 for i in range(len(series) - 1))
    return HorofunctionField(
        xi=xi,
        origin=origin,
        theta=theta,
        rho=rho,
        values=prev,
        stage_values=stage_values,
        convergence_series=series,
        sequence_spec=spec,
        metric_id=F.metric_id,
        grid=gridspec,
        decreasing=decreasing,
    )


def pushforward_horofunction(
    tau: MobiusMap, u: HorofunctionField, result_grid: GridSpec | tuple | None = None
) -> HorofunctionField:
    """(tau u)(x) = u(tau^-1 x) - u(tau^-1 o), resampled by C1 interpolation.

    The preimage of the requested grid must be covered by u's grid, else a
    coverage error is raised.  The direction transforms by the boundary
    action.
    """
    if result_grid is None:
        theta, rho = u.theta.copy(), u.rho.copy()
        gridspec = u.grid
    else:
        theta, rho, gridspec = _grid_arrays(result_grid)

    interp = CloughTocher2DInterpolator(
        np.stack([u.chart_points().real, u.chart_points().imag], axis=1), u.values
    )

    inv = tau.inverse()
    from .hyperbolic import apply_mobius_polar

    th_pre, rho_pre = apply_mobius_polar(inv.a, inv.b, theta, rho)
    z_pre = np.tanh(0.5 * rho_pre) * np.exp(1j * th_pre)
    vals_pre = interp(np.stack([z_pre.real, z_pre.imag], axis=1))

    o_pre = apply_mobius(inv, u.origin)
    zo = math.tanh(0.5 * o_pre.rho) * complex(math.cos(o_pre.theta), math.sin(o_pre.theta))
    val_o = float(interp([[zo.real, zo.imag]])[0])
    if np.any(np.isnan(vals_pre)) or math.isnan(val_o):
        raise GridCoverageError("tau^-1(result grid) is not covered by the field's grid")

    vals = vals_pre - val_o
    # interpolation error bound: Lipschitz estimate times grid spacing
    lip = _lipschitz_estimate(u)
    h = u.grid.spacing if u.grid is not None else float("nan")
    out = HorofunctionField(
        xi=apply_mobius_boundary(tau, u.xi),
        origin=u.origin,
        theta=theta,
        rho=rho,
        values=vals,
        stage_values={},
        convergence_series=[],
        sequence_spec=f"pushforward({u.sequence_spec})",
        metric_id=u.metric_id,
        grid=gridspec,
        decreasing=u.decreasing,
    )
    out.calibration = {"interp_error_bound": lip * h * h if not math.isnan(h) else float("nan")}
    # exact renormalization at the origin of the result grid, if present
    io = out.origin_index()
    if float(dist_polar(out.theta[io], out.rho[io], u.origin.theta, u.origin.rho)) < 1e-12:
        out.values = out.values - out.values[io]
    return out


def _lipschitz_estimate(u: HorofunctionField) -> float:
    z = u.chart_points()
    n = len(z)
    if n < 2:
        return 0.0
    idx = np.random.default_rng(0).integers(0, n, size=(min(4000, 4 * n), 2))
    i, j = idx[:, 0], idx[:, 1]
    keep = i != j
    i, j = i[keep], j[keep]
    d = dist_polar(u.theta[i], u.rho[i], u.theta[j], u.rho[j])
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.abs(u.values[i] - u.values[j]) / np.where(d > 1e-9, d, np.inf)
    return float(np.max(r))


def compare_horofunctions(u1: HorofunctionField, u2: HorofunctionField, stage: float | None = None) -> float:
    """Sup-norm difference on the shared grid after matching normalization at o."""
    if len(u1.theta) != len(u2.theta) or np.max(angle_gap(u1.theta, u2.theta)) > 1e-12 or np.max(np.abs(u1.rho - u2.rho)) > 1e-12:
        raise AnalysisError("horofunction fields must share the same grid")
    v1 = u1.stage_values[stage] if stage is not None else u1.values
    v2 = u2.stage_values[stage] if stage is not None else u2.values
    io1, io2 = u1.origin_index(), u2.origin_index()
    return float(np.max(np.abs((v1 - v1[io1]) - (v2 - v2[io2]))))


# ---------------------------------------------------------------------------
# widths


@dataclass
class WidthReport:
    """Finite-R window estimates of the forward width of a direction."""

    xi: BoundaryPoint
    R: float
    window: tuple
    pair_estimates: dict  # (i, j) -> min-over-window distance
    wplus_lower: float
    warned_fixed: bool
    rays: list

    def record_lines(self):
        out = [
            ("xi_turns", self.xi.xi / (2 * math.pi)),
            ("R", self.R),
            ("window_lo", self.window[0]),
            ("window_hi", self.window[1]),
            ("wplus_lower", self.wplus_lower),
            ("warned_fixed", self.warned_fixed),
        ]
        for (i, j), v in sorted(self.pair_estimates.items()):
            out.append((f"pair_{i}_{j}", v))
        return out


def width_wplus(
    F: FinslerMetric,
    xi: BoundaryPoint,
    basepoints: list,
    R: float,
    window: tuple | None = None,
    N: int = 256,
    fixed_check=None,
    rays: list | None = None,
) -> WidthReport:
    """Lower estimate of w_+(xi): max over ray pairs of the windowed min distance.

    For each ordered pair of basepoints, the minimum over the terminal
    window [R/2, R] of the distance from one ray's trace to the other ray's
    points stands in for the liminf.  fixed_check(xi) may flag a fixed
    direction (the periodic regime); the report carries the warning.
    """
    warned = False
    if fixed_check is not None:
        warned = fixed_check(xi) is not None
    window = window or (0.5 * R, R)
    if rays is None:
        rays = [forward_ray(F, b, xi, R, N=N) for b in basepoints]
    est = {}
    for i, ri in enumerate(rays):
        for j, rj in enumerate(rays):
            if i == j:
                continue
            lo, hi = window
            idx = np.flatnonzero((rj.path.cum_F >= lo) & (rj.path.cum_F <= hi))
            if idx.size == 0:
                idx = np.array([len(rj.path.theta) - 1])
            best = math.inf
            for k in idx:
                best = min(best, path_point_distance(ri.path, rj.path.vertex(int(k))))
            est[(i, j)] = float(best)
    return WidthReport(
        xi=xi,
        R=R,
        window=window,
        pair_estimates=est,
        wplus_lower=float(max(est.values())) if est else 0.0,
        warned_fixed=warned,
        rays=rays,
    )


# ---------------------------------------------------------------------------
# strip classification


def strip_classify(
    F: FinslerMetric,
    x: DiscPoint,
    xi: BoundaryPoint,
    candidates: list,
    R: float = 10.0,
    delta: float = 0.25,
    N: int = 128,
    tol: float = 1e-3,
) -> HyperbolicGeodesic:
    """The candidate geodesic whose bounding strip contains x.

    All candidates must end at xi.  Signed-side tests against the bounding
    pair decide membership; no candidate -> not-found error, several ->
    overlap error (bounding strips of distinct geodesics must be disjoint).
    """
    for geo in candidates:
        if angle_gap(geo.xi_plus.xi, xi.xi) > 1e-9:
            raise AnalysisError("all candidates must end at xi")
    hits = []
    reports = []
    for geo in candidates:
        rep = bounding_geodesics(F, geo, R, delta, N=N)
        reports.append(rep)
        t_x, n_x = project_polar(geo, x.theta, x.rho)
        lo = float(np.interp(t_x, rep.tgrid, rep.offsets0))
        hi = float(np.interp(t_x, rep.tgrid, rep.offsets1))
        if lo - tol <= float(n_x) <= hi + tol:
            hits.append(geo)
    if not hits:
        raise StripClassifyError("no candidate strip contains the point")
    if len(hits) > 1:
        raise StripClassifyError("point lies in several candidate strips: bounding data inconsistent")
    return hits[0]
