"""Tests for the Poincare disc layer: distances, geodesics, Mobius maps."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from finslerlab.hyperbolic import (
    ORIGIN,
    R_MAX,
    BoundaryPoint,
    DegenerateGeodesicError,
    DiscError,
    DiscPoint,
    MobiusMap,
    TruncationError,
    angle_gap,
    apply_mobius,
    apply_mobius_boundary,
    conformal_factor,
    direction_from,
    dist_g,
    geodesic_through,
    geodesic_through_points,
    point_toward,
    project_to_geodesic,
)


def random_point(rng, rho_max=8.0):
    return DiscPoint(rng.uniform(0, 2 * math.pi), rng.uniform(0, rho_max))


def random_mobius(rng):
    rot1 = MobiusMap.rotation(rng.uniform(0, 2 * math.pi))
    trans = MobiusMap.axis_translation(rng.uniform(0, 4.0))
    rot2 = MobiusMap.rotation(rng.uniform(0, 2 * math.pi))
    return rot1.compose(trans).compose(rot2)


class TestDiscPoint:
    def test_rejects_negative_rho(self):
        with pytest.raises(DiscError):
            DiscPoint(0.0, -1.0)

    def test_rejects_beyond_truncation(self):
        with pytest.raises(TruncationError):
            DiscPoint(0.0, R_MAX + 1.0)

    def test_round_trip_moderate_radius(self, rng):
        # z carries about e^rho * eps of radial error, so 1e-12 round trips
        # are only available up to rho ~ 10
        for _ in range(50):
            p = random_point(rng, rho_max=10.0)
            q = DiscPoint.from_euclidean(p.z)
            assert abs(q.rho - p.rho) < 1e-12
            assert angle_gap(q.theta, p.theta) * max(p.rho, 1e-6) < 1e-12

    def test_round_trip_degrades_gracefully_at_rim(self):
        p = DiscPoint(1.0, 20.0)
        q = DiscPoint.from_euclidean(p.z)
        assert abs(q.rho - p.rho) < 1e-7

    def test_chart_radius(self):
        p = DiscPoint(0.3, 2.0)
        assert abs(abs(p.z) - math.tanh(1.0)) < 1e-15


class TestDistG:
    def test_identity(self):
        assert dist_g(ORIGIN, ORIGIN) == 0.0

    def test_radial_closed_form_vs_quadrature(self):
        #独立 oracle: numerical line integral of 2|dz|/(1-|z|^2) on the radius
        p = DiscPoint.from_euclidean(0.5 + 0j)
        integral, _ = quad(lambda r: 2.0 / (1.0 - r * r), 0.0, 0.5, epsabs=1e-12)
        assert abs(dist_g(ORIGIN, p) - integral) < 1e-8
        assert abs(dist_g(ORIGIN, p) - math.log(3.0)) < 1e-12

    def test_symmetry(self, rng):
        for _ in range(100):
            p, q = random_point(rng), random_point(rng)
            assert abs(dist_g(p, q) - dist_g(q, p)) < 1e-12

    def test_triangle_inequality(self, rng):
        for _ in range(100):
            p, q, r = (random_point(rng) for _ in range(3))
            assert dist_g(p, r) <= dist_g(p, q) + dist_g(q, r) + 1e-10

    def test_rejects_truncated_points(self):
        p = DiscPoint(0.0, 1.0)
        object.__setattr__(p, "rho", R_MAX + 5)  # forged out-of-range point
        with pytest.raises(TruncationError):
            dist_g(p, ORIGIN)

    def test_stable_near_rim(self):
        # nearby points at large radius: no catastrophic cancellation
        p = DiscPoint(0.0, 25.0)
        q = DiscPoint(0.0, 25.0 + 1e-9)
        assert abs(dist_g(p, q) - 1e-9) < 1e-15


class TestGeodesics:
    def test_real_diameter(self):
        g = geodesic_through(BoundaryPoint(math.pi), BoundaryPoint(0.0))
        assert g.point_at(0.0).rho < 1e-12
        p = g.point_at(1.5)
        assert abs(p.z.real - math.tanh(0.75)) < 1e-12
        assert abs(p.z.imag) < 1e-12

    def test_unit_speed(self, rng):
        g = geodesic_through(BoundaryPoint(2.0), BoundaryPoint(5.5))
        for _ in range(20):
            t, s = rng.uniform(-8, 8, size=2)
            assert abs(dist_g(g.point_at(t), g.point_at(s)) - abs(t - s)) < 1e-9

    def test_degenerate_endpoints_rejected(self):
        with pytest.raises(DegenerateGeodesicError):
            geodesic_through(BoundaryPoint(1.0), BoundaryPoint(1.0 + 1e-12))

    def test_points_lie_on_orthogonal_circle(self, rng):
        g = geodesic_through(BoundaryPoint(0.7), BoundaryPoint(2.9))
        c, r = g.euclidean_circle()
        for t in np.linspace(-6, 6, 25):
            z = g.point_at(float(t)).z
            assert abs(abs(z - c) - r) < 1e-10

    def test_mobius_maps_geodesics_to_geodesics(self, rng):
        g = geodesic_through(BoundaryPoint(0.3), BoundaryPoint(3.6))
        for _ in range(5):
            m = random_mobius(rng)
            image = geodesic_through(
                apply_mobius_boundary(m, g.xi_minus), apply_mobius_boundary(m, g.xi_plus)
            )
            # sampled images of g lie on the image geodesic
            for t in np.linspace(-5, 5, 11):
                q = apply_mobius(m, g.point_at(float(t)))
                _, d = project_to_geodesic(q, image)
                assert d < 1e-9

    def test_endpoint_consistency_via_interior_points(self, rng):
        g = geodesic_through(BoundaryPoint(math.pi), BoundaryPoint(0.0))
        m = random_mobius(rng)
        im_end = apply_mobius_boundary(m, g.xi_plus)
        # direction of the image of a far point approaches the image endpoint
        q = apply_mobius(m, g.point_at(15.0))
        xi_hat = direction_from(apply_mobius(m, g.point_at(0.0)), q)
        assert angle_gap(xi_hat.xi, im_end.xi) < 1e-4


class TestMobius:
    def test_identity(self, rng):
        m = MobiusMap.identity()
        p = random_point(rng)
        assert dist_g(apply_mobius(m, p), p) < 1e-14

    def test_rotation_fixes_origin(self):
        m = MobiusMap.rotation(1.2345)
        assert apply_mobius(m, ORIGIN).rho < 1e-14
        xi = apply_mobius_boundary(m, BoundaryPoint(0.5))
        assert angle_gap(xi.xi, 0.5 + 1.2345) < 1e-12

    def test_normalization_invariant(self, rng):
        m = random_mobius(rng)
        assert abs(abs(m.a) ** 2 - abs(m.b) ** 2 - 1.0) < 1e-10

    def test_isometry(self, rng):
        for _ in range(100):
            m = random_mobius(rng)
            p, q = random_point(rng), random_point(rng)
            assert abs(dist_g(apply_mobius(m, p), apply_mobius(m, q)) - dist_g(p, q)) < 1e-9

    def test_inverse_composition(self, rng):
        for _ in range(20):
            m = random_mobius(rng)
            mi = m.inverse().compose(m)
            p = random_point(rng)
            assert dist_g(apply_mobius(mi, p), p) < 1e-10

    def test_composition_associative(self, rng):
        m1, m2, m3 = (random_mobius(rng) for _ in range(3))
        p = random_point(rng)
        left = apply_mobius(m1.compose(m2).compose(m3), p)
        right = apply_mobius(m1.compose(m2.compose(m3)), p)
        assert dist_g(left, right) < 1e-10

    def test_boundary_action_preserves_cyclic_order(self, rng):
        m = random_mobius(rng)
        angles = np.sort(rng.uniform(0, 2 * math.pi, size=6))
        images = [apply_mobius_boundary(m, BoundaryPoint(float(a))).xi for a in angles]
        diffs = np.diff(np.array(images))
        flips = int((np.mod(diffs, 2 * math.pi) > math.pi).sum())
        # cyclic order preserved: at most one wrap-around in the image list
        assert flips <= 1

    def test_apply_beyond_truncation_radius_rejected(self):
        m = MobiusMap.axis_translation(8.0)
        with pytest.raises(TruncationError):
            apply_mobius(m, DiscPoint(0.0, R_MAX - 2.0))

    def test_stable_radius_via_unit_determinant(self):
        # image radius of a far point is accurate despite |w| -> 1
        m = MobiusMap.axis_translation(3.0)
        p = DiscPoint(0.0, 20.0)
        q = apply_mobius(m, p)
        assert abs(q.rho - 23.0) < 1e-9


class TestProjection:
    def test_point_on_geodesic(self):
        g = geodesic_through(BoundaryPoint(math.pi), BoundaryPoint(0.0))
        t, d = project_to_geodesic(g.point_at(2.3), g)
        assert abs(t - 2.3) < 1e-10
        assert d < 1e-10

    def test_origin_on_diameter(self):
        g = geodesic_through(BoundaryPoint(math.pi), BoundaryPoint(0.0))
        t, d = project_to_geodesic(ORIGIN, g)
        assert abs(t) < 1e-12 and d < 1e-12

    def test_orthogonal_distance_imaginary_axis(self):
        g = geodesic_through(BoundaryPoint(math.pi), BoundaryPoint(0.0))
        p = DiscPoint.from_euclidean(0.3j)
        t, d = project_to_geodesic(p, g)
        assert abs(t) < 1e-12
        assert abs(d - dist_g(ORIGIN, p)) < 1e-12
        assert abs(d - 2.0 * math.atanh(0.3)) < 1e-12

    def test_matches_bruteforce_minimization(self, rng):
        g = geodesic_through(BoundaryPoint(1.1), BoundaryPoint(4.2))
        for _ in range(10):
            p = random_point(rng, rho_max=6.0)
            t, d = project_to_geodesic(p, g)
            ts = np.linspace(t - 2, t + 2, 4001)
            th, rho = g.points_at(ts)
            from finslerlab.hyperbolic import dist_polar

            dd = dist_polar(th, rho, p.theta, p.rho)
            assert d <= float(dd.min()) + 1e-6

    def test_foot_is_golden_section_minimizer(self, rng):
        g = geodesic_through(BoundaryPoint(0.2), BoundaryPoint(2.2))
        p = random_point(rng, rho_max=5.0)
        t, d = project_to_geodesic(p, g)
        # golden-section refine around the reported foot
        lo, hi = t - 0.5, t + 0.5
        gr = (math.sqrt(5) - 1) / 2

        def f(s):
            return dist_g(p, g.point_at(s))

        x1, x2 = hi - gr * (hi - lo), lo + gr * (hi - lo)
        f1, f2 = f(x1), f(x2)
        for _ in range(60):
            if f1 < f2:
                hi, x2, f2 = x2, x1, f1
                x1 = hi - gr * (hi - lo)
                f1 = f(x1)
            else:
                lo, x1, f1 = x1, x2, f2
                x2 = lo + gr * (hi - lo)
                f2 = f(x2)
        assert abs(0.5 * (lo + hi) - t) < 1e-6
        assert abs(f(t) - d) < 1e-10


class TestHelpers:
    def test_point_toward_distance(self, rng):
        p = random_point(rng, rho_max=3.0)
        xi = BoundaryPoint(rng.uniform(0, 2 * math.pi))
        q = point_toward(p, xi, 5.0)
        assert abs(dist_g(p, q) - 5.0) < 1e-10
        assert angle_gap(direction_from(p, q).xi, xi.xi) < 1e-9

    def test_geodesic_through_points_contains_both(self, rng):
        p, q = random_point(rng, 4.0), random_point(rng, 4.0)
        g = geodesic_through_points(p, q)
        for pt in (p, q):
            _, d = project_to_geodesic(pt, g)
            assert d < 1e-10
        tp, _ = project_to_geodesic(p, g)
        tq, _ = project_to_geodesic(q, g)
        assert tp < tq  # oriented from p toward q

    def test_conformal_factor_at_origin(self):
        assert abs(conformal_factor(0.0) - 2.0) < 1e-15
