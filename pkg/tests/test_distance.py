import numpy as np
import pytest

from varilab.distance import (
    closest_point,
    closest_point_batch,
    elliptic_inequality_check,
    lip_graph_bounds,
    projection_jacobian,
    sq_dist_hessian,
)
from varilab.errors import DomainError
from varilab.surfaces import (
    Plane,
    circle_cap,
    holomorphic_surface,
    plane_surface,
    polynomial_surface,
    scherk_surface,
    sphere_cap,
)

CLOSED_FORM_FAMILY = [
    lambda: circle_cap(R=1.0, radius=0.8),
    lambda: circle_cap(R=2.0, radius=0.9, sign=-1.0),
    lambda: sphere_cap(R=3.0, radius=0.9),
    lambda: scherk_surface(c=0.04),
    lambda: holomorphic_surface(c=0.04),
    lambda: polynomial_surface(1, 1, {(2,): [0.03], (3,): [0.01]}),
]


def tube_query(surface, rng, normal_extent=0.25):
    u = rng.uniform(-0.5, 0.5, size=surface.dim_m) * surface.chart_radius
    fr = surface.frame(u)
    off = rng.uniform(-normal_extent, normal_extent, size=surface.codim_n)
    return surface.point(u) + fr.normal @ off


class TestClosestPoint:
    def test_plane(self):
        surf = plane_surface(1, 1)
        res = closest_point(surf, np.array([0.4, 0.7]))
        assert np.allclose(res.foot, [0.4, 0.0], atol=1e-12)
        assert res.dist == pytest.approx(0.7, abs=1e-12)
        assert np.allclose(res.normal_dir, [0.0, 1.0], atol=1e-12)

    def test_circle_axis(self):
        surf = circle_cap(R=1.0, radius=0.8)
        res = closest_point(surf, np.array([0.0, 0.3]))
        assert np.allclose(res.foot, [0.0, 0.0], atol=1e-12)
        assert res.dist == pytest.approx(0.3, abs=1e-12)

    def test_first_order_optimality_and_orthogonality(self):
        rng = np.random.default_rng(0)
        for make in CLOSED_FORM_FAMILY:
            surf = make()
            z = tube_query(surf, rng)
            res = closest_point(surf, z)
            fr = surf.frame(res.foot_chart)
            resid = fr.tangent.T @ (z - res.foot)
            assert np.max(np.abs(resid)) <= 1e-10

    def test_grid_search_oracle(self):
        # brute-force minimization over a fine chart grid as the oracle
        rng = np.random.default_rng(42)
        surf = circle_cap(R=1.5, radius=0.9)
        us = np.linspace(-0.9, 0.9, 240001)[:, None]
        pts = surf.point(us)
        for _ in range(100):
            z = tube_query(surf, rng, normal_extent=0.3)
            res = closest_point(surf, z)
            brute = float(np.min(np.linalg.norm(pts - z, axis=1)))
            assert res.dist == pytest.approx(brute, abs=1e-6)

    def test_grid_search_oracle_2d(self):
        # two-stage brute force; compare squared distances (the grid min
        # overshoots d by O(h^2/d), but d^2 only by O(h^2))
        rng = np.random.default_rng(43)
        surf = sphere_cap(R=3.0, radius=0.9)
        ax = np.linspace(-0.85, 0.85, 701)
        mesh = np.meshgrid(ax, ax, indexing="ij")
        us = np.stack(mesh, axis=-1).reshape(-1, 2)
        pts = surf.point(us)
        for _ in range(5):
            z = tube_query(surf, rng, normal_extent=0.2)
            res = closest_point(surf, z)
            best = us[int(np.argmin(np.linalg.norm(pts - z, axis=1)))]
            loc = np.linspace(-0.005, 0.005, 81)
            lm = np.meshgrid(loc, loc, indexing="ij")
            us_loc = best + np.stack(lm, axis=-1).reshape(-1, 2)
            brute_sq = float(np.min(np.sum((surf.point(us_loc) - z) ** 2, axis=1)))
            assert res.dist**2 == pytest.approx(brute_sq, abs=1e-6)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(1)
        surf = scherk_surface(0.04)
        zs = np.stack([tube_query(surf, rng) for _ in range(20)])
        feet, dist, u, _ = closest_point_batch(surf, zs)
        for i in range(20):
            res = closest_point(surf, zs[i])
            assert np.allclose(res.foot, feet[i], atol=1e-10)


class TestProjectionJacobian:
    def test_plane_block(self):
        surf = plane_surface(2, 1)
        Dp = projection_jacobian(surf, np.array([0.1, -0.2, 0.4]))
        expect = np.diag([1.0, 1.0, 0.0])
        assert np.allclose(Dp, expect, atol=1e-12)

    def test_circle_eigenvalue_both_sides(self):
        surf = circle_cap(R=1.0, radius=0.8)
        # far side: curvature seen from below is -1, so eigenvalue 1/(1+d)
        Dp = projection_jacobian(surf, np.array([0.0, -0.3]))
        tang = np.array([1.0, 0.0])
        assert tang @ Dp @ tang == pytest.approx(1.0 / 1.3, abs=1e-10)
        # center side: eigenvalue 1/(1-d)
        Dp = projection_jacobian(surf, np.array([0.0, 0.3]))
        assert tang @ Dp @ tang == pytest.approx(1.0 / 0.7, abs=1e-10)

    def test_finite_difference_oracle(self):
        rng = np.random.default_rng(3)
        h = 1e-5
        for make in CLOSED_FORM_FAMILY:
            surf = make()
            z = tube_query(surf, rng)
            Dp = projection_jacobian(surf, z)
            d = surf.ambient_dim
            fd = np.zeros((d, d))
            for j in range(d):
                e = np.zeros(d)
                e[j] = h
                fd[:, j] = (closest_point(surf, z + e).foot - closest_point(surf, z - e).foot) / (
                    2 * h
                )
            assert np.max(np.abs(Dp - fd)) <= 1e-5 * max(1.0, np.max(np.abs(Dp)))

    def test_normal_rows_vanish(self):
        rng = np.random.default_rng(4)
        for make in CLOSED_FORM_FAMILY:
            surf = make()
            z = tube_query(surf, rng)
            Dp = projection_jacobian(surf, z)
            res = closest_point(surf, z)
            fr = surf.frame(res.foot_chart)
            assert np.max(np.abs(fr.normal.T @ Dp)) <= 1e-8

    def test_focal_point_rejected(self):
        surf = circle_cap(R=0.5, radius=0.45)
        with pytest.raises(DomainError):
            projection_jacobian(surf, np.array([0.0, 0.5]))


class TestSqDistHessian:
    def test_plane(self):
        surf = plane_surface(1, 1)
        H = sq_dist_hessian(surf, np.array([0.2, 0.5]))
        assert np.allclose(H, np.diag([0.0, 1.0]), atol=1e-12)

    def test_on_surface_limit(self):
        surf = circle_cap(R=1.0, radius=0.8)
        H = sq_dist_hessian(surf, surf.point(np.array([0.2])))
        fr = surf.frame(np.array([0.2]))
        assert np.allclose(H, np.outer(fr.normal[:, 0], fr.normal[:, 0]), atol=1e-9)

    def test_circle_eigenvalues_and_fd_oracle(self):
        surf = circle_cap(R=1.0, radius=0.8)
        for z, kappa in ((np.array([0.0, 0.3]), 1.0), (np.array([0.0, -0.3]), -1.0)):
            H = sq_dist_hessian(surf, z)
            d = 0.3
            expect_t = -d * kappa / (1.0 - kappa * d)
            tang = np.array([1.0, 0.0])
            assert tang @ H @ tang == pytest.approx(expect_t, abs=1e-10)
            # finite-difference oracle fixes the sign convention
            h = 1e-4
            fd = np.zeros((2, 2))
            for i in range(2):
                for j in range(2):
                    ei = np.eye(2)[i] * h
                    ej = np.eye(2)[j] * h
                    f = lambda w: 0.5 * closest_point(surf, w).dist ** 2
                    fd[i, j] = (f(z + ei + ej) - f(z + ei - ej) - f(z - ei + ej) + f(z - ei - ej)) / (
                        4 * h * h
                    )
            assert np.max(np.abs(H - fd)) <= 1e-4

    def test_symmetry_and_gradient_identity(self):
        rng = np.random.default_rng(9)
        for make in CLOSED_FORM_FAMILY:
            surf = make()
            z = tube_query(surf, rng)
            H = sq_dist_hessian(surf, z)
            assert np.max(np.abs(H - H.T)) <= 1e-10
            res = closest_point(surf, z)
            h = 1e-6
            d = surf.ambient_dim
            grad = np.zeros(d)
            for j in range(d):
                e = np.zeros(d)
                e[j] = h
                f = lambda w: 0.5 * closest_point(surf, w).dist ** 2
                grad[j] = (f(z + e) - f(z - e)) / (2 * h)
            assert np.max(np.abs(grad - (z - res.foot))) <= 1e-6

    def test_fd_jacobian_order(self):
        # Dp directional action matches divided differences with order >= 0.9
        surf = circle_cap(R=1.5, radius=0.9)
        z = np.array([0.1, 0.25])
        Dp = projection_jacobian(surf, z)
        v = np.array([1.0, 0.3])
        v /= np.linalg.norm(v)
        hs = np.array([1e-2, 5e-3, 2.5e-3])
        errs = []
        for h in hs:
            fd = (closest_point(surf, z + h * v).foot - closest_point(surf, z).foot) / h
            errs.append(np.linalg.norm(fd - Dp @ v))
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope >= 0.9


class TestEllipticInequality:
    def test_flat_trivial(self):
        surf = plane_surface(1, 1)
        lhs, rhs = elliptic_inequality_check(surf, np.array([0.2, 0.1]), Plane.coordinate(1, 1))
        assert lhs == pytest.approx(0.0, abs=1e-12)
        assert rhs == pytest.approx(0.0, abs=1e-12)

    def test_flat_tilted_line(self):
        surf = plane_surface(1, 1)
        for theta in (0.2, 0.7, 1.3):
            L = Plane.from_span(np.zeros(2), np.array([[np.cos(theta)], [np.sin(theta)]]))
            lhs, rhs = elliptic_inequality_check(surf, np.array([0.3, 0.4]), L)
            assert lhs == pytest.approx(np.sin(theta) ** 2, abs=1e-12)
            assert rhs == pytest.approx(0.5 * np.sin(theta) ** 2, abs=1e-12)
            assert lhs >= rhs - 1e-10

    def test_randomized_audit_minimal_family(self):
        # the inequality is claimed for minimal surfaces; audit on that family
        rng = np.random.default_rng(77)
        family = [
            plane_surface(1, 1),
            plane_surface(2, 1),
            scherk_surface(c=0.035),
            holomorphic_surface(c=0.03),
            holomorphic_surface(c=0.02, power=3),
        ]
        count = 0
        for _ in range(1000):
            surf = family[rng.integers(len(family))]
            z = tube_query(surf, rng, normal_extent=0.2)
            d = surf.ambient_dim
            L = Plane.from_span(np.zeros(d), rng.standard_normal((d, surf.dim_m)))
            lhs, rhs = elliptic_inequality_check(surf, z, L)
            assert lhs >= rhs - 1e-10
            count += 1
        assert count == 1000


class TestLipGraphBounds:
    def test_zero_section(self):
        surf = plane_surface(1, 1)
        fn = lambda us: np.zeros((len(us), 2))
        z = np.array([0.2, 0.4])
        d_graph, proxy = lip_graph_bounds(surf, fn, z)
        assert d_graph == pytest.approx(0.4, abs=1e-6)
        assert proxy == pytest.approx(0.4, abs=1e-12)

    def test_constant_section(self):
        surf = plane_surface(1, 1)
        c = 0.15
        fn = lambda us: np.column_stack([np.zeros(len(us)), np.full(len(us), c)])
        z = np.array([-0.1, 0.4])
        d_graph, proxy = lip_graph_bounds(surf, fn, z)
        assert d_graph == pytest.approx(abs(0.4 - c), abs=1e-6)
        assert proxy == pytest.approx(abs(0.4 - c), abs=1e-12)

    def test_sandwich_random_piecewise_linear(self):
        rng = np.random.default_rng(5)
        surf = plane_surface(1, 1, radius=1.0)
        knots = np.linspace(-1.0, 1.0, 9)
        for _ in range(100):
            vals = np.cumsum(rng.uniform(-0.9, 0.9, size=9) * np.diff(knots, prepend=-1.25))
            vals -= vals.mean()
            fn = lambda us, vals=vals: np.column_stack(
                [np.zeros(len(us)), np.interp(us[:, 0], knots, vals)]
            )
            z = np.array([rng.uniform(-0.25, 0.25), rng.uniform(-0.6, 0.6)])
            d_graph, proxy = lip_graph_bounds(surf, fn, z, sample_radius=1.0)
            assert d_graph <= proxy + 1e-8
            assert proxy <= 3.0 * d_graph + 1e-8

    def test_lipschitz_violation_detected(self):
        surf = plane_surface(1, 1)
        fn = lambda us: np.column_stack([np.zeros(len(us)), 2.0 * us[:, 0]])
        with pytest.raises(DomainError):
            lip_graph_bounds(surf, fn, np.array([0.0, 0.3]))
