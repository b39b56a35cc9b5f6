import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PARAB_A, cart_from, cyl_from, paraboloid_pair
from mcflow.errors import DomainError, GeometryError, OverlapViolation, RegridError
from mcflow.grids import (
    CartesianPatch,
    CylindricalPatch,
    OverlapState,
    axial_root,
    check_overlap,
    exchange_boundaries,
    measure_overlap_mismatch,
    perimeter_indices,
    radial_root,
    regrid,
    sample_cartesian,
    sample_cylindrical,
    settle_overlap,
)
from mcflow.initial_data import tail_r, tail_z


class TestPatchTypes:
    def test_cartesian_spacing(self):
        p = CartesianPatch(1.0, np.zeros((11, 21)))
        assert p.dx == pytest.approx(0.1) and p.dy == pytest.approx(0.05)
        assert p.x[0] == -0.5 and p.y[-1] == 0.5

    def test_cartesian_rejects_small_or_nonfinite(self):
        with pytest.raises(ValueError):
            CartesianPatch(1.0, np.zeros((4, 9)))
        z = np.zeros((6, 6))
        z[2, 3] = np.nan
        with pytest.raises(ValueError):
            CartesianPatch(1.0, z)

    def test_cylinder_invariants(self):
        with pytest.raises(ValueError, match="even"):
            CylindricalPatch(0.0, 1.0, np.ones((5, 7)))
        with pytest.raises(ValueError, match="positive"):
            CylindricalPatch(0.0, 1.0, -np.ones((5, 8)))
        with pytest.raises(ValueError):
            CylindricalPatch(1.0, 1.0, np.ones((5, 8)))
        p = CylindricalPatch(0.0, 1.0, np.ones((5, 8)))
        assert p.dz == 0.25 and p.dtheta == pytest.approx(math.pi / 4)

    def test_overlap_state_margin(self):
        with pytest.raises(ValueError):
            OverlapState(margin_fraction=0.5)

    def test_perimeter_indices_unique(self):
        ii, kk = perimeter_indices(7, 9)
        pairs = set(zip(ii.tolist(), kk.tolist()))
        assert len(pairs) == len(ii) == 2 * 7 + 2 * 9 - 4
        assert all(i in (0, 6) or k in (0, 8) for i, k in pairs)


class TestSampleCartesian:
    def test_constant(self):
        p = cart_from(lambda X, Y: 7.0 + 0 * X, 1.0, 11)
        assert sample_cartesian(p, 0.123, -0.31) == 7.0

    def test_bilinear_exact(self):
        p = cart_from(lambda X, Y: 2 * X + 3 * Y, 1.0, 11)
        assert sample_cartesian(p, 0.1, 0.2) == pytest.approx(0.8, abs=1e-14)
        q = cart_from(lambda X, Y: X * Y + X - Y, 1.0, 11)
        assert sample_cartesian(q, 0.137, -0.222) == pytest.approx(0.137 * -0.222 + 0.137 + 0.222, abs=1e-14)

    def test_x_squared_midcell(self):
        p = cart_from(lambda X, Y: X * X, 1.0, 101)
        x = 0.105
        assert abs(sample_cartesian(p, x, 0.0) - x * x) <= 1e-4

    def test_out_of_domain(self):
        p = cart_from(lambda X, Y: X, 1.0, 11)
        with pytest.raises(DomainError, match="outside"):
            sample_cartesian(p, 0.45, 0.0)

    def test_second_order(self):
        # Error measured at cell centres, where bilinear error is h^2/8 |f''| to leading order.
        f = lambda X, Y: np.sin(3 * X) * np.cos(2 * Y)
        errs = []
        for n in (21, 41, 81):
            p = cart_from(f, 1.0, n)
            c = p.x[:-1] + 0.5 * p.dx
            c = c[np.abs(c) < 0.35]
            errs.append(max(abs(sample_cartesian(p, x, y) - f(x, y)) for x in c[::2] for y in c[::3]))
        for a, b in zip(errs, errs[1:]):
            assert 3.5 <= a / b <= 4.5


class TestSampleCylindrical:
    def test_constant(self):
        p = cyl_from(lambda Z, T: 0.3 + 0 * Z, 0.0, 1.0, 11, 16)
        assert sample_cylindrical(p, 0.5, 1.234) == 0.3

    def test_cosine_at_pi(self):
        p = cyl_from(lambda Z, T: 1 + 0.1 * np.cos(T), 0.0, 1.0, 11, 512)
        assert abs(sample_cylindrical(p, 0.5, math.pi) - 0.9) <= 1e-4

    def test_out_of_range(self):
        p = cyl_from(lambda Z, T: 1 + 0 * Z, 0.0, 1.0, 11, 16)
        with pytest.raises(DomainError):
            sample_cylindrical(p, 0.05, 0.0)

    def test_periodicity_exact_wrap(self):
        p = cyl_from(lambda Z, T: 1 + 0.2 * np.sin(T) * Z, 0.0, 1.0, 11, 32)
        for th in (0.3, 1.0, 2.5, 5.9):
            assert sample_cylindrical(p, 0.5, th + 2 * math.pi) == sample_cylindrical(p, 0.5, th)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.1, 0.9), st.floats(-20.0, 20.0), st.integers(-3, 3))
    def test_periodicity_property(self, z, th, m):
        p = cyl_from(lambda Z, T: 1 + 0.2 * np.sin(3 * T) + 0.1 * np.cos(T) * Z, 0.0, 1.0, 11, 32)
        a = sample_cylindrical(p, z, th)
        b = sample_cylindrical(p, z, th + 2 * math.pi * m)
        # theta + 2 pi m is itself rounded, by about |theta| ulps, and the cell weight
        # is snapped to 2**-40; one cell changes r by less than 0.2 here
        tol = 8 * np.finfo(float).eps * (1 + abs(th) + 2 * math.pi * abs(m)) + 0.2 * 2.0**-39
        assert abs(a - b) <= tol

    def test_second_order(self):
        f = lambda Z, T: 1 + 0.2 * np.sin(2 * Z) * np.cos(T) + 0.1 * np.sin(2 * T)
        errs = []
        for nz, nt in ((21, 32), (41, 64), (81, 128)):
            p = cyl_from(f, 0.0, 1.0, nz, nt)
            zc = (p.z[:-1] + 0.5 * p.dz)[1:-1]
            tc = p.theta + 0.5 * p.dtheta
            errs.append(max(abs(sample_cylindrical(p, z, t) - f(z, t)) for z in zc[::2] for t in tc[::2]))
        for a, b in zip(errs, errs[1:]):
            assert 3.5 <= a / b <= 4.5


class TestRoots:
    def test_radial_paraboloid(self):
        p = cart_from(lambda X, Y: X * X + Y * Y, 2.0, 201)
        for th in (0.0, 0.7, math.pi / 4, 2.0, 4.0):
            assert radial_root(p, th, 0.25) == pytest.approx(0.5, rel=2e-4)
        assert radial_root(p, math.pi / 4, 0.01) == pytest.approx(0.1, rel=1e-3)

    def test_radial_root_residual(self):
        p = cart_from(lambda X, Y: X * X + 2 * Y * Y + 0.3 * X, 1.0, 41)
        s = radial_root(p, 1.1, 0.08)
        assert abs(sample_cartesian(p, s * math.cos(1.1), s * math.sin(1.1)) - 0.08) <= 1e-10 * p.L

    def test_radial_root_bowl(self, default_params, default_surface):
        bowl = default_surface.bowl
        r = default_params.r1 / 2
        zt = float(bowl.z_at(r))
        s = radial_root(default_surface.cart, 0.0, zt)
        assert s == pytest.approx(r, rel=0.05)

    def test_radial_no_bracket(self):
        p = cart_from(lambda X, Y: X * X + Y * Y, 1.0, 21)
        with pytest.raises(OverlapViolation):
            radial_root(p, 0.0, 5.0)

    def test_radial_non_monotone(self):
        p = cart_from(lambda X, Y: np.sin(12 * np.hypot(X, Y)) ** 2, 1.0, 81)
        with pytest.raises((GeometryError, OverlapViolation)):
            radial_root(p, 0.0, 2.0)

    def test_axial_cone(self):
        p = cyl_from(lambda Z, T: Z + 0 * T, 0.01, 0.2, 39, 16)
        assert axial_root(p, 0.3, 0.07) == pytest.approx(0.07, abs=1e-12)
        q = cyl_from(lambda Z, T: Z * (1 + 0.1 * np.cos(T)), 0.01, 0.2, 39, 16)
        assert axial_root(q, math.pi / 2, 0.05) == pytest.approx(0.05, abs=1e-12)

    def test_axial_tail_round_trip(self, default_params, default_surface):
        p, zr1 = default_params, default_surface.z_r1
        z0 = 0.8
        cyl = cyl_from(lambda Z, T: tail_r(Z, p, zr1) + 0 * T, 0.1, 1.5, 801, 8)
        assert axial_root(cyl, 2.2, float(tail_r(z0, p, zr1))) == pytest.approx(z0, rel=1e-4)

    def test_axial_no_bracket(self):
        p = cyl_from(lambda Z, T: Z + 0 * T, 0.01, 0.2, 39, 16)
        with pytest.raises(OverlapViolation):
            axial_root(p, 0.0, 1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.08, 0.22), st.floats(0.0, 2 * math.pi))
    def test_ray_round_trip(self, s, th):
        # Forward sample along a ray, invert, compare.
        p = cart_from(lambda X, Y: X * X + Y * Y + 0.2 * X * Y, 0.6, 61)
        zt = sample_cartesian(p, s * math.cos(th), s * math.sin(th))
        assert radial_root(p, th, zt) == pytest.approx(s, rel=1e-8)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.1, 0.9), st.floats(0.0, 2 * math.pi))
    def test_axial_round_trip(self, z, th):
        p = cyl_from(lambda Z, T: 0.2 + Z * (1 + 0.1 * np.cos(2 * T)), 0.0, 1.0, 41, 32)
        rt = sample_cylindrical(p, z, th)
        assert axial_root(p, th, rt) == pytest.approx(z, rel=1e-8)


class TestExchange:
    def test_matches_analytic(self):
        cart, cyl = paraboloid_pair(nx=1281, nz=1281)
        c2, y2 = exchange_boundaries(cart, cyl)
        assert np.max(np.abs(y2.r[0] - math.sqrt(cyl.z_min / PARAB_A))) <= 1e-6
        ii, kk = perimeter_indices(cart.Nx, cart.Ny)
        assert np.max(np.abs(c2.z[ii, kk] - cart.z[ii, kk])) <= 1e-6
        # interior untouched
        assert np.array_equal(c2.z[1:-1, 1:-1], cart.z[1:-1, 1:-1])
        assert np.array_equal(y2.r[1:], cyl.r[1:])

    def test_exchange_error_second_order(self):
        errs = []
        for nx, nz in ((41, 65), (81, 129), (161, 257)):
            cart, cyl = paraboloid_pair(nx=nx, nz=nz)
            c2, y2 = exchange_boundaries(cart, cyl)
            ii, kk = perimeter_indices(cart.Nx, cart.Ny)
            errs.append(max(np.max(np.abs(c2.z[ii, kk] - cart.z[ii, kk])),
                            np.max(np.abs(y2.r[0] - cyl.r[0]))))
        for a, b in zip(errs, errs[1:]):
            assert 3.0 <= a / b <= 5.0

    def test_idempotent(self):
        cart, cyl = paraboloid_pair()
        c1, y1 = exchange_boundaries(cart, cyl)
        c2, y2 = exchange_boundaries(c1, y1)
        assert np.max(np.abs(c2.z - c1.z)) <= 1e-12
        assert np.max(np.abs(y2.r - y1.r)) <= 1e-12

    def test_time_mismatch(self):
        cart, cyl = paraboloid_pair()
        with pytest.raises(ValueError):
            exchange_boundaries(cart.with_values(cart.z, 1.0), cyl)

    def test_uncovered_raises(self):
        cart, cyl = paraboloid_pair(z_min=1.0)
        with pytest.raises(OverlapViolation):
            exchange_boundaries(cart, cyl)

    def test_overlap_condition(self):
        cart, cyl = paraboloid_pair()
        assert check_overlap(cart, cyl) == []
        cart2, cyl2 = paraboloid_pair(z_min=0.005)  # circle radius 0.022 < 0.25 * L/2
        assert any("outside" in s for s in check_overlap(cart2, cyl2))

    def test_mismatch_after_exchange_bounded(self):
        cart, cyl = paraboloid_pair()
        pre = measure_overlap_mismatch(cart, cyl)
        c2, y2 = exchange_boundaries(cart, cyl)
        assert measure_overlap_mismatch(c2, y2) <= 10 * max(pre, cart.dx**2 * 2 * PARAB_A)


class TestMismatch:
    def test_second_order(self):
        vals = [measure_overlap_mismatch(*paraboloid_pair(nx=n, nz=m)) for n, m in ((41, 65), (81, 129))]
        assert 3.0 <= vals[0] / vals[1] <= 5.0

    def test_constant_fields(self):
        # A flat disc z = 0.3 and a cylinder r = 0.1 never disagree on heights
        # where both are defined: probes project to the plane.
        cart = cart_from(lambda X, Y: 0.3 + 0 * X, 0.4, 41)
        cyl = cyl_from(lambda Z, T: 0.1 + 0 * Z, 0.3, 0.3 + 1e-9, 5, 8)
        assert measure_overlap_mismatch(cart, cyl) <= 1e-8

    def test_sensitivity(self):
        cart, cyl = paraboloid_pair()
        base = measure_overlap_mismatch(cart, cyl, 256)
        r = cyl.r.copy()
        r[1:-1] *= 1.01
        bumped = measure_overlap_mismatch(cart, cyl.with_values(r), 256)
        assert bumped > base

    def test_failed_probe_is_inf(self):
        cart, cyl = paraboloid_pair(L=0.1, z_min=0.5)
        assert measure_overlap_mismatch(cart, cyl) == math.inf


class TestRegrid:
    def test_identity(self):
        cart, cyl = paraboloid_pair()
        c2, y2 = regrid(cart, cyl, cart.L, cyl.z_min)
        assert np.max(np.abs(c2.z - cart.z)) <= 1e-12
        assert np.max(np.abs(y2.r - cyl.r)) <= 1e-12
        assert c2.t == cart.t and c2.Nx == cart.Nx and y2.Nz == cyl.Nz

    def test_constants_preserved(self):
        cart = cart_from(lambda X, Y: 0.5 + 0 * X, 0.4, 21)
        cyl = cyl_from(lambda Z, T: 0.2 + 0 * Z, 0.1, 1.0, 31, 8)
        c2, _ = regrid(cart, cyl, 0.9 * cart.L, cyl.z_min)
        assert np.all(c2.z == 0.5)

    def test_shrink_second_order(self):
        errs = []
        for nx, nz in ((41, 65), (81, 129)):
            cart, cyl = paraboloid_pair(nx=nx, nz=nz)
            c2, y2 = regrid(cart, cyl, 0.9 * cart.L, 0.06)
            X, Y = c2.mesh()
            zs = y2.z
            errs.append(max(np.max(np.abs(c2.z - PARAB_A * (X * X + Y * Y))),
                            np.max(np.abs(y2.r - np.sqrt(zs / PARAB_A)[:, None]))))
        assert errs[1] < errs[0] / 3.0

    def test_cylinder_rows_cubic_in_z_exact(self):
        # rows are resampled along z with a cubic spline, which reproduces cubics
        def f(Z, T):
            return 0.3 + 0.05 * (1 + np.cos(2 * T)) * Z**3 - 0.02 * Z * Z

        cart = cart_from(lambda X, Y: 0.5 + 0 * X, 0.4, 21)
        cyl = cyl_from(f, 0.1, 1.0, 31, 8)
        _, y2 = regrid(cart, cyl, cart.L, 0.137)
        Z, T = np.meshgrid(y2.z, y2.theta, indexing="ij")
        assert np.max(np.abs(y2.r - f(Z, T))) <= 1e-14

    def test_lower_z_min_uses_square(self):
        cart, cyl = paraboloid_pair(nx=161)
        _, y2 = regrid(cart, cyl, cart.L, 0.02)
        assert np.max(np.abs(y2.r[0] - math.sqrt(0.02 / PARAB_A))) <= 1e-4

    def test_uncoverable(self):
        cart, cyl = paraboloid_pair()
        with pytest.raises(RegridError):
            regrid(cart, cyl, cart.L, 5.0)
        with pytest.raises(RegridError):
            regrid(cart, cyl, cart.L, -0.1)

    def test_settle_recentres(self):
        cart, cyl = paraboloid_pair(z_min=0.005)
        ov = OverlapState()
        c2, y2, moved = settle_overlap(cart, cyl, ov)
        assert moved and ov.n_regrids == 1
        assert check_overlap(c2, y2, ov) == []
