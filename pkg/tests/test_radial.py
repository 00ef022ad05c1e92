"""Ground-state and sector-operator tests."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nlscurve.errors import ValidationError
from nlscurve.radial import (RadialGrid, SectorOperator, apply_sector,
                             ground_state, ode_residual, scaled_profile,
                             sector_solve, sector_spectrum, solve_ground_state)

from oracles import ground_state_u0_collocation, poschl_teller_levels


class TestGroundState:
    def test_closed_form_n2_p3(self, U23, grid30):
        # U = sqrt(2) sech(x) solves -U'' + U = U^3 on the line
        r = grid30.nodes
        closed = np.sqrt(2) / np.cosh(r)
        assert abs(U23.values[0] - np.sqrt(2)) < 1e-4
        assert np.max(np.abs(U23.values - closed)) < 5e-5
        # substitution residual of the closed form itself
        assert ode_residual(U23.with_values(closed), 3) < 2e-4

    def test_ode_residual(self, U23):
        assert ode_residual(U23, 3) < 1e-8

    def test_decay_rate(self, U23):
        assert abs(U23.decay_rate - 1.0) < 0.02

    def test_monotone_positive(self, U23, grid30):
        assert np.all(U23.values[:-1] > 0)
        assert np.all(np.diff(U23.values[:-1]) <= 1e-12)

    def test_cross_method_n4_p2(self, grid30):
        # shooting vs collocation as two independent discretizations
        U = ground_state(4, 2, grid30)
        u0_bvp = ground_state_u0_collocation(4, 2)
        assert abs(U.shoot_amplitude - u0_bvp) < 1e-6

    def test_decay_rate_other_dims(self, grid30):
        for n, p in [(3, 3), (4, 2)]:
            U = ground_state(n, p, grid30)
            assert abs(U.decay_rate - 1.0) < 0.02

    def test_p_range_validation(self, grid30):
        with pytest.raises(ValidationError):
            solve_ground_state(5, 7, grid30)   # p >= (n+1)/(n-3) = 3
        with pytest.raises(ValidationError):
            solve_ground_state(2, 1.0, grid30)

    def test_grid_validation(self):
        with pytest.raises(ValidationError):
            RadialGrid(10.0, 3000)
        with pytest.raises(ValidationError):
            RadialGrid(30.0, 500)


class TestScaledProfile:
    def test_identity_scaling(self, U23):
        h, k, ev = scaled_profile(U23, 0.0, 1.0, 3.0)
        assert h == 1.0 and k == 1.0
        x = np.linspace(0, 5, 50)
        assert_allclose(ev(x), U23(x), rtol=0, atol=1e-14)

    def test_direct_arithmetic(self, U23):
        h, k, _ = scaled_profile(U23, 0.0, 4.0, 3.0)
        assert_allclose([h, k], [2.0, 2.0], atol=1e-14)
        h, k, _ = scaled_profile(U23, 1.0, 3.0, 3.0)
        assert_allclose([h, k], [2.0, 2.0], atol=1e-14)

    def test_scaled_equation_residual(self, U23, grid30):
        # -ΔÛ + (f̂²+V̂)Û = Û^p: substitute ĥU(k̂x) into the discrete scaled
        # equation at x = r/k̂ (arguments land exactly on profile nodes)
        h, k, ev = scaled_profile(U23, 1.0, 3.0, 3.0)
        vals = h * U23.values          # = ev(nodes/k) without interpolation
        dx = grid30.dr / k
        lap = (vals[:-2] - 2 * vals[1:-1] + vals[2:]) / dx**2
        res = -lap + 4.0 * vals[1:-1] - vals[1:-1] ** 3
        keep = grid30.nodes[1:-1] < 25.0
        assert np.max(np.abs(res[keep])) < 1e-7

    def test_invalid_potential(self, U23):
        with pytest.raises(ValidationError):
            scaled_profile(U23, 0.0, -1.0, 3.0)


class TestSectorSpectrum:
    def test_poschl_teller_lowest(self, U23):
        # L_r for p=3, n=2 is -d²/dx² + 1 - 6 sech², even sector
        op = SectorOperator("Lr", 0, 0.0, 1, 3.0)
        pairs = sector_spectrum(op, U23, 1)
        expected = 1.0 + poschl_teller_levels(2)[0]
        assert abs(pairs[0][0] - expected) < 1e-3

    def test_kernels(self, U23, grid30):
        r = grid30.nodes
        lam_r, er = sector_spectrum(SectorOperator("Lr", 1, 0.0, 1, 3.0), U23, 1)[0]
        lam_i, ei = sector_spectrum(SectorOperator("Li", 0, 0.0, 1, 3.0), U23, 1)[0]
        assert abs(lam_r) < 1e-4 and abs(lam_i) < 1e-4
        dU = np.abs(U23.derivative(r))
        ov_r = np.trapezoid(er.values * dU, r) / np.sqrt(
            np.trapezoid(er.values**2, r) * np.trapezoid(dU**2, r))
        ov_i = np.trapezoid(ei.values * U23.values, r) / np.sqrt(
            np.trapezoid(ei.values**2, r) * np.trapezoid(U23.values**2, r))
        assert abs(ov_r) > 0.999 and abs(ov_i) > 0.999

    def test_shift_identity(self, U23):
        base = sector_spectrum(SectorOperator("Lr", 0, 0.0, 1, 3.0), U23, 4)
        shifted = sector_spectrum(SectorOperator("Lr", 0, 2.25, 1, 3.0), U23, 4)
        for (l0, _), (l1, _) in zip(base, shifted):
            assert abs((l1 - l0) - 2.25) < 1e-10

    def test_symmetry_and_real(self, U23):
        from nlscurve.radial import sector_matrix
        op = SectorOperator("Li", 1, 0.3, 1, 3.0)
        diag, off, w, idx = sector_matrix(op, U23)
        assert np.all(np.isfinite(diag)) and np.all(np.isfinite(off))
        vals = sector_spectrum(op, U23, 3)
        assert all(np.isreal(v) for v, _ in vals)

    def test_higher_dim_kernels(self, grid30):
        U = ground_state(3, 3, grid30)
        lam_i = sector_spectrum(SectorOperator("Li", 0, 0.0, 2, 3.0), U, 1)[0][0]
        assert abs(lam_i) < 1e-6
        lam_r = sector_spectrum(SectorOperator("Lr", 1, 0.0, 2, 3.0), U, 1)[0][0]
        assert abs(lam_r) < 5e-4


class TestSectorSolve:
    def test_lr_closed_form(self, U23, grid30):
        # L_r(-U/(p-1) - ∇U·y/2) = U in the even sector
        r = grid30.nodes
        sol = sector_solve(SectorOperator("Lr", 0, 0.0, 1, 3.0), U23,
                           U23.with_values(U23.values.copy()))
        target = -U23.values / 2.0 - 0.5 * r * U23.derivative(r)
        assert np.max(np.abs(sol.values - target)) < 5e-5

    def test_li_closed_form(self, U23, grid30):
        # L_i(yU) = -2 ∂U in the odd sector
        r = grid30.nodes
        rhs = U23.with_values(-2.0 * U23.derivative(r))
        sol = sector_solve(SectorOperator("Li", 1, 0.0, 1, 3.0), U23, rhs)
        assert np.max(np.abs(sol.values - r * U23.values)) < 5e-5

    def test_zero_after_projection(self, U23):
        # rhs proportional to the kernel solves to zero
        op = SectorOperator("Li", 0, 0.0, 1, 3.0)
        sol, removed = sector_solve(op, U23, U23, report=True)
        assert removed > 0.999   # rhs was entirely kernel
        assert np.max(np.abs(sol.values)) < 1e-8

    def test_round_trip_gaussian_bumps(self, U23, grid30):
        from nlscurve.radial import sector_kernel
        r = grid30.nodes
        for kind, ell in [("Lr", 0), ("Lr", 1), ("Li", 0), ("Li", 1)]:
            op = SectorOperator(kind, ell, 0.0, 1, 3.0)
            for center in (1.0, 3.0, 6.0):
                bump = np.exp(-((r - center) ** 2))
                if ell >= 1:
                    bump *= r / (1 + r)    # odd-sector radial parts vanish at 0
                rhs = U23.with_values(bump)
                sol, removed = sector_solve(op, U23, rhs, report=True)
                back = apply_sector(op, U23, sol)
                # compare against the projected rhs on the active nodes
                _, kv, w, idx = sector_kernel(op, U23)
                b = rhs.values[idx] * np.sqrt(w)
                if kv.shape[1]:
                    b = b - kv @ (kv.T @ b)
                proj = np.zeros_like(rhs.values)
                proj[idx] = b / np.sqrt(w)
                scale = max(np.max(np.abs(proj)), 1.0)
                assert np.max(np.abs(back.values[idx] - proj[idx])) < 1e-8 * scale
