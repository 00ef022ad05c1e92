"""Fast-mode resonance layer: eigenbasis, companions, Λ₀, gap scan."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlscurve.errors import ValidationError
from nlscurve.resonance import (assemble_lambda0, constant_coefficient_nu_oracle,
                                correction_identities, fourier_diff_matrices,
                                gap_scan, gap_scan_oracle, lambda0_spectrum,
                                q_integrals, resonance_eigenpairs, sharp_norm,
                                verify_coupled_system, weyl_slope)
from nlscurve.spectrum import alpha_field

from conftest import circle_setup
from oracles import constant_coefficient_gap_oracle


@pytest.fixture(scope="module")
def layer0(U23, bump_potential, exps23):
    """Resonance inputs on the critical circle at phase speed 0."""
    curve, pot, sf = circle_setup(bump_potential, 2 ** -0.5, 256, 0.0, exps23)
    abar, modes = alpha_field(sf, U23)
    Q = q_integrals(modes, 1)
    return {"curve": curve, "sf": sf, "abar": abar, "Q": Q}


@pytest.fixture(scope="module")
def layerA(U23, bump_potential, exps23):
    """Same circle with phase speed 0.05 (nonzero coupling)."""
    curve, pot, sf = circle_setup(bump_potential, 0.701247, 256, 0.05, exps23)
    abar, modes = alpha_field(sf, U23)
    Q = q_integrals(modes, 1)
    return {"curve": curve, "sf": sf, "abar": abar, "Q": Q}


class TestFourierCollocation:
    def test_derivative_matrices(self):
        M, L = 64, 5.0
        D1, D2 = fourier_diff_matrices(M, L)
        s = np.arange(M) * L / M
        f = np.sin(2 * np.pi * 3 * s / L)
        fp = (2 * np.pi * 3 / L) * np.cos(2 * np.pi * 3 * s / L)
        assert np.max(np.abs(D1 @ f - fp)) < 1e-10
        assert np.max(np.abs(D2 @ f + (2 * np.pi * 3 / L) ** 2 * f)) < 1e-9


class TestQIntegrals:
    def test_zero_speed(self, layer0):
        Q = layer0["Q"]
        assert np.max(np.abs(Q.q1 - 1.0)) < 1e-12
        assert np.max(np.abs(Q.q2)) < 1e-12
        assert np.max(np.abs(Q.q3)) < 1e-10

    def test_unit_mass(self, layerA):
        Q = layerA["Q"]
        assert np.max(np.abs(Q.q1 + Q.q2 - 1.0)) < 1e-8

    def test_cauchy_schwarz(self, layerA):
        Q = layerA["Q"]
        assert np.all(np.abs(Q.q3) <= np.sqrt(Q.q1 * Q.q2) + 1e-14)


class TestResonanceBasis:
    def test_constant_coefficient_exact(self, layer0):
        sf, abar, Q = layer0["sf"], layer0["abar"], layer0["Q"]
        basis = resonance_eigenpairs(sf, abar, Q, 0.05, 0.3)
        oracle = constant_coefficient_nu_oracle(sf, abar, Q, 0.05, 0.3)
        assert np.max(np.abs(basis.nu - oracle)) < 1e-8

    def test_companions_at_zero_crossing(self, layer0):
        # at a ν = 0 crossing the companion is exactly -εξ'/(kᾱ)
        sf, abar, Q = layer0["sf"], layer0["abar"], layer0["Q"]
        basis = resonance_eigenpairs(sf, abar, Q, 0.05, 0.3)
        D1, _ = fourier_diff_matrices(sf.s.size, sf.L)
        for a, nu in enumerate(basis.nu):
            expect = -(0.05 / (sf.k * abar)) * (1.0 - Q.q1 * nu
                      / (sf.k**2 * abar**2)) * (D1 @ basis.xi[a])
            assert np.max(np.abs(basis.beta[a] - expect)) < 1e-10

    def test_weight_normalization(self, layerA):
        sf, abar, Q = layerA["sf"], layerA["abar"], layerA["Q"]
        basis = resonance_eigenpairs(sf, abar, Q, 0.05, 0.5)
        ds = sf.L / sf.s.size
        G = (basis.xi * basis.weight_fn) @ basis.xi.T * ds
        assert np.max(np.abs(G - np.eye(basis.nu.size))) < 1e-10

    def test_weyl_slope_stability(self, layerA):
        sf, abar, Q = layerA["sf"], layerA["abar"], layerA["Q"]
        c1 = weyl_slope(resonance_eigenpairs(sf, abar, Q, 0.05, 0.5)) / 0.05
        c2 = weyl_slope(resonance_eigenpairs(sf, abar, Q, 0.025, 0.5)) / 0.025
        assert abs(c1 - c2) / abs(c1) < 0.10
        # constant coefficients: consecutive j step through sin/cos pairs, so
        # the slope is (2π k ᾱ / L)·(weight) per unit j
        expect = 2 * np.pi * sf.k[0] * abar[0] / sf.L
        assert abs(c1 - expect) / expect < 0.10

    def test_window_leaves_grid(self, layer0):
        sf, abar, Q = layer0["sf"], layer0["abar"], layer0["Q"]
        with pytest.raises(ValidationError):
            resonance_eigenpairs(sf, abar, Q, 1e-4, 0.9)


class TestCoupledSystem:
    def test_decoupled_exact(self, layer0):
        sf, abar, Q = layer0["sf"], layer0["abar"], layer0["Q"]
        basis = resonance_eigenpairs(sf, abar, Q, 0.05, 0.3)
        maxres, _ = verify_coupled_system(basis)
        assert maxres < 1e-10

    def test_order_eps_bound(self, layerA):
        sf, abar, Q = layerA["sf"], layerA["abar"], layerA["Q"]
        consts = []
        for eps in (0.05, 0.025):
            basis = resonance_eigenpairs(sf, abar, Q, eps, 0.3)
            maxres, per_j = verify_coupled_system(basis)
            consts.append(maxres / (np.max(basis.nu**2) + eps))
        assert consts[0] < 20.0 and consts[1] < 20.0
        # stability of the reported constant under refinement in eps
        assert 0.2 < consts[0] / consts[1] < 5.0

    def test_grid_refinement_stability(self, U23, bump_potential, exps23):
        vals = []
        for M in (256, 512):
            curve, pot, sf = circle_setup(bump_potential, 0.701247, M, 0.05,
                                          exps23)
            abar, modes = alpha_field(sf, U23)
            Q = q_integrals(modes, 1)
            basis = resonance_eigenpairs(sf, abar, Q, 0.05, 0.3)
            maxres, _ = verify_coupled_system(basis)
            vals.append(maxres)
        assert abs(vals[0] - vals[1]) / vals[0] < 0.1

    def test_correction_identities(self, layerA):
        # both residuals are O(ν_j²); the κ-relation constant carries the
        # 1/Q₂ amplification of the exact-cancellation definition
        sf, abar, Q = layerA["sf"], layerA["abar"], layerA["Q"]
        basis = resonance_eigenpairs(sf, abar, Q, 0.05, 0.5)
        r1, r2 = correction_identities(basis)
        scale = basis.nu**2 + 1e-12
        assert np.all(r1 / scale < 10.0)
        assert np.all(r2 / scale * np.min(Q.q2) < 10.0)
        # the ratio is flat in j: genuinely quadratic in ν, not lower order
        ratios = r2 / scale
        assert np.ptp(ratios) / np.mean(ratios) < 0.05


class TestLambda0:
    def test_diagonal_constant_coefficients(self, layer0):
        sf, abar, Q = layer0["sf"], layer0["abar"], layer0["Q"]
        eps = 0.05
        basis = resonance_eigenpairs(sf, abar, Q, eps, 0.3)
        lam, mass, asym = assemble_lambda0(basis)
        assert asym < 1e-10
        # Fourier closed form: Λ/mass reproduces ν exactly here
        off = lam - np.diag(np.diag(lam))
        assert np.max(np.abs(off)) < 1e-8 * np.max(np.abs(lam))
        vals = lambda0_spectrum(basis)
        assert np.max(np.abs(np.sort(vals) - np.sort(basis.nu))) < 1e-8

    def test_spectrum_matches_nu_with_coupling(self, layerA):
        sf, abar, Q = layerA["sf"], layerA["abar"], layerA["Q"]
        eps = 0.05
        basis = resonance_eigenpairs(sf, abar, Q, eps, 0.5)
        vals = lambda0_spectrum(basis)
        diff = np.max(np.abs(np.sort(vals) - np.sort(basis.nu)))
        bound = np.max(basis.nu**2) + eps
        assert diff < bound

    def test_symmetry(self, layerA):
        basis = resonance_eigenpairs(layerA["sf"], layerA["abar"], layerA["Q"],
                                     0.05, 0.5)
        lam, mass, asym = assemble_lambda0(basis)
        assert np.max(np.abs(lam - lam.T)) < 1e-10
        assert np.max(np.abs(mass - mass.T)) < 1e-10


class TestGapScan:
    def test_matches_arithmetic_oracle(self, layer0):
        sf, abar, Q = layer0["sf"], layer0["abar"], layer0["Q"]
        grid = np.linspace(0.08, 0.02, 100)
        recs = gap_scan(sf, abar, Q, grid, 0.3, 0.1)
        oracle = gap_scan_oracle(sf, abar, Q, grid, 0.3, 0.1)
        assert all(r["admissible"] == o["admissible"]
                   for r, o in zip(recs, oracle))
        # fully independent integer-arithmetic oracle
        flags = constant_coefficient_gap_oracle(
            sf.k[0], abar[0], sf.L, sf.s.size, 1.0, grid, 0.3, 0.1)
        assert all(r["admissible"] == f for r, f in zip(recs, flags))

    def test_threshold_zero_admits_nonresonant(self, layer0):
        sf, abar, Q = layer0["sf"], layer0["abar"], layer0["Q"]
        grid = np.linspace(0.08, 0.02, 40)
        recs = gap_scan(sf, abar, Q, grid, 0.3, 0.0)
        assert all(r["admissible"] for r in recs)

    def test_admissible_fraction(self, layer0):
        sf, abar, Q = layer0["sf"], layer0["abar"], layer0["Q"]
        grid = np.linspace(0.08, 0.02, 100)
        thr = 0.1 * sf.k[0] * abar[0] * (2 * np.pi / sf.L)
        recs = gap_scan(sf, abar, Q, grid, 0.3, thr)
        frac = np.mean([r["admissible"] for r in recs])
        assert frac >= 0.5

    def test_descending_grid_required(self, layer0):
        sf, abar, Q = layer0["sf"], layer0["abar"], layer0["Q"]
        with pytest.raises(ValidationError):
            gap_scan(sf, abar, Q, np.array([0.02, 0.08]), 0.3, 0.1)


class TestSharpNorm:
    def test_unit_vectors(self):
        e0 = np.zeros(7)
        e0[3] = 1.0
        assert sharp_norm(e0) == 1.0
        e2 = np.zeros(7)
        e2[5] = 1.0   # j = +2
        assert sharp_norm(e2) == 3.0

    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=21))
    @settings(max_examples=40, deadline=None)
    def test_dominates_l2(self, coeffs):
        if len(coeffs) % 2 == 0:
            coeffs = coeffs[:-1]
        b = np.array(coeffs)
        assert sharp_norm(b) >= np.linalg.norm(b) - 1e-12

    def test_rejects_even_windows(self):
        with pytest.raises(ValidationError):
            sharp_norm(np.ones(4))
