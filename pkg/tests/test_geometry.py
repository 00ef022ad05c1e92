"""Curve construction, frames, holonomy, potential sampling, co-area."""

import numpy as np
import pytest
from scipy.integrate import quad

from nlscurve.errors import ValidationError
from nlscurve.geometry import (CurveSpec, PotentialField, build_curve,
                               sample_potential, straight_segment_curve,
                               tube_volume_coarea)


class TestBuildCurve:
    def test_circle_r3(self):
        c = build_curve(CurveSpec("circle", n=3, radius=2.0), 256)
        assert abs(c.L - 4 * np.pi) < 1e-8
        H = c.curvature_vectors()
        assert np.max(np.abs(np.linalg.norm(H, axis=1) - 0.5)) < 1e-6
        assert abs(c.holonomy_angle) < 1e-8

    def test_unit_circle_r2_inward(self):
        c = build_curve(CurveSpec("circle", n=2, radius=1.0), 128)
        assert c.frame.shape == (128, 1, 2)
        # E1 is outward radial, H = -E1
        assert np.dot(c.frame[0, 0], c.positions[0]) > 0
        assert np.max(np.abs(c.curvature[:, 0] + 1.0)) < 1e-8

    def test_ellipse_arclength_quadrature(self):
        c = build_curve(CurveSpec("ellipse", n=2, a=2.0, b=1.0), 256)
        oracle = quad(lambda t: np.hypot(2 * np.sin(t), np.cos(t)),
                      0, 2 * np.pi, epsabs=1e-13, epsrel=1e-13)[0]
        assert abs(c.L - oracle) < 1e-8

    def test_frame_orthonormal_and_tangent(self):
        c = build_curve(CurveSpec("ellipse", n=3, a=2.0, b=1.0), 256)
        for i in (0, 57, 200):
            G = c.frame[i] @ c.frame[i].T
            assert np.max(np.abs(G - np.eye(2))) < 1e-10
            assert np.max(np.abs(c.frame[i] @ c.tangents[i])) < 1e-10

    def test_curvature_orthogonal_to_tangent(self):
        c = build_curve(CurveSpec("ellipse", n=2, a=2.0, b=1.0), 256)
        H = c.curvature_vectors()
        assert np.max(np.abs(np.einsum("ij,ij->i", H, c.tangents))) < 1e-8

    def test_curvature_from_frame_differentiation(self):
        # H^j = -<E_j', T> for a parallel frame: finite differences of the
        # stored frame reproduce the analytic curvature to O(M^-2)
        for M in (256, 512):
            c = build_curve(CurveSpec("circle", n=3, radius=2.0), M)
            ds = c.L / c.M
            dE = (np.roll(c.frame, -1, axis=0)
                  - np.roll(c.frame, 1, axis=0)) / (2 * ds)
            Hj = -np.einsum("ijk,ik->ij", dE, c.tangents)
            err = np.max(np.abs(Hj - c.curvature))
            assert err < 40.0 / M**2

    def test_parallel_transport_discrete(self):
        # zero-holonomy loop: the stored frame is the parallel frame and
        # <E_j', E_l> vanishes to discretization accuracy
        c = build_curve(CurveSpec("ellipse", n=3, a=2.0, b=1.0), 512)
        assert c.holonomy_angle < 1e-10
        ds = c.L / c.M
        dE = (np.roll(c.frame, -1, axis=0) - np.roll(c.frame, 1, axis=0)) / (2 * ds)
        ip = np.einsum("ijk,ilk->ijl", dE, c.frame)
        assert np.max(np.abs(ip[:, 0, 1])) < 100.0 / c.M**2

    def test_frame_seam_closure(self):
        # stored frame continued across the seam (one transport step plus the
        # per-step holonomy increment) returns the node-0 frame exactly
        from scipy.linalg import expm
        from nlscurve.geometry import _transport_rotation
        t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
        pts = np.stack([(2 + 0.5 * np.cos(3 * t)) * np.cos(t),
                        (2 + 0.5 * np.cos(3 * t)) * np.sin(t),
                        0.5 * np.sin(3 * t)], axis=1)
        for spec in (CurveSpec("parametric", n=3, points=pts),
                     CurveSpec("ellipse", n=3, a=2.0, b=1.0)):
            c = build_curve(spec, 256)
            step = expm(-c.holonomy_generator / c.M)
            cont = step @ (c.frame[-1]
                           @ _transport_rotation(c.tangents[-1], c.tangents[0]).T)
            assert np.max(np.abs(cont - c.frame[0])) < 1e-8

    def test_holonomy_distributed_uniformly(self):
        # torsioned loop: the closing rotation is spread at the constant rate
        # holonomy/L, which is exactly the residual <E_1', E_2> of the frame
        t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
        pts = np.stack([(2 + 0.5 * np.cos(3 * t)) * np.cos(t),
                        (2 + 0.5 * np.cos(3 * t)) * np.sin(t),
                        0.5 * np.sin(3 * t)], axis=1)
        c = build_curve(CurveSpec("parametric", n=3, points=pts), 512)
        assert c.holonomy_angle > 0.1
        ds = c.L / c.M
        dE = (np.roll(c.frame, -1, axis=0) - np.roll(c.frame, 1, axis=0)) / (2 * ds)
        rate = np.einsum("ik,ik->i", dE[:, 0, :], c.frame[:, 1, :])
        assert np.max(np.abs(np.abs(rate) - c.holonomy_angle / c.L)) < 0.01

    def test_holonomy_nonzero_and_periodic_frame(self):
        t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
        pts = np.stack([(2 + 0.5 * np.cos(3 * t)) * np.cos(t),
                        (2 + 0.5 * np.cos(3 * t)) * np.sin(t),
                        0.5 * np.sin(3 * t)], axis=1)
        c = build_curve(CurveSpec("parametric", n=3, points=pts), 512)
        assert c.holonomy_angle > 0.1
        # frame periodicity across the seam: compare E(L-ds) continued by one
        # step of transport+closing correction against E(0)
        ds = c.L / c.M
        gap = np.linalg.norm(c.frame[0] - c.frame[-1], axis=1).max()
        assert gap < 10 * ds  # smooth closure, no jump of order holonomy

    def test_self_intersection_rejected(self):
        t = np.linspace(0, 2 * np.pi, 256, endpoint=False)
        pts = np.stack([np.cos(2 * t) * (1 + 0.0 * t), np.sin(t)], axis=1)
        with pytest.raises(ValidationError):
            build_curve(CurveSpec("parametric", n=2, points=pts), 128)

    def test_too_few_samples(self):
        with pytest.raises(ValidationError):
            build_curve(CurveSpec("circle", n=2, radius=1.0), 32)


class TestPotential:
    def test_expression_language_rejects_injection(self):
        for bad in ("__import__('os')", "x1.__class__", "lambda: 1",
                    "open('x')", "x9", "a+b"):
            with pytest.raises(ValidationError):
                PotentialField(bad, 2)

    def test_expression_values(self):
        V = PotentialField("1 + 2*x1 + exp(-r2)", 2)
        pts = np.array([[0.0, 0.0], [1.0, 2.0]])
        expected = np.array([2.0, 3.0 + np.exp(-5.0)])
        assert np.max(np.abs(V(pts) - expected)) < 1e-14

    def test_constant_potential(self):
        c = build_curve(CurveSpec("circle", n=2, radius=1.0), 128)
        pd = sample_potential(PotentialField("1", 2), c)
        assert np.max(np.abs(pd.grad_normal)) < 1e-9
        assert np.max(np.abs(pd.hess_normal)) < 1e-6

    def test_radius_squared_gradient(self):
        # V = |x|² on the unit circle: <∇V, E1> = 2 with E1 outward
        c = build_curve(CurveSpec("circle", n=2, radius=1.0), 128)
        pd = sample_potential(PotentialField("r2", 2), c)
        assert np.max(np.abs(pd.grad_normal[:, 0] - 2.0)) < 1e-6
        assert np.max(np.abs(pd.hess_normal[:, 0, 0] - 2.0)) < 1e-6

    def test_metric_second_derivatives(self):
        # ∂²_11 g11 = 2 H¹H¹ = 2 on the unit circle
        c = build_curve(CurveSpec("circle", n=2, radius=1.0), 128)
        pd = sample_potential(PotentialField("r2", 2), c)
        assert np.max(np.abs(pd.metric_d2g11[:, 0, 0] - 2.0)) < 1e-8

    def test_positivity_enforced(self):
        c = build_curve(CurveSpec("circle", n=2, radius=1.0), 128)
        with pytest.raises(ValidationError):
            sample_potential(PotentialField("r2 - 1", 2), c)

    def test_polynomial_accuracy(self):
        # cubic potential: gradient/Hessian to 1e-6 relative
        c = build_curve(CurveSpec("circle", n=3, radius=1.5), 128)
        V = PotentialField("4 + x1*x2 + x3*x3*x1 + 0.1*x2*x2*x2", 3)
        pd = sample_potential(V, c)
        x = c.positions
        grad_exact = np.stack([x[:, 1] + x[:, 2] ** 2,
                               x[:, 0] + 0.3 * x[:, 1] ** 2,
                               2 * x[:, 2] * x[:, 0]], axis=1)
        gn = np.einsum("ik,ijk->ij", grad_exact, c.frame)
        rel = np.max(np.abs(pd.grad_normal - gn)) / np.max(np.abs(gn))
        assert rel < 1e-6


class TestCoarea:
    def test_tube_volume_circle_r3(self):
        c = build_curve(CurveSpec("circle", n=3, radius=2.0), 256)
        vol = tube_volume_coarea(c, 0.3)
        assert abs(vol - 4 * np.pi * np.pi * 0.09) < 1e-7

    def test_tube_area_circle_r2(self):
        c = build_curve(CurveSpec("circle", n=2, radius=1.0), 256)
        area = tube_volume_coarea(c, 0.25)
        assert abs(area - 2 * np.pi * 0.5) < 1e-7


def test_straight_segment_harness():
    seg = straight_segment_curve(10.0, 64, 2)
    assert seg.L == 10.0 and seg.M == 64
    assert np.all(seg.curvature == 0)
