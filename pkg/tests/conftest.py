"""Shared fixtures: cached ground states and the reference critical circle."""

import pytest

from nlscurve.geometry import CurveSpec, PotentialField, build_curve, sample_potential
from nlscurve.radial import RadialGrid, ground_state
from nlscurve.scalings import (compute_exponents, compute_scalings,
                               critical_circle_radius)


@pytest.fixture(scope="session")
def grid30():
    return RadialGrid(30.0, 3000)


@pytest.fixture(scope="session")
def U23(grid30):
    """Ground state for (n, p) = (2, 3): U = sqrt(2)·sech."""
    return ground_state(2, 3, grid30)


@pytest.fixture(scope="session")
def exps23():
    return compute_exponents(2, 3)


@pytest.fixture(scope="session")
def bump_potential():
    """Radial decreasing potential admitting a critical circle at 1/sqrt(2)."""
    return PotentialField("1/(1+r2)", 2)


def circle_setup(V, R, M, phase_speed, exps):
    curve = build_curve(CurveSpec("circle", n=2, radius=R), M)
    pot = sample_potential(V, curve)
    sf = compute_scalings(curve, pot, phase_speed, exps)
    return curve, pot, sf


@pytest.fixture(scope="session")
def critical_circle(bump_potential, exps23):
    """Critical circle of V = 1/(1+r²) at phase speed 0, with its fields."""
    V = bump_potential

    def builder(R):
        curve = build_curve(CurveSpec("circle", n=2, radius=R), 128)
        return curve, sample_potential(V, curve)

    rstar = critical_circle_radius(builder, (0.4, 1.2), 0.0, exps23)
    curve, pot, sf = circle_setup(V, rstar, 256, 0.0, exps23)
    return {"rstar": rstar, "curve": curve, "pot": pot, "sf": sf, "V": V}
