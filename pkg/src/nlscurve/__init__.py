"""Numerical laboratory for semiclassical NLS waves concentrating on closed curves.

The package builds, piece by piece, the approximate solutions of

    -ε² Δψ + V(x) ψ = |ψ|^{p-1} ψ     on R^n,

that concentrate along a closed curve with a fast-oscillating phase, and
verifies every numerically checkable ingredient: the cross-sectional ground
state, criticality and nondegeneracy of the limit curve, the two-component
model spectrum, the fast-mode resonance layer with its spectral-gap selection
of ε, and the ε-power decay of the ansatz residual.
"""

__version__ = "0.1.0"
