"""Profile scalings, phase law, criticality, and the second-variation operators.

Along the curve the cross-sectional profile is h(s̄)·U(k(s̄)z) with

    h = ((f')² + V)^{1/(p-1)},     k = ((f')² + V)^{1/2},

and the phase slope obeys the law f' = A·h^σ with σ = (n-1)(p-1)/2 - 2.
Candidate limit curves are critical points of the reduced length functional
∫ h^θ ds̄, θ = p + 1 - (p-1)(n-1)/2, whose extremality condition couples the
normal gradient of V to the curvature vector:

    ∇ᴺV = ((p-1)/θ · h^{p-1} - 2A² h^{2σ}) H.

Nondegeneracy is the invertibility of the second-variation operator on
normal sections (assembled here as a periodic finite-difference matrix,
self-adjoint in the plain L²(ds̄) product, generalized-symmetric against the
h^θ mass), together with the divergence-form phase operator T.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from .errors import ValidationError, ConvergenceError, PhaseLawError
from .radial import check_p


@dataclass(frozen=True)
class Exponents:
    """Scaling exponents σ, θ for given (n, p)."""

    n: int
    p: float
    sigma: float
    theta: float


def compute_exponents(n, p):
    check_p(n, p)
    sigma = (n - 1) * (p - 1) / 2.0 - 2.0
    theta = p + 1.0 - 0.5 * (p - 1) * (n - 1)
    return Exponents(n=n, p=float(p), sigma=sigma, theta=theta)


@dataclass
class ScalingFields:
    """Periodic scaling fields h, k, f' and the phase antiderivative f.

    phase_budget = A·∫ h^σ ds̄ = f(L) - f(0); f1prime is the first phase
    correction (zero unless computed), f1_drift its nonlocal constant.
    """

    phase_speed: float            # the constant A in f' = A h^σ
    exps: Exponents
    s: np.ndarray
    L: float
    h: np.ndarray
    k: np.ndarray
    fprime: np.ndarray
    f: np.ndarray
    phase_budget: float
    f1prime: np.ndarray = None
    f1_drift: float = 0.0

    def consistency_error(self, V):
        """max |k² - (f')² - V| and |h^{p-1} - k²| over the nodes."""
        e1 = np.max(np.abs(self.k**2 - self.fprime**2 - V))
        e2 = np.max(np.abs(self.h ** (self.exps.p - 1) - self.k**2))
        return float(max(e1, e2))


def _solve_h_node(A, sigma, p, V):
    """Root of g(h) = h^{p-1} - A²h^{2σ} - V with h > 0.

    For A = 0 this is exactly V^{1/(p-1)}; otherwise a bracketed Brent solve
    near that value (the small-speed regime keeps the root simple).
    """
    if A == 0.0:
        return V ** (1.0 / (p - 1.0))

    def g(h):
        return h ** (p - 1.0) - A**2 * h ** (2.0 * sigma) - V

    lo = V ** (1.0 / (p - 1.0))
    if g(lo) > 0:  # possible when σ > 0 makes the speed term raise g
        lo_try = lo
        for _ in range(60):
            lo_try *= 0.9
            if g(lo_try) <= 0:
                break
        else:
            raise ConvergenceError("cannot bracket the scaling fixed point from below; "
                                   "try a smaller phase-speed constant")
        return brentq(g, lo_try, lo, xtol=1e-15, rtol=8.9e-16)
    hi = lo
    for _ in range(60):
        hi *= 1.1
        if g(hi) >= 0:
            break
    else:
        raise ConvergenceError("cannot bracket the scaling fixed point; "
                               "try a smaller phase-speed constant")
    return brentq(g, lo, hi, xtol=1e-15, rtol=8.9e-16)


def small_speed_guard(A, h, exps):
    """Reject runs where 2σA²h^{2σ-p+1} ≥ (p-1)/2 anywhere.

    Keeps every denominator of the second-variation and phase-correction
    formulas safely positive.
    """
    lhs = 2.0 * exps.sigma * A**2 * h ** (2 * exps.sigma - exps.p + 1.0)
    if np.any(lhs >= 0.5 * (exps.p - 1.0)):
        raise PhaseLawError("phase-speed constant too large: "
                            "2σA²h^{2σ-p+1} >= (p-1)/2 at some node")


def compute_scalings(curve, pot, phase_speed, exps):
    """Per-node scalar solve of the coupled scaling/phase-law fixed point.

    Solves h^{p-1} = (f')² + V with f' = A·h^σ at every node, integrates f'
    cumulatively (trapezoid; f(L)-f(0) telescopes exactly to phase_budget),
    and records the phase budget A·∫h^σ.
    """
    if phase_speed < 0:
        raise ValidationError("phase-speed constant must be nonnegative")
    A, p, sigma = phase_speed, exps.p, exps.sigma
    V = pot.values
    h = np.empty(curve.M)
    for i, Vi in enumerate(V):
        try:
            h[i] = _solve_h_node(A, sigma, p, Vi)
        except ConvergenceError as exc:
            raise ConvergenceError(f"scaling solve failed at node {i} "
                                   f"(s̄={curve.s[i]:.4f}): {exc}") from exc
    small_speed_guard(A, h, exps)
    fprime = A * h**sigma
    k = np.sqrt(fprime**2 + V)

    # cumulative trapezoid over the closed loop: f(L) - f(0) telescopes to the
    # budget bitwise (same cumulative sum defines both)
    ds = curve.L / curve.M
    incr = 0.5 * (fprime + np.roll(fprime, -1)) * ds
    cums = np.cumsum(incr)
    f = np.concatenate([[0.0], cums])[:-1]
    phase_budget = float(cums[-1])

    return ScalingFields(phase_speed=A, exps=exps, s=curve.s.copy(), L=curve.L,
                         h=h, k=k, fprime=fprime, f=f, phase_budget=phase_budget)


def match_phase_budget(curve, pot, exps, A_ref, eps_ref, eps_new):
    """Phase-speed constant A' with phase_budget(A')/eps_new = budget(A_ref)/eps_ref.

    As ε varies, the speed constant must track it so the total variation of
    phase stays fixed; this helper performs that adjustment by a scalar solve.
    """
    target = compute_scalings(curve, pot, A_ref, exps).phase_budget / eps_ref

    def mismatch(A):
        return compute_scalings(curve, pot, A, exps).phase_budget / eps_new - target

    hi = A_ref * eps_new / eps_ref * 2.0 + 1e-12
    return brentq(mismatch, 0.0, hi, xtol=1e-15)


def compute_f1(sf, Phi, f1_drift, curve, pot):
    """First phase correction f1' from the normal displacement Φ.

    f1' = [2A(p-1)k^{n+1} ((p-1)/(2θ) - 1) <H,Φ> + A'(p-1)k^{n+1}]
          / ((p-1)h^{p+1} - 2σA²h^{2σ+2}),

    with A' the nonlocal constant (an input here).  Satisfies the
    divergence-form phase equation discretely to O(M^-2).
    """
    exps = sf.exps
    A, p, sigma, theta = sf.phase_speed, exps.p, exps.sigma, exps.theta
    n = exps.n
    denom = (p - 1.0) * sf.h ** (p + 1.0) - 2.0 * sigma * A**2 * sf.h ** (2 * sigma + 2.0)
    if np.any(np.abs(denom) < 1e-12):
        raise PhaseLawError("vanishing denominator in the phase-correction formula")
    HdotPhi = np.einsum("ij,ij->i", curve.curvature, np.asarray(Phi, dtype=float)) \
        if Phi is not None else np.zeros(curve.M)
    kpow = sf.k ** (n + 1.0)
    f1p = (2.0 * A * (p - 1.0) * kpow * ((p - 1.0) / (2.0 * theta) - 1.0) * HdotPhi
           + f1_drift * (p - 1.0) * kpow) / denom
    return f1p


def f1_equation_residual(sf, f1prime, Phi, curve):
    """Discrete residual of the divergence-form equation defining f1.

    ∂_s̄( h²f1'[(p-1)h^{p-1} - 2σA²h^{2σ}] / ((p-1)k^{n+1}) )
        = 2A((p-1)/(2θ) - 1) ∂_s̄<H,Φ>.
    """
    exps = sf.exps
    A, p, sigma, theta = sf.phase_speed, exps.p, exps.sigma, exps.theta
    flux = sf.h**2 * f1prime * ((p - 1.0) * sf.h ** (p - 1.0)
                                - 2.0 * sigma * A**2 * sf.h ** (2 * sigma)) \
        / ((p - 1.0) * sf.k ** (exps.n + 1.0))
    HdotPhi = np.einsum("ij,ij->i", curve.curvature, np.asarray(Phi, dtype=float))
    rhs = 2.0 * A * ((p - 1.0) / (2.0 * theta) - 1.0) * HdotPhi
    ds = curve.L / curve.M
    d = lambda arr: (np.roll(arr, -1) - np.roll(arr, 1)) / (2 * ds)
    return float(np.max(np.abs(d(flux) - d(rhs))))


def euler_residual(curve, pot, sf, exps):
    """Extremality defect ∇ᴺV - ((p-1)/θ·h^{p-1} - 2A²h^{2σ})·H per node.

    Returns (residual array of shape (M, n-1), sup norm).
    """
    A, p, sigma, theta = sf.phase_speed, exps.p, exps.sigma, exps.theta
    coeff = (p - 1.0) / theta * sf.h ** (p - 1.0) - 2.0 * A**2 * sf.h ** (2 * sigma)
    res = pot.grad_normal - coeff[:, None] * curve.curvature
    return res, float(np.max(np.abs(res)))


def reduced_functional(curve, sf, exps):
    """Quadrature of ∫_0^L h^θ ds̄ (the reduced length of the curve)."""
    return float(np.sum(sf.h**exps.theta) * (curve.L / curve.M))


def critical_circle_radius(V_of_R_builder, bracket, phase_speed, exps):
    """Radius at which a circle satisfies the extremality condition.

    ``V_of_R_builder(R)`` must return (curve, pot) for the circle of radius
    R.  Finds the sign change of the first curvature component of the Euler
    residual by Brent's method; raises if no sign change exists in the
    bracket (e.g. a potential that admits no critical circle).
    """
    def defect(R):
        curve, pot = V_of_R_builder(R)
        sf = compute_scalings(curve, pot, phase_speed, exps)
        res, _ = euler_residual(curve, pot, sf, exps)
        return float(res[:, 0].mean())

    lo, hi = bracket
    flo, fhi = defect(lo), defect(hi)
    if flo * fhi > 0:
        raise ConvergenceError(
            f"Euler residual has no zero on [{lo}, {hi}] "
            f"(defect {flo:.3e} .. {fhi:.3e}); the potential admits no critical "
            f"circle in this bracket")
    return brentq(defect, lo, hi, xtol=1e-12)


# ---------------------------------------------------------------------------
# Second-variation (Jacobi-type) operator and the phase operator T
# ---------------------------------------------------------------------------

def _periodic_divergence_matrix(coeff, L):
    """Matrix of v ↦ -∂_s̄(coeff·∂_s̄ v) on the periodic uniform grid."""
    M = coeff.size
    ds = L / M
    cp = 0.5 * (coeff + np.roll(coeff, -1))   # midpoint value at i+1/2
    cm = np.roll(cp, 1)
    mat = np.zeros((M, M))
    idx = np.arange(M)
    mat[idx, idx] = (cp + cm) / ds**2
    mat[idx, (idx + 1) % M] = -cp / ds**2
    mat[idx, (idx - 1) % M] = -cm / ds**2
    return mat


@dataclass
class JacobiMatrix:
    """Discrete second-variation operator on normal sections.

    ``matrix`` has shape ((n-1)M, (n-1)M) with node-major ordering
    (component j of node i lives at index i*(n-1)+j); ``weight`` is the h^θ
    mass per node; ``drift_offset`` is the affine term contributed by the
    nonlocal constant (zero by default) and is kept out of the linear part.
    """

    matrix: np.ndarray
    weight: np.ndarray
    drift_offset: np.ndarray
    asymmetry: float

    @property
    def mass_matrix(self):
        nm1 = self.matrix.shape[0] // self.weight.size
        return np.diag(np.repeat(self.weight, nm1))


def assemble_jacobi(curve, pot, sf, exps, jacobi_drift=0.0):
    """Second-variation operator of the reduced functional on normal sections.

    Component form (m-th component, flat ambient space):

        -(h^θ - 2A²θ/(p-1)·h^σ) V̈^m - θ(h^{θ-1} - 2A²σ/(p-1)·h^{σ-1}) h' V̇^m
        + θ/(p-1)·h^{-σ} D²V[V, E_m] + ½(h^θ - 2A²θ/(p-1)·h^σ) Σ_j ∂²_{jm}g11 V^j
        + H^m <H, V> · [ -(p-1)(3 + σ/θ)h^{2θ} - 16σθA⁴/(p-1)·h^{2σ}
                          + 2A²(5σ + 3θ)h^{θ+σ} ] / ((p-1)h^θ - 2σA²h^σ),

    plus, when the nonlocal constant is nonzero, the affine drift term
    -2A·drift·(θ-σ)h^{p-1}/((p-1)h^θ - 2σA²h^σ)·H^m, returned separately.

    The principal part is assembled in divergence form -∂(a∂·), which matches
    the stated coefficients exactly since a' reproduces the first-derivative
    coefficient; the matrix is therefore symmetric by construction and the
    reported asymmetry measures only the zeroth-order couplings.
    """
    A, p, sigma, theta = sf.phase_speed, exps.p, exps.sigma, exps.theta
    small_speed_guard(A, sf.h, exps)
    h = sf.h
    M, nm1 = curve.M, curve.n - 1

    a = h**theta - (2.0 * A**2 * theta / (p - 1.0)) * h**sigma
    denom = (p - 1.0) * h**theta - 2.0 * sigma * A**2 * h**sigma
    if np.any(denom <= 0) or np.any(a <= 0):
        raise PhaseLawError("second-variation denominators lose positivity; "
                            "phase-speed constant too large")

    principal = _periodic_divergence_matrix(a, curve.L)

    hess_coeff = (theta / (p - 1.0)) * h ** (-sigma)
    curv_coeff = (-(p - 1.0) * (3.0 + sigma / theta) * h ** (2 * theta)
                  - 16.0 * sigma * theta * A**4 / (p - 1.0) * h ** (2 * sigma)
                  + 2.0 * A**2 * (5.0 * sigma + 3.0 * theta) * h ** (theta + sigma)) / denom

    dim = nm1 * M
    full = np.zeros((dim, dim))
    for j in range(nm1):
        comp = np.arange(j, dim, nm1)
        full[np.ix_(comp, comp)] = principal

    Hc = curve.curvature
    for i in range(M):
        block = (hess_coeff[i] * pot.hess_normal[i]
                 + 0.5 * a[i] * pot.metric_d2g11[i]
                 + curv_coeff[i] * np.outer(Hc[i], Hc[i]))
        rows = slice(i * nm1, (i + 1) * nm1)
        full[rows, rows] += block

    asymmetry = float(np.max(np.abs(full - full.T)))
    full = 0.5 * (full + full.T)

    drift_offset = np.zeros(dim)
    if jacobi_drift != 0.0 and A != 0.0:
        coef = -2.0 * A * jacobi_drift * (theta - sigma) * h ** (p - 1.0) / denom
        drift_offset = (coef[:, None] * Hc).reshape(dim)

    return JacobiMatrix(matrix=full, weight=h**theta, drift_offset=drift_offset,
                        asymmetry=asymmetry)


def assemble_T(curve, sf, exps):
    """Divergence-form phase operator T(f2) = ∂_s̄(c·f2') with

        c = h²[(p-1)h^{p-1} - 2σA²h^{2σ}] / ((p-1)k^{n+1}).

    Constants are in the kernel by construction (zero row sums).
    """
    A, p, sigma = sf.phase_speed, exps.p, exps.sigma
    c = sf.h**2 * ((p - 1.0) * sf.h ** (p - 1.0)
                   - 2.0 * sigma * A**2 * sf.h ** (2 * sigma)) \
        / ((p - 1.0) * sf.k ** (exps.n + 1.0))
    if np.any(c <= 0):
        raise PhaseLawError("phase operator coefficient lost positivity; "
                            "phase-speed constant too large")
    return -_periodic_divergence_matrix(c, curve.L)


def weighted_eigenbasis(op_matrix, weight, count, per_node_components=1, ds=1.0):
    """Generalized eigenpairs A φ = λ diag(weight) φ with weighted normalization.

    ``weight`` is a per-node array, repeated for each of the
    ``per_node_components`` entries a node carries.  Eigenvectors come back
    normalized so Σ_i w_i |φ_a(i)|² Δs̄ = 1 with Δs̄ = ``ds``, the discrete
    form of ∫ w φ_a φ_b ds̄ = δ_ab.

    Returns (eigenvalues ascending [count of them], eigenvectors as columns,
    nondegeneracy verdict dict with the minimal |eigenvalue| and its margin).
    """
    if np.any(weight <= 0):
        raise ValidationError("weight must be positive")
    dim = op_matrix.shape[0]
    if dim != weight.size * per_node_components:
        raise ValidationError("operator size does not match weight/node layout")
    w_full = np.repeat(weight, per_node_components)
    vals, vecs = eigh(op_matrix, np.diag(w_full))
    vecs = vecs / np.sqrt(ds)
    amax = float(np.max(np.abs(vals)))
    amin = float(np.min(np.abs(vals)))
    verdict = {
        "min_abs_eigenvalue": amin,
        "max_abs_eigenvalue": amax,
        "invertible": bool(amin > 1e-6 * amax),
    }
    k = min(count, vals.size)
    return vals[:k], vecs[:, :k], verdict
