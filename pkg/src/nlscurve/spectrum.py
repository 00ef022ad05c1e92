"""Spectrum of the coupled two-component model operator and its branches.

Fourier reduction of the model linearization along the curve leaves, for
each transverse frequency α and coupling μ = 2f̂/k̂, the system on R^{n-1}

    -Δu + (1 + α²)u - pU^{p-1}u + μα v = λ u,
    -Δv + (1 + α²)v -  U^{p-1}v + μα u = λ v.

Its first eigenvalue branch η_α starts negative, is simple and increasing,
and crosses zero at a unique ᾱ whose eigenfunction pair (Z, W) decays faster
than e^{-r}; the second branch σ_α starts at zero (translations (∂U, 0) and
the gauge mode (0, U)) with zero slope and positive curvature; the third
branch τ_α stays away from zero.  This module discretizes the system
sector-by-sector, traces the branches in α with eigenvector-overlap
matching, locates ᾱ, and builds the second-order α-corrections of the
eigenfunctions by kernel-projected sector solves.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import eigsh

from .errors import ValidationError, BranchTrackingError, ConvergenceError
from .radial import SectorOperator, sector_matrix, sector_solve


def sphere_area(d):
    """|S^{d-1}|; d = 1 counts the two half-lines."""
    from math import gamma, pi
    if d == 1:
        return 2.0
    return 2 * pi ** (d / 2) / gamma(d / 2)


@dataclass(frozen=True)
class CoupledSectorOperator:
    """Two-component sector operator with frequency shift and coupling.

    Blocks: (Lr-sector + α², μα; μα, Li-sector + α²).
    """

    alpha: float
    mu: float
    ell: int
    dim: int
    p: float

    def components(self):
        op_r = SectorOperator("Lr", self.ell, self.alpha**2, self.dim, self.p)
        op_i = SectorOperator("Li", self.ell, self.alpha**2, self.dim, self.p)
        return op_r, op_i


def coupled_bands(op, U):
    """Symmetric banded storage of the coupled sector operator.

    The two components are interleaved node-wise, (u_0, v_0, u_1, v_1, ...),
    which makes the operator pentadiagonal: the scalar-sector similarity
    weight is shared by both blocks, so the coupling stays μα·Identity.
    Returns (bands [lower form, 3 x 2*nact], weight, idx).
    """
    op_r, op_i = op.components()
    diag_r, off_r, weight, idx = sector_matrix(op_r, U)
    diag_i, off_i, _, _ = sector_matrix(op_i, U)
    nact = diag_r.size
    bands = np.zeros((3, 2 * nact))
    bands[0, 0::2] = diag_r
    bands[0, 1::2] = diag_i
    bands[1, 0::2] = op.mu * op.alpha
    bands[2, 0:-2:2] = off_r
    bands[2, 1:-2:2] = off_i
    return bands, weight, idx


def coupled_spectrum(op, U, count):
    """Lowest ``count`` eigenpairs of the coupled sector operator.

    Shift-invert Lanczos with the shift just below the Gershgorin bound of
    the pentadiagonal matrix: well-conditioned and fast.  Returns a list of
    (eigenvalue, u_values, v_values) with the two-component eigenfunction on
    the full radial grid, normalized to ∫(u²+v²) r^{d-1}dr = 1.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    bands, weight, idx = coupled_bands(op, U)
    K = diags([bands[2, :-2], bands[1, :-1], bands[0],
               bands[1, :-1], bands[2, :-2]], [-2, -1, 0, 1, 2], format="csc")
    # the discrete Laplacian (flux form + centrifugal) is PSD, so the
    # potential minimum minus the coupling bounds the spectrum from below;
    # a shift just beneath it keeps shift-invert well separated
    pot_min = 1.0 + op.alpha**2 \
        - max(op.p, 1.0) * float(np.max(U.values)) ** (op.p - 1.0)
    bottom = pot_min - abs(op.mu * op.alpha)
    vals, vecs = eigsh(K, k=count, sigma=bottom - 1.0, which="LM")
    # one Rayleigh quotient per vector: squares the eigenvalue accuracy
    vals = np.einsum("ij,ij->j", vecs, K @ vecs) / np.einsum("ij,ij->j", vecs, vecs)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    sqrtw = np.sqrt(weight)
    nact = idx.size
    out = []
    for j in range(count):
        phi = vecs[:, j]
        u = phi[0::2] / sqrtw
        v = phi[1::2] / sqrtw
        nrm = np.sqrt(np.sum((u**2 + v**2) * weight))
        u, v = u / nrm, v / nrm
        ufull = np.zeros(U.grid.m)
        vfull = np.zeros(U.grid.m)
        ufull[idx], vfull[idx] = u, v
        lead = ufull[idx[0] + 1] if abs(ufull[idx[0] + 1]) > abs(vfull[idx[0] + 1]) \
            else vfull[idx[0] + 1]
        if lead < 0:
            ufull, vfull = -ufull, -vfull
        out.append((float(vals[j]), ufull, vfull))
    return out


@dataclass
class SpectralBranch:
    """One eigenvalue branch over an α grid at fixed μ."""

    label: str
    mu: float
    alphas: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: list  # per α: (u_values, v_values)

    def derivative(self, i):
        """Centered d(eigenvalue)/dα at grid index i."""
        a, lam = self.alphas, self.eigenvalues
        if 0 < i < a.size - 1:
            return float((lam[i + 1] - lam[i - 1]) / (a[i + 1] - a[i - 1]))
        raise ValidationError("derivative needs an interior grid index")


def _overlap(pair_a, pair_b, weight, idx):
    ua, va = pair_a
    ub, vb = pair_b
    return float(abs(np.sum((ua[idx] * ub[idx] + va[idx] * vb[idx]) * weight)))


def trace_branches(U, p, mu, alpha_grid, overlap_floor=0.5):
    """Trace the first branches of the coupled system over an ascending α grid.

    Returns a dict of SpectralBranch:
      'ground'       η_α: lowest ℓ=0 branch (simple, increasing, crosses 0),
      'translation'  σ_α continuation of (∂U, 0): lowest ℓ=1 branch,
      'gauge'        σ_α continuation of (0, U): next ℓ=0 branch,
      'excited'      τ_α: third ℓ=0 branch.

    Branch continuity is enforced by eigenvector-overlap matching between
    consecutive α samples; an overlap below ``overlap_floor`` raises.
    """
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    if alpha_grid.size < 2 or np.any(np.diff(alpha_grid) <= 0) or alpha_grid[0] < 0:
        raise ValidationError("alpha grid must be ascending from 0")

    d = U.dim
    per_alpha_0 = []
    per_alpha_1 = []
    for a in alpha_grid:
        per_alpha_0.append(coupled_spectrum(
            CoupledSectorOperator(a, mu, 0, d, p), U, 4))
        per_alpha_1.append(coupled_spectrum(
            CoupledSectorOperator(a, mu, 1, d, p), U, 2))

    _, weight, idx = coupled_bands(CoupledSectorOperator(0.0, mu, 0, d, p), U)

    def follow(per_alpha, start_index):
        lams = [per_alpha[0][start_index][0]]
        funcs = [(per_alpha[0][start_index][1], per_alpha[0][start_index][2])]
        pos = start_index
        for i in range(1, alpha_grid.size):
            prev = funcs[-1]
            cands = per_alpha[i]
            ovs = [_overlap(prev, (u, v), weight, idx) for (_, u, v) in cands]
            best = int(np.argmax(ovs))
            if ovs[best] < overlap_floor:
                raise BranchTrackingError("branch tracking ambiguous",
                                          alpha_grid[i], ovs[best])
            lams.append(cands[best][0])
            funcs.append((cands[best][1], cands[best][2]))
            pos = best
        return np.array(lams), funcs

    out = {}
    for label, per_alpha, start in (("ground", per_alpha_0, 0),
                                    ("gauge", per_alpha_0, 1),
                                    ("excited", per_alpha_0, 2),
                                    ("translation", per_alpha_1, 0)):
        lams, funcs = follow(per_alpha, start)
        out[label] = SpectralBranch(label=label, mu=mu, alphas=alpha_grid.copy(),
                                    eigenvalues=lams, eigenfunctions=funcs)
    return out


def eigenvalue_at(U, p, mu, alpha, ell=0, index=0):
    """Single eigenvalue of the coupled sector operator (lowest by default)."""
    return coupled_spectrum(CoupledSectorOperator(alpha, mu, ell, U.dim, p),
                            U, index + 1)[index][0]


def eigenvalue_derivative(U, p, mu, alpha, ell=0, index=0, h_alpha=1e-3):
    """Richardson-extrapolated centered dλ/dα (branches are simple, smooth)."""
    lam = lambda a: eigenvalue_at(U, p, mu, a, ell, index)
    d1 = (lam(alpha + h_alpha) - lam(alpha - h_alpha)) / (2 * h_alpha)
    d2 = (lam(alpha + h_alpha / 2) - lam(alpha - h_alpha / 2)) / h_alpha
    return float((4 * d2 - d1) / 3)


def eigenvalue_second_derivative(U, p, mu, alpha, ell=0, index=0, h_alpha=1e-3):
    lam = lambda a: eigenvalue_at(U, p, mu, a, ell, index)
    c = lam(alpha)
    dd1 = (lam(alpha + h_alpha) - 2 * c + lam(alpha - h_alpha)) / h_alpha**2
    dd2 = (lam(alpha + h_alpha / 2) - 2 * c + lam(alpha - h_alpha / 2)) / (h_alpha / 2) ** 2
    return float((4 * dd2 - dd1) / 3)


@dataclass
class CrossingMode:
    """The zero crossing of the ground branch: ᾱ and its eigenpair (Z, W).

    ``u_values``/``v_values`` are the real/imaginary profile components on
    the radial grid, normalized so ∫(Z² + W²) dy = 1 including the angular
    volume factor; decay_rate is the fitted exponential rate of |Z| + |W|.
    """

    alpha_bar: float
    u_values: np.ndarray
    v_values: np.ndarray
    eta_residual: float
    decay_rate: float
    U: object
    mu: float
    p: float


def find_alpha_bar(U, p, mu, search=(1e-6, None), tol=1e-8):
    """Safeguarded Newton for the unique ᾱ with η_ᾱ = 0 in the ℓ=0 sector.

    The branch slope comes for free from the eigenvector (Hellmann-Feynman:
    ∂η/∂α = 2α + 2μ∫uv for the normalized pair), so each iteration costs one
    eigensolve; bisection on the maintained bracket guards the steps.  The η
    branch is increasing with η_0 < 0; the upper search limit defaults to
    sqrt(-2η_0) + 1, safely past the crossing for small μ.
    """
    d = U.dim
    r = U.grid.nodes
    w = r ** (d - 1)

    def eta_and_slope(a):
        lam, u, v = coupled_spectrum(
            CoupledSectorOperator(a, mu, 0, d, p), U, 1)[0]
        mass = np.trapezoid((u**2 + v**2) * w, r)
        uv = np.trapezoid(u * v * w, r)
        return lam, 2.0 * a + 2.0 * mu * uv / mass, (u, v)

    eta0, _, _ = eta_and_slope(0.0)
    if eta0 >= 0:
        raise ConvergenceError("ground branch does not start negative")
    lo, hi = search
    if hi is None:
        hi = float(np.sqrt(-2 * eta0) + 1.0)
    eta_hi, _, _ = eta_and_slope(hi)
    if eta_hi <= 0:
        raise ConvergenceError("ground branch has no sign change on the interval; "
                               "widen the search or reduce mu")

    abar = float(np.sqrt(-eta0))       # exact for μ = 0, close otherwise
    lam = np.inf
    for _ in range(60):
        lam, slope, _ = eta_and_slope(abar)
        if lam > 0:
            hi = abar
        else:
            lo = abar
        if abs(lam) < tol * max(abs(slope), 1.0):
            break
        step = abar - lam / slope
        abar = step if lo < step < hi else 0.5 * (lo + hi)
    else:
        raise ConvergenceError("crossing search did not converge")

    lam, u, v = coupled_spectrum(
        CoupledSectorOperator(abar, mu, 0, U.dim, p), U, 1)[0]

    # renormalize with the angular factor: ∫(Z²+W²) dy = 1 over R^d
    r = U.grid.nodes
    d = U.dim
    omega = sphere_area(d)
    mass = omega * np.trapezoid((u**2 + v**2) * r ** (d - 1), r)
    u, v = u / np.sqrt(mass), v / np.sqrt(mass)

    rate = _decay_rate_windowed(r, np.abs(u) + np.abs(v), d)
    return CrossingMode(alpha_bar=float(abar), u_values=u, v_values=v,
                        eta_residual=float(lam), decay_rate=rate, U=U, mu=mu, p=p)


def _decay_rate_windowed(r, w, dim):
    """Exponential rate fitted where the values sit above the solver noise.

    Eigenvector tails bottom out near 1e-14 of the peak; the fit window is
    the decade band [1e-11, 1e-4] of the peak, with the polynomial prefactor
    r^{-(d-1)/2} removed.
    """
    peak = np.max(w)
    sel = (w > 1e-11 * peak) & (w < 1e-4 * peak) & (r > 1.0)
    if sel.sum() < 10:
        return 0.0
    y = np.log(w[sel]) + 0.5 * (dim - 1) * np.log(r[sel])
    return float(-np.polyfit(r[sel], y, 1)[0])


def crossing_slope_identity(mode):
    """(∂η/∂α at ᾱ, closed form 2ᾱ + 2μ∫ZW) for the crossing mode."""
    U, p, mu = mode.U, mode.p, mode.mu
    d = U.dim
    r = U.grid.nodes
    omega = sphere_area(d)
    zw = omega * np.trapezoid(mode.u_values * mode.v_values * r ** (d - 1), r)
    closed = 2 * mode.alpha_bar + 2 * mu * zw
    numeric = eigenvalue_derivative(U, p, mu, mode.alpha_bar)
    return float(numeric), float(closed)


def alpha_field(sf, U, tol=1e-8):
    """Per-node crossing data with μ(s̄) = 2f'(s̄)/k(s̄).

    In the variable-coefficient model the profile argument is k(s̄)z, so the
    crossing equation per node only depends on μ(s̄); nodes with equal μ are
    solved once.  Returns (alpha_bar array, modes list parallel to nodes).
    """
    mus = 2.0 * sf.fprime / sf.k
    cache = {}
    abars = np.empty(mus.size)
    modes = []
    for i, mu in enumerate(mus):
        key = round(float(mu), 14)
        if key not in cache:
            cache[key] = find_alpha_bar(U, sf.exps.p, float(mu), tol=tol)
        abars[i] = cache[key].alpha_bar
        modes.append(cache[key])
    return abars, modes


# ---------------------------------------------------------------------------
# Perturbation solves: first and second α-derivatives of the eigenfunctions
# ---------------------------------------------------------------------------

def eta_curvature_identity(U, p, mu):
    """Both sides of ∂²η/∂α²|₀ = 2 + 2μ∫(u₀ ∂v/∂α + v₀ ∂u/∂α).

    At α = 0 the ground eigenpair is (Z̃, 0) with eigenvalue η₀ < 0, so only
    the first integral survives and ∂v/∂α solves (L_i - η₀)∂v = -μ Z̃ (an
    invertible shifted solve).  Returns (finite-difference value, identity).
    """
    lam0, u0, v0 = coupled_spectrum(
        CoupledSectorOperator(0.0, mu, 0, U.dim, p), U, 1)[0]
    op = SectorOperator("Li", 0, -lam0, U.dim, p)
    dv = sector_solve(op, U, U.with_values(-mu * u0))
    r = U.grid.nodes
    d = U.dim
    omega = sphere_area(d)
    integral = omega * np.trapezoid(u0 * dv.values * r ** (d - 1), r)
    mass = omega * np.trapezoid((u0**2 + v0**2) * r ** (d - 1), r)
    closed = 2.0 + 2.0 * mu * integral / mass
    numeric = eigenvalue_second_derivative(U, p, mu, 0.0)
    return float(numeric), float(closed)


def first_derivative_profiles(U, p, mu):
    """∂_α eigenfunction components at α = 0 for the two zero branches.

    For the translation branch (∂_jU, 0) the imaginary component obeys
    L_i⁰ ∂v/∂α = -μ ∂_jU (ℓ=1 sector), with closed form (μ/2)·yU; for the
    gauge branch (0, U) the real component obeys L_r⁰ ∂u/∂α = -μU (ℓ=0),
    with closed form μ(U/(p-1) + ∇U·y/2).  Returns the two solved profiles.
    """
    r = U.grid.nodes
    op_i1 = SectorOperator("Li", 1, 0.0, U.dim, p)
    rhs_i = U.with_values(-mu * U.derivative(r))
    dv = sector_solve(op_i1, U, rhs_i)

    op_r0 = SectorOperator("Lr", 0, 0.0, U.dim, p)
    rhs_r = U.with_values(-mu * U.values)
    du = sector_solve(op_r0, U, rhs_r)
    return du, dv


def second_order_profiles(h_hat, k_hat, phase_speed, exps, U):
    """Half second α-derivatives of the zero-branch eigenfunctions at α = 0.

    The translation branch gives (per normal direction, ℓ=1 sector)

        L_r⁰ (2·X) = c_th ∂U - 2∂U - 4A²ĥ^{2σ-p+1} yU,
        c_th = 2((p-1) - 2A²θ ĥ^{2σ-p+1})/(p-1),

    and the gauge branch (ℓ=0 sector)

        L_i⁰ (2·Y) = c_sg U - 2U - 8A²ĥ^{2σ-p+1} Ũ,
        c_sg = 2((p-1) - 2A²σ ĥ^{2σ-p+1})/(p-1),  Ũ = U/(p-1) + ∇U·y/2.

    Kernel components of the right-hand sides vanish by construction; the
    projected-off magnitude is returned for verification.  Output: (X profile
    [ℓ=1], Y profile [ℓ=0], removed_r, removed_i).
    """
    p, sigma, theta = exps.p, exps.sigma, exps.theta
    A2h = phase_speed**2 * h_hat ** (2 * sigma - p + 1.0)
    r = U.grid.nodes
    dU = U.derivative(r)
    Utilde = U.values / (p - 1.0) + 0.5 * r * dU

    c_th = 2.0 / (p - 1.0) * ((p - 1.0) - 2.0 * A2h * theta)
    rhs_r = U.with_values(c_th * dU - 2.0 * dU - 4.0 * A2h * r * U.values)
    op_r1 = SectorOperator("Lr", 1, 0.0, U.dim, p)
    X2, rem_r = sector_solve(op_r1, U, rhs_r, report=True)

    c_sg = 2.0 / (p - 1.0) * ((p - 1.0) - 2.0 * A2h * sigma)
    rhs_i = U.with_values(c_sg * U.values - 2.0 * U.values - 8.0 * A2h * Utilde)
    op_i0 = SectorOperator("Li", 0, 0.0, U.dim, p)
    Y2, rem_i = sector_solve(op_i0, U, rhs_i, report=True)

    half_X = X2.with_values(0.5 * X2.values)
    half_Y = Y2.with_values(0.5 * Y2.values)
    return half_X, half_Y, float(rem_r), float(rem_i)


def branch_curvature_closed_forms(h_hat, phase_speed, exps):
    """Closed-form ∂²σ_α/∂α²|₀ along the translation and gauge branches."""
    p, sigma, theta = exps.p, exps.sigma, exps.theta
    A2h = phase_speed**2 * h_hat ** (2 * sigma - p + 1.0)
    val_translation = 2.0 / (p - 1.0) * ((p - 1.0) - 2.0 * A2h * theta)
    val_gauge = 2.0 / (p - 1.0) * ((p - 1.0) - 2.0 * A2h * sigma)
    return float(val_translation), float(val_gauge)
