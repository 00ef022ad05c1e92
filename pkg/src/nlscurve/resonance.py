"""Fast-oscillation resonance layer along the curve.

The near-zero eigenvalues of the linearized operator coming from transverse
frequencies of order 1/ε are governed by the weighted periodic problem

    -ε²ξ'' - k²ᾱ²ξ = ν / (1 + 2f'Q₃/(kᾱ)) · ξ       on [0, L],

whose eigenvalues behave like ν_j = Ĉ₀ εj + O(ε²j² + ε) once re-indexed so
j = 0 is the first nonnegative one.  Each eigenfunction ξ_j gets a companion
β_j and small corrections γ_j, κ_j, q_j; with those the pair (β_j, ξ_j)
satisfies the coupled first-order system up to O(ν_j² + ε).  The quadratic
form that controls these degrees of freedom,

    Λ₀ = ∫ Q₁(ε²β'β̲' - k²ᾱ²ββ̲) + Q₂(ε²ξ'ξ̲' - k²ᾱ²ξξ̲)
         + 2f'Q₃(εβ'ξ̲ - εξ'β̲ - kᾱββ̲ - kᾱξξ̲) ds̄,

is nearly diagonal in the (β_j) coordinates with approximate eigenvalues
ν_j; scanning ε for a spectral gap of Λ₀ (relative to the weighted mass)
selects the admissible values ε_k.

Everything here uses Fourier collocation in s̄: the coefficients are smooth
periodic fields, so the discretization is spectrally accurate.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .errors import ValidationError, PhaseLawError
from .spectrum import sphere_area


def fourier_diff_matrices(M, L):
    """First and second derivative Fourier collocation matrices (M x M).

    Columns are the derivatives of the cardinal functions: D f evaluates the
    spectral derivative of the trigonometric interpolant of f at the nodes.
    """
    freqs = 2j * np.pi * np.fft.fftfreq(M, d=L / M)
    eye = np.eye(M)
    D1 = np.real(np.fft.ifft(freqs[:, None] * np.fft.fft(eye, axis=0), axis=0))
    D2 = np.real(np.fft.ifft((freqs**2)[:, None] * np.fft.fft(eye, axis=0), axis=0))
    D1 = 0.5 * (D1 - D1.T)
    D2 = 0.5 * (D2 + D2.T)
    return D1, D2


@dataclass
class OverlapIntegrals:
    """Q₁ = ∫Z², Q₂ = ∫W², Q₃ = ∫ZW per curve node (unit total mass)."""

    q1: np.ndarray
    q2: np.ndarray
    q3: np.ndarray


def q_integrals(modes, dim):
    """Overlap integrals of the per-node crossing eigenpairs (Z, W)."""
    omega = sphere_area(dim)
    q1 = np.empty(len(modes))
    q2 = np.empty(len(modes))
    q3 = np.empty(len(modes))
    for i, m in enumerate(modes):
        r = m.U.grid.nodes
        w = r ** (dim - 1)
        q1[i] = omega * np.trapezoid(m.u_values**2 * w, r)
        q2[i] = omega * np.trapezoid(m.v_values**2 * w, r)
        q3[i] = omega * np.trapezoid(m.u_values * m.v_values * w, r)
    return OverlapIntegrals(q1=q1, q2=q2, q3=q3)


@dataclass
class ResonanceBasis:
    """Re-indexed fast-mode eigenbasis with companions and corrections.

    Arrays are indexed [j, node] with j running over the window
    [-J, ..., J], J = floor(δ²/ε); ``offsets`` maps row a to j = a - J.
    ``nu`` holds the re-indexed eigenvalues (nu[J] is the first nonnegative
    one).  ``weight_fn`` is 1/(1 + 2f'Q₃/(kᾱ)) per node.
    """

    eps: float
    delta: float
    s: np.ndarray
    L: np.ndarray
    nu: np.ndarray
    xi: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    kappa: np.ndarray
    qcorr: np.ndarray
    weight_fn: np.ndarray
    j_eps: int
    sf: object
    abar: np.ndarray
    Q: OverlapIntegrals

    @property
    def window(self):
        J = (self.nu.size - 1) // 2
        return np.arange(-J, J + 1)

    def to_csv(self, path):
        """Per-j export: arc length, then ξ_j and β_j columns over the window."""
        cols = [self.s]
        names = ["s"]
        for a, j in enumerate(self.window):
            cols.extend([self.xi[a], self.beta[a]])
            names.extend([f"xi_{j}", f"beta_{j}"])
        np.savetxt(path, np.column_stack(cols), delimiter=",",
                   header=",".join(names), comments="")


def resonance_eigenpairs(sf, abar, Q, eps, delta=0.3):
    """Solve the weighted periodic eigenproblem and build the full basis.

    Eigenpairs are re-indexed around the first nonnegative eigenvalue and
    restricted to |j| <= floor(δ²/ε); the companion is

        β_j = -(1/kᾱ)(1 - Q₁ν_j/(k²ᾱ² + 2f'kᾱQ₃))·εξ_j',

    and the corrections come from the cancellation conditions that define
    them,

        γ_j = -(εξ_j' + kᾱβ_j)/(2kQ₁),
        κ_j = -(kᾱξ_j - εβ_j')/(2kQ₂),
        q_j = -(εξ_j' + kᾱβ_j + kγ_j)/(kᾱ).

    At zero phase speed Q₂ vanishes together with the numerator of κ_j; the
    algebraically equivalent stable form κ_j = ν_j ξ_j/(2k(kᾱ + 2f'Q₃)) is
    used there.
    """
    M = sf.s.size
    L = sf.L
    k, fp = sf.k, sf.fprime
    ka = k * abar
    wfun = 1.0 + 2.0 * fp * Q.q3 / ka
    if np.any(wfun <= 0):
        raise PhaseLawError("resonance weight lost positivity; "
                            "phase-speed constant too large")

    D1, D2 = fourier_diff_matrices(M, L)
    A = -eps**2 * D2 - np.diag(ka**2)
    B = np.diag(1.0 / wfun)
    vals, vecs = eigh(A, B)
    ds = L / M
    vecs = vecs / np.sqrt(ds)   # ∫ ξ²/wfun ds̄ = 1

    j_eps = int(np.searchsorted(vals, 0.0))
    J = int(np.floor(delta**2 / eps))
    if j_eps - J < 0 or j_eps + J >= M:
        raise ValidationError(
            f"index window [{-J}, {J}] around j_eps={j_eps} leaves the grid; "
            f"use more curve nodes or a larger eps")
    sel = np.arange(j_eps - J, j_eps + J + 1)
    nu = vals[sel]
    xi = vecs[:, sel].T                     # [j, node]
    dxi = (D1 @ vecs[:, sel]).T

    denom = ka**2 + 2.0 * fp * ka * Q.q3
    beta = -(1.0 / ka) * (1.0 - Q.q1 * nu[:, None] / denom) * eps * dxi
    dbeta = (D1 @ beta.T).T
    gamma = -(eps * dxi + ka * beta) / (2.0 * k * Q.q1)
    if np.min(Q.q2) > 1e-10:
        kappa = -(ka * xi - eps * dbeta) / (2.0 * k * Q.q2)
    else:
        kappa = nu[:, None] * xi / (2.0 * k * (ka + 2.0 * fp * Q.q3))
    qcorr = -(eps * dxi + ka * beta + k * gamma) / ka

    return ResonanceBasis(eps=eps, delta=delta, s=sf.s.copy(), L=L, nu=nu,
                          xi=xi, beta=beta, gamma=gamma, kappa=kappa,
                          qcorr=qcorr, weight_fn=1.0 / wfun, j_eps=j_eps,
                          sf=sf, abar=abar.copy(), Q=Q)


def weyl_slope(basis, half_window=None):
    """Fitted slope of ν_j against j near j = 0 (should be ε·Ĉ₀)."""
    J = (basis.nu.size - 1) // 2
    if J < 1:
        raise ValidationError("window too small for a slope fit; increase delta")
    hw = min(half_window or max(2, J // 4), J)
    j = np.arange(-hw, hw + 1)
    nu = basis.nu[J - hw: J + hw + 1]
    return float(np.polyfit(j, nu, 1)[0])


def verify_coupled_system(basis):
    """Discrete residual of the coupled (β_j, ξ_j) system over the window.

    Line 1: -ε²β'' - k²ᾱ²β - 2f'(Q₃/Q₁)(εξ' + kᾱβ) - νβ,
    line 2: -ε²ξ'' - k²ᾱ²ξ + 2f'(Q₃/Q₂)(εβ' - kᾱξ) - νξ;
    both are expected O(ν² + ε) in sup norm.  The ξ-line coupling carries
    f'·Q₃/Q₂, which is identically zero when the phase speed vanishes (then
    W = 0 makes Q₂ = 0 as well); that case is treated as zero coupling.

    Returns (max residual, per-j residual array).
    """
    sf, Q = basis.sf, basis.Q
    k, fp, ka = sf.k, sf.fprime, sf.k * basis.abar
    eps = basis.eps
    M = basis.s.size
    D1, D2 = fourier_diff_matrices(M, basis.L)

    res = np.zeros(basis.nu.size)
    coupling_on = np.any(np.abs(fp) > 0)
    for a, nu in enumerate(basis.nu):
        b, x = basis.beta[a], basis.xi[a]
        db, d2b = D1 @ b, D2 @ b
        dx, d2x = D1 @ x, D2 @ x
        line1 = -eps**2 * d2b - ka**2 * b - nu * b
        line2 = -eps**2 * d2x - ka**2 * x - nu * x
        if coupling_on:
            line1 -= 2.0 * fp * (Q.q3 / Q.q1) * (eps * dx + ka * b)
            line2 += 2.0 * fp * (Q.q3 / np.maximum(Q.q2, 1e-300)) * (eps * db - ka * x)
        res[a] = max(np.max(np.abs(line1)), np.max(np.abs(line2)))
    return float(np.max(res)), res


def correction_identities(basis):
    """Sup norms of the γ/κ relations, each expected O(ν_j²).

    Checks -ε²γ'' - ᾱ²k²γ and (-kᾱκ + εγ') per j, normalized by the mode
    amplitude, returning the two arrays max-ed over nodes.
    """
    ka = basis.sf.k * basis.abar
    eps = basis.eps
    M = basis.s.size
    D1, D2 = fourier_diff_matrices(M, basis.L)
    r1 = np.zeros(basis.nu.size)
    r2 = np.zeros(basis.nu.size)
    for a in range(basis.nu.size):
        g, kp = basis.gamma[a], basis.kappa[a]
        r1[a] = np.max(np.abs(-eps**2 * (D2 @ g) - ka**2 * g))
        r2[a] = np.max(np.abs(-ka * kp + eps * (D1 @ g)))
    return r1, r2


def assemble_lambda0(basis):
    """Λ₀ and the weighted mass matrix in the β_j coordinates.

    Returns (lambda0, mass, asymmetry): the quadratic form is symmetrized
    (for variable coefficients the εβ'ξ̲-block is symmetric only up to an
    O(ε) coefficient-derivative term, which the reported asymmetry tracks).
    """
    sf, Q = basis.sf, basis.Q
    k, fp = sf.k, sf.fprime
    ka = k * basis.abar
    eps = basis.eps
    M = basis.s.size
    ds = basis.L / M
    D1, _ = fourier_diff_matrices(M, basis.L)

    Bm = basis.beta
    Xm = basis.xi
    dB = (D1 @ Bm.T).T
    dX = (D1 @ Xm.T).T

    def quad(fa, fb, w):
        return (fa * w) @ fb.T * ds

    cross = 2.0 * fp * Q.q3
    lam = (eps**2 * quad(dB, dB, Q.q1) - quad(Bm, Bm, Q.q1 * ka**2)
           + eps**2 * quad(dX, dX, Q.q2) - quad(Xm, Xm, Q.q2 * ka**2))
    # 2f'Q₃(εβ'ξ̲ - εξ'β̲ - kᾱββ̲ - kᾱξξ̲): rows unbarred, columns barred
    lam += eps * quad(dB, Xm, cross) - eps * quad(dX, Bm, cross) \
        - quad(Bm, Bm, cross * ka) - quad(Xm, Xm, cross * ka)

    mass = quad(Bm, Bm, Q.q1) + quad(Xm, Xm, Q.q2)
    asym = float(np.max(np.abs(lam - lam.T)))
    lam = 0.5 * (lam + lam.T)
    mass = 0.5 * (mass + mass.T)
    return lam, mass, asym


def lambda0_spectrum(basis):
    """Generalized eigenvalues of (Λ₀, mass), ascending."""
    lam, mass, _ = assemble_lambda0(basis)
    vals = eigh(lam, mass, eigvals_only=True)
    return vals


def gap_scan(sf, abar, Q, eps_grid, delta=0.3, threshold=0.1):
    """Scan ε for spectral gaps of Λ₀: admissible when min|eig| >= threshold·ε.

    ``eps_grid`` must be descending.  Returns a list of records with the
    minimal |generalized eigenvalue|, the admissibility flag, and the
    empirical d(min-eigenvalue)/dε between consecutive grid points.
    """
    eps_grid = np.asarray(eps_grid, dtype=float)
    if np.any(np.diff(eps_grid) >= 0):
        raise ValidationError("eps grid must be strictly descending")
    records = []
    for eps in eps_grid:
        basis = resonance_eigenpairs(sf, abar, Q, eps, delta)
        vals = lambda0_spectrum(basis)
        min_abs = float(np.min(np.abs(vals)))
        records.append({
            "eps": float(eps),
            "min_abs_eigenvalue": min_abs,
            "admissible": bool(min_abs >= threshold * eps),
        })
    for i in range(len(records) - 1):
        de = records[i]["eps"] - records[i + 1]["eps"]
        dv = records[i]["min_abs_eigenvalue"] - records[i + 1]["min_abs_eigenvalue"]
        records[i]["d_mineig_d_eps"] = dv / de
    if len(records) > 1:
        records[-1]["d_mineig_d_eps"] = records[-2]["d_mineig_d_eps"]
    admissible = [r["eps"] for r in records if r["admissible"]]
    if not admissible:
        raise ValidationError("no admissible eps on the grid; refine the eps grid")
    return records


def constant_coefficient_nu_oracle(sf, abar, Q, eps, delta=0.3):
    """Arithmetic in-window eigenvalues for constant-coefficient runs.

    For constant k, ᾱ, f', Q₃, the eigenfunctions are Fourier modes and

        ν(m) = (ε²(2πm/L)² - k²ᾱ²)·(1 + 2f'Q₃/(kᾱ)),

    with multiplicity two for 0 < m < M/2.  The multiset is sorted and
    re-indexed exactly as resonance_eigenpairs does, so the window contents
    can be compared elementwise.  No eigensolver involved.
    """
    for arr in (sf.k, sf.fprime, abar, Q.q3):
        if np.ptp(arr) > 1e-10 * (1 + np.max(np.abs(arr))):
            raise ValidationError("oracle needs constant coefficients")
    M = sf.s.size
    L = sf.L
    k, fp, ab, q3 = sf.k[0], sf.fprime[0], abar[0], Q.q3[0]
    wfun = 1.0 + 2.0 * fp * q3 / (k * ab)
    vals = []
    for m in range(0, M // 2 + 1):
        nu = (eps**2 * (2 * np.pi * m / L) ** 2 - k**2 * ab**2) * wfun
        vals.append(nu)
        if 0 < m < M / 2:
            vals.append(nu)
    vals = np.sort(np.array(vals))
    j_eps = int(np.searchsorted(vals, 0.0))
    J = int(np.floor(delta**2 / eps))
    if j_eps - J < 0 or j_eps + J >= vals.size:
        raise ValidationError("oracle window leaves the grid")
    return vals[j_eps - J: j_eps + J + 1]


def gap_scan_oracle(sf, abar, Q, eps_grid, delta=0.3, threshold=0.1):
    """Admissibility flags from the arithmetic oracle (constant coefficients)."""
    out = []
    for eps in eps_grid:
        window = constant_coefficient_nu_oracle(sf, abar, Q, eps, delta)
        min_abs = float(np.min(np.abs(window)))
        out.append({"eps": float(eps), "min_abs_eigenvalue": min_abs,
                    "admissible": bool(min_abs >= threshold * eps)})
    return out


def sharp_norm(b):
    """Fourier-weighted norm (Σ b_j²(1+|j|)²)^{1/2} on window coefficients.

    Coefficients are indexed symmetrically: b has odd length 2J+1 with j = 0
    in the middle.
    """
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.size % 2 == 0:
        raise ValidationError("coefficients must form an odd-length window")
    J = (b.size - 1) // 2
    j = np.arange(-J, J + 1)
    return float(np.sqrt(np.sum(b**2 * (1.0 + np.abs(j)) ** 2)))
