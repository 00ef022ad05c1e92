"""Ground state of -ΔU + U = U^p in R^d and the linearized radial operators.

The ground state U is the positive radial decaying solution of

    -ΔU + U = U^p      in R^d  (d = n - 1),

with U'(0) = 0 and U(r) ~ e^{-r} r^{-(d-1)/2} at infinity.  Linearizing the
scalar equation around U gives the two model operators

    L_r v = -Δv + v - p U^{p-1} v,        L_i v = -Δv + v - U^{p-1} v,

which act sector-by-sector in spherical-harmonic modes ℓ.  Their classical
spectral facts (single negative eigenvalue of L_r, kernel of L_r spanned by
the ∂U, kernel of L_i spanned by U) are what every downstream construction
leans on, so this module also provides sector eigensolvers and minimal-norm
sector solves with kernel projection.

Discretization: uniform radial grid on [0, r_max], second-order finite
differences in divergence form, with the (d-1)/r first-derivative term
regularized at r = 0 by parity.  All sector matrices are symmetrized by the
diagonal similarity induced by the radial volume weight r^{d-1}.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal, solve_banded
from scipy.sparse import csc_matrix, diags, bmat
from scipy.sparse.linalg import splu

from .errors import ValidationError, ConvergenceError, IllPosedSolveError

KERNEL_TOL = 1e-6  # discrete eigenvalue |λ| below this counts as kernel


def admissible_p_range(n):
    """Open interval of admissible exponents p for ambient dimension n."""
    if n < 2:
        raise ValidationError(f"ambient dimension must be >= 2, got {n}")
    upper = np.inf if n <= 3 else (n + 1) / (n - 3)
    return 1.0, upper


def check_p(n, p):
    lo, hi = admissible_p_range(n)
    if not (lo < p < hi):
        raise ValidationError(f"p={p} outside admissible range ({lo}, {hi}) for n={n}")


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid on [0, r_max] with m nodes (both endpoints included)."""

    r_max: float = 30.0
    m: int = 3000

    def __post_init__(self):
        if self.r_max < 20:
            raise ValidationError(f"r_max must be >= 20, got {self.r_max}")
        if self.m < 1000:
            raise ValidationError(f"m must be >= 1000, got {self.m}")

    @property
    def nodes(self):
        return np.linspace(0.0, self.r_max, self.m)

    @property
    def dr(self):
        return self.r_max / (self.m - 1)


@dataclass(frozen=True)
class RadialProfile:
    """A radial function on R^d sampled on a RadialGrid.

    ``decay_rate`` is the exponential rate fitted on the last quarter of the
    grid after removing the known polynomial prefactor r^{-(d-1)/2}; it is 0.0
    for profiles where no fit was requested.
    """

    grid: RadialGrid
    values: np.ndarray
    dim: int
    decay_rate: float = 0.0
    _spline: CubicSpline = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.m,):
            raise ValidationError("values must match the grid size")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("profile values must be finite")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "_spline", CubicSpline(self.grid.nodes, vals))

    def __call__(self, r):
        """Evaluate at |r|, with exponential extrapolation past r_max."""
        r = np.abs(np.asarray(r, dtype=float))
        out = self._spline(np.minimum(r, self.grid.r_max))
        beyond = r > self.grid.r_max
        if np.any(beyond):
            rate = self.decay_rate if self.decay_rate > 0 else 1.0
            edge = self.values[-1]
            out = np.where(beyond, edge * np.exp(-rate * (r - self.grid.r_max)), out)
        return out

    def derivative(self, r):
        """Radial derivative du/dr evaluated at |r| (zero past r_max)."""
        r = np.asarray(r, dtype=float)
        inside = np.abs(r) <= self.grid.r_max
        out = self._spline(np.clip(np.abs(r), 0, self.grid.r_max), 1)
        return np.where(inside, out, 0.0)

    def with_values(self, values, decay_rate=0.0):
        return RadialProfile(self.grid, values, self.dim, decay_rate)

    def norm_sq(self):
        """∫ u² r^{d-1} dr (no angular factor)."""
        r = self.grid.nodes
        return float(np.trapezoid(self.values**2 * r ** (self.dim - 1), r))

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.grid.nodes, self.values]),
                   delimiter=",", header="r,value", comments="")


@dataclass(frozen=True)
class SectorOperator:
    """One spherical-harmonic sector of L_r or L_i, plus an additive shift.

    kind 'Lr' carries the coefficient p U^{p-1}, kind 'Li' carries U^{p-1}.
    For dim == 1 the sectors are parities: ℓ = 0 even, ℓ = 1 odd.
    """

    kind: str
    ell: int
    shift: float
    dim: int
    p: float

    def __post_init__(self):
        if self.kind not in ("Lr", "Li"):
            raise ValidationError(f"kind must be 'Lr' or 'Li', got {self.kind!r}")
        if self.ell < 0:
            raise ValidationError("angular mode must be nonnegative")
        if self.dim == 1 and self.ell > 1:
            raise ValidationError("dim 1 has only parity sectors ell in {0, 1}")

    @property
    def nonlinear_coeff(self):
        return self.p if self.kind == "Lr" else 1.0


def _fit_decay_rate(grid, values, dim):
    """Exponential rate on the last quarter of the grid.

    The known polynomial prefactor r^{-(d-1)/2} is removed before fitting,
    and the Dirichlet boundary layer (last ~3 units before r_max, where the
    truncation bends the tail) is excluded from the window.
    """
    r = grid.nodes
    sel = (r >= 0.75 * grid.r_max) & (r <= grid.r_max - 3.0) & (np.abs(values) > 1e-280)
    if sel.sum() < 10:
        return 0.0
    y = np.log(np.abs(values[sel])) + 0.5 * (dim - 1) * np.log(r[sel])
    slope = np.polyfit(r[sel], y, 1)[0]
    return float(-slope)


# ---------------------------------------------------------------------------
# Ground state
# ---------------------------------------------------------------------------

def _shoot(a, d, p, r_max):
    """Integrate the radial ODE from r≈0 with u(0)=a.

    Returns (-1, sol) on overshoot (u crosses zero), (+1, sol) on undershoot
    (u' turns positive while u > 0), (0, sol) if integration reaches r_max.
    """
    r0 = 1e-6
    u0 = a + (a - a**p) * r0**2 / (2 * d)
    du0 = (a - a**p) * r0 / d

    def rhs(r, y):
        u, du = y
        return [du, -(d - 1) / r * du + u - np.sign(u) * np.abs(u) ** p]

    def cross_zero(r, y):
        return y[0]
    cross_zero.terminal = True
    cross_zero.direction = -1

    def turn_up(r, y):
        return y[1]
    turn_up.terminal = True
    turn_up.direction = 1

    sol = solve_ivp(rhs, (r0, r_max), [u0, du0], events=[cross_zero, turn_up],
                    rtol=1e-12, atol=1e-14, dense_output=True, method="RK45")
    if sol.t_events[0].size:
        return -1, sol
    if sol.t_events[1].size:
        return +1, sol
    return 0, sol


def _laplacian_rows(grid, d, include_origin):
    """Divergence-form radial Laplacian (-Δ) as banded rows plus its weight.

    Active nodes are [0, m-2] when the origin is included, [1, m-2] otherwise
    (Dirichlet at r_max either way).  The matrix is self-adjoint with respect
    to the returned weight.
    """
    r = grid.nodes
    dr = grid.dr
    if include_origin:
        idx = np.arange(0, grid.m - 1)
    else:
        idx = np.arange(1, grid.m - 1)
    rj = r[idx]
    rho = np.where(idx > 0, rj ** float(d - 1), 1.0)
    rho_ph = (rj + dr / 2) ** (d - 1)
    rho_mh = np.maximum(rj - dr / 2, 0.0) ** (d - 1)

    diag = (rho_ph + rho_mh) / (rho * dr**2)
    upper = -rho_ph / (rho * dr**2)
    lower = -rho_mh / (rho * dr**2)
    weight = rho * dr
    if include_origin:
        # Δu(0) = d·u''(0) for even radial u; cell mass ∫_0^{dr/2} r^{d-1} dr
        diag[0] = 2 * d / dr**2
        upper[0] = -2 * d / dr**2
        lower[0] = 0.0
        weight[0] = (dr / 2) ** d / d
    return lower, diag, upper, weight, idx


def _newton_polish(u, d, p, grid, max_iter=40, tol=5e-11):
    """Newton iteration on the finite-difference system, Dirichlet at r_max.

    Stops at ``tol`` or when the residual stagnates at its rounding floor
    (the diagonal is O(1/dr²), so the floor sits well below any tolerance
    the acceptance checks care about).
    """
    lower, diag, upper, weight, idx = _laplacian_rows(grid, d, include_origin=True)
    nact = idx.size

    def residual(ua):
        lap = diag * ua
        lap[:-1] += upper[:-1] * ua[1:]
        lap[1:] += lower[1:] * ua[:-1]
        return lap + ua - np.sign(ua) * np.abs(ua) ** p

    ua = u[:-1].copy()
    best = np.inf
    stalled = 0
    for _ in range(max_iter):
        res = residual(ua)
        rnorm = np.max(np.abs(res))
        if rnorm < tol:
            break
        stalled = stalled + 1 if rnorm > 0.5 * best else 0
        best = min(best, rnorm)
        if stalled >= 3 and best < 1e-9:
            break
        jac_diag = diag + 1.0 - p * np.abs(ua) ** (p - 1)
        ab = np.zeros((3, nact))
        ab[0, 1:] = upper[:-1]
        ab[1] = jac_diag
        ab[2, :-1] = lower[1:]
        ua = ua - solve_banded((1, 1), ab, res)
    else:
        raise ConvergenceError("Newton relaxation for the ground state did not converge")
    full = np.zeros(grid.m)
    full[:-1] = ua
    return full


def ode_residual(profile, p):
    """Sup-norm of the discrete ground-state equation over the active nodes."""
    grid, d = profile.grid, profile.dim
    lower, diag, upper, _, _ = _laplacian_rows(grid, d, include_origin=True)
    u = profile.values[:-1]
    lap = diag * u
    lap[:-1] += upper[:-1] * u[1:]
    lap[1:] += lower[1:] * u[:-1]
    return float(np.max(np.abs(lap + u - np.abs(u) ** p)))


def solve_ground_state(n, p, grid=None):
    """Positive radial ground state of -ΔU + U = U^p in R^{n-1}.

    Shooting on U(0) with bisection brackets the solution, then a Newton
    relaxation on the finite-difference grid drives the discrete residual to
    round-off.  The shooting amplitude is kept on the profile (attribute
    ``shoot_amplitude``) as an independent high-order value of U(0).
    """
    check_p(n, p)
    grid = grid or RadialGrid()
    d = n - 1

    a_lo, a_hi = 1.0 + 1e-9, 2.0
    status, _ = _shoot(a_hi, d, p, grid.r_max)
    tries = 0
    while status != -1:
        a_hi *= 2.0
        tries += 1
        if tries > 40:
            raise ConvergenceError("could not bracket the ground state amplitude")
        status, _ = _shoot(a_hi, d, p, grid.r_max)

    sol_keep = None
    for _ in range(80):
        a_mid = 0.5 * (a_lo + a_hi)
        status, sol = _shoot(a_mid, d, p, grid.r_max)
        if status == -1:
            a_hi = a_mid
        else:
            a_lo = a_mid
            if status == 0:
                sol_keep = sol
        if a_hi - a_lo < 1e-15 * a_hi:
            break
    a_star = 0.5 * (a_lo + a_hi)
    if sol_keep is None:
        _, sol_keep = _shoot(a_lo, d, p, grid.r_max)

    r = grid.nodes
    u = np.zeros(grid.m)
    r_reach = sol_keep.t[-1]
    mid = (r > 1e-6) & (r <= r_reach)
    u[mid] = sol_keep.sol(r[mid])[0]
    u[0] = a_star
    tail = r > r_reach
    if tail.any():
        u[tail] = max(u[~tail][-1], 1e-280) * np.exp(-(r[tail] - r_reach))
    u = np.maximum(u, 0.0)

    u = _newton_polish(u, d, p, grid)
    if np.any(u[:-1] <= 0) or np.any(np.diff(u[: grid.m - 1]) > 1e-12):
        raise ConvergenceError("relaxed profile is not positive decreasing")
    rate = _fit_decay_rate(grid, u, d)
    profile = RadialProfile(grid, u, d, decay_rate=rate)
    object.__setattr__(profile, "shoot_amplitude", a_star)
    return profile


_GS_CACHE = {}


def ground_state(n, p, grid=None):
    """Memoized solve_ground_state; profiles are immutable so sharing is safe."""
    grid = grid or RadialGrid()
    key = (n, round(p, 12), grid.r_max, grid.m)
    if key not in _GS_CACHE:
        _GS_CACHE[key] = solve_ground_state(n, p, grid)
    return _GS_CACHE[key]


def scaled_profile(U, f_hat, V_hat, p):
    """Scaling (ĥ, k̂, x' ↦ ĥ·U(k̂ x')) solving -ΔÛ + (f̂² + V̂)Û = Û^p.

    ĥ = (f̂² + V̂)^{1/(p-1)},  k̂ = (f̂² + V̂)^{1/2}.
    """
    if V_hat <= 0:
        raise ValidationError("V_hat must be positive")
    base = f_hat**2 + V_hat
    h_hat = base ** (1.0 / (p - 1.0))
    k_hat = float(np.sqrt(base))

    def evaluator(x):
        return h_hat * U(k_hat * np.asarray(x))

    return h_hat, k_hat, evaluator


# ---------------------------------------------------------------------------
# Sector operators
# ---------------------------------------------------------------------------

def sector_matrix(op, U):
    """Symmetric tridiagonal form of a sector operator.

    Returns (diag, off, weight, idx): the operator on nodal values u is
    similar, via D^{1/2} with D = diag(weight), to the symmetric tridiagonal
    (diag, off) acting on φ = sqrt(weight)·u; idx are the active node indices.
    """
    grid, d = U.grid, op.dim
    if d != U.dim:
        raise ValidationError("operator and profile dimensions disagree")
    include_origin = op.ell == 0
    lower, diag, upper, weight, idx = _laplacian_rows(grid, d, include_origin)
    r = grid.nodes[idx]
    pot = 1.0 + op.shift - op.nonlinear_coeff * U.values[idx] ** (op.p - 1.0)
    if op.ell >= 1 and d >= 2:
        pot = pot + op.ell * (op.ell + d - 2) / r**2
    diag = diag + pot
    off = upper[:-1] * np.sqrt(weight[:-1] / weight[1:])
    return diag, off, weight, idx


def sector_spectrum(op, U, count):
    """Lowest ``count`` eigenpairs of the sector operator, ascending.

    Eigenfunctions are RadialProfiles normalized so that ∫ u² r^{d-1} dr = 1.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    diag, off, weight, idx = sector_matrix(op, U)
    vals, vecs = eigh_tridiagonal(diag, off, select="i",
                                  select_range=(0, count - 1))
    sqrtw = np.sqrt(weight)
    pairs = []
    for j in range(count):
        u = vecs[:, j] / sqrtw
        u /= np.sqrt(np.sum(u**2 * weight))
        full = np.zeros(U.grid.m)
        full[idx] = u
        if full[idx[0] + 1] < 0:  # sign convention: positive just off the origin
            full = -full
        pairs.append((float(vals[j]), U.with_values(full)))
    return pairs


def sector_kernel(op, U):
    """Discrete kernel vectors (|λ| < KERNEL_TOL) in φ-coordinates."""
    diag, off, weight, idx = sector_matrix(op, U)
    vals, vecs = eigh_tridiagonal(diag, off, select="v",
                                  select_range=(-KERNEL_TOL, KERNEL_TOL))
    return vals, vecs, weight, idx


def sector_solve(op, U, rhs, report=False, ill_posed_tol=np.inf):
    """Minimal-norm solution of (sector operator) u = rhs with kernel projection.

    The right-hand side is first projected off the discrete kernel; the
    relative norm of the removed component (against the rhs, both measured
    in the weighted norm) is returned when ``report`` is True.  If it
    exceeds ``ill_posed_tol`` an IllPosedSolveError is raised.
    """
    diag, off, weight, idx = sector_matrix(op, U)
    sqrtw = np.sqrt(weight)
    b = rhs.values[idx] * sqrtw

    _, kvecs, _, _ = sector_kernel(op, U)
    removed = 0.0
    if kvecs.shape[1]:
        coeffs = kvecs.T @ b
        bnorm = float(np.linalg.norm(b))
        removed = float(np.linalg.norm(coeffs)) / max(bnorm, 1e-300)
        if bnorm > 0 and removed > ill_posed_tol:
            raise IllPosedSolveError(
                "sector solve right-hand side lies in the kernel", removed)
        b = b - kvecs @ coeffs

    nact = diag.size
    if kvecs.shape[1] == 0:
        ab = np.zeros((3, nact))
        ab[0, 1:] = off
        ab[1] = diag
        ab[2, :-1] = off
        x = solve_banded((1, 1), ab, b)
    else:
        # bordered system enforces x ⊥ kernel: the minimal-norm solution
        T = diags([off, diag, off], [-1, 0, 1], format="csc")
        V = csc_matrix(kvecs)
        K = bmat([[T, V], [V.T, None]], format="csc")
        sol = splu(K).solve(np.concatenate([b, np.zeros(kvecs.shape[1])]))
        x = sol[:nact]

    u = np.zeros(U.grid.m)
    u[idx] = x / sqrtw
    out = U.with_values(u)
    if report:
        return out, removed
    return out


def apply_sector(op, U, prof):
    """Apply the sector operator to a profile (for round-trip checks)."""
    diag, off, weight, idx = sector_matrix(op, U)
    phi = prof.values[idx] * np.sqrt(weight)
    y = diag * phi
    y[:-1] += off * phi[1:]
    y[1:] += off * phi[:-1]
    u = np.zeros(U.grid.m)
    u[idx] = y / np.sqrt(weight)
    return prof.with_values(u)
