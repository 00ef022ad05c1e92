"""Discretized tube around the scaled curve and the NLS operator on it.

Coordinates: s along the dilated curve (s̄ = εs, s ∈ [0, L/ε)) and normal
coordinates z ∈ R^{n-1} in the parallel frame.  In flat space the Fermi
metric is exact,

    g_11 = (1 - ε<H(εs), z>)² =: a²,    g_1j = 0,    g_jl = δ_jl,

so the operator

    S_ε(ψ) = -Δ_g ψ + V(εx)ψ - |ψ|^{p-1}ψ

has Laplacian a^{-2}∂²_s ψ - a^{-3}(∂_s a)∂_s ψ + Σ_j (∂²_j ψ - εH^j/a ∂_j ψ)
with ∂_j a = -εH^j exact (a is linear in z) and ∂_s a = -ε²<H'(εs), z>.

Fields with a nonzero phase winding over one period are stored as twisted
arrays: ψ(s + L/ε, z) = e^{-iΔ}ψ(s, z), and the finite-difference stencils
wrap across the seam with that phase.  z-boundaries carry zero padding,
exact because the cutoff vanishes on the outermost nodes.

The cross-section cutoff is η̄(K(εs)|z| - ε^{-δ̄}) with η̄ the standard C^∞
step: identically 1 for |z| ≤ ε^{-δ̄}/K and 0 beyond (ε^{-δ̄}+1)/K.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

S_GRID_CAP = 1 << 16


def smooth_step(t):
    """C^∞ non-increasing step: 1 for t <= 0, 0 for t >= 1."""
    t = np.asarray(t, dtype=float)
    g = np.zeros_like(t)
    pos = t > 0
    g[pos] = np.exp(-1.0 / np.maximum(t[pos], 1e-12))
    gm = np.zeros_like(t)
    neg = t < 1
    gm[neg] = np.exp(-1.0 / np.maximum(1.0 - t[neg], 1e-12))
    return gm / (g + gm)


@dataclass
class TubeGrid:
    """Tensor grid (s, z) around the scaled curve with metric and cutoff data.

    Shapes: s-dependent arrays are (N_s,); z-dependent are z_shape; mixed
    are (N_s, *z_shape).  ``mask_core`` marks nodes where the cutoff is
    identically 1 with a stencil-width margin — the region used for
    residual norms.
    """

    eps: float
    delta_bar: float
    p: float
    s: np.ndarray                 # scaled arc length, N_s nodes on [0, L/eps)
    sbar: np.ndarray              # = eps * s, uniform on [0, L)
    L: float
    z_axes: list                  # one 1D array per normal direction
    z_shape: tuple
    znorm: np.ndarray             # |z| per z-node, shape z_shape
    zhat: np.ndarray              # unit directions, shape (d, *z_shape)
    zcomp: np.ndarray             # coordinates, shape (d, *z_shape)
    K: np.ndarray                 # sqrt(V) along the curve, (N_s,)
    cutoff: np.ndarray            # (N_s, *z_shape)
    mask_core: np.ndarray         # bool, (N_s, *z_shape)
    metric_a: np.ndarray          # 1 - eps<H, z>, (N_s, *z_shape)
    ds_a: np.ndarray              # ∂_s a = -eps²<H'(εs), z>, (N_s, *z_shape)
    H_comp: np.ndarray            # curvature components per node, (N_s, d)
    V_amb: np.ndarray             # ambient potential at grid points, (N_s, *z_shape)
    ds: float
    dz: float
    core_radius: np.ndarray = None   # per-node radius of the core mask
    stencil_order: int = 4

    @property
    def n_s(self):
        return self.s.size

    @property
    def d(self):
        return len(self.z_axes)


def build_tube_grid(curve, V, sf, eps, p, delta_bar=0.25, radius_factor=1.0,
                    dz_factor=10.0, stencil_order=4, n_s=None,
                    cutoff_off=False):
    """Tube grid at the resolution of the given curve sampling.

    The s̄ samples are the curve nodes, so the tube has N_s = curve.M nodes
    along the curve (build the curve at M ≈ base_M/ε to honor a fixed target
    s-spacing).  The z extent is radius_factor·(ε^{-δ̄}+1)/min K plus the
    stencil margin; spacing is 1/(dz_factor·max k̂).  ``cutoff_off`` replaces
    the cutoff by 1 (reference runs on wider grids).
    """
    if n_s is not None and n_s != curve.M:
        raise ValidationError("tube resolution must match the curve sampling")
    N_s = curve.M
    if N_s > S_GRID_CAP:
        raise ValidationError(f"s-grid exceeds the cap {S_GRID_CAP}")
    sbar = curve.s.copy()
    L = curve.L
    s = sbar / eps
    ds = (L / N_s) / eps

    Kcurve = np.sqrt(V(curve.positions))
    kmax = float(np.max(sf.k))
    dz = 1.0 / (dz_factor * kmax)
    margin = 3 if stencil_order == 4 else 2
    R_core = eps ** (-delta_bar) / np.min(Kcurve)
    R_outer = radius_factor * (eps ** (-delta_bar) + 1.0) / np.min(Kcurve)
    half = int(np.ceil(R_outer / dz)) + margin
    axis = np.arange(-half, half + 1) * dz

    d = curve.n - 1
    z_axes = [axis.copy() for _ in range(d)]
    mesh = np.meshgrid(*z_axes, indexing="ij")
    zcomp = np.stack(mesh)                           # (d, *z_shape)
    z_shape = zcomp.shape[1:]
    znorm = np.sqrt(np.sum(zcomp**2, axis=0))
    zhat = np.where(znorm > 0, zcomp / np.maximum(znorm, 1e-300), 0.0)

    if cutoff_off:
        cutoff = np.ones((N_s,) + znorm.shape)
    else:
        cutoff = smooth_step(Kcurve.reshape(-1, *([1] * d)) * znorm[None]
                             - eps ** (-delta_bar))
    # core: cutoff ≡ 1 with a resolution-independent physical margin (at
    # least the stencil width), so reported norms are grid-stable
    phys_margin = np.maximum(0.5 / Kcurve, margin * dz)
    core_r = (eps ** (-delta_bar)) / Kcurve - phys_margin
    mask_core = znorm[None] <= core_r.reshape(-1, *([1] * d))

    Hc = curve.curvature                              # (N_s, d)
    Hz = np.tensordot(Hc, zcomp, axes=(1, 0))         # (N_s, *z_shape)
    metric_a = 1.0 - eps * Hz
    # the field is supported in the cutoff ball; tensor corners beyond it may
    # legitimately pass the focal distance, where the metric factor is
    # clamped (values there are identically zero)
    ball = znorm <= R_outer + (margin + 1) * dz
    if np.any(metric_a[np.broadcast_to(ball[None], metric_a.shape)] <= 0):
        raise ValidationError("tube radius exceeds the focal distance: "
                              "metric factor lost positivity inside the "
                              "cutoff ball")
    metric_a = np.where(ball[None], metric_a, np.maximum(metric_a, 0.5))

    # H'(s̄) by spectral differentiation of the curvature components
    freqs = 2j * np.pi * np.fft.fftfreq(N_s, d=L / N_s)
    dH = np.real(np.fft.ifft(freqs[:, None] * np.fft.fft(Hc, axis=0), axis=0))
    dHz = np.tensordot(dH, zcomp, axes=(1, 0))
    ds_a = -(eps**2) * dHz

    # ambient points: γ(s̄) + Σ_j (εz_j) E_j(s̄)
    pos = curve.positions                              # (N_s, n)
    frame = curve.frame                                # (N_s, d, n)
    amb = pos.reshape(N_s, *([1] * d), curve.n) \
        + eps * np.tensordot(zcomp, frame, axes=(0, 1)).transpose(
            [d] + list(range(d)) + [d + 1])
    V_amb = V(amb)

    return TubeGrid(eps=eps, delta_bar=delta_bar, p=p, s=s, sbar=sbar, L=L,
                    z_axes=z_axes, z_shape=z_shape, znorm=znorm, zhat=zhat,
                    zcomp=zcomp, K=Kcurve, cutoff=cutoff, mask_core=mask_core,
                    metric_a=metric_a, ds_a=ds_a, H_comp=Hc, V_amb=V_amb,
                    ds=ds, dz=dz, core_radius=core_r,
                    stencil_order=stencil_order)


# ---------------------------------------------------------------------------
# Finite-difference machinery
# ---------------------------------------------------------------------------

def _shift_s(values, k, twist):
    """values[i+k] with the twisted periodic wrap ψ(s+L/ε) = e^{-iΔ}ψ(s)."""
    out = np.roll(values, -k, axis=0)
    if k > 0:
        out[-k:] *= np.exp(-1j * twist)
    elif k < 0:
        out[:-k] *= np.exp(1j * twist)
    return out


def _diff_z(values, axis, dz, order, kind):
    """4th (or 2nd) order centered z-derivative with zero padding."""
    ax = axis + 1  # axis 0 is s
    pad = [(0, 0)] * values.ndim
    w = 2 if order == 4 else 1
    pad[ax] = (w, w)
    v = np.pad(values, pad)
    sl = lambda k: np.take(v, np.arange(w + k, w + k + values.shape[ax]), axis=ax)
    if kind == "d2":
        if order == 4:
            return (-sl(-2) + 16 * sl(-1) - 30 * sl(0) + 16 * sl(1) - sl(2)) / (12 * dz**2)
        return (sl(-1) - 2 * sl(0) + sl(1)) / dz**2
    if order == 4:
        return (sl(-2) - 8 * sl(-1) + 8 * sl(1) - sl(2)) / (12 * dz)
    return (sl(1) - sl(-1)) / (2 * dz)


def apply_S_eps(values, grid, twist=0.0):
    """S_ε(ψ) = -Δ_g ψ + V(εx)ψ - |ψ|^{p-1}ψ on the tube grid.

    Second-order stencils in s (twisted periodic), 4th-order (default) in z
    with exact zero padding outside the cutoff support.
    """
    a = grid.metric_a
    ds = grid.ds

    d2s = (_shift_s(values, 1, twist) - 2 * values + _shift_s(values, -1, twist)) / ds**2
    d1s = (_shift_s(values, 1, twist) - _shift_s(values, -1, twist)) / (2 * ds)
    lap = d2s / a**2 - grid.ds_a / a**3 * d1s

    for j in range(grid.d):
        d2z = _diff_z(values, j, grid.dz, grid.stencil_order, "d2")
        d1z = _diff_z(values, j, grid.dz, grid.stencil_order, "d1")
        Hj = grid.H_comp[:, j].reshape(-1, *([1] * grid.d))
        lap += d2z - (grid.eps * Hj / a) * d1z

    return -lap + grid.V_amb * values - np.abs(values) ** (grid.p - 1) * values


def weighted_norm(values, grid, decay_weight, mode="sup", region="core",
                  z_window=None):
    """Discrete weighted norms e^{𝔭(εs)|z|}·|values|.

    mode 'sup': max over the region; mode 'l2s': ℓ² in s̄ of the per-slice
    weighted sup, sqrt(Σ_s Δs̄ (sup_z ...)²).  region 'core' restricts to the
    cutoff-interior mask, 'all' uses every node; ``z_window`` additionally
    restricts to |z| <= z_window.
    """
    w = np.asarray(decay_weight, dtype=float)
    if w.ndim == 0:
        w = np.full(grid.n_s, float(w))
    amp = np.exp(w.reshape(-1, *([1] * grid.d)) * grid.znorm[None]) * np.abs(values)
    if region == "core":
        mask = grid.mask_core.copy()
    elif region == "all":
        mask = np.ones_like(grid.mask_core)
    else:
        raise ValidationError(f"unknown region {region!r}")
    if z_window is not None:
        mask &= (grid.znorm <= z_window)[None]
    amp = np.where(mask, amp, 0.0)
    if mode == "sup":
        return float(np.max(amp))
    if mode == "l2s":
        per_slice = amp.reshape(grid.n_s, -1).max(axis=1)
        dsbar = grid.L / grid.n_s
        return float(np.sqrt(np.sum(per_slice**2) * dsbar))
    raise ValidationError(f"unknown norm mode {mode!r}")


def coarea_weights(grid):
    """Quadrature weights ds·Πdz for plain integrals over the tube."""
    return np.full((grid.n_s,) + grid.z_shape,
                   grid.ds * grid.dz ** grid.d)


def convergence_order(eps_list, norms):
    """Log-log least-squares slope of norms against eps.

    Returns (slope, intercept, per-point deviations from the fit).  A
    non-monotone norm sequence triggers a warning; the fit is still reported.
    """
    import warnings

    eps_list = np.asarray(eps_list, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if eps_list.size < 3:
        raise ValidationError("need at least 3 eps values for an order fit")
    if np.any(norms <= 0):
        raise ValidationError("norms must be positive for a log-log fit")
    order = np.argsort(eps_list)
    if np.any(np.diff(norms[order]) < 0):
        warnings.warn("norms are not monotone in eps; order fit may be "
                      "unreliable", stacklevel=2)
    x, y = np.log(eps_list), np.log(norms)
    slope, intercept = np.polyfit(x, y, 1)
    dev = y - (slope * x + intercept)
    return float(slope), float(intercept), dev
