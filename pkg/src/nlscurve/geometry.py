"""Closed curves in flat R^n: arc length, parallel normal frames, curvature.

A concentration curve is stored as M samples equispaced in arc length,
together with unit tangents, an orthonormal normal frame transported
parallelly with respect to the normal connection, and the curvature vector
H = γ'' expressed in that frame.  In flat space a parallel normal frame obeys
E_j' = -H^j T, which makes the Fermi metric around the curve exactly

    g_11 = (1 - <H, y>)²,   g_1j = 0,   g_jl = δ_jl,

in the normal coordinates y induced by the frame.  The loop holonomy of the
normal connection is measured after one round trip and distributed uniformly
as a closing rotation, so the stored frame is exactly L-periodic.

Potentials are given in a small arithmetic expression language over the
ambient coordinates (x1..xn, r = |x|, r2 = |x|²) that is evaluated through a
restricted AST walk — config-file friendly and with no code injection.
"""

import ast
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline
from scipy.linalg import expm, logm

from .errors import ValidationError

_ALLOWED_FUNCS = {
    "exp": np.exp, "sqrt": np.sqrt, "log": np.log,
    "sin": np.sin, "cos": np.cos, "tanh": np.tanh, "abs": np.abs,
}

_ALLOWED_BINOPS = {
    ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
    ast.Div: np.divide, ast.Pow: np.power,
}


class PotentialField:
    """Scalar field on R^n from an arithmetic expression string.

    Variables: x1..xn (coordinates), r (|x|), r2 (|x|²).  Operators: + - * /
    ** and unary minus; functions: exp, sqrt, log, sin, cos, tanh, abs.
    Everything else is rejected at parse time.
    """

    def __init__(self, expression, n):
        self.expression = expression
        self.n = n
        try:
            tree = ast.parse(expression, mode="eval")
        except SyntaxError as exc:
            raise ValidationError(f"cannot parse potential {expression!r}: {exc}") from exc
        self._validate(tree.body)
        self._tree = tree.body

    def _validate(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ValidationError("only numeric constants allowed in potentials")
        elif isinstance(node, ast.Name):
            names = {f"x{i + 1}" for i in range(self.n)} | {"r", "r2"}
            if node.id not in names:
                raise ValidationError(f"unknown symbol {node.id!r} in potential")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _ALLOWED_BINOPS:
                raise ValidationError("operator not allowed in potential")
            self._validate(node.left)
            self._validate(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise ValidationError("unary operator not allowed in potential")
            self._validate(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _ALLOWED_FUNCS \
                    or node.keywords or len(node.args) != 1:
                raise ValidationError("function not allowed in potential")
            self._validate(node.args[0])
        else:
            raise ValidationError(f"construct {type(node).__name__} not allowed in potential")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _ALLOWED_BINOPS[type(node.op)](self._eval(node.left, env),
                                                  self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, env)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Call):
            return _ALLOWED_FUNCS[node.func.id](self._eval(node.args[0], env))
        raise AssertionError("unreachable: node was validated")

    def __call__(self, points):
        """Evaluate on points of shape (..., n)."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.n:
            raise ValidationError(f"points must have last dimension {self.n}")
        env = {f"x{i + 1}": pts[..., i] for i in range(self.n)}
        env["r2"] = np.sum(pts**2, axis=-1)
        env["r"] = np.sqrt(env["r2"])
        out = self._eval(self._tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), pts.shape[:-1]).copy()

    def gradient(self, points, step=1e-5):
        """Central-difference gradient, shape (..., n)."""
        pts = np.asarray(points, dtype=float)
        out = np.empty_like(pts)
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = step
            out[..., i] = (self(pts + e) - self(pts - e)) / (2 * step)
        return out

    def directional_derivative(self, points, direction, step=1e-5):
        d = np.asarray(direction)
        return (self(points + step * d) - self(points - step * d)) / (2 * step)

    def second_directional(self, points, d1, d2, step=1e-4):
        """Hessian contraction D²V[d1, d2] by central differences."""
        d1 = np.asarray(d1)
        d2 = np.asarray(d2)
        pp = self(points + step * (d1 + d2))
        pm = self(points + step * (d1 - d2))
        mp = self(points - step * (d1 - d2))
        mm = self(points - step * (d1 + d2))
        return (pp - pm - mp + mm) / (4 * step**2)


@dataclass(frozen=True)
class CurveSpec:
    """Closed-curve specification: circle, ellipse, or sampled loop."""

    kind: str
    n: int = 2
    radius: float = 1.0
    a: float = 2.0
    b: float = 1.0
    center: tuple = None
    points: np.ndarray = None  # (N, n) samples of a closed loop, kind='parametric'

    def __post_init__(self):
        if self.kind not in ("circle", "ellipse", "parametric"):
            raise ValidationError(f"unknown curve kind {self.kind!r}")
        if self.n < 2:
            raise ValidationError("ambient dimension must be >= 2")
        if self.kind == "circle" and self.radius <= 0:
            raise ValidationError("circle radius must be positive")
        if self.kind == "ellipse" and (self.a <= 0 or self.b <= 0):
            raise ValidationError("ellipse semi-axes must be positive")
        if self.kind == "parametric" and self.points is None:
            raise ValidationError("parametric curve needs sample points")


@dataclass
class CurveData:
    """Sampled closed curve with parallel normal frame and curvature.

    positions[i], tangents[i] are in R^n; frame[i, j] is the j-th normal
    frame field E_j (j = 0..n-2); curvature[i, j] = <H, E_j> at node i.
    ``evaluators`` optionally holds exact callables (position, tangent,
    frame, curvature) of arc length, used when available to avoid
    interpolation error on analytic shapes.
    """

    s: np.ndarray                 # arc-length nodes, uniform on [0, L)
    L: float
    positions: np.ndarray         # (M, n)
    tangents: np.ndarray          # (M, n)
    frame: np.ndarray             # (M, n-1, n)
    curvature: np.ndarray         # (M, n-1) components of H in the frame
    holonomy_angle: float
    holonomy_generator: np.ndarray = None   # skew (n-1, n-1), zero when closed
    evaluators: dict = field(default=None, repr=False)

    @property
    def M(self):
        return self.s.size

    @property
    def n(self):
        return self.positions.shape[1]

    def curvature_vectors(self):
        """H as ambient vectors, shape (M, n)."""
        return np.einsum("ij,ijk->ik", self.curvature, self.frame)

    def frame_at(self, sq):
        """Frame and related data at arbitrary arc lengths (exact or spline)."""
        sq = np.mod(np.asarray(sq, dtype=float), self.L)
        if self.evaluators is not None:
            ev = self.evaluators
            return (ev["position"](sq), ev["tangent"](sq), ev["frame"](sq),
                    ev["curvature"](sq))
        pos = self._periodic_spline("positions")(sq)
        tan = self._periodic_spline("tangents")(sq)
        frm = self._periodic_spline("frame")(sq)
        cur = self._periodic_spline("curvature")(sq)
        return pos, tan, frm, cur

    def _periodic_spline(self, name):
        cache = self.__dict__.setdefault("_splines", {})
        if name not in cache:
            arr = getattr(self, name)
            snod = np.append(self.s, self.L)
            vals = np.concatenate([arr, arr[:1]], axis=0)
            cache[name] = CubicSpline(snod, vals, axis=0, bc_type="periodic")
        return cache[name]

    def to_csv(self, path):
        cols = [self.s, *self.positions.T, *self.curvature.T]
        header = ("s," + ",".join(f"x{i+1}" for i in range(self.n)) + ","
                  + ",".join(f"H{j+1}" for j in range(self.n - 1)))
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header,
                   comments="")


@dataclass
class PotentialData:
    """Potential and its normal derivatives sampled along a curve."""

    values: np.ndarray            # (M,)
    grad_normal: np.ndarray       # (M, n-1) components <∇V, E_j>
    hess_normal: np.ndarray       # (M, n-1, n-1) components D²V[E_j, E_l]
    metric_d2g11: np.ndarray      # (M, n-1, n-1) = 2 H^j H^l (flat Fermi metric)

    def to_csv(self, path):
        M, nm1 = self.grad_normal.shape
        cols = [self.values] + [self.grad_normal[:, j] for j in range(nm1)]
        header = "V," + ",".join(f"dV{j+1}" for j in range(nm1))
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header,
                   comments="")


def _circle_evaluators(R, n, center):
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)

    def position(s):
        s = np.atleast_1d(s)
        phi = s / R
        out = np.zeros(s.shape + (n,))
        out[..., 0] = R * np.cos(phi)
        out[..., 1] = R * np.sin(phi)
        return out + c

    def tangent(s):
        s = np.atleast_1d(s)
        phi = s / R
        out = np.zeros(s.shape + (n,))
        out[..., 0] = -np.sin(phi)
        out[..., 1] = np.cos(phi)
        return out

    def frame(s):
        s = np.atleast_1d(s)
        phi = s / R
        out = np.zeros(s.shape + (n - 1, n))
        out[..., 0, 0] = np.cos(phi)   # E_1 = outward radial
        out[..., 0, 1] = np.sin(phi)
        for j in range(1, n - 1):      # remaining frame fields are constant axes
            out[..., j, j + 1] = 1.0
        return out

    def curvature(s):
        s = np.atleast_1d(s)
        out = np.zeros(s.shape + (n - 1,))
        out[..., 0] = -1.0 / R         # H = γ'' points inward
        return out

    return {"position": position, "tangent": tangent, "frame": frame,
            "curvature": curvature}


def _param_functions(spec):
    """(γ, γ', γ'') as functions of a 2π-periodic parameter.

    Closed forms for circle and ellipse; periodic cubic spline derivatives
    for sampled loops.
    """
    if spec.kind in ("circle", "ellipse"):
        a = spec.radius if spec.kind == "circle" else spec.a
        b = spec.radius if spec.kind == "circle" else spec.b

        def make(fa, fb, shift):
            def f(t):
                t = np.atleast_1d(t)
                out = np.zeros(t.shape + (spec.n,))
                out[..., 0] = fa(t)
                out[..., 1] = fb(t)
                if shift and spec.center is not None:
                    out += np.asarray(spec.center)
                return out
            return f

        gamma = make(lambda t: a * np.cos(t), lambda t: b * np.sin(t), True)
        dgamma = make(lambda t: -a * np.sin(t), lambda t: b * np.cos(t), False)
        d2gamma = make(lambda t: -a * np.cos(t), lambda t: -b * np.sin(t), False)
        return gamma, dgamma, d2gamma

    pts = np.asarray(spec.points, dtype=float)
    if pts.shape[0] < 8:
        raise ValidationError("parametric curve needs at least 8 samples")
    t = np.linspace(0, 2 * np.pi, pts.shape[0] + 1)
    closed = np.concatenate([pts, pts[:1]], axis=0)
    spline = CubicSpline(t, closed, axis=0, bc_type="periodic")
    d1 = spline.derivative(1)
    d2 = spline.derivative(2)
    wrap = lambda f: (lambda tt: f(np.mod(tt, 2 * np.pi)))
    return wrap(spline), wrap(d1), wrap(d2)


def _check_simple(positions):
    """Cheap self-intersection test on the sample polyline."""
    M = positions.shape[0]
    step = np.max(np.linalg.norm(np.diff(positions, axis=0, append=positions[:1]),
                                 axis=1))
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    idx = np.arange(M)
    sep = np.minimum(np.abs(idx[:, None] - idx[None, :]),
                     M - np.abs(idx[:, None] - idx[None, :]))
    bad = (sep > max(4, M // 64)) & (dist < 0.5 * step)
    if np.any(bad):
        raise ValidationError("curve appears to self-intersect")


def build_curve(spec, M=256):
    """Arc-length sampled CurveData with a parallel, L-periodic normal frame.

    The frame is propagated by the rotation in span(T_i, T_{i+1}) that maps
    T_i to T_{i+1} (discrete parallel transport, O(M^-2) accurate); the loop
    holonomy is then spread uniformly so the stored frame closes exactly.
    """
    if M < 64:
        raise ValidationError("need at least 64 curve samples")
    gamma, dgamma, d2gamma = _param_functions(spec)

    # arc length via fine sampling + Simpson; invert to uniform-s parameters
    fine = 1 << 16
    t_fine = np.linspace(0, 2 * np.pi, fine + 1)
    speed = np.linalg.norm(dgamma(t_fine), axis=1)
    s_fine = np.concatenate([[0.0], cumulative_simpson(speed, x=t_fine)])
    L = float(s_fine[-1])
    s_nodes = np.arange(M) * (L / M)
    t_nodes = np.interp(s_nodes, s_fine, t_fine)

    # few Newton corrections of t(s): ds/dt = |γ'(t)|
    s_spline = CubicSpline(t_fine, s_fine)
    for _ in range(3):
        spd_here = np.linalg.norm(dgamma(t_nodes), axis=1)
        t_nodes = t_nodes - (s_spline(t_nodes) - s_nodes) / spd_here

    positions = gamma(t_nodes)
    _check_simple(positions)

    dgdt = dgamma(t_nodes)
    d2gdt2 = d2gamma(t_nodes)
    spd = np.linalg.norm(dgdt, axis=1)
    tangents = dgdt / spd[:, None]
    # H = d²γ/ds² = (γ_tt - (γ_tt·T)T)/|γ_t|²
    Hvec = (d2gdt2 - np.sum(d2gdt2 * tangents, axis=1)[:, None] * tangents) / (spd**2)[:, None]

    n = spec.n
    # initial normal frame at node 0: complete T_0 to an orthonormal basis
    base = np.eye(n)
    cols = [tangents[0]]
    for v in base:
        w = v - sum(np.dot(v, c) * c for c in cols)
        if np.linalg.norm(w) > 1e-8:
            cols.append(w / np.linalg.norm(w))
        if len(cols) == n:
            break
    frame0 = np.array(cols[1:])

    frame = np.zeros((M, n - 1, n))
    frame[0] = frame0
    for i in range(M - 1):
        frame[i + 1] = frame[i] @ _transport_rotation(tangents[i], tangents[i + 1]).T
    closing = _transport_rotation(tangents[-1], tangents[0])
    frame_end = frame[-1] @ closing.T

    # holonomy: rotation in the normal space at node 0 mapping frame0 to frame_end
    Rhol = frame_end @ frame0.T          # (n-1, n-1), orthogonal
    if n == 2:
        holonomy_angle = 0.0 if Rhol[0, 0] > 0 else np.pi
        gen = np.zeros((1, 1))
    else:
        gen = np.real(logm(Rhol))        # skew generator of the holonomy
        holonomy_angle = float(np.linalg.norm(gen) / np.sqrt(2))
    # distribute the closing rotation uniformly in arc length
    if holonomy_angle > 1e-14:
        for i in range(M):
            corr = expm(-gen * (s_nodes[i] / L))
            frame[i] = corr @ frame[i]

    # re-orthonormalize against accumulated rounding
    for i in range(M):
        frame[i] = _gram_schmidt_normal(frame[i], tangents[i])

    curvature = np.einsum("ik,ijk->ij", Hvec, frame)

    evaluators = None
    if spec.kind == "circle" and abs(holonomy_angle) < 1e-12:
        evaluators = _circle_evaluators(spec.radius, n, spec.center)

    return CurveData(s=s_nodes, L=L, positions=positions, tangents=tangents,
                     frame=frame, curvature=curvature,
                     holonomy_angle=holonomy_angle,
                     holonomy_generator=(gen if n > 2 else np.zeros((1, 1))),
                     evaluators=evaluators)


def straight_segment_curve(L, M, n=2):
    """Periodic straight-segment harness (not a closed curve).

    Useful for manufactured-solution tests: zero curvature, constant frame,
    arc length identified with the first coordinate modulo L.
    """
    sb = np.arange(M) * (L / M)
    positions = np.zeros((M, n))
    positions[:, 0] = sb
    tangents = np.zeros((M, n))
    tangents[:, 0] = 1.0
    frame = np.zeros((M, n - 1, n))
    for j in range(n - 1):
        frame[:, j, j + 1] = 1.0
    curvature = np.zeros((M, n - 1))
    return CurveData(s=sb, L=float(L), positions=positions, tangents=tangents,
                     frame=frame, curvature=curvature, holonomy_angle=0.0)


def _transport_rotation(t0, t1):
    """Rotation in span(t0, t1) mapping t0 to t1 (identity elsewhere)."""
    n = t0.size
    c = float(np.dot(t0, t1))
    w = t1 - c * t0
    nw = np.linalg.norm(w)
    if nw < 1e-15:
        return np.eye(n)
    w = w / nw
    s = nw  # sin of the rotation angle; c its cos (|t0|=|t1|=1)
    R = np.eye(n)
    R += (c - 1) * (np.outer(t0, t0) + np.outer(w, w))
    R += s * (np.outer(w, t0) - np.outer(t0, w))
    return R


def _gram_schmidt_normal(frame_i, tangent):
    out = []
    for v in frame_i:
        w = v - np.dot(v, tangent) * tangent
        for u in out:
            w = w - np.dot(w, u) * u
        out.append(w / np.linalg.norm(w))
    return np.array(out)


def sample_potential(V, curve, bounds=None, grad_step=1e-5, hess_step=1e-4):
    """Sample V and its normal derivatives along the curve.

    Normal gradient and Hessian are computed by central differences along the
    frame directions.  Fills the flat-metric second derivatives
    ∂²_{jl} g_11 = 2 H^j H^l alongside.  ``bounds``, when given, is a pair
    (V1, V2) used to validate 0 < V1 <= V <= V2 on the curve.
    """
    pos = curve.positions
    vals = V(pos)
    if np.any(vals <= 0):
        raise ValidationError("potential must be positive along the curve")
    if bounds is not None:
        V1, V2 = bounds
        if np.any(vals < V1 - 1e-12) or np.any(vals > V2 + 1e-12):
            raise ValidationError("potential leaves the configured bounds on the curve")

    M, nm1 = curve.M, curve.n - 1
    grad = np.zeros((M, nm1))
    hess = np.zeros((M, nm1, nm1))
    for j in range(nm1):
        Ej = curve.frame[:, j, :]
        grad[:, j] = V.directional_derivative(pos, Ej, step=grad_step)
        for l in range(j, nm1):
            El = curve.frame[:, l, :]
            hess[:, j, l] = V.second_directional(pos, Ej, El, step=hess_step)
            hess[:, l, j] = hess[:, j, l]

    d2g11 = 2.0 * np.einsum("ij,il->ijl", curve.curvature, curve.curvature)
    return PotentialData(values=vals, grad_normal=grad, hess_normal=hess,
                         metric_d2g11=d2g11)


def tube_volume_coarea(curve, rho):
    """Volume of the tube of radius rho via the co-area factorization.

    The flat Fermi volume element is (1 - <H, y>) dy ds; the linear term
    integrates to zero over the symmetric cross-section, so the volume is
    L · |B^{n-1}_rho| — checked against this quadrature in tests.
    """
    nm1 = curve.n - 1
    q = 64
    # radial-angular quadrature of ∫ (1 - <H,y>) dy over the ball, per node
    if nm1 == 1:
        y = np.linspace(-rho, rho, 2 * q + 1)
        w = np.full(y.size, y[1] - y[0])
        w[0] = w[-1] = 0.5 * (y[1] - y[0])
        sections = ((1.0 - curve.curvature[:, 0][:, None] * y[None, :]) * w).sum(axis=1)
    else:
        # <H, y> integrates to zero exactly over any origin-symmetric node set
        rng = np.random.default_rng(7)
        pts = rng.normal(size=(2048, nm1))
        radii = rng.random(2048) ** (1.0 / nm1) * rho
        pts = pts / np.linalg.norm(pts, axis=1)[:, None] * radii[:, None]
        pts = np.concatenate([pts, -pts], axis=0)
        ball = _ball_volume(nm1, rho)
        vals = 1.0 - curve.curvature @ pts.T
        sections = ball * vals.mean(axis=1)
    return float(np.sum(sections) * (curve.L / curve.M))


def _ball_volume(d, rho):
    from math import gamma, pi
    return pi ** (d / 2) / gamma(d / 2 + 1) * rho**d
