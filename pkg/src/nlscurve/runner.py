"""Configuration-driven orchestration of the verification pipelines.

A run file is a sectioned key-value document (INI syntax); the selected
stages execute in dependency order

    profile -> geometry -> scalings -> criticality -> branches
            -> resonance -> gap_scan -> residual

and emit a JSON summary plus CSV artifacts with deterministic names.  The
exit status is nonzero iff any acceptance assertion selected in the config
fails.  Usage:

    python -m nlscurve.runner RUNFILE [-o OUTDIR] [--stages s1,s2] [-v]

The default output root comes from NLSCURVE_OUT when set.
"""

import argparse
import configparser
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import CurveSpec, PotentialField, build_curve, sample_potential
from .radial import RadialGrid, ground_state, ode_residual, check_p
from .scalings import (assemble_jacobi, compute_exponents, compute_scalings,
                       euler_residual, reduced_functional, weighted_eigenbasis)
from .spectrum import alpha_field, find_alpha_bar, trace_branches
from .resonance import (gap_scan, gap_scan_oracle, q_integrals,
                        resonance_eigenpairs, verify_coupled_system)
from .ansatz import residual_study

ALL_STAGES = ("profile", "geometry", "scalings", "criticality", "branches",
              "resonance", "gap_scan", "residual")

DEFAULTS = {
    "problem": {"n": "2", "p": "3.0", "phase_speed": "0.0", "f1_drift": "0.0",
                "jacobi_drift": "0.0", "potential": "1"},
    "curve": {"kind": "circle", "radius": "1.0", "a": "2.0", "b": "1.0",
              "samples": "256"},
    "grids": {"radial_m": "3000", "radial_rmax": "30.0", "tube_delta_bar": "0.25",
              "varsigma": "0.5", "dz_factor": "16"},
    "resonance": {"delta": "0.3", "eps": "0.05", "gap_threshold": "0.1",
                  "gap_eps_grid": "0.08:0.02:25"},
    "residual": {"eps_list": "0.2,0.1,0.05", "levels": "0,1,2", "base_samples": "256"},
    "run": {"stages": "profile", "out_dir": "", "assert_acceptance": "false"},
}


@dataclass
class RunConfig:
    """Validated run configuration."""

    n: int
    p: float
    phase_speed: float
    f1_drift: float
    jacobi_drift: float
    potential: str
    curve: CurveSpec
    curve_samples: int
    radial: RadialGrid
    delta_bar: float
    varsigma: float
    dz_factor: float
    delta: float
    res_eps: float
    gap_threshold: float
    gap_eps_grid: np.ndarray
    residual_eps: list
    residual_levels: list
    residual_base_M: int
    stages: list
    out_dir: str
    assert_acceptance: bool
    violations: list = field(default_factory=list)


def _parse_float_list(text):
    return [float(tok) for tok in text.replace(";", ",").split(",") if tok.strip()]


def parse_config(path):
    """Parse and fully validate a run file; aggregate all violations."""
    if not os.path.exists(path):
        raise ValidationError(f"run file {path!r} does not exist")
    cp = configparser.ConfigParser()
    cp.read_dict(DEFAULTS)
    read = cp.read(path)
    if not read:
        raise ValidationError(f"could not parse run file {path!r}")

    known = set(DEFAULTS)
    for section in cp.sections():
        if section not in known:
            raise ValidationError(f"unknown section [{section}] in run file")
        for key in cp[section]:
            if key not in DEFAULTS[section]:
                raise ValidationError(f"unknown key {key!r} in section [{section}]")

    violations = []

    def grab(section, key, conv, check=None, message=""):
        raw = cp.get(section, key)
        try:
            val = conv(raw)
        except Exception:
            violations.append(f"[{section}] {key}: cannot parse {raw!r}")
            return None
        if check is not None and not check(val):
            violations.append(f"[{section}] {key}: {message} (got {raw})")
            return None
        return val

    n = grab("problem", "n", int, lambda v: v >= 2, "need n >= 2")
    p = grab("problem", "p", float, lambda v: v > 1, "need p > 1")
    if n is not None and p is not None:
        try:
            check_p(n, p)
        except ValidationError as exc:
            violations.append(str(exc))
    phase_speed = grab("problem", "phase_speed", float, lambda v: v >= 0,
                       "phase speed must be nonnegative")
    f1_drift = grab("problem", "f1_drift", float)
    jacobi_drift = grab("problem", "jacobi_drift", float)
    potential = cp.get("problem", "potential")
    try:
        PotentialField(potential, n or 2)
    except ValidationError as exc:
        violations.append(f"[problem] potential: {exc}")

    kind = cp.get("curve", "kind")
    radius = grab("curve", "radius", float, lambda v: v > 0, "radius must be positive")
    ca = grab("curve", "a", float, lambda v: v > 0, "semi-axis must be positive")
    cb = grab("curve", "b", float, lambda v: v > 0, "semi-axis must be positive")
    samples = grab("curve", "samples", int, lambda v: v >= 64, "need >= 64 samples")
    curve_spec = None
    if not violations:
        try:
            curve_spec = CurveSpec(kind, n=n, radius=radius, a=ca, b=cb)
        except ValidationError as exc:
            violations.append(f"[curve] {exc}")

    radial_m = grab("grids", "radial_m", int, lambda v: v >= 1000, "need m >= 1000")
    radial_rmax = grab("grids", "radial_rmax", float, lambda v: v >= 20,
                       "need r_max >= 20")
    grid = None
    if radial_m and radial_rmax:
        grid = RadialGrid(radial_rmax, radial_m)
    delta_bar = grab("grids", "tube_delta_bar", float, lambda v: 0 < v < 1,
                     "delta_bar in (0,1)")
    varsigma = grab("grids", "varsigma", float, lambda v: 0 <= v < 1,
                    "varsigma in [0,1)")
    dz_factor = grab("grids", "dz_factor", float, lambda v: v >= 8,
                     "z spacing must be at least 1/(8 k)")

    delta = grab("resonance", "delta", float, lambda v: 0 < v < 1, "delta in (0,1)")
    res_eps = grab("resonance", "eps", float, lambda v: v > 0, "eps > 0")
    gap_threshold = grab("resonance", "gap_threshold", float, lambda v: v >= 0,
                         "threshold >= 0")
    spec_grid = cp.get("resonance", "gap_eps_grid")
    try:
        hi, lo, num = spec_grid.split(":")
        gap_grid = np.linspace(float(hi), float(lo), int(num))
        if np.any(np.diff(gap_grid) >= 0):
            violations.append("[resonance] gap_eps_grid must descend")
    except ValueError:
        violations.append(f"[resonance] gap_eps_grid: expected 'hi:lo:count', "
                          f"got {spec_grid!r}")
        gap_grid = np.array([])

    eps_list = _parse_float_list(cp.get("residual", "eps_list"))
    if len(eps_list) < 3 or any(e <= 0 for e in eps_list):
        violations.append("[residual] eps_list needs >= 3 positive values")
    levels = [int(v) for v in _parse_float_list(cp.get("residual", "levels"))]
    if any(lv not in (0, 1, 2) for lv in levels):
        violations.append("[residual] levels must be within {0,1,2}")
    base_M = grab("residual", "base_samples", int, lambda v: v >= 64,
                  "need >= 64 base samples")

    stages = [s.strip() for s in cp.get("run", "stages").split(",") if s.strip()]
    for s in stages:
        if s not in ALL_STAGES:
            violations.append(f"[run] unknown stage {s!r}")
    out_dir = cp.get("run", "out_dir") or os.environ.get("NLSCURVE_OUT", "out")
    assert_acceptance = cp.getboolean("run", "assert_acceptance")

    if violations:
        raise ValidationError("invalid run file:\n  " + "\n  ".join(violations))

    return RunConfig(n=n, p=p, phase_speed=phase_speed, f1_drift=f1_drift,
                     jacobi_drift=jacobi_drift, potential=potential,
                     curve=curve_spec, curve_samples=samples, radial=grid,
                     delta_bar=delta_bar, varsigma=varsigma, dz_factor=dz_factor,
                     delta=delta, res_eps=res_eps, gap_threshold=gap_threshold,
                     gap_eps_grid=gap_grid, residual_eps=eps_list,
                     residual_levels=levels, residual_base_M=base_M,
                     stages=stages, out_dir=out_dir,
                     assert_acceptance=assert_acceptance)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def _stage_order(requested):
    return [s for s in ALL_STAGES if s in requested]


def run_pipeline(cfg, verbose=False):
    """Execute the selected stages in dependency order.

    Returns (summary dict, csv artifact dict name -> rows).  Acceptance-style
    assertions are collected into summary['checks'] and gate the exit code
    when the config requests it.
    """
    say = print if verbose else (lambda *a, **k: None)
    summary = {"schema": "nlscurve-report/1", "config": {
        "n": cfg.n, "p": cfg.p, "phase_speed": cfg.phase_speed,
        "potential": cfg.potential, "curve_kind": cfg.curve.kind,
    }, "stages": {}, "checks": {}}
    csvs = {}
    state = {}

    exps = compute_exponents(cfg.n, cfg.p)
    V = PotentialField(cfg.potential, cfg.n)

    for stage in _stage_order(cfg.stages):
        t0 = time.time()
        say(f"[{stage}] ...")
        try:
            out = STAGE_FUNCS[stage](cfg, exps, V, state, csvs)
        except Exception as exc:
            raise RuntimeError(f"stage {stage!r} failed: {exc}") from exc
        out["runtime_s"] = round(time.time() - t0, 3)
        summary["stages"][stage] = out
        for key, val in out.get("checks", {}).items():
            summary["checks"][f"{stage}.{key}"] = val
        say(f"[{stage}] done in {out['runtime_s']}s")

    summary["all_checks_pass"] = all(summary["checks"].values()) \
        if summary["checks"] else True
    return summary, csvs


def _ensure_curve(cfg, V, state):
    if "curve" not in state:
        state["curve"] = build_curve(cfg.curve, cfg.curve_samples)
        state["pot"] = sample_potential(V, state["curve"])
    return state["curve"], state["pot"]


def _ensure_scalings(cfg, exps, V, state):
    curve, pot = _ensure_curve(cfg, V, state)
    if "sf" not in state:
        state["sf"] = compute_scalings(curve, pot, cfg.phase_speed, exps)
    return state["sf"]


def _ensure_profile(cfg, state):
    if "U" not in state:
        state["U"] = ground_state(cfg.n, cfg.p, cfg.radial)
    return state["U"]


def stage_profile(cfg, exps, V, state, csvs):
    U = _ensure_profile(cfg, state)
    res = ode_residual(U, cfg.p)
    csvs["profile"] = np.column_stack([U.grid.nodes, U.values])
    return {"U0": float(U.values[0]), "U0_shooting": float(U.shoot_amplitude),
            "decay_rate": float(U.decay_rate), "ode_residual_sup": res,
            "checks": {"ode_residual_below_1e-8": bool(res < 1e-8),
                       "decay_rate_within_2pct": bool(abs(U.decay_rate - 1) < 0.02)}}


def stage_geometry(cfg, exps, V, state, csvs):
    curve, pot = _ensure_curve(cfg, V, state)
    frame_orth = max(np.max(np.abs(curve.frame[i] @ curve.frame[i].T
                                   - np.eye(cfg.n - 1)))
                     for i in range(0, curve.M, max(1, curve.M // 16)))
    csvs["curve"] = np.column_stack([curve.s, curve.positions,
                                     curve.curvature])
    csvs["potential"] = np.column_stack([curve.s, pot.values, pot.grad_normal])
    return {"length": float(curve.L),
            "holonomy_angle": float(curve.holonomy_angle),
            "max_curvature": float(np.max(np.linalg.norm(
                curve.curvature_vectors(), axis=1))),
            "checks": {"frame_orthonormal": bool(frame_orth < 1e-10)}}


def stage_scalings(cfg, exps, V, state, csvs):
    sf = _ensure_scalings(cfg, exps, V, state)
    pot = state["pot"]
    err = sf.consistency_error(pot.values)
    csvs["scalings"] = np.column_stack([sf.s, sf.h, sf.k, sf.fprime, sf.f])
    return {"sigma": exps.sigma, "theta": exps.theta,
            "phase_budget": sf.phase_budget, "consistency_error": err,
            "checks": {"scaling_consistency_1e-10": bool(err < 1e-10)}}


def stage_criticality(cfg, exps, V, state, csvs):
    curve, pot = _ensure_curve(cfg, V, state)
    sf = _ensure_scalings(cfg, exps, V, state)
    res, sup = euler_residual(curve, pot, sf, exps)
    red = reduced_functional(curve, sf, exps)
    J = assemble_jacobi(curve, pot, sf, exps, jacobi_drift=cfg.jacobi_drift)
    vals, vecs, verdict = weighted_eigenbasis(
        J.matrix, J.weight, min(10, J.matrix.shape[0]),
        per_node_components=cfg.n - 1, ds=curve.L / curve.M)
    csvs["euler_residual"] = np.column_stack([curve.s, res])
    csvs["jacobi_spectrum"] = np.column_stack(
        [np.arange(vals.size), vals])
    return {"euler_residual_sup": sup, "reduced_functional": red,
            "jacobi_asymmetry": J.asymmetry,
            "jacobi_min_abs_eig": verdict["min_abs_eigenvalue"],
            "jacobi_invertible": verdict["invertible"],
            "checks": {"jacobi_symmetric_1e-10": bool(J.asymmetry < 1e-10)}}


def stage_branches(cfg, exps, V, state, csvs):
    U = _ensure_profile(cfg, state)
    sf = _ensure_scalings(cfg, exps, V, state)
    mu = float(np.max(np.abs(2 * sf.fprime / sf.k)))
    alphas = np.linspace(0.0, 2.2, 23)
    branches = trace_branches(U, cfg.p, mu, alphas)
    mode = find_alpha_bar(U, cfg.p, mu)
    rows = [alphas]
    names = []
    for label in ("ground", "translation", "gauge", "excited"):
        rows.append(branches[label].eigenvalues)
        names.append(label)
    csvs["branches"] = np.column_stack(rows)
    csvs["crossing_mode"] = np.column_stack(
        [U.grid.nodes, mode.u_values, mode.v_values])
    eta = branches["ground"].eigenvalues
    return {"mu": mu, "alpha_bar": mode.alpha_bar,
            "zw_decay_rate": mode.decay_rate,
            "branch_labels": names,
            "checks": {"ground_branch_increasing": bool(np.all(np.diff(eta) > 0)),
                       "zw_decay_above_1": bool(mode.decay_rate > 1.0)}}


def stage_resonance(cfg, exps, V, state, csvs):
    U = _ensure_profile(cfg, state)
    sf = _ensure_scalings(cfg, exps, V, state)
    abar, modes = alpha_field(sf, U)
    Q = q_integrals(modes, cfg.n - 1)
    state["abar"], state["Q"] = abar, Q
    basis = resonance_eigenpairs(sf, abar, Q, cfg.res_eps, cfg.delta)
    maxres, per_j = verify_coupled_system(basis)
    q_closure = float(np.max(np.abs(Q.q1 + Q.q2 - 1.0)))
    csvs["resonance_nu"] = np.column_stack([basis.window, basis.nu, per_j])
    return {"eps": cfg.res_eps, "window": int(basis.nu.size),
            "coupled_system_residual": maxres,
            "residual_over_eps": maxres / cfg.res_eps,
            "q_closure_error": q_closure,
            "checks": {"q1_plus_q2_is_1": bool(q_closure < 1e-8)}}


def stage_gap_scan(cfg, exps, V, state, csvs):
    U = _ensure_profile(cfg, state)
    sf = _ensure_scalings(cfg, exps, V, state)
    if "abar" not in state:
        abar, modes = alpha_field(sf, U)
        state["abar"] = abar
        state["Q"] = q_integrals(modes, cfg.n - 1)
    records = gap_scan(sf, state["abar"], state["Q"], cfg.gap_eps_grid,
                       cfg.delta, cfg.gap_threshold)
    rows = np.array([[r["eps"], r["min_abs_eigenvalue"], float(r["admissible"])]
                     for r in records])
    csvs["gap_scan"] = rows
    out = {"n_admissible": int(sum(r["admissible"] for r in records)),
           "n_total": len(records), "checks": {}}
    constant = np.ptp(sf.k) < 1e-10 and np.ptp(state["abar"]) < 1e-10
    if constant:
        oracle = gap_scan_oracle(sf, state["abar"], state["Q"],
                                 cfg.gap_eps_grid, cfg.delta, cfg.gap_threshold)
        agree = all(r["admissible"] == o["admissible"]
                    for r, o in zip(records, oracle))
        out["checks"]["gap_scan_matches_oracle"] = bool(agree)
    return out


def stage_residual(cfg, exps, V, state, csvs):
    U = _ensure_profile(cfg, state)

    def curve_for(M):
        return build_curve(cfg.curve, M)

    records, fits = residual_study(curve_for, V, cfg.phase_speed, exps, U,
                                   cfg.residual_eps, cfg.residual_levels,
                                   base_M=cfg.residual_base_M,
                                   delta_bar=cfg.delta_bar,
                                   varsigma=cfg.varsigma,
                                   dz_factor=cfg.dz_factor,
                                   f1_drift=cfg.f1_drift)
    csvs["residual"] = np.array([[r["eps"], r["level"], r["norm"]]
                                 for r in records])
    out = {"records": records,
           "slopes": {str(lv): fits[lv]["slope"] for lv in fits},
           "checks": {}}
    if 0 in fits:
        out["checks"]["level0_slope_ge_0.9"] = bool(fits[0]["slope"] >= 0.9)
    for lv in (1, 2):
        if lv in fits:
            out["checks"][f"level{lv}_slope_ge_1.8"] = bool(fits[lv]["slope"] >= 1.8)
    if 1 in fits and 2 in fits:
        n1 = {r["eps"]: r["norm"] for r in records if r["level"] == 1}
        n2 = {r["eps"]: r["norm"] for r in records if r["level"] == 2}
        out["checks"]["level2_below_level1"] = bool(
            all(n2[e] < n1[e] for e in n1))
    return out


STAGE_FUNCS = {
    "profile": stage_profile,
    "geometry": stage_geometry,
    "scalings": stage_scalings,
    "criticality": stage_criticality,
    "branches": stage_branches,
    "resonance": stage_resonance,
    "gap_scan": stage_gap_scan,
    "residual": stage_residual,
}

CSV_HEADERS = {
    "profile": "r,U",
    "curve": "s,positions...,curvature_components...",
    "potential": "s,V,grad_normal...",
    "scalings": "s,h,k,fprime,f",
    "euler_residual": "s,residual_components...",
    "jacobi_spectrum": "index,eigenvalue",
    "branches": "alpha,ground,translation,gauge,excited",
    "crossing_mode": "r,Z,W",
    "resonance_nu": "j,nu,coupled_residual",
    "gap_scan": "eps,min_abs_eigenvalue,admissible",
    "residual": "eps,level,norm",
}


def emit_report(summary, csvs, out_dir):
    """Write the JSON summary and CSV artifacts; deterministic file names.

    The JSON is byte-identical across reruns except for the timestamp field.
    """
    os.makedirs(out_dir, exist_ok=True)
    ordered = dict(summary)
    ordered["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w") as fh:
        json.dump(ordered, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    written = [path]
    for name, rows in csvs.items():
        cpath = os.path.join(out_dir, f"{name}.csv")
        np.savetxt(cpath, np.atleast_2d(rows), delimiter=",",
                   header=CSV_HEADERS.get(name, ""), comments="")
        written.append(cpath)
    return written


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="nlscurve-run",
        description="Run the concentrating-wave verification pipelines.")
    ap.add_argument("config", help="path to the run file (INI format)")
    ap.add_argument("-o", "--out-dir", default=None, help="output directory")
    ap.add_argument("--stages", default=None,
                    help="comma-separated stage override")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)

    try:
        cfg = parse_config(args.config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.stages:
        stages = [s.strip() for s in args.stages.split(",") if s.strip()]
        bad = [s for s in stages if s not in ALL_STAGES]
        if bad:
            print(f"error: unknown stages {bad}", file=sys.stderr)
            return 2
        cfg.stages = stages
    if args.out_dir:
        cfg.out_dir = args.out_dir

    try:
        summary, csvs = run_pipeline(cfg, verbose=args.verbose)
    except Exception as exc:  # stage failures carry the stage name
        print(f"error: pipeline failed: {exc}", file=sys.stderr)
        return 3
    written = emit_report(summary, csvs, cfg.out_dir)
    if args.verbose:
        for w in written:
            print(f"wrote {w}")
    if cfg.assert_acceptance and not summary["all_checks_pass"]:
        failing = [k for k, v in summary["checks"].items() if not v]
        print(f"acceptance checks failed: {failing}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
