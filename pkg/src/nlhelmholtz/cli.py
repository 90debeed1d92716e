"""Command line driver: scenario runs, linear checks, kernel split, diagnostics, far fields."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .diagnostics import (band_limited_field, bigR_ratio, pde_residual, ratio_family,
                          resolvent_ratio, truncated_kernel_slope)
from .errors import ChecksumMismatch, NLHelmholtzError, NotConverged, ScenarioError
from .farfield import (compact_bump, compute_farfield, decay_exponent_fit, farfield_relation_error,
                       linear_farfield_check, radiation_error, restrict, write_report)
from .grid import Field, GridSpec, load_field, save_field, set_fft_workers, sphere_mesh
from .kernel import kernel_split
from .resolvent import AbsorptionSchedule, kernel_convolve, resolvent_apply, resolvent_operator
from .scenario import Scenario
from .solver import SolutionRecord, solve_mountain_pass, solve_multiplicity

log = logging.getLogger("nlhelmholtz")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_ASSERT = 0, 2, 3, 4


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))
    return path


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"not serializable: {type(x)}")


def _decreasing(vals, slack: float) -> bool:
    return all(b <= a * (1 + slack) for a, b in zip(vals[:-1], vals[1:]))


class _Checkpointer:
    """Writes the solver state every ``every`` iterations of a mountain-pass solve."""

    def __init__(self, path: Path, every: int, sc: Scenario):
        self.path, self.every, self.sc = path, every, sc
        self.count = 0

    def __call__(self, run, it, w, st, shift, levels, best):
        if not self.every or it == 0 or it % self.every:
            return
        header = {"run": run, "iteration": it, "J": st.J_value,
                  "residual": st.crit_residual, "seed": self.sc.solver_config.seed + run,
                  "config_hash": self.sc.hash, "levels": list(levels),
                  "shift": list(shift),
                  "best_shift": list(best.shift) if best else [],
                  "best_seed": best.seed if best else None}
        save_checkpoint(self.path, self.sc.grid, header,
                        {"w": w, "best_w": best.w if best else None})
        self.count += 1


def load_resume(path, sc: Scenario) -> dict:
    grid, h, f = load_checkpoint(path)
    if h.get("config_hash") != sc.hash:
        raise ScenarioError(["checkpoint was written for a different scenario"])
    if grid != sc.grid:
        raise ScenarioError(["checkpoint grid differs from the scenario grid"])
    return {"run": h["run"], "iteration": h["iteration"], "w": f["w"],
            "shift": tuple(h["shift"]) or None, "levels": h["levels"],
            "best_w": f.get("best_w"), "best_shift": tuple(h["best_shift"]),
            "best_seed": h["best_seed"]}


def _record_summary(prob, rec: SolutionRecord) -> dict:
    pp = prob.p_prime
    v = rec.v_star.values.real
    nv = prob.norm(v, pp) ** pp
    ident = abs(rec.J_value - (1 / pp - 0.5) * nv) / abs(rec.J_value)
    return {"J_value": rec.J_value, "crit_residual": rec.crit_residual,
            "critical_identity": ident, "pde_residual_l2": rec.pde_residual_l2,
            "iterations": rec.iterations, "seed": rec.seed,
            "run_levels": rec.run_levels,
            "lattice_shift_applied": list(rec.lattice_shift_applied),
            "rayleigh_steps": rec.rayleigh_steps,
            "rayleigh_decreases": len(rec.rayleigh_decreases),
            "monotone_fraction": rec.monotone_fraction}


def run_scenario(path, out, *, threads: int = 1, resume=None, check: bool = True) -> tuple[int, dict]:
    """Solve, verify and export one scenario; returns (exit status, report)."""
    set_fft_workers(threads)
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sc = Scenario.load(path)
    prob = sc.problem()
    cfg = sc.solver_config
    timings = {}
    files = {}
    report = {"scenario": sc.name, "scenario_hash": sc.hash, "versions": {
        "nlhelmholtz": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
        "python": platform.python_version()}}

    ck = _Checkpointer(out / "checkpoint", cfg.checkpoint_every, sc)
    res = load_resume(resume, sc) if resume else None
    t = time.perf_counter()
    try:
        if cfg.deflation_count > 1:
            records = solve_multiplicity(prob, cfg)
        else:
            records = [solve_mountain_pass(prob, cfg, period_cells=sc.period_cells,
                                           on_iter=ck, resume=res)]
    except NotConverged as exc:
        if exc.best is not None:
            files["best_state"] = str(save_field(exc.best.v, out / "best_v").name)
        report.update(status="not_converged", error=str(exc), files=files)
        _write_json(out / "report.json", report)
        return EXIT_NOT_CONVERGED, report
    timings["solve"] = time.perf_counter() - t

    summaries = []
    for k, rec in enumerate(records):
        s = _record_summary(prob, rec)
        tag = f"_{k + 1}" if len(records) > 1 else ""
        for name, f in (("v_star", rec.v_star), ("u_star", rec.u_star)):
            p = save_field(f, out / f"{name}{tag}")
            files[p.name] = _sha(p)
            files[p.with_suffix(".bin").name] = _sha(p.with_suffix(".bin"))
        summaries.append(s)
    report["records"] = summaries

    # verification on the lowest level
    rec = records[0]
    diag = {}
    t = time.perf_counter()
    ext = sc.extended_grid
    v = rec.v_star.values.real
    if ext is not None:
        op = resolvent_operator(prob.grid, sc.schedule, "free", ext)
        u_tilde = Field(ext, op(prob.q * v))
    else:
        u_tilde = Field(prob.grid, prob._R(prob.q * v))
    u = Field(u_tilde.grid, u_tilde.values.real, True)
    diag["pde_residual"] = dict(zip(("l2", "max"), pde_residual(prob, u)))
    lad = sc.doc.get("ladders", {})
    if "decay_window" in lad:
        fit = decay_exponent_fit(u, tuple(lad["decay_window"]))
        diag["decay_fit"] = {"exponent": fit.exponent, "amplitude": fit.amplitude,
                             "r_window": list(fit.r_window), "goodness": fit.goodness}
        with open(out / "decay_fit.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "shell_max_abs_u"])
            for a, b in zip(fit.radii, fit.values):
                w.writerow([repr(float(a)), repr(float(b))])
    if "farfield" in sc.doc:
        mesh = sphere_mesh(prob.grid.dim, sc.doc["farfield"].get("mesh_order", 3), sc.doc.get("seed", 0))
        pat = compute_farfield(prob, u, mesh)
        pat.to_csv(out / "farfield.csv")
        diag["farfield_reality_defect"] = pat.reality_defect()
        if "farfield" in lad:
            radii = lad["farfield"]
            rel = farfield_relation_error(u, pat, radii)
            rad = radiation_error(u_tilde, radii, periodic=prob.boundary == "periodic")
            write_report(out / "farfield_relation.csv", radii, rel)
            write_report(out / "radiation.csv", radii, rad)
            diag["farfield_relation_error"] = rel.tolist()
            diag["radiation_error"] = rad.tolist()
    timings["verify"] = time.perf_counter() - t
    report["diagnostics"] = diag

    asr = sc.assertions
    checks = []
    if "crit_residual" in asr:
        checks += [("crit_residual", s["crit_residual"] <= asr["crit_residual"]) for s in summaries]
        checks += [("J_positive", s["J_value"] > 0) for s in summaries]
    if "critical_identity" in asr:
        checks += [("critical_identity", s["critical_identity"] <= asr["critical_identity"])
                   for s in summaries]
    if "pde_residual" in asr:
        checks.append(("pde_residual", diag["pde_residual"]["l2"] <= asr["pde_residual"]))
    if "decay_exponent" in asr and "decay_fit" in diag:
        c, tol = asr["decay_exponent"]
        checks.append(("decay_exponent", abs(diag["decay_fit"]["exponent"] - c) <= tol))
    if "monotone_slack" in asr and "farfield_relation_error" in diag:
        sl = asr["monotone_slack"]
        checks.append(("farfield_relation_decreasing",
                       _decreasing(diag["farfield_relation_error"], sl)))
        checks.append(("radiation_decreasing", _decreasing(diag["radiation_error"], sl)))
    if asr.get("levels_increasing"):
        J = [s["J_value"] for s in summaries]
        checks.append(("levels_increasing", all(0 < a < b for a, b in zip(J[:-1], J[1:]))))
    report["assertions"] = [{"name": n, "passed": bool(ok)} for n, ok in checks]
    timings["total"] = time.perf_counter() - t0
    report["timings"] = timings
    for p in sorted(out.glob("*.csv")):
        files[p.name] = _sha(p)
    report["files"] = files
    passed = all(ok for _, ok in checks)
    report["status"] = "passed" if passed else "assertion_failed"
    _write_json(out / "report.json", report)
    if check and not passed:
        return EXIT_ASSERT, report
    return EXIT_OK, report


def verify_report(out) -> list:
    """Names of exported files whose checksum no longer matches the report."""
    out = Path(out)
    rep = json.loads((out / "report.json").read_text())
    return [name for name, h in rep.get("files", {}).items()
            if not (out / name).exists() or _sha(out / name) != h]


# ---------------------------------------------------------------- subcommands

def cmd_solve(args) -> int:
    code, rep = run_scenario(args.scenario, args.out, threads=args.threads,
                             resume=args.resume, check=args.check)
    print(json.dumps({"status": rep.get("status"), "exit": code,
                      "J": [r["J_value"] for r in rep.get("records", [])]}))
    return code


def cmd_resume(args) -> int:
    if not args.resume:
        print(json.dumps({"errors": ["resume needs --resume <checkpoint>"]}))
        return EXIT_INVALID
    return cmd_solve(args)


def cmd_linear_check(args) -> int:
    """Resolvent cross-validation and the remainder slope of the spherical-wave term."""
    set_fft_workers(args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    g = GridSpec(3, args.half_width, args.points)
    f = Field.real(g, np.exp(-g.radius() ** 2 / (2 * args.sigma ** 2)))
    sch = AbsorptionSchedule(args.eps0, 2, 2.0, 1)
    a = resolvent_apply(f, sch, "free").values
    b = kernel_convolve(f).values
    cross = float(np.linalg.norm(a - b) / np.linalg.norm(b))
    g2 = GridSpec(3, args.slope_half_width, args.slope_points)
    fit = linear_farfield_check(Field.real(g2, compact_bump(g2)), tuple(args.window))
    rep = {"cross_validation_rel_l2": cross, "remainder_exponent": fit.exponent,
           "remainder_goodness": fit.goodness, "window": list(args.window)}
    ok = cross <= 2e-2 and abs(fit.exponent + 2) <= 0.3
    rep["passed"] = ok
    _write_json(out / "linear_check.json", rep)
    print(json.dumps(rep))
    return EXIT_OK if ok or not args.check else EXIT_ASSERT


def cmd_kernel_split(args) -> int:
    set_fft_workers(args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    g = GridSpec(3, args.half_width, args.points)
    split = kernel_split(g)
    save_field(split.phi1, out / "phi1")
    save_field(split.phi2, out / "phi2")
    rep = split.descriptor()
    rep["phi1_decay_constant"] = split.phi1_decay_constant()
    rep["phi2_decay_constant"] = split.phi2_decay_constant()
    fits = {}
    for p in args.p:
        f = band_limited_field(g, args.seed)
        fit = truncated_kernel_slope(p, args.ladder, f, split)
        lam = (g.dim - 1) / 2 - (g.dim + 1) / p
        fits[str(p)] = {"exponent": fit.exponent, "bound": -lam + 0.1,
                        "passed": fit.exponent <= -lam + 0.1}
    rep["truncated_kernel_slopes"] = fits
    _write_json(out / "kernel_split.json", rep)
    print(json.dumps(fits))
    ok = all(v["passed"] for v in fits.values())
    return EXIT_OK if ok or not args.check else EXIT_ASSERT


def cmd_diagnostics(args) -> int:
    """Norm-ratio families for the resolvent bound and the large-ball bound."""
    set_fft_workers(args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    g = GridSpec(3, args.half_width, args.points)
    fam = [band_limited_field(g, args.seed + k, envelope=s)
           for k, s in enumerate(np.geomspace(0.5, g.half_width / 6, args.members))]
    ladder = [R for R in (1.0, 2.0, 4.0, 8.0) if R <= g.half_width / 2]
    reps = [ratio_family(fam, lambda f: resolvent_ratio(f, args.p), "resolvent"),
            ratio_family(fam, lambda f: bigR_ratio(f, ladder, args.p), "big_R")]
    rows = []
    for rep in reps:
        rows.append({"family": rep.family_id, "median": rep.median, "max": rep.max,
                     "spread": rep.spread, "ratios": rep.ratios.tolist()})
    _write_json(out / "diagnostics.json", rows)
    print(json.dumps([{k: r[k] for k in ("family", "median", "max")} for r in rows]))
    return EXIT_OK


def cmd_farfield(args) -> int:
    """Far-field pattern of a stored primal field under a scenario's weight."""
    sc = Scenario.load(args.scenario)
    prob = sc.problem()
    u = load_field(args.field)
    u = Field(u.grid, u.values.real, True)
    pat = compute_farfield(prob, restrict(u, prob.grid), sphere_mesh(prob.grid.dim, args.order))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pat.to_csv(out / "farfield.csv")
    print(json.dumps({"directions": len(pat.g), "reality_defect": pat.reality_defect()}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlhelmholtz", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True)
        p.add_argument("--out", default="run")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--assert", dest="check", action="store_true", default=True)
        p.add_argument("--no-assert", dest="check", action="store_false")

    for name, fn in (("solve", cmd_solve), ("resume", cmd_resume)):
        p = sub.add_parser(name)
        common(p)
        p.add_argument("--resume", default=None)
        p.set_defaults(fn=fn)

    p = sub.add_parser("linear-check")
    common(p, scenario=False)
    p.add_argument("--half-width", type=float, default=10.0)
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--eps0", type=float, default=0.05)
    p.add_argument("--slope-half-width", type=float, default=48.0)
    p.add_argument("--slope-points", type=int, default=192)
    p.add_argument("--window", type=float, nargs=2, default=(5.0, 20.0))
    p.set_defaults(fn=cmd_linear_check)

    p = sub.add_parser("kernel-split")
    common(p, scenario=False)
    p.add_argument("--half-width", type=float, default=64.0)
    p.add_argument("--points", type=int, default=128)
    p.add_argument("--p", type=float, nargs="+", default=[6.0])
    p.add_argument("--ladder", type=float, nargs="+", default=[2.0, 4.0, 8.0, 16.0])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_kernel_split)

    p = sub.add_parser("diagnostics")
    common(p, scenario=False)
    p.add_argument("--half-width", type=float, default=16.0)
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--p", type=float, default=5.0)
    p.add_argument("--members", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_diagnostics)

    p = sub.add_parser("farfield")
    common(p)
    p.add_argument("--field", required=True)
    p.add_argument("--order", type=int, default=3)
    p.set_defaults(fn=cmd_farfield)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ScenarioError, ChecksumMismatch) as exc:
        errs = getattr(exc, "errors", [str(exc)])
        print(json.dumps({"errors": errs}))
        return EXIT_INVALID
    except NLHelmholtzError as exc:
        print(json.dumps({"errors": [f"{type(exc).__name__}: {exc}"]}))
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
