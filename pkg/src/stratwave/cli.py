"""Command-line driver: config ingestion, pipeline orchestration, output.

Subcommands: check, laminar, dispersion, branch, reconstruct.  One JSON
config file describes the physical setup (see `profiles.params_from_descriptor`)
plus optional solver settings; a few flags override it.  Exit codes:
0 success, 1 mathematical condition failure, 2 usage/config error,
3 numerical failure.  All floating-point output carries 17 significant
digits and runs are deterministic for a fixed config.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import branch as br
from . import dispersion as dsp
from . import fields as fl
from .errors import (
    BracketError,
    ConvergenceError,
    IntegratorError,
    InvalidStateError,
    ProfileError,
)
from .laminar import DEFAULT_NP, laminar_residual, shoot_depth
from .profiles import (
    PhysicalParameters,
    check_res2,
    check_res3,
    check_cthe0,
    params_from_descriptor,
)

OUT_ENV_VAR = "STRATWAVE_OUT"
EXIT_OK = 0
EXIT_CONDITION = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


@dataclass
class RunConfig:
    params: PhysicalParameters
    n_p: int
    n_q: int
    ds: float
    n_steps: int
    lambda_hat: float
    out_dir: str
    raw: dict


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _dump_json(obj, indent=0):
    """JSON text with floats at 17 significant digits."""
    pad = " " * indent
    if isinstance(obj, dict):
        items = [
            f'{pad}  {json.dumps(str(k))}: {_dump_json(v, indent + 2).lstrip()}'
            for k, v in obj.items()
        ]
        return pad + "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        items = [_dump_json(v, indent + 2) for v in obj]
        return pad + "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return pad + json.dumps(obj)
    if isinstance(obj, float):
        if obj != obj or obj in (float("inf"), float("-inf")):
            return pad + json.dumps(str(obj))
        return pad + _fmt(obj)
    return pad + json.dumps(obj)


def _write_json(path, obj):
    with open(path, "w") as f:
        f.write(_dump_json(_to_jsonable(obj)) + "\n")


def _write_csv(path, header, columns):
    arr = np.column_stack(columns)
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in arr:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _load_config(args) -> RunConfig:
    with open(args.config) as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise ProfileError("config root must be a JSON object")
    params = params_from_descriptor(raw)
    solver = raw.get("solver", {})
    is_branch = args.command in ("branch", "reconstruct")
    n_p = int(solver.get("n_p", br.DEFAULT_NP if is_branch else DEFAULT_NP))
    n_q = int(solver.get("n_q", br.DEFAULT_NQ))
    ds = float(solver.get("ds", 0.05))
    n_steps = int(solver.get("n_steps", 5))
    lambda_hat = float(solver.get("lambda_hat", 1.0))
    out_dir = solver.get("out", ".")
    if args.np is not None:
        n_p = args.np
    if args.nq is not None:
        n_q = args.nq
    if args.ds is not None:
        ds = args.ds
    if args.steps is not None:
        n_steps = args.steps
    if args.lambda_hat is not None:
        lambda_hat = args.lambda_hat
    if args.out is not None:
        out_dir = args.out
    out_dir = os.environ.get(OUT_ENV_VAR, out_dir)
    os.makedirs(out_dir, exist_ok=True)
    return RunConfig(
        params=params,
        n_p=n_p,
        n_q=n_q,
        ds=ds,
        n_steps=n_steps,
        lambda_hat=lambda_hat,
        out_dir=out_dir,
        raw=raw,
    )


def _run_checks(cfg: RunConfig):
    """All admissibility checks; returns (report, all_pass, flow)."""
    params = cfg.params
    report = {}
    report["res2"] = check_res2(params)
    report["res3"] = check_res3(params)
    flow = shoot_depth(params, n_p=cfg.n_p)
    report["cthe0"] = check_cthe0(flow)
    report["w0_nondegenerate"] = dsp.check_w0_nondegenerate(flow)
    report["mu"] = flow.mu
    report["laminar_residual"] = laminar_residual(flow, params)
    ok = all(
        report[k]["holds"] for k in ("res2", "res3", "cthe0", "w0_nondegenerate")
    )
    return report, ok, flow


def cmd_check(cfg: RunConfig) -> int:
    report, ok, _ = _run_checks(cfg)
    report["all_pass"] = ok
    _write_json(os.path.join(cfg.out_dir, "check.json"), report)
    print(_dump_json(_to_jsonable(report)))
    return EXIT_OK if ok else EXIT_CONDITION


def cmd_laminar(cfg: RunConfig) -> int:
    flow = shoot_depth(cfg.params, n_p=cfg.n_p)
    _write_csv(
        os.path.join(cfg.out_dir, "laminar.csv"),
        ["p", "H", "Hp", "a", "A"],
        [flow.p_grid, flow.H, flow.Hp, flow.a, flow.A],
    )
    summary = {
        "mu": flow.mu,
        "residual": laminar_residual(flow, cfg.params),
        "shoot_brackets": [list(b) for b in flow.shoot_brackets],
    }
    _write_json(os.path.join(cfg.out_dir, "laminar.json"), summary)
    print(_dump_json(_to_jsonable(summary)))
    return EXIT_OK


def _is_constant_irrotational(cfg: RunConfig) -> bool:
    prof = cfg.params.profile
    p = prof.sample_grid(64)
    rho = prof.rho_bar(p)
    b = prof.bernoulli_primitive(p)
    return float(np.ptp(rho)) <= 1e-12 * float(rho[0]) and float(
        np.max(np.abs(b))
    ) <= 1e-12


def cmd_dispersion(cfg: RunConfig) -> int:
    report, ok, flow = _run_checks(cfg)
    if not ok:
        print(_dump_json(_to_jsonable({"checks": report, "all_pass": False})))
        return EXIT_CONDITION
    disp = dsp.dispersion_constant(flow, cfg.lambda_hat)
    _write_csv(
        os.path.join(cfg.out_dir, "dispersion.csv"),
        ["lambda", "theta", "theta_over_lambda2"],
        [
            disp.lambda_samples,
            disp.theta_of_lambda,
            disp.theta_of_lambda / disp.lambda_samples**2,
        ],
    )
    traj = disp.w1_profile
    _write_csv(
        os.path.join(cfg.out_dir, "kernel_profile.csv"),
        ["p", "w1", "z1"],
        [traj.p_grid, traj.w, traj.z],
    )
    summary = {
        "C_D": disp.C_D,
        "lambda_star": disp.lambda_star,
        "transversality": disp.transversality,
        "scaling_deviation": disp.scaling_deviation,
        "root_count": disp.root_count,
        "kernel_collision": disp.kernel_collision,
    }
    if _is_constant_irrotational(cfg):
        cd_exact = dsp.analytic_dispersion(cfg.params)
        summary["C_D_analytic"] = cd_exact
        summary["C_D_rel_gap"] = abs(disp.C_D - cd_exact) / cd_exact
    _write_json(os.path.join(cfg.out_dir, "dispersion.json"), summary)
    print(_dump_json(_to_jsonable(summary)))
    return EXIT_OK


def _branch_pipeline(cfg: RunConfig):
    report, ok, flow = _run_checks(cfg)
    if not ok:
        return None, None, report
    disp = dsp.dispersion_constant(flow, cfg.lambda_hat)
    if disp.transversality <= 0.0:
        report["transversality"] = disp.transversality
        return None, None, report
    result = br.continue_branch(
        cfg.params, flow, disp, n_steps=cfg.n_steps, ds=cfg.ds, n_q=cfg.n_q
    )
    return flow, (disp, result), report


def _branch_rows(result):
    rows = []
    for direction, pts in (("+", result.points_plus), ("-", result.points_minus)):
        for k, pt in enumerate(pts):
            if direction == "-" and k == 0:
                continue  # shared laminar root
            rows.append(
                (
                    1.0 if direction == "+" else -1.0,
                    float(k),
                    pt.s,
                    pt.lam,
                    pt.residual_norm,
                    pt.eta_mean,
                    float(pt.crest_count),
                    pt.min_hp_total,
                    pt.eta_sup,
                )
            )
    return rows


def _diagnostics_verdict(result):
    nontrivial = list(result.points_plus[1:]) + list(result.points_minus[1:])
    return {
        "accepted_plus": len(result.points_plus) - 1,
        "accepted_minus": len(result.points_minus) - 1,
        "all_crest_trough": all(p.crest_count == 2 for p in nontrivial),
        "all_monotone": all(p.monotone_ok for p in nontrivial),
        "max_eta_mean": max((abs(p.eta_mean) for p in nontrivial), default=0.0),
        "max_even_defect": max((p.even_defect for p in nontrivial), default=0.0),
        "min_hp_total": min((p.min_hp_total for p in nontrivial), default=0.0),
        "status": result.status,
    }


def cmd_branch(cfg: RunConfig) -> int:
    flow, payload, report = _branch_pipeline(cfg)
    if payload is None:
        print(_dump_json(_to_jsonable({"checks": report, "all_pass": False})))
        return EXIT_CONDITION
    disp, result = payload
    rows = _branch_rows(result)
    _write_csv(
        os.path.join(cfg.out_dir, "branch.csv"),
        [
            "direction",
            "step",
            "s",
            "lambda",
            "residual",
            "eta_mean",
            "crest_count",
            "min_hp_total",
            "eta_sup",
        ],
        list(np.array(rows).T),
    )
    last = result.points_plus[-1]
    np.savetxt(
        os.path.join(cfg.out_dir, "field_snapshot.csv"),
        last.field.h,
        fmt="%.17g",
        delimiter=",",
    )
    verdict = _diagnostics_verdict(result)
    manifest = {
        "config": cfg.raw,
        "lambda_star": result.lambda_star,
        "C_D": disp.C_D,
        "transversality": disp.transversality,
        "diagnostics": verdict,
    }
    _write_json(os.path.join(cfg.out_dir, "branch.json"), manifest)
    print(_dump_json(_to_jsonable(manifest)))
    all_ok = (
        verdict["all_crest_trough"]
        and verdict["all_monotone"]
        and verdict["min_hp_total"] > 0.0
    )
    return EXIT_OK if all_ok else EXIT_CONDITION


def cmd_reconstruct(cfg: RunConfig) -> int:
    flow, payload, report = _branch_pipeline(cfg)
    if payload is None:
        print(_dump_json(_to_jsonable({"checks": report, "all_pass": False})))
        return EXIT_CONDITION
    _, result = payload
    pt = result.points_plus[-1]
    ff = fl.reconstruct(cfg.params, pt.field, flow)
    n_y, n_q = ff.psi.shape
    X = np.broadcast_to(ff.x_grid, (n_y, n_q))
    _write_csv(
        os.path.join(cfg.out_dir, "field.csv"),
        ["x", "y", "u_rel", "v", "P", "rho", "psi"],
        [
            X.ravel(),
            ff.y_columns.ravel(),
            ff.u_rel.ravel(),
            ff.v.ravel(),
            ff.P.ravel(),
            ff.rho.ravel(),
            ff.psi.ravel(),
        ],
    )
    etap, etapp = fl._surface_derivatives(ff.eta, ff.lam)
    surf_P = ff.evaluate(ff.x_grid, ff.eta)["P"]
    curvature = etapp / (1.0 + etap**2) ** 1.5
    _write_csv(
        os.path.join(cfg.out_dir, "surface.csv"),
        ["x", "eta", "P_surface", "curvature"],
        [ff.x_grid, ff.eta, surf_P, curvature],
    )
    resid = fl.euler_residuals(ff, cfg.params)
    resid["Q"] = ff.Q
    resid["s"] = pt.s
    resid["lambda"] = pt.lam
    _write_json(os.path.join(cfg.out_dir, "reconstruct.json"), resid)
    print(_dump_json(_to_jsonable(resid)))
    return EXIT_OK


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="stratwave",
        description="Steady stratified capillary-gravity water waves: "
        "admissibility checks, dispersion analysis, bifurcation-branch "
        "continuation and physical-field reconstruction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("check", "laminar", "dispersion", "branch", "reconstruct"):
        p = sub.add_parser(name)
        p.add_argument("config", help="JSON configuration file")
        p.add_argument("--lambda-hat", dest="lambda_hat", type=float, default=None)
        p.add_argument("--nq", type=int, default=None)
        p.add_argument("--np", type=int, default=None)
        p.add_argument("--ds", type=float, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--out", type=str, default=None)
    return parser


_COMMANDS = {
    "check": cmd_check,
    "laminar": cmd_laminar,
    "dispersion": cmd_dispersion,
    "branch": cmd_branch,
    "reconstruct": cmd_reconstruct,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = _load_config(args)
    except (OSError, json.JSONDecodeError, ProfileError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](cfg)
    except ProfileError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        ConvergenceError,
        IntegratorError,
        InvalidStateError,
        BracketError,
    ) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
