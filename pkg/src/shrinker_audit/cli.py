"""Command-line front end.

Four subcommands: ``verify-identities`` (pointwise identity suite),
``geodesic`` (both boundary-value solvers plus cross-checks on one case),
``audit-chain`` (the displayed inequality chain over a (c, r_y) grid), and
``scan`` (the good-point scanner with the empirical uniform constant).

Reports are JSON with sorted keys, paths are CSV; identical configuration
and seed produce byte-identical output. ``SHRINKER_AUDIT_THREADS`` caps how
many grid cells run concurrently (results are ordered deterministically
regardless).

Exit codes: 0 success, 2 bad configuration / degenerate endpoints, 3 solver
failure, 4 typed refusal (precondition, degenerate model, short cutoff).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import audit as audit_mod
from . import phigeo
from .errors import (
    ConfigError,
    CutoffUndefinedError,
    DegenerateEndpointsError,
    DegenerateModelError,
    InvalidModelError,
    PreconditionError,
    ShrinkerAuditError,
    SolverError,
)
from .models import (
    base_point,
    canonical_target,
    parse_model,
    random_point,
)
from .numgeom import Chart, FDConfig, ricci_fd
from .phigeo import (
    PhiParams,
    certify_minimal_candidate,
    minimize_action_discrete,
    path_json_dict,
    solve_bvp_shooting,
    write_path_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_REFUSED = 4


@dataclass
class RunConfig:
    """Run parameters; every tolerance the suites use lives here.

    Defaults: drift tolerance 1e-6, audit tolerance 1e-6, FD step 1e-3,
    integrator step 1e-2, discrete-minimizer grid 256.
    """

    model: str = "cylinder:k=2,m=2"
    c: tuple = (0.1,)
    ry: tuple = (10.0,)
    samples: int = 100
    seed: int = 0
    out: str = "reports"
    N: int = 256
    step: float = 1e-2
    shoot_tol: float = 1e-10
    density: int = 16
    drift_tol: float = 1e-6
    audit_tol: float = 1e-6
    fd_h: float = 1e-3
    max_iters: int = 10000

    def validate(self) -> None:
        if self.samples < 1:
            raise ConfigError(f"samples must be >= 1 (got {self.samples})")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0 (got {self.seed})")
        if self.N < 16:
            raise ConfigError(f"N must be >= 16 (got {self.N})")
        if not 0.0 < self.step <= phigeo.MAX_IVP_STEP:
            raise ConfigError(f"step must lie in (0, {phigeo.MAX_IVP_STEP}] (got {self.step})")
        for name in ("shoot_tol", "drift_tol", "audit_tol", "fd_h"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive (got {getattr(self, name)})")
        if self.density < 4:
            raise ConfigError(f"density must be >= 4 (got {self.density})")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1 (got {self.max_iters})")
        if not self.c:
            raise ConfigError("c grid must not be empty")
        for value in self.c:
            if not value > 0.0:
                raise ConfigError(f"c must be positive (got {value})")
        if not self.ry:
            raise ConfigError("ry grid must not be empty")
        for value in self.ry:
            if not value > 0.0:
                raise ConfigError(f"ry must be positive (got {value})")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "c": list(self.c),
            "ry": list(self.ry),
            "samples": self.samples,
            "seed": self.seed,
            "N": self.N,
            "step": self.step,
            "shoot_tol": self.shoot_tol,
            "density": self.density,
            "drift_tol": self.drift_tol,
            "audit_tol": self.audit_tol,
            "fd_h": self.fd_h,
            "max_iters": self.max_iters,
        }


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except OSError as exc:
            raise ConfigError(f"config file {args.config!r}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config!r} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a JSON object")
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown config field {key!r}")
            if key in ("c", "ry"):
                value = tuple(float(v) for v in (value if isinstance(value, list) else [value]))
            setattr(cfg, key, value)
    for key in known:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}") from exc


def _thread_count() -> int:
    raw = os.environ.get("SHRINKER_AUDIT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _grid_map(func, cells):
    """Evaluate func over grid cells, preserving cell order."""
    cells = list(cells)
    workers = _thread_count()
    if workers == 1 or len(cells) <= 1:
        return [func(cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, cells))


def _write_json(out_dir: Path, name: str, payload: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    dest = out_dir / name
    with open(dest, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return dest


def _report_ok(report: audit_mod.AuditReport) -> bool:
    """Pass, or inconclusive with a strictly positive margin."""
    if report.conclusive:
        return report.passed
    return report.margin > 0.0


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_verify_identities(config: RunConfig) -> int:
    model = parse_model(config.model)
    rng = np.random.default_rng(config.seed)
    fd_cfg = FDConfig(h=config.fd_h)
    points = [random_point(model, rng) for _ in range(config.samples)]
    reports = list(audit_mod.check_soliton_identities(model, points, cfg=fd_cfg))
    notices = []
    if model.degenerate:
        notices.append("model has R == 0: curvature-ratio audits skipped")
    else:
        reports += audit_mod.check_deltaf_Rf(model, points, cfg=fd_cfg)
    reports += audit_mod.gradient_f_bound_audit(model, points)
    # FD cross-check of the curvature itself at a few of the sampled points.
    worst = 0.0
    for p in points[: min(10, len(points))]:
        chart = Chart(model, p)
        rc = ricci_fd(chart, np.zeros(model.n), fd_cfg)
        g0 = chart.metric_at(np.zeros(model.n))
        closed = np.zeros_like(g0)
        offset = 0
        for f in model.factors:
            if f.kind == "sphere":
                closed[offset : offset + f.dim, offset : offset + f.dim] = (
                    0.5 * g0[offset : offset + f.dim, offset : offset + f.dim]
                )
            offset += f.dim
        worst = max(worst, float(np.max(np.abs(rc - closed))))
    reports.append(
        audit_mod.AuditReport(
            "ricci-fd-vs-closed", worst, 1e-4, 0.0, context={"model": model.label}
        )
    )
    for report in reports:
        print(report.summary_line())
    for notice in notices:
        print(f"NOTE  {notice}")
    payload = {
        "command": "verify-identities",
        "config": config.to_dict(),
        "notices": notices,
        "reports": [r.to_dict() for r in reports],
        "all_pass": all(r.passed for r in reports),
    }
    dest = _write_json(Path(config.out), "verify_identities.json", payload)
    print(f"report: {dest}")
    return EXIT_OK if payload["all_pass"] else 1


def cmd_geodesic(config: RunConfig) -> int:
    model = parse_model(config.model)
    params = PhiParams(config.c[0])
    x = base_point(model)
    y = canonical_target(model, config.ry[0])
    shoot = solve_bvp_shooting(
        model, params, x, y, tol=config.shoot_tol, step=config.step, density=config.density
    )
    disc = minimize_action_discrete(model, params, x, y, N=config.N, max_iters=config.max_iters)
    evidence = certify_minimal_candidate(model, params, shoot, disc)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_path_csv(out_dir / "geodesic_shooting.csv", model, params, shoot)
    write_path_csv(out_dir / "geodesic_discrete.csv", model, params, disc)
    payload = {
        "command": "geodesic",
        "config": config.to_dict(),
        "evidence": evidence,
        "shooting": path_json_dict(model, params, shoot),
        "discrete": path_json_dict(model, params, disc),
    }
    dest = _write_json(out_dir, "geodesic_summary.json", payload)
    equivalent = evidence["J_agree"] and evidence["C_agree"]
    print(
        f"J shooting={shoot.action_J:.9g} discrete={disc.action_J:.9g} "
        f"C shooting={shoot.C_value:.9g} discrete={disc.C_value:.9g}"
    )
    print(f"cross-solver equivalence: {'PASS' if equivalent else 'FAIL'}")
    print(f"report: {dest}")
    return EXIT_OK if equivalent else 1


def _audit_cell(model, config, cell):
    c_val, ry = cell
    params = PhiParams(c_val)
    x = base_point(model)
    y = canonical_target(model, ry)
    shoot = solve_bvp_shooting(
        model, params, x, y, tol=config.shoot_tol, step=config.step, density=config.density
    )
    disc = minimize_action_discrete(model, params, x, y, N=config.N, max_iters=config.max_iters)
    certify_minimal_candidate(model, params, shoot, disc)
    reports = audit_mod.run_audit_chain(
        model, params, shoot, tol=config.audit_tol, cfg=FDConfig(h=config.fd_h)
    )
    return {
        "c": c_val,
        "ry": ry,
        "minimal_evidence": shoot.minimal_evidence,
        "reports": [r.to_dict() for r in reports],
        "ok": all(_report_ok(r) for r in reports),
        "lines": [r.summary_line() for r in reports],
    }


def cmd_audit_chain(config: RunConfig) -> int:
    model = parse_model(config.model)
    for c_val in config.c:
        if not c_val < 1.0:
            raise ConfigError(f"c must be < 1 for the audit chain (got {c_val})")
    cells = [(c_val, ry) for c_val in config.c for ry in config.ry]
    results = _grid_map(lambda cell: _audit_cell(model, config, cell), cells)
    all_ok = all(cell["ok"] for cell in results)
    for cell in results:
        print(f"cell c={cell['c']} ry={cell['ry']}:")
        for line in cell.pop("lines"):
            print(f"  {line}")
    payload = {
        "command": "audit-chain",
        "config": config.to_dict(),
        "cells": results,
        "all_ok": all_ok,
    }
    dest = _write_json(Path(config.out), "audit_chain.json", payload)
    print(f"report: {dest}")
    return EXIT_OK if all_ok else 1


def cmd_scan(config: RunConfig) -> int:
    model = parse_model(config.model)
    for c_val in config.c:
        if not c_val < 1.0:
            raise ConfigError(f"c must be < 1 for the scan (got {c_val})")
    cells = [(c_val, ry) for c_val in config.c for ry in config.ry]

    def run_cell(cell):
        c_val, ry = cell
        params = PhiParams(c_val)
        y = canonical_target(model, ry)
        result = audit_mod.find_good_point(
            model, params, y, density=config.density, step=config.step, tol=config.audit_tol
        )
        return {
            "c": c_val,
            "ry": ry,
            "ricci_norm_z": result.ricci_norm,
            "bound": result.bound,
            "c_hat": result.c_hat,
            "d_zy": result.d_zy,
            "window": list(result.window),
            "z": [float(v) for v in result.z],
            "report": result.report.to_dict(),
            "ok": _report_ok(result.report) and result.d_zy <= ry / 2.0 + 1e-9,
        }

    results = _grid_map(run_cell, cells)
    c_hat_sup = max(cell["c_hat"] for cell in results)
    all_ok = all(cell["ok"] for cell in results)
    for cell in results:
        status = "PASS" if cell["ok"] else "FAIL"
        print(
            f"{status}  scan c={cell['c']} ry={cell['ry']}: |Rc|(z)={cell['ricci_norm_z']:.6g} "
            f"<= C_hat*(ry+1)={cell['bound']:.6g} (C_hat={cell['c_hat']:.6g})"
        )
    print(f"empirical uniform constant sup C_hat = {c_hat_sup:.6g}")
    payload = {
        "command": "scan",
        "config": config.to_dict(),
        "cells": results,
        "c_hat_sup": c_hat_sup,
        "all_ok": all_ok,
    }
    dest = _write_json(Path(config.out), "scan.json", payload)
    print(f"report: {dest}")
    return EXIT_OK if all_ok else 1


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shrinker-audit",
        description="Numerical audits on explicit gradient Ricci shrinkers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--model", help="model string, e.g. cylinder:k=2,m=2")
        p.add_argument("--c", type=_float_list, help="comma-separated potential constants")
        p.add_argument("--ry", type=_float_list, help="comma-separated target radii")
        p.add_argument("--seed", type=int, help="random seed (default 0)")
        p.add_argument("--out", help="output directory for reports (default ./reports)")
        p.add_argument("--config", help="JSON config file; flags override its fields")

    p_verify = sub.add_parser("verify-identities", help="pointwise identity suite")
    add_common(p_verify)
    p_verify.add_argument("--samples", type=int, help="random sample points (default 100)")

    p_geo = sub.add_parser("geodesic", help="solve one boundary-value case both ways")
    add_common(p_geo)
    p_geo.add_argument("--N", type=int, help="discrete-minimizer grid size (default 256)")

    p_chain = sub.add_parser("audit-chain", help="inequality chain over a (c, ry) grid")
    add_common(p_chain)
    p_chain.add_argument("--N", type=int, help="discrete-minimizer grid size (default 256)")

    p_scan = sub.add_parser("scan", help="good-point scan over a (c, ry) grid")
    add_common(p_scan)
    return parser


_COMMANDS = {
    "verify-identities": cmd_verify_identities,
    "geodesic": cmd_geodesic,
    "audit-chain": cmd_audit_chain,
    "scan": cmd_scan,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
    except (ConfigError, InvalidModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](config)
    except (ConfigError, InvalidModelError, DegenerateEndpointsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PreconditionError, DegenerateModelError, CutoffUndefinedError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ShrinkerAuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
