"""Numerical audits of the soliton identity chain, with explicit margins.

Each audit evaluates one named identity or inequality on concrete points or
paths and reports lhs, rhs, margin = rhs - lhs and a quadrature error
estimate. Audits never claim more than the numerics support: a report is
``conclusive`` only when the quadrature error is at most 1% of the margin,
and the pass flag always carries its tolerance.

Path audits integrate against the trapezoid cutoff (ramp up on [0, 1],
plateau, ramp down on [s_bar - 1, s_bar]), so they require the path grid to
be aligned to the cutoff kinks; ``solve_bvp_shooting`` produces such grids
by default and ``scan_path`` rebuilds them with extra breakpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import quadrature
from .errors import (
    CutoffUndefinedError,
    DegenerateModelError,
    PreconditionError,
)
from .models import (
    ModelSpec,
    base_point,
    distance,
    eval_geometry,
    grad_potential,
    potential_f,
    radial_distance,
)
from .numgeom import Chart, FDConfig, potential_field, scalar_field, weighted_laplacian_fd
from .paths import PhiPath
from .phigeo import PhiParams, integrate_ivp, phi_value, solve_bvp_shooting

DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class CutoffZeta:
    """Trapezoid cutoff on [0, s_bar]: s, then 1, then s_bar - s."""

    s_bar: float

    def __post_init__(self):
        if self.s_bar < 2.0:
            raise CutoffUndefinedError(
                f"trapezoid cutoff needs s_bar >= 2 (got {self.s_bar:.6g})"
            )

    def zeta(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.minimum(np.minimum(s, 1.0), self.s_bar - s)

    def zeta_prime(self, s: np.ndarray) -> np.ndarray:
        """Slope +1 / 0 / -1; the kink points take the plateau value."""
        s = np.asarray(s, dtype=float)
        return np.where(s < 1.0, 1.0, np.where(s > self.s_bar - 1.0, -1.0, 0.0))

    def slope_at_midpoint(self, mid: float) -> float:
        if mid < 1.0:
            return 1.0
        if mid > self.s_bar - 1.0:
            return -1.0
        return 0.0

    @property
    def integral_zeta_sq(self) -> float:
        return self.s_bar - 4.0 / 3.0

    @property
    def integral_slope_sq(self) -> float:
        return 2.0


@dataclass
class AuditReport:
    """One audited (in)equality: lhs <= rhs up to tolerance, margin = rhs - lhs."""

    name: str
    lhs: float
    rhs: float
    tolerance: float
    quadrature_error: float = 0.0
    context: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.margin >= -self.tolerance

    @property
    def conclusive(self) -> bool:
        return self.quadrature_error <= 0.01 * abs(self.margin)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "pass": self.passed,
            "tolerance": self.tolerance,
            "quadrature_error": self.quadrature_error,
            "conclusive": self.conclusive,
            "context": self.context,
        }

    def summary_line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        if not self.conclusive:
            verdict += "?"
        return f"{verdict:5s} {self.name}: margin={self.margin:.6e}"


# ---------------------------------------------------------------------------
# Grid plumbing for cutoff-weighted quadrature
# ---------------------------------------------------------------------------


def _aligned_pieces(path: PhiPath, zeta: CutoffZeta):
    """(i0, i1, slope) per grid piece; requires kink-aligned breakpoints."""
    s_bar = path.s_bar
    needed = (1.0, s_bar - 1.0)
    breaks = path.breaks if path.breaks else (0.0, s_bar)
    for b in needed:
        if not any(abs(b - x) <= 1e-9 * (1.0 + abs(b)) for x in breaks):
            raise ValueError(
                "path grid is not aligned to the cutoff kinks; sample it on "
                "quadrature.audit_grid (solve_bvp_shooting does so by default)"
            )
    out = []
    for i0, i1 in quadrature.piece_slices(path.s, breaks):
        mid = 0.5 * (path.s[i0] + path.s[i1])
        out.append((i0, i1, zeta.slope_at_midpoint(float(mid))))
    return out


def _piece_integral(s: np.ndarray, vals: np.ndarray, i0: int, i1: int):
    fine = quadrature.simpson_uniform(s[i0 : i1 + 1], vals[i0 : i1 + 1])
    n = i1 - i0
    if n >= 2 and n % 2 == 0:
        coarse = quadrature.simpson_uniform(s[i0 : i1 + 1 : 2], vals[i0 : i1 + 1 : 2])
    else:
        coarse = float(np.trapezoid(vals[i0 : i1 + 1], s[i0 : i1 + 1]))
    return fine, abs(fine - coarse)


def _integral(path: PhiPath, zeta: CutoffZeta, vals: np.ndarray, slope_weight: bool = False):
    """Integral of vals ds, or of slope(zeta) * vals ds, with error estimate."""
    total = 0.0
    err = 0.0
    for i0, i1, slope in _aligned_pieces(path, zeta):
        if slope_weight:
            if slope == 0.0:
                continue
            part, part_err = _piece_integral(path.s, vals, i0, i1)
            total += slope * part
            err += part_err
        else:
            part, part_err = _piece_integral(path.s, vals, i0, i1)
            total += part
            err += part_err
    return total, err


def _grad_f_dot_velocity(model: ModelSpec, path: PhiPath) -> np.ndarray:
    return np.einsum("ij,ij->i", grad_potential(model, path.pos), path.vel)


def _speed_bound(path: PhiPath, params: PhiParams) -> float:
    return math.sqrt(path.C_value + params.c)


def _path_context(model: ModelSpec, params: PhiParams, path: PhiPath) -> dict:
    return {
        "model": model.label,
        "c": params.c,
        "s_bar": path.s_bar,
        "C_value": path.C_value,
        "drift": path.drift,
        "n_nodes": path.n_nodes,
        "is_minimal_candidate": path.is_minimal_candidate,
        "A": _speed_bound(path, params),
    }


# ---------------------------------------------------------------------------
# Pointwise identity audits (finite-difference oracle driven)
# ---------------------------------------------------------------------------


def check_soliton_identities(model: ModelSpec, sample_points, tol: float = 1e-4,
                             cfg: FDConfig = FDConfig()):
    """Drifted-Laplacian identities for R and f, evaluated by the FD oracle.

    For constant-R models the curvature identity reduces to 2|Rc|^2 = R,
    which is itself a consequence of the soliton structure; both sides are
    evaluated anyway so a broken model cannot slip through.
    """
    sample_points = list(sample_points)
    worst_r = 0.0
    worst_f = 0.0
    n_half = model.n / 2.0
    for p in sample_points:
        chart = Chart(model, p)
        origin = np.zeros(model.n)
        f_field = potential_field(chart)
        r_field = scalar_field(chart, lambda pos: np.full(np.asarray(pos).shape[:-1],
                                                          model.scalar_R))
        geom = eval_geometry(model, p)
        lap_r = weighted_laplacian_fd(chart, r_field, f_field, origin, cfg)
        resid_r = abs(lap_r - (-2.0 * geom.ricci_norm_sq + geom.scalar_R))
        lap_f = weighted_laplacian_fd(chart, f_field, f_field, origin, cfg)
        resid_f = abs(lap_f - (n_half - geom.f))
        worst_r = max(worst_r, resid_r)
        worst_f = max(worst_f, resid_f)
    ctx = {"model": model.label, "points": len(sample_points), "fd_h": cfg.h}
    return [
        AuditReport("soliton-identity:curvature", worst_r, tol, 0.0, context=dict(ctx)),
        AuditReport("soliton-identity:potential", worst_f, tol, 0.0, context=dict(ctx)),
    ]


def check_deltaf_Rf(model: ModelSpec, sample_points, tol: float = 1e-4,
                    cfg: FDConfig = FDConfig()):
    """Drifted Laplacian of R/f: FD value vs the four-term expansion, plus
    the upper bound -|Rc|^2/f + 4(1+sqrt(n))^2/f."""
    n = model.n
    bound_coeff = 4.0 * (1.0 + math.sqrt(n)) ** 2
    worst_match = 0.0
    min_margin = math.inf
    argmin = (0.0, 0.0)
    for p in sample_points:
        geom = eval_geometry(model, p)
        if geom.f <= 1e-12:
            raise DegenerateModelError(
                f"{model}: R/f audit needs f > 0 at every sample (got f={geom.f})"
            )
        chart = Chart(model, p)
        origin = np.zeros(model.n)
        f_field = potential_field(chart)
        ratio_field = scalar_field(
            chart, lambda pos: model.scalar_R / potential_f(model, pos)
        )
        fd_val = weighted_laplacian_fd(chart, ratio_field, f_field, origin, cfg)
        f = geom.f
        R = geom.scalar_R
        rc_grad = geom.ricci(geom.grad_f, geom.grad_f)
        expansion = (
            (R / f**2) * (2.0 * f - n / 2.0)
            - 2.0 * geom.ricci_norm_sq / f
            - 4.0 * rc_grad / f**2
            + 2.0 * R * geom.grad_f_norm_sq() / f**3
        )
        worst_match = max(worst_match, abs(fd_val - expansion))
        bound_rhs = (-geom.ricci_norm_sq + bound_coeff) / f
        margin = bound_rhs - expansion
        if margin < min_margin:
            min_margin = margin
            argmin = (expansion, bound_rhs)
    ctx = {"model": model.label, "fd_h": cfg.h}
    return [
        AuditReport("deltaf-Rf:expansion", worst_match, tol, 0.0, context=dict(ctx)),
        AuditReport("deltaf-Rf:bound", argmin[0], argmin[1], 0.0, context=dict(ctx)),
    ]


def gradient_f_bound_audit(model: ModelSpec, sample_points, tol: float = 1e-12):
    """Pointwise |grad f| <= sqrt(f) <= sqrt(n/2) + r.

    On the flat model the first bound is an equality, so the tolerance
    absorbs float rounding.
    """
    half_n = math.sqrt(model.n / 2.0)
    min_a = math.inf
    min_b = math.inf
    arg_a = (0.0, 0.0)
    arg_b = (0.0, 0.0)
    for p in sample_points:
        geom = eval_geometry(model, p)
        sqrt_f = math.sqrt(geom.f)
        grad_norm = math.sqrt(geom.grad_f_norm_sq())
        r = float(radial_distance(model, p))
        if sqrt_f - grad_norm < min_a:
            min_a = sqrt_f - grad_norm
            arg_a = (grad_norm, sqrt_f)
        if half_n + r - sqrt_f < min_b:
            min_b = half_n + r - sqrt_f
            arg_b = (sqrt_f, half_n + r)
    ctx = {"model": model.label}
    return [
        AuditReport("gradient-f-bound:sqrt-f", arg_a[0], arg_a[1], tol, context=dict(ctx)),
        AuditReport("gradient-f-bound:radial", arg_b[0], arg_b[1], tol, context=dict(ctx)),
    ]


# ---------------------------------------------------------------------------
# Path audits (the displayed inequality chain)
# ---------------------------------------------------------------------------


def _delta_f_phi_fd(model: ModelSpec, params: PhiParams, pos: np.ndarray,
                    cfg: FDConfig) -> np.ndarray:
    """Drifted Laplacian of the potential phi, FD-evaluated at each node."""
    out = np.empty(pos.shape[0])
    origin = None
    for i in range(pos.shape[0]):
        chart = Chart(model, pos[i])
        if origin is None:
            origin = np.zeros(chart.dim)
        f_field = potential_field(chart)
        phi_field = scalar_field(chart, lambda q: phi_value(model, params, q))
        out[i] = weighted_laplacian_fd(chart, phi_field, f_field, origin, cfg)
    return out


def second_variation_audit(model: ModelSpec, params: PhiParams, path: PhiPath,
                           tol: float = DEFAULT_TOL,
                           cfg: FDConfig = FDConfig()) -> AuditReport:
    """Stability-style integral inequality along a minimal candidate.

    LHS: integral of zeta^2 * (Rc_f(S,S) - drifted Laplacian of phi), with
    Rc_f(S,S) = |S|^2/2 by the soliton structure and the Laplacian term
    FD-evaluated along the path. RHS: n * integral of slope^2 minus twice
    the slope-weighted boundary coupling with grad f.
    """
    zeta = CutoffZeta(path.s_bar)
    zs = zeta.zeta(path.s)
    rc_term = 0.5 * path.speed_sq()
    lap_phi = _delta_f_phi_fd(model, params, path.pos, cfg)
    lhs, err_lhs = _integral(path, zeta, zs * zs * (rc_term - lap_phi))
    coupling = _grad_f_dot_velocity(model, path)
    boundary, err_b = _integral(path, zeta, zs * coupling, slope_weight=True)
    rhs = model.n * zeta.integral_slope_sq - 2.0 * boundary
    ctx = _path_context(model, params, path)
    ctx["boundary_term"] = boundary
    return AuditReport(
        "second-variation", lhs, rhs, tol, err_lhs + 2.0 * err_b, context=ctx
    )


def combined_integral_audit(model: ModelSpec, params: PhiParams, path: PhiPath,
                            tol: float = DEFAULT_TOL) -> AuditReport:
    """Combined inequality mixing the curvature ratio, the speed, and the
    boundary coupling, all weighted by the cutoff."""
    zeta = CutoffZeta(path.s_bar)
    zs = zeta.zeta(path.s)
    n = model.n
    f = potential_f(model, path.pos)
    safe = f > 0.0
    inv_f = np.where(safe, 1.0 / np.where(safe, f, 1.0), 0.0)
    rc_sq = np.array([eval_geometry(model, p).ricci_norm_sq for p in path.pos])
    i_rc, err_rc = _integral(path, zeta, zs * zs * rc_sq * inv_f)
    i_invf, err_invf = _integral(path, zeta, zs * zs * inv_f)
    i_speed, err_speed = _integral(path, zeta, zs * zs * path.speed_sq())
    coupling = _grad_f_dot_velocity(model, path)
    boundary, err_b = _integral(path, zeta, zs * coupling, slope_weight=True)
    coeff = 4.0 * (1.0 + math.sqrt(n)) ** 2
    lhs = 0.5 * params.c * (i_rc - coeff * i_invf) + 0.5 * i_speed
    rhs = 2.0 * n - 2.0 * boundary
    qerr = 0.5 * params.c * (err_rc + coeff * err_invf) + 0.5 * err_speed + 2.0 * err_b
    ctx = _path_context(model, params, path)
    ctx["boundary_term"] = boundary
    return AuditReport("combined-integral", lhs, rhs, tol, qerr, context=ctx)


def boundary_term_audit(model: ModelSpec, params: PhiParams, path: PhiPath,
                        tol: float = DEFAULT_TOL) -> AuditReport:
    """Slope-weighted boundary coupling against its closed-form estimate."""
    zeta = CutoffZeta(path.s_bar)
    zs = zeta.zeta(path.s)
    coupling = _grad_f_dot_velocity(model, path)
    boundary, err_b = _integral(path, zeta, zs * coupling, slope_weight=True)
    lhs = -boundary
    a_bound = _speed_bound(path, params)
    r_x = float(radial_distance(model, path.pos[0]))
    r_y = float(radial_distance(model, path.pos[-1]))
    rhs = 0.5 * a_bound * (math.sqrt(2.0 * model.n) + r_x + r_y + 2.0 * a_bound)
    ctx = _path_context(model, params, path)
    ctx.update({"r_x": r_x, "r_y": r_y})
    return AuditReport("boundary-term", lhs, rhs, tol, err_b, context=ctx)


def radial_envelope_audit(model: ModelSpec, params: PhiParams, path: PhiPath,
                          tol: float = DEFAULT_TOL) -> AuditReport:
    """r(gamma(s)) <= min(r(x) + s*A, r(y) + (s_bar - s)*A) at every node."""
    a_bound = _speed_bound(path, params)
    radii = radial_distance(model, path.pos)
    r_x = float(radii[0])
    r_y = float(radii[-1])
    envelope = np.minimum(r_x + path.s * a_bound, r_y + (path.s_bar - path.s) * a_bound)
    slack = envelope - radii
    k = int(np.argmin(slack))
    ctx = _path_context(model, params, path)
    ctx.update({"worst_node": k, "worst_s": float(path.s[k])})
    return AuditReport(
        "radial-envelope", float(radii[k]), float(envelope[k]), tol, 0.0, context=ctx
    )


def weighted_ricci_integral_audit(model: ModelSpec, params: PhiParams, path: PhiPath,
                                  x=None, y=None,
                                  tol: float = DEFAULT_TOL) -> AuditReport:
    """Cutoff-weighted integral of |Rc|^2/f against its explicit bound."""
    if model.degenerate:
        raise DegenerateModelError(
            f"{model}: weighted curvature integral needs f(O) > 0 (degenerate: R == 0)"
        )
    x = path.pos[0] if x is None else x
    y = path.pos[-1] if y is None else y
    zeta = CutoffZeta(path.s_bar)
    zs = zeta.zeta(path.s)
    f = potential_f(model, path.pos)
    rc_sq = np.array([eval_geometry(model, p).ricci_norm_sq for p in path.pos])
    lhs, qerr = _integral(path, zeta, zs * zs * rc_sq / f)
    n = model.n
    a_bound = _speed_bound(path, params)
    f_origin = float(potential_f(model, base_point(model)))
    d_xy = float(distance(model, x, y))
    r_x = float(radial_distance(model, x))
    r_y = float(radial_distance(model, y))
    rhs = (
        4.0 * (1.0 + math.sqrt(n)) ** 2 * d_xy / f_origin
        + 4.0 * (math.sqrt(n) + a_bound) ** 2 / params.c
        + 2.0 * a_bound * (r_x + r_y) / params.c
    )
    ctx = _path_context(model, params, path)
    ctx.update({"f_origin": f_origin, "d_xy": d_xy, "r_x": r_x, "r_y": r_y})
    return AuditReport("weighted-ricci-integral", lhs, rhs, tol, qerr, context=ctx)


AUDIT_CHAIN_ORDER = (
    "second-variation",
    "combined-integral",
    "boundary-term",
    "weighted-ricci-integral",
    "radial-envelope",
)


def run_audit_chain(model: ModelSpec, params: PhiParams, path: PhiPath,
                    tol: float = DEFAULT_TOL,
                    cfg: FDConfig = FDConfig()) -> list:
    """All path audits in the order the estimates build on one another."""
    return [
        second_variation_audit(model, params, path, tol, cfg),
        combined_integral_audit(model, params, path, tol),
        boundary_term_audit(model, params, path, tol),
        weighted_ricci_integral_audit(model, params, path, tol=tol),
        radial_envelope_audit(model, params, path, tol),
    ]


# ---------------------------------------------------------------------------
# Concluding scan: a nearby point of small curvature
# ---------------------------------------------------------------------------


@dataclass
class GoodPointResult:
    z: np.ndarray
    ricci_norm: float
    bound: float
    c_hat: float
    report: AuditReport
    d_zy: float
    r_y: float
    speed_bound: float
    window: tuple
    path: PhiPath


def find_good_point(model: ModelSpec, params: PhiParams, y: np.ndarray,
                    density: int = 16, step: float = 1e-2,
                    tol: float = DEFAULT_TOL) -> GoodPointResult:
    """Scan a base-to-y minimal candidate for a point of controlled curvature.

    Solves the boundary-value problem from the base point O to y, verifies
    the radius precondition r(y) >= max(sqrt(2n), 3A), then scans the grid
    nodes with s in [(1 - 1/(2A)) * s_bar, s_bar - 1] for the node of least
    |Rc|. The returned bound ties the pointwise curvature at that node to
    the explicit constants of the weighted integral estimate; c_hat is the
    smallest constant making the whole chain pass, reported per run.
    """
    if model.degenerate:
        raise DegenerateModelError(
            f"{model}: scan needs f(O) > 0 (degenerate: R == 0)"
        )
    origin = base_point(model)
    r_y = float(distance(model, origin, y))
    n = model.n
    if r_y < 2.0:
        raise CutoffUndefinedError(
            f"{model}: scan needs r(y) >= 2 for the cutoff (got {r_y:.4g})"
        )
    first = solve_bvp_shooting(model, params, origin, y, step=step, density=density)
    a_bound = _speed_bound(first, params)
    required = max(math.sqrt(2.0 * n), 3.0 * a_bound)
    if r_y < required:
        raise PreconditionError(
            f"{model}: scan precondition r(y) >= max(sqrt(2n), 3A) = {required:.4g} "
            f"fails at r(y) = {r_y:.4g}"
        )
    s_bar = first.s_bar
    w0 = (1.0 - 1.0 / (2.0 * a_bound)) * s_bar
    if not w0 < s_bar - 1.0 - 1e-12:
        raise PreconditionError(
            f"{model}: empty scan window [{w0:.4g}, {s_bar - 1.0:.4g}]"
        )
    s_out, breaks = quadrature.audit_grid(s_bar, density, extra_breaks=(w0,))
    path = integrate_ivp(model, params, origin, first.vel[0], s_bar, step,
                         s_out=s_out, breaks=breaks)
    path.flags.append("shooting")
    window_mask = (path.s >= w0 - 1e-12) & (path.s <= s_bar - 1.0 + 1e-12)
    window_idx = np.nonzero(window_mask)[0]
    rc_norms = np.array(
        [math.sqrt(eval_geometry(model, path.pos[i]).ricci_norm_sq) for i in window_idx]
    )
    k = int(window_idx[int(np.argmin(rc_norms))])
    z = path.pos[k]
    rc_z = float(np.min(rc_norms))
    d_zy = float(distance(model, z, y))
    if d_zy > r_y / 2.0 + 1e-9:
        raise PreconditionError(
            f"{model}: scanned point is too far from y (d = {d_zy:.4g} > r(y)/2)"
        )
    f = potential_f(model, path.pos)
    rc_sq = np.array([eval_geometry(model, p).ricci_norm_sq for p in path.pos])
    window_vals = np.where(window_mask, rc_sq / f, 0.0)
    slices = quadrature.piece_slices(path.s, path.breaks)
    window_integral = 0.0
    window_err = 0.0
    for i0, i1 in slices:
        mid = 0.5 * (path.s[i0] + path.s[i1])
        if w0 - 1e-12 <= mid <= s_bar - 1.0 + 1e-12:
            part, part_err = _piece_integral(path.s, window_vals, i0, i1)
            window_integral += part
            window_err += part_err
    span = r_y / (2.0 * a_bound) - 1.0
    denom = (math.sqrt(n / 2.0) + 1.5 * r_y) ** 2
    lower = span * (rc_z**2) / denom
    f_origin = float(potential_f(model, origin))
    rhs5 = (
        4.0 * (1.0 + math.sqrt(n)) ** 2 * r_y / f_origin
        + 4.0 * (math.sqrt(n) + a_bound) ** 2 / params.c
        + 2.0 * a_bound * r_y / params.c
    )
    bound = math.sqrt(rhs5 * denom / span)
    c_hat = bound / (r_y + 1.0)
    margin = min(window_integral - lower, rhs5 - window_integral)
    ctx = _path_context(model, params, path)
    ctx.update(
        {
            "window_integral": window_integral,
            "lower_display": lower,
            "rhs_display": rhs5,
            "c_hat": c_hat,
            "bound": bound,
            "ricci_norm_z": rc_z,
            "d_zy": d_zy,
            "r_y": r_y,
            "window": [w0, s_bar - 1.0],
        }
    )
    report = AuditReport(
        "good-point-chain",
        lower if window_integral - lower <= rhs5 - window_integral else window_integral,
        window_integral if window_integral - lower <= rhs5 - window_integral else rhs5,
        tol,
        window_err,
        context=ctx,
    )
    if rc_z > bound + tol:
        raise PreconditionError(
            f"{model}: scanned curvature {rc_z:.4g} exceeds its bound {bound:.4g}"
        )
    return GoodPointResult(
        z=z,
        ricci_norm=rc_z,
        bound=bound,
        c_hat=c_hat,
        report=report,
        d_zy=d_zy,
        r_y=r_y,
        speed_bound=a_bound,
        window=(w0, s_bar - 1.0),
        path=path,
    )
