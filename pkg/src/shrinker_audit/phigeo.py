"""Potential-geodesic machinery.

Paths here are critical points of the action

    J(gamma) = integral of |gamma'|^2 + 2*phi(gamma) ds,

with the potential phi = c*R/(2f) built from the model's scalar curvature
and soliton potential. Critical points satisfy the Newton-type equation
(covariant acceleration equals grad phi) and carry the first integral
|S|^2 - 2*phi = C, which every solver monitors as its drift diagnostic.

On the catalog models R is constant and f depends only on the Euclidean
coordinates, so grad phi = -(c*R/(2 f^2)) grad f lives entirely in the
Euclidean blocks; sphere components feel only the constraint curvature.

Two independent boundary-value solvers are provided so each can serve as the
other's oracle: damped-Newton shooting on the endpoint-miss map, and direct
minimization of the discretized action over interior nodes (first-order
descent with Barzilai-Borwein steps and a nonmonotone Armijo backtracking
line search).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import quadrature
from .errors import (
    ConfigError,
    DegenerateEndpointsError,
    DriftExceededError,
    IllConditionedShootingError,
    ShootingConvergenceError,
)
from .models import (
    ModelSpec,
    background_geodesic,
    distance,
    exp_map,
    grad_potential,
    log_map,
    potential_f,
    project_point,
    project_tangent,
    radial_distance,
    tangent_basis,
    validate_point,
    validate_tangent,
)
from .paths import PhiPath

MAX_IVP_STEP = 1e-2
DEFAULT_DRIFT_TOL = 1e-6


@dataclass(frozen=True)
class PhiParams:
    """Potential strength: 2*phi = c * R/f. Audits additionally need c < 1."""

    c: float

    def __post_init__(self):
        if not self.c > 0.0:
            raise ConfigError(f"potential constant c must be positive (got {self.c})")


def phi_value(model: ModelSpec, params: PhiParams, pos: np.ndarray) -> np.ndarray:
    """phi at one point or a batch; the flat model returns 0 by the R = 0 limit."""
    cR = params.c * model.scalar_R
    if cR == 0.0:
        pos = np.asarray(pos, dtype=float)
        return np.zeros(pos.shape[:-1])
    return cR / (2.0 * potential_f(model, pos))


def grad_phi(model: ModelSpec, params: PhiParams, pos: np.ndarray) -> np.ndarray:
    cR = params.c * model.scalar_R
    pos = np.asarray(pos, dtype=float)
    if cR == 0.0:
        return np.zeros_like(pos)
    f = potential_f(model, pos)
    coef = -cR / (2.0 * f * f)
    return coef[..., None] * grad_potential(model, pos)


def phi_and_gradient(model: ModelSpec, params: PhiParams, p: np.ndarray):
    """Closed-form (phi, grad phi) at a point."""
    validate_point(model, p)
    return float(phi_value(model, params, p)), grad_phi(model, params, p)


# ---------------------------------------------------------------------------
# Initial-value integration (classical RK4 with sphere renormalization)
# ---------------------------------------------------------------------------


class _Dynamics:
    """Precomputed slices and constants for the equations of motion."""

    def __init__(self, model: ModelSpec, params: PhiParams):
        self.model = model
        self.cR = params.c * model.scalar_R
        self.f_offset = sum(f.dim / 2.0 for f in model.sphere_factors)
        self.euclid = [slice(f.start, f.stop) for f in model.euclid_factors]
        self.sphere = [(slice(f.start, f.stop), f.radius**2) for f in model.sphere_factors]

    def potential_f(self, pos: np.ndarray) -> float:
        f = self.f_offset
        for sl in self.euclid:
            x = pos[sl]
            f += np.dot(x, x) / 4.0
        return f

    def energy(self, pos: np.ndarray, vel: np.ndarray) -> float:
        e = np.dot(vel, vel)
        if self.cR != 0.0:
            e -= self.cR / self.potential_f(pos)
        return e

    def accel(self, pos: np.ndarray, vel: np.ndarray) -> np.ndarray:
        acc = np.zeros_like(pos)
        if self.cR != 0.0:
            f = self.potential_f(pos)
            coef = -self.cR / (4.0 * f * f)
            for sl in self.euclid:
                acc[sl] = coef * pos[sl]
        for sl, r_sq in self.sphere:
            v = vel[sl]
            acc[sl] = -(np.dot(v, v) / r_sq) * pos[sl]
        return acc

    def renormalize(self, pos: np.ndarray, vel: np.ndarray) -> None:
        for sl, r_sq in self.sphere:
            u = pos[sl]
            u *= math.sqrt(r_sq) / np.linalg.norm(u)
            v = vel[sl]
            v -= (np.dot(u, v) / r_sq) * u

    def rk4_step(self, pos: np.ndarray, vel: np.ndarray, h: float):
        a1 = self.accel(pos, vel)
        p2 = pos + (0.5 * h) * vel
        v2 = vel + (0.5 * h) * a1
        a2 = self.accel(p2, v2)
        p3 = pos + (0.5 * h) * v2
        v3 = vel + (0.5 * h) * a2
        a3 = self.accel(p3, v3)
        p4 = pos + h * v3
        v4 = vel + h * a3
        a4 = self.accel(p4, v4)
        pos_new = pos + (h / 6.0) * (vel + 2.0 * v2 + 2.0 * v3 + v4)
        vel_new = vel + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        self.renormalize(pos_new, vel_new)
        return pos_new, vel_new


def _march(dyn: _Dynamics, p0, v0, s_nodes, step: float,
           pos_hist=None, vel_hist=None, energies=None):
    """Advance the state across ``s_nodes``, landing on every node exactly.

    Each gap is split into equal substeps no larger than ``step``. The same
    routine drives both the recording integrator and the shooting trials so
    that a converged trial and the final recorded path follow bitwise the
    same discrete trajectory.
    """
    pos = np.array(p0, dtype=float)
    vel = np.array(v0, dtype=float)
    track = energies is not None
    if track:
        e0 = dyn.energy(pos, vel)
        e_min = e_max = e0
        energies[0] = e0
    else:
        e_min = e_max = 0.0
    if pos_hist is not None:
        pos_hist[0] = pos
        vel_hist[0] = vel
    for i in range(1, len(s_nodes)):
        gap = s_nodes[i] - s_nodes[i - 1]
        n_sub = max(1, math.ceil(gap / step - 1e-12))
        h = gap / n_sub
        for _ in range(n_sub):
            pos, vel = dyn.rk4_step(pos, vel, h)
            if track:
                e = dyn.energy(pos, vel)
                e_min = min(e_min, e)
                e_max = max(e_max, e)
        if pos_hist is not None:
            pos_hist[i] = pos
            vel_hist[i] = vel
        if track:
            energies[i] = dyn.energy(pos, vel)
    return pos, vel, e_min, e_max


def integrate_ivp(
    model: ModelSpec,
    params: PhiParams,
    p0: np.ndarray,
    v0: np.ndarray,
    s_end: float,
    step: float = MAX_IVP_STEP,
    s_out=None,
    breaks=None,
    drift_tol: float = DEFAULT_DRIFT_TOL,
) -> PhiPath:
    """Integrate the equations of motion from (p0, v0) over [0, s_end].

    Sphere components are renormalized after every step. The first integral
    |S|^2 - 2*phi is monitored at every internal step; exceeding
    ``drift_tol`` aborts (the step is too large for the requested drift).
    When ``s_out`` is given, the integrator lands on those nodes exactly by
    splitting each gap into equal substeps no larger than ``step``.
    """
    if step > MAX_IVP_STEP * (1.0 + 1e-12):
        raise ValueError(f"integration step {step} exceeds the maximum {MAX_IVP_STEP}")
    if s_end <= 0.0:
        raise ValueError("s_end must be positive")
    validate_point(model, p0)
    validate_tangent(model, p0, v0)
    dyn = _Dynamics(model, params)
    if s_out is None:
        n_steps = max(1, math.ceil(s_end / step))
        s_nodes = np.linspace(0.0, s_end, n_steps + 1)
        breaks = (0.0, s_end)
    else:
        s_nodes = np.asarray(s_out, dtype=float)
        if s_nodes[0] != 0.0 or abs(s_nodes[-1] - s_end) > 1e-12 * (1.0 + s_end):
            raise ValueError("s_out must start at 0 and end at s_end")
        breaks = tuple(breaks) if breaks is not None else (0.0, s_end)
    n_nodes = len(s_nodes)
    pos_hist = np.empty((n_nodes, model.ambient_dim))
    vel_hist = np.empty((n_nodes, model.ambient_dim))
    energies = np.empty(n_nodes)
    pos = project_point(model, p0)
    vel = project_tangent(model, pos, v0)
    _, _, e_min, e_max = _march(dyn, pos, vel, s_nodes, step,
                                pos_hist=pos_hist, vel_hist=vel_hist, energies=energies)
    c_value = float(np.median(energies))
    drift = max(e_max - c_value, c_value - e_min)
    if drift > drift_tol:
        raise DriftExceededError(
            f"conserved-quantity drift {drift:.3e} exceeds {drift_tol:.1e}; "
            f"step {step} is too large"
        )
    path = PhiPath(
        s=s_nodes,
        pos=pos_hist,
        vel=vel_hist,
        C_value=c_value,
        drift=float(drift),
        breaks=breaks,
    )
    path.action_J = action(model, params, path)
    return path


# ---------------------------------------------------------------------------
# Action and conserved quantity on sampled paths
# ---------------------------------------------------------------------------


def action(model: ModelSpec, params: PhiParams, path: PhiPath) -> float:
    """Composite Simpson quadrature of |S|^2 + 2*phi over the path grid."""
    integrand = path.speed_sq() + 2.0 * phi_value(model, params, path.pos)
    return float(quadrature.integrate(path.s, integrand, path.breaks))


def conserved_quantity(model: ModelSpec, params: PhiParams, path: PhiPath):
    """(C, drift): median of |S|^2 - 2*phi over nodes and its max deviation."""
    e = path.speed_sq() - 2.0 * phi_value(model, params, path.pos)
    c_value = float(np.median(e))
    return c_value, float(np.max(np.abs(e - c_value)))


# ---------------------------------------------------------------------------
# Boundary-value solver 1: damped-Newton shooting
# ---------------------------------------------------------------------------


def solve_bvp_shooting(
    model: ModelSpec,
    params: PhiParams,
    x: np.ndarray,
    y: np.ndarray,
    tol: float = 1e-10,
    step: float = MAX_IVP_STEP,
    max_newton: int = 100,
    density: int = 16,
    s_out=None,
    breaks=None,
) -> PhiPath:
    """Find the initial velocity whose trajectory lands on y at s = d(x, y).

    The parameter interval is [0, d(x, y)]; the speed is whatever the solver
    finds. Initial guess: the background-geodesic velocity scaled to speed
    sqrt(1 + c * mean(R/f)). Newton iterations act on velocity coefficients
    in an orthonormal tangent basis, with a forward-difference Jacobian and
    Armijo damping on the endpoint miss.
    """
    validate_point(model, x)
    validate_point(model, y)
    s_bar = float(distance(model, x, y))
    if s_bar <= 0.0:
        raise DegenerateEndpointsError(f"{model}: shooting needs x != y")
    dyn = _Dynamics(model, params)
    bg = background_geodesic(model, x, y, 64)
    if model.scalar_R == 0.0:
        mean_rof = 0.0
    else:
        mean_rof = float(np.mean(model.scalar_R / potential_f(model, bg.pos)))
    v_guess = bg.vel[0] * math.sqrt(1.0 + params.c * mean_rof)
    basis_x = tangent_basis(model, x)
    basis_y = tangent_basis(model, y)
    # Fix the output grid now: Newton trials march on exactly this schedule,
    # so the recorded path lands where the converged trial landed.
    if s_out is None:
        if s_bar >= 2.0:
            s_out, breaks = quadrature.audit_grid(s_bar, density)
        else:
            n = max(64, 4 * math.ceil(s_bar * density / 4.0))
            s_out = quadrature.uniform_grid(s_bar, n)
            breaks = (0.0, s_bar)

    def miss(coeffs: np.ndarray) -> np.ndarray:
        v0 = coeffs @ basis_x
        p_end, _, _, _ = _march(dyn, x, v0, s_out, step)
        return basis_y @ log_map(model, y, p_end)

    a = basis_x @ v_guess
    m = miss(a)
    m_norm = float(np.linalg.norm(m))
    best = m_norm
    for _ in range(max_newton):
        if m_norm < tol:
            break
        delta = 1e-7 * (1.0 + float(np.linalg.norm(a)))
        jac = np.empty((len(a), len(a)))
        for j in range(len(a)):
            e = np.zeros(len(a))
            e[j] = delta
            jac[:, j] = (miss(a + e) - m) / delta
        if np.linalg.cond(jac) > 1e10:
            raise IllConditionedShootingError(
                f"{model}: endpoint-miss Jacobian is ill-conditioned "
                f"(conjugate-point-like configuration at s_bar = {s_bar:.4g})"
            )
        step_dir = np.linalg.solve(jac, -m)
        t = 1.0
        accepted = False
        while t >= 1.0 / 256.0:
            a_try = a + t * step_dir
            m_try = miss(a_try)
            m_try_norm = float(np.linalg.norm(m_try))
            if m_try_norm < (1.0 - 1e-4 * t) * m_norm:
                a, m, m_norm = a_try, m_try, m_try_norm
                best = min(best, m_norm)
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise ShootingConvergenceError(
                f"{model}: shooting stalled with endpoint miss {m_norm:.3e}",
                best_miss=m_norm,
            )
    else:
        if m_norm >= tol:
            raise ShootingConvergenceError(
                f"{model}: no convergence in {max_newton} Newton iterations "
                f"(best endpoint miss {best:.3e})",
                best_miss=best,
            )
    v0 = a @ basis_x
    path = integrate_ivp(model, params, x, v0, s_bar, step, s_out=s_out, breaks=breaks)
    path.flags.append("shooting")
    return path


# ---------------------------------------------------------------------------
# Boundary-value solver 2: discrete action minimization
# ---------------------------------------------------------------------------


def _discrete_action(model, params, pos, ds, weights):
    segs = distance(model, pos[:-1], pos[1:])
    kinetic = float(np.sum(segs * segs)) / ds
    potential = 2.0 * ds * float(np.dot(weights, phi_value(model, params, pos)))
    return kinetic + potential


def _discrete_gradient(model, params, pos, ds):
    """Riemannian gradient of the discrete action at the interior nodes."""
    mid = pos[1:-1]
    log_prev = log_map(model, mid, pos[:-2])
    log_next = log_map(model, mid, pos[2:])
    grad = (-2.0 / ds) * (log_prev + log_next)
    grad += (2.0 * ds) * grad_phi(model, params, mid)
    return grad


def minimize_action_discrete(
    model: ModelSpec,
    params: PhiParams,
    x: np.ndarray,
    y: np.ndarray,
    N: int = 256,
    max_iters: int = 10000,
    grad_tol: float = 1e-6,
) -> PhiPath:
    """Minimize the discretized action over interior nodes.

    Initialization is the background geodesic; endpoints stay fixed and the
    interval length is pinned to d(x, y). Descent uses Barzilai-Borwein
    steps with a nonmonotone (10-step memory) Armijo backtracking safeguard;
    if backtracking hits its floor without progress the last iterate is
    returned with a ``stalled`` flag. Velocities are reconstructed by
    central differences of log maps (second-order one-sided at endpoints).
    """
    if N < 16:
        raise ValueError("N must be >= 16")
    bg = background_geodesic(model, x, y, N)
    s = bg.s
    s_bar = bg.s_bar
    ds = s_bar / N
    weights = np.ones(N + 1)
    weights[0] = weights[-1] = 0.5
    pos = bg.pos.copy()
    flags = []
    j_val = _discrete_action(model, params, pos, ds, weights)
    grad = _discrete_gradient(model, params, pos, ds)
    g_norm = float(np.linalg.norm(grad))
    recent = [j_val]
    eta = ds / 4.0
    prev_mid = None
    prev_grad = None
    iters = 0
    while iters < max_iters and g_norm > grad_tol * (1.0 + abs(j_val)):
        iters += 1
        if prev_mid is not None:
            dz = pos[1:-1] - prev_mid
            dg = grad - prev_grad
            denom = float(np.sum(dz * dg))
            if denom > 1e-300:
                eta = float(np.sum(dz * dz)) / denom
            eta = min(max(eta, 1e-10), 1e3)
        j_ref = max(recent)
        accepted = False
        trial = eta
        for _ in range(40):
            cand = pos.copy()
            cand[1:-1] = exp_map(model, pos[1:-1], -trial * grad)
            j_new = _discrete_action(model, params, cand, ds, weights)
            if j_new <= j_ref - 1e-4 * trial * g_norm * g_norm:
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            flags.append("stalled")
            break
        prev_mid = pos[1:-1].copy()
        prev_grad = grad
        pos = cand
        j_val = j_new
        recent.append(j_val)
        if len(recent) > 10:
            recent.pop(0)
        grad = _discrete_gradient(model, params, pos, ds)
        g_norm = float(np.linalg.norm(grad))
    if g_norm > grad_tol * (1.0 + abs(j_val)) and "stalled" not in flags:
        flags.append("budget-exhausted")
    vel = np.empty_like(pos)
    log_next = log_map(model, pos[1:-1], pos[2:])
    log_prev = log_map(model, pos[1:-1], pos[:-2])
    vel[1:-1] = (log_next - log_prev) / (2.0 * ds)
    vel[0] = (4.0 * log_map(model, pos[0], pos[1]) - log_map(model, pos[0], pos[2])) / (2.0 * ds)
    vel[-1] = -(4.0 * log_map(model, pos[-1], pos[-2]) - log_map(model, pos[-1], pos[-3])) / (
        2.0 * ds
    )
    path = PhiPath(s=s, pos=pos, vel=vel, breaks=(0.0, s_bar), flags=flags)
    path.C_value, path.drift = conserved_quantity(model, params, path)
    path.action_J = action(model, params, path)
    path.minimal_evidence["descent"] = {
        "iterations": iters,
        "grad_norm": g_norm,
        "grad_tol": grad_tol * (1.0 + abs(j_val)),
        "discrete_action": j_val,
    }
    return path


def certify_minimal_candidate(
    model: ModelSpec,
    params: PhiParams,
    shooting_path: PhiPath,
    discrete_path: PhiPath,
    J_rtol: float = 1e-3,
    C_atol: float = 1e-3,
    action_slack: float = 1e-6,
) -> dict:
    """Mark both paths as minimal candidates if the evidence supports it.

    Evidence: (a) the two independent solvers agree on J and C, and (b) the
    action does not exceed the action of the background geodesic under the
    same potential (the comparison path for the upper bound).
    """
    j_s, j_d = shooting_path.action_J, discrete_path.action_J
    c_s, c_d = shooting_path.C_value, discrete_path.C_value
    x = shooting_path.pos[0]
    y = shooting_path.pos[-1]
    bg = background_geodesic(model, x, y, 256)
    j_bg = action(model, params, bg)
    evidence = {
        "J_shooting": j_s,
        "J_discrete": j_d,
        "J_background": j_bg,
        "C_shooting": c_s,
        "C_discrete": c_d,
        "J_agree": bool(abs(j_s - j_d) <= J_rtol * (1.0 + abs(j_s))),
        "C_agree": bool(abs(c_s - c_d) <= C_atol),
        "below_background": bool(j_s <= j_bg + action_slack),
    }
    ok = evidence["J_agree"] and evidence["C_agree"] and evidence["below_background"]
    for path in (shooting_path, discrete_path):
        path.is_minimal_candidate = ok
        path.minimal_evidence.update(evidence)
    return evidence


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def path_csv_lines(model: ModelSpec, params: PhiParams, path: PhiPath):
    """CSV rows: s, point coords, velocity coords, |S|^2, phi, r."""
    dim = model.ambient_dim
    header = (
        ["s"]
        + [f"p{i}" for i in range(dim)]
        + [f"v{i}" for i in range(dim)]
        + ["speed_sq", "phi", "r"]
    )
    yield ",".join(header)
    speed_sq = path.speed_sq()
    phis = phi_value(model, params, path.pos)
    radii = radial_distance(model, path.pos)
    for i in range(path.n_nodes):
        row = (
            [repr(float(path.s[i]))]
            + [repr(float(v)) for v in path.pos[i]]
            + [repr(float(v)) for v in path.vel[i]]
            + [repr(float(speed_sq[i])), repr(float(phis[i])), repr(float(radii[i]))]
        )
        yield ",".join(row)


def write_path_csv(dest, model: ModelSpec, params: PhiParams, path: PhiPath) -> None:
    with open(dest, "w", encoding="utf-8") as handle:
        for line in path_csv_lines(model, params, path):
            handle.write(line + "\n")


def path_json_dict(model: ModelSpec, params: PhiParams, path: PhiPath) -> dict:
    return {
        "model": model.label,
        "c": params.c,
        "s_bar": path.s_bar,
        "n_nodes": path.n_nodes,
        "C_value": path.C_value,
        "drift": path.drift,
        "action_J": path.action_J,
        "is_minimal_candidate": path.is_minimal_candidate,
        "minimal_evidence": path.minimal_evidence,
        "flags": list(path.flags),
        "start": [float(v) for v in path.pos[0]],
        "end": [float(v) for v in path.pos[-1]],
    }


def path_json(model: ModelSpec, params: PhiParams, path: PhiPath) -> str:
    return json.dumps(path_json_dict(model, params, path), indent=2, sort_keys=True)
