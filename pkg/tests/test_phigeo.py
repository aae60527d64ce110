import math

import numpy as np
import pytest

from shrinker_audit import models, phigeo
from shrinker_audit.errors import (
    ConfigError,
    DegenerateEndpointsError,
    DriftExceededError,
)
from shrinker_audit.numgeom import Chart, gradient_fd, scalar_field
from shrinker_audit.phigeo import (
    PhiParams,
    action,
    certify_minimal_candidate,
    conserved_quantity,
    integrate_ivp,
    minimize_action_discrete,
    path_csv_lines,
    path_json_dict,
    phi_and_gradient,
    phi_value,
    solve_bvp_shooting,
)


def test_phi_params_requires_positive_c():
    PhiParams(0.5)
    with pytest.raises(ConfigError):
        PhiParams(0.0)
    with pytest.raises(ConfigError):
        PhiParams(-0.1)


def test_phi_round_sphere_constant(rng):
    m = models.round_sphere(3)
    p = models.random_point(m, rng)
    phi, grad = phi_and_gradient(m, PhiParams(0.1), p)
    assert phi == pytest.approx(0.05, abs=1e-14)
    assert np.max(np.abs(grad)) == 0.0


def test_phi_cylinder_value_and_fd_gradient():
    m = models.sphere_cylinder(2, 2)
    params = PhiParams(0.1)
    p = models.base_point(m)
    p[3] = 2.0
    phi, grad = phi_and_gradient(m, params, p)
    assert phi == pytest.approx(0.025, abs=1e-14)
    # cross-check the closed-form gradient against the FD chart gradient,
    # pushed to the ambient representation through the chart Jacobian
    chart = Chart(m, p)
    field = scalar_field(chart, lambda pos: phi_value(m, params, pos))
    chart_grad = gradient_fd(chart, field, np.zeros(m.n))
    h = 1e-6
    jac = np.empty((m.ambient_dim, m.n))
    for j in range(m.n):
        e = np.zeros(m.n)
        e[j] = h
        jac[:, j] = (chart.to_manifold(e) - chart.to_manifold(-e)) / (2.0 * h)
    ambient = jac @ chart_grad
    assert np.max(np.abs(ambient - grad)) <= 1e-6


def test_phi_gaussian_identically_zero(rng):
    m = models.gaussian(3)
    params = PhiParams(0.3)
    phi, grad = phi_and_gradient(m, params, np.zeros(3))
    assert phi == 0.0
    assert np.all(grad == 0.0)


def test_integrate_gaussian_straight_line():
    m = models.gaussian(2)
    path = integrate_ivp(m, PhiParams(0.1), np.zeros(2), np.array([1.0, 0.0]), 5.0, step=1e-2)
    assert np.allclose(path.pos[-1], [5.0, 0.0], atol=1e-12)
    assert path.drift <= 1e-13
    assert path.C_value == pytest.approx(1.0, abs=1e-13)


def test_integrate_round_sphere_reaches_antipode():
    m = models.round_sphere(2)
    p0 = models.base_point(m)
    v0 = np.array([0.0, 1.0, 0.0])
    s_bar = math.pi * math.sqrt(2.0)
    path = integrate_ivp(m, PhiParams(0.1), p0, v0, s_bar, step=1e-2)
    assert float(models.distance(m, path.pos[-1], -p0)) <= 1e-8
    assert path.drift <= 1e-10


def test_integrate_cylinder_matches_scalar_ode_oracle():
    """Radial symmetry reduces the motion to rho'' = -(c/(4 f^2)) rho with
    f = rho^2/4 + 1; a high-accuracy independent integrator is the oracle."""
    from scipy.integrate import solve_ivp

    m = models.sphere_cylinder(2, 2)
    params = PhiParams(0.1)
    p0 = models.base_point(m)
    v0 = np.zeros(5)
    v0[3] = 1.0
    path = integrate_ivp(m, params, p0, v0, 10.0, step=1e-3)

    def rhs(_, state):
        rho, vel = state
        f = rho * rho / 4.0 + 1.0
        return [vel, -(params.c / (4.0 * f * f)) * rho]

    oracle = solve_ivp(rhs, [0.0, 10.0], [0.0, 1.0], t_eval=path.s,
                       rtol=1e-12, atol=1e-14, method="DOP853")
    assert np.max(np.abs(path.pos[:, 3] - oracle.y[0])) <= 1e-7
    assert np.max(np.abs(path.pos[:, 4])) == 0.0  # transverse direction stays put
    assert np.max(np.abs(path.pos[:, :3] - p0[:3])) == 0.0  # sphere factor fixed


def test_integrate_rejects_large_step():
    m = models.gaussian(2)
    with pytest.raises(ValueError):
        integrate_ivp(m, PhiParams(0.1), np.zeros(2), np.array([1.0, 0.0]), 1.0, step=0.05)


def test_integrate_drift_abort_diagnostic():
    m = models.sphere_cylinder(2, 2)
    p0 = models.base_point(m)
    v0 = np.zeros(5)
    v0[3] = 0.8
    with pytest.raises(DriftExceededError, match="too large"):
        integrate_ivp(m, PhiParams(0.9), p0, v0, 20.0, step=1e-2, drift_tol=1e-15)


def test_conservation_drift_under_tolerance_at_fine_step():
    m = models.sphere_cylinder(2, 2)
    p0 = models.base_point(m)
    v0 = np.zeros(5)
    v0[3] = 1.0
    path = integrate_ivp(m, PhiParams(0.5), p0, v0, 20.0, step=1e-3)
    assert path.drift <= 1e-6


def test_conservation_fourth_order_drift_reduction():
    # truncation-dominated regime: a trapped radial oscillation (strong
    # potential) and a great circle, both integrated at h and h/2
    m = models.sphere_cylinder(2, 2)
    p0 = models.base_point(m)
    v0 = np.zeros(5)
    v0[3] = 0.8
    drift_h = integrate_ivp(m, PhiParams(0.9), p0, v0, 20.0, step=1e-2).drift
    drift_h2 = integrate_ivp(m, PhiParams(0.9), p0, v0, 20.0, step=5e-3).drift
    assert drift_h / drift_h2 >= 8.0

    s = models.round_sphere(2)
    ps = models.base_point(s)
    vs = np.array([0.0, 1.0, 0.0])
    drift_h = integrate_ivp(s, PhiParams(0.1), ps, vs, 20.0, step=1e-2).drift
    drift_h2 = integrate_ivp(s, PhiParams(0.1), ps, vs, 20.0, step=5e-3).drift
    assert drift_h / drift_h2 >= 8.0


def test_shooting_gaussian_straight_segment(rng):
    m = models.gaussian(3)
    x = rng.normal(size=3)
    y = rng.normal(size=3) + 4.0
    path = solve_bvp_shooting(m, PhiParams(0.2), x, y)
    assert path.C_value == pytest.approx(1.0, abs=1e-10)
    assert path.action_J == pytest.approx(path.s_bar, rel=1e-9)
    assert float(models.distance(m, path.pos[-1], y)) <= 1e-9
    # straight: all nodes on the segment
    direction = (y - x) / np.linalg.norm(y - x)
    offsets = path.pos - x
    residual = offsets - np.outer(offsets @ direction, direction)
    assert np.max(np.abs(residual)) <= 1e-8


def test_shooting_round_sphere_unit_speed():
    m = models.round_sphere(3)
    c = 0.1
    x = models.base_point(m)
    y = models.canonical_target(m, 2.0)
    path = solve_bvp_shooting(m, PhiParams(c), x, y)
    assert path.C_value == pytest.approx(1.0 - c, abs=1e-9)
    assert np.max(np.abs(path.speed_sq() - 1.0)) <= 1e-9


def test_shooting_rejects_equal_endpoints():
    m = models.gaussian(2)
    p = np.array([1.0, 0.0])
    with pytest.raises(DegenerateEndpointsError):
        solve_bvp_shooting(m, PhiParams(0.1), p, p.copy())


def test_cross_solver_oracle_cylinder():
    m = models.sphere_cylinder(2, 2)
    params = PhiParams(0.1)
    x = models.base_point(m)
    y = models.canonical_target(m, 10.0)
    shoot = solve_bvp_shooting(m, params, x, y)
    disc = minimize_action_discrete(m, params, x, y, N=256)
    assert abs(shoot.action_J - disc.action_J) <= 1e-3 * (1.0 + abs(shoot.action_J))
    assert abs(shoot.C_value - disc.C_value) <= 1e-3
    evidence = certify_minimal_candidate(m, params, shoot, disc)
    assert evidence["J_agree"] and evidence["C_agree"] and evidence["below_background"]
    assert shoot.is_minimal_candidate and disc.is_minimal_candidate


def test_minimize_gaussian_recovers_straight_segment():
    m = models.gaussian(2)
    params = PhiParams(0.2)  # phi is identically zero regardless of c
    x = np.zeros(2)
    y = np.array([5.0, 0.0])
    path = minimize_action_discrete(m, params, x, y, N=32)
    assert path.action_J == pytest.approx(5.0, abs=1e-9)
    assert np.max(np.abs(path.pos[:, 1])) <= 1e-9
    assert "stalled" not in path.flags


def test_minimize_round_sphere_constant_potential():
    m = models.round_sphere(2)
    c = 0.1
    x = models.base_point(m)
    y = models.canonical_target(m, 3.0)
    path = minimize_action_discrete(m, PhiParams(c), x, y, N=64)
    assert path.action_J == pytest.approx(3.0 * (1.0 + c), abs=1e-9)
    assert path.C_value == pytest.approx(1.0 - c, abs=1e-6)


def test_minimize_cylinder_beats_background():
    m = models.sphere_cylinder(2, 2)
    params = PhiParams(0.1)
    x = models.base_point(m)
    y = models.canonical_target(m, 10.0)
    path = minimize_action_discrete(m, params, x, y, N=128)
    bg = models.background_geodesic(m, x, y, 128)
    j_bg = action(m, params, bg)
    gap = j_bg - path.action_J
    assert gap > 1e-4  # strict improvement, reported
    assert "stalled" not in path.flags


def test_minimize_euler_lagrange_consistency():
    m = models.sphere_cylinder(2, 2)
    params = PhiParams(0.5)
    x = models.base_point(m)
    y = models.canonical_target(m, 5.0)
    path = minimize_action_discrete(m, params, x, y, N=64)
    descent = path.minimal_evidence["descent"]
    assert descent["grad_norm"] <= 1e-6 * (1.0 + abs(descent["discrete_action"]))


def test_minimize_requires_enough_nodes():
    m = models.gaussian(2)
    with pytest.raises(ValueError):
        minimize_action_discrete(m, PhiParams(0.1), np.zeros(2), np.ones(2), N=8)


def test_action_and_conserved_examples():
    g = models.gaussian(2)
    straight = integrate_ivp(g, PhiParams(0.1), np.zeros(2), np.array([1.0, 0.0]), 5.0)
    assert action(g, PhiParams(0.1), straight) == pytest.approx(5.0, abs=1e-12)
    c_val, drift = conserved_quantity(g, PhiParams(0.1), straight)
    assert c_val == pytest.approx(1.0, abs=1e-13)
    assert drift <= 1e-13

    s = models.round_sphere(2)
    x = models.base_point(s)
    y = models.canonical_target(s, 3.0)
    arc = solve_bvp_shooting(s, PhiParams(0.1), x, y)
    assert arc.action_J == pytest.approx(3.3, abs=1e-9)
    assert arc.C_value == pytest.approx(0.9, abs=1e-9)

    m = models.sphere_cylinder(2, 2)
    shoot = solve_bvp_shooting(m, PhiParams(0.1), models.base_point(m),
                               models.canonical_target(m, 10.0))
    assert shoot.drift <= 1e-6


@pytest.mark.parametrize("c", [0.05, 0.1, 0.5])
def test_conserved_bracket_for_minimal_candidates(c):
    m = models.sphere_cylinder(2, 2)
    params = PhiParams(c)
    x = models.base_point(m)
    y = models.canonical_target(m, 5.0)
    shoot = solve_bvp_shooting(m, params, x, y)
    disc = minimize_action_discrete(m, params, x, y, N=128)
    certify_minimal_candidate(m, params, shoot, disc)
    assert shoot.is_minimal_candidate
    for path in (shoot, disc):
        assert 1.0 - c - 1e-3 <= path.C_value <= 1.0 + c + 1e-3


def test_speed_envelope(model):
    if model.degenerate:
        c = 0.1
    else:
        c = 0.3
    params = PhiParams(c)
    x = models.base_point(model)
    r = 2.0 if model.is_compact else 8.0
    y = models.canonical_target(model, r)
    path = solve_bvp_shooting(model, params, x, y)
    max_speed = float(np.max(np.sqrt(path.speed_sq())))
    assert max_speed <= math.sqrt(path.C_value + c) + 1e-6


def test_endpoint_consistency(model):
    params = PhiParams(0.1)
    x = models.base_point(model)
    r = 2.0 if model.is_compact else 6.0
    y = models.canonical_target(model, r)
    path = solve_bvp_shooting(model, params, x, y, tol=1e-10)
    assert float(models.distance(model, path.pos[0], x)) <= 1e-12
    assert float(models.distance(model, path.pos[-1], y)) <= 1e-9


def test_path_serialization(tmp_path):
    m = models.sphere_cylinder(2, 2)
    params = PhiParams(0.1)
    path = solve_bvp_shooting(m, params, models.base_point(m),
                              models.canonical_target(m, 5.0))
    lines = list(path_csv_lines(m, params, path))
    header = lines[0].split(",")
    assert header == (
        ["s"] + [f"p{i}" for i in range(5)] + [f"v{i}" for i in range(5)]
        + ["speed_sq", "phi", "r"]
    )
    assert len(lines) == path.n_nodes + 1
    dest = tmp_path / "path.csv"
    phigeo.write_path_csv(dest, m, params, path)
    assert dest.read_text().count("\n") == path.n_nodes + 1
    meta = path_json_dict(m, params, path)
    assert meta["model"] == m.label
    assert meta["C_value"] == path.C_value
    assert meta["n_nodes"] == path.n_nodes
