import math

import numpy as np
import pytest

from platelab.control_lr import (ControlProblem, gramian_closed_form, gramian_quadrature, heat4_step,
                                 low_mode_control, lr_synthesize, propagate_exact, propagate_quadrature,
                                 stage_cost_slope, trajectory, verify_forward, write_trajectory_csv)
from platelab.specineq import ObservationRegion, masked_gram

REGION = ObservationRegion([((0.0, 0.2),)])


@pytest.fixture(scope="module")
def basis30(clamped_400):
    _, basis = clamped_400
    return basis.truncate(30)


def test_single_mode_closed_form(basis30):
    mass = masked_gram(basis30, REGION.indicator(basis30.grid))
    mu, m = basis30.mus[0], mass[0, 0]
    y = np.zeros(30)
    y[0] = 1.0
    s = 0.25
    ctrl = low_mode_control(basis30, REGION, mu, 0.0, s, y, mass=mass)
    assert list(ctrl.window.modes) == [0]
    expected = math.sqrt(2 * mu / (m * math.expm1(2 * mu * s)))
    assert ctrl.cost == pytest.approx(expected, rel=1e-8)
    # the controlled mode is exactly zero at the end of the window
    out = propagate_exact(basis30.mus, mass, y, ctrl.window, 0.0, s)
    assert abs(out[0]) < 1e-12


def test_gramian_quadrature_matches_closed_form(basis30):
    mass = masked_gram(basis30, REGION.indicator(basis30.grid))
    mus = basis30.mus[:12]
    for s in (1e-4, 0.01, 0.5):
        quad = gramian_quadrature(mus, mass[:12, :12], s)
        exact = gramian_closed_form(mus, mus, mass[:12, :12], s)
        assert np.max(np.abs(quad - exact) / np.abs(exact).max()) < 1e-12


def test_quadrature_and_exact_propagation_agree(basis30):
    mass = masked_gram(basis30, REGION.indicator(basis30.grid))
    y = np.random.default_rng(2).standard_normal(30)
    ctrl = low_mode_control(basis30, REGION, basis30.mus[3], 0.0, 0.1, y, mass=mass)
    a = propagate_exact(basis30.mus, mass, y, ctrl.window, 0.0, 0.2)
    b = propagate_quadrature(basis30.mus, mass, y, ctrl.window, 0.0, 0.2)
    assert np.max(np.abs(a - b)) < 1e-10 * np.linalg.norm(y)


def test_lr_reaches_tolerance(basis30):
    y0 = np.random.default_rng(0).standard_normal(30)
    problem = ControlProblem(basis30, REGION, 1.0, y0)
    result = lr_synthesize(problem)
    assert len(result.stage_log) >= 3
    assert verify_forward(problem, result) <= 1e-6 * np.linalg.norm(y0)
    assert np.isfinite(result.stage_slope)
    assert all(r.worst_cost >= 0 for r in result.stage_log)


def test_stage_cuts_grow_dyadically(basis30):
    y0 = np.ones(30)
    result = lr_synthesize(ControlProblem(basis30, REGION, 1.0, y0))
    cuts = [r.mu_cut for r in result.stage_log]
    mu_max = basis30.mus[-1]
    for a, b in zip(cuts, cuts[1:]):
        assert b == pytest.approx(min(16 * a, mu_max))
    lengths = [r.t_end - r.t_start for r in result.stage_log]
    for a, b in zip(lengths, lengths[1:]):
        assert b == pytest.approx(a / 2)


def test_zero_state_needs_no_control(basis30):
    result = lr_synthesize(ControlProblem(basis30, REGION, 1.0, np.zeros(30)))
    assert result.cost == 0.0


def test_invalid_problem(basis30):
    with pytest.raises(ValueError):
        ControlProblem(basis30, REGION, 0.0, np.ones(30))
    with pytest.raises(ValueError):
        ControlProblem(basis30, REGION, 1.0, np.ones(3))
    with pytest.raises(ValueError):
        ControlProblem(basis30, REGION, 1.0, np.full(30, np.nan))


def test_stage_cost_slope_of_exact_exponential():
    class Row:
        def __init__(self, cut, cost):
            self.mu_cut, self.worst_cost = cut, cost
    rows = [Row(16.0**k, math.exp(2.5 * 2.0**k)) for k in range(4)]
    assert stage_cost_slope(rows) == pytest.approx(2.5)
    assert math.isnan(stage_cost_slope(rows[:1]))


def test_heat4_step_modal_is_exact():
    mus = np.array([1.0, 10.0])
    y = np.array([1.0, 2.0])
    for _ in range(10):
        y = heat4_step(y, 0.01, mus=mus)
    assert y == pytest.approx(np.array([1.0, 2.0]) * np.exp(-mus * 0.1), rel=1e-14)


def test_heat4_step_grid_converges_first_order(clamped_100):
    op, basis = clamped_100
    phi, mu = basis.vectors[:, 0], basis.mus[0]
    t_end = 1e-3
    errs = []
    for steps in (10, 20):
        y = phi.copy()
        for _ in range(steps):
            y = heat4_step(y, t_end / steps, op=op)
        errs.append(np.linalg.norm(y - math.exp(-mu * t_end) * phi))
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)


def test_heat4_step_requires_a_form():
    with pytest.raises(ValueError):
        heat4_step(np.ones(2), 0.1)
    with pytest.raises(ValueError):
        heat4_step(np.ones(2), -0.1, mus=np.ones(2))


def test_trajectory_and_csv(basis30, tmp_path):
    y0 = np.random.default_rng(1).standard_normal(30)
    problem = ControlProblem(basis30, REGION, 1.0, y0)
    result = lr_synthesize(problem)
    t, yn, fn = trajectory(problem, result, 41)
    assert yn[0] == pytest.approx(np.linalg.norm(y0))
    assert yn[-1] == pytest.approx(verify_forward(problem, result), abs=1e-12)
    assert np.all(fn >= 0)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(t, yn, fn, result.stage_log, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,y_norm,f_norm"
    assert len([ln for ln in lines if not ln.startswith("#")]) == 42
