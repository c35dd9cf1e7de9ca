"""Acceptance gate: every criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one pass/fail line
per criterion. Shared expensive runs (the baseline optimization) are module
fixtures so the sparsity criteria reuse them.
"""

import time

import numpy as np
import pytest

from chcontrol.control import Control, HSpec, operator_H, operator_H_adjoint
from chcontrol.forward import (InitialData, TimeGrid, check_separation,
                               solve_forward, trajectory_difference_norm)
from chcontrol.grid import Grid
from chcontrol.linearized import taylor_test
from chcontrol.model import NonlinearitySpec, PotentialSpec
from chcontrol.reduced import (OptOptions, directional_derivative,
                               gradient_pairing, optimize, smooth_cost,
                               smooth_gradient, sparsity_map,
                               vanishing_threshold)

from conftest import (BASE_NL, BASE_PARAMS, constant_control, make_problem,
                      random_direction, tracking_cost, unit_box)
from oracles import state_rk4

pytestmark = pytest.mark.acceptance


def report(num, name, passed, detail):
    status = "PASS" if passed else "FAIL"
    print(f"[acceptance] criterion {num:2d} ({name}): {status} — {detail}")


@pytest.fixture(scope="module")
def baseline_opt():
    """Criterion 7's run, shared with criterion 8."""
    problem = make_problem(cells=32, steps=100)
    cost = tracking_cost(problem, b1=1.0, b2=1.0, b3=0.1, kappa=0.01)
    started = time.monotonic()
    result = optimize(problem, problem.zero_control(), cost, unit_box(),
                      OptOptions(max_iterations=500, tolerance=1e-6))
    elapsed = time.monotonic() - started
    return problem, cost, result, elapsed


def test_criterion_1_zero_fixed_point():
    started = time.monotonic()
    grid = Grid((64,), (1.0,))
    tg = TimeGrid(1.0, 100)
    traj = solve_forward(InitialData.constants(grid), Control.zero(tg, grid),
                         BASE_PARAMS, PotentialSpec("regular"),
                         NonlinearitySpec(p0=0.0), tg)
    worst = max(np.max(np.abs(a))
                for a in (traj.mu, traj.mu_t, traj.phi, traj.sigma))
    elapsed = time.monotonic() - started
    ok = worst <= 1e-12 and elapsed < 1.0
    report(1, "zero fixed point", ok,
           f"max norm {worst:.2e}, runtime {elapsed:.2f}s")
    assert worst <= 1e-12
    assert elapsed < 1.0


def test_criterion_2_ode_reduction_oracle():
    started = time.monotonic()
    y0 = np.array([0.1, 0.0, 0.2, 0.3])
    u1c, u2c = 0.2, -0.1
    pot = PotentialSpec("regular")
    oracle = state_rk4(y0, u1c, u2c, BASE_PARAMS, pot, BASE_NL, 1.0, 1e-5)

    grid = Grid((8,), (1.0,))
    errors = {}
    for dt in (4e-3, 2e-3, 1e-3):
        steps = int(round(1.0 / dt))
        tg = TimeGrid(1.0, steps)
        ctrl = Control.full(np.full((steps, grid.ncells), u1c),
                            np.full((steps, grid.ncells), u2c))
        traj = solve_forward(InitialData.constants(grid, *y0), ctrl,
                             BASE_PARAMS, pot, BASE_NL, tg)
        final = np.array([traj.mu[-1][0], traj.mu_t[-1][0],
                          traj.phi[-1][0], traj.sigma[-1][0]])
        errors[dt] = np.linalg.norm(final - oracle)

    rel = errors[1e-3] / np.linalg.norm(oracle)
    dts = np.array(sorted(errors, reverse=True))
    order = np.polyfit(np.log(dts), np.log([errors[d] for d in dts]), 1)[0]
    elapsed = time.monotonic() - started
    ok = rel <= 1e-3 and order >= 0.9 and elapsed < 10.0
    report(2, "ODE-reduction oracle", ok,
           f"rel err {rel:.2e} at dt=1e-3, order {order:.2f}, "
           f"runtime {elapsed:.1f}s")
    assert rel <= 1e-3
    assert order >= 0.9
    assert elapsed < 10.0


def test_criterion_3_taylor_remainder():
    started = time.monotonic()
    problem = make_problem(cells=32, steps=50)
    control = constant_control(problem)
    result = taylor_test(problem.init, control, random_direction(problem, 11),
                         problem.params, problem.pot, problem.nl, problem.tg,
                         t_values=np.array([1e-1, 1e-2, 1e-3, 1e-4]))
    elapsed = time.monotonic() - started
    ok = 1.8 <= result.slope <= 2.2 and elapsed < 30.0
    report(3, "Frechet/Taylor remainder", ok,
           f"slope {result.slope:.3f}, runtime {elapsed:.1f}s")
    assert 1.8 <= result.slope <= 2.2
    assert elapsed < 30.0


def test_criterion_4_linearized_vs_fd_gradient():
    started = time.monotonic()
    problem = make_problem(cells=32, steps=100)
    control = constant_control(problem)
    cost = tracking_cost(problem, kappa=0.0, sparsity_kind="none")
    base = problem.solve_state(control)
    probe = 1e-5
    worst = 0.0
    for seed in range(5):
        h = random_direction(problem, seed)
        dj = directional_derivative(problem, control, h, cost, base=base)
        jp = smooth_cost(problem, control.with_raw(control.u1 + probe * h[0],
                                                   control.u2 + probe * h[1]),
                         cost)
        jm = smooth_cost(problem, control.with_raw(control.u1 - probe * h[0],
                                                   control.u2 - probe * h[1]),
                         cost)
        fd = (jp - jm) / (2 * probe)
        worst = max(worst, abs(dj - fd) / abs(fd))
    elapsed = time.monotonic() - started
    ok = worst <= 1e-6 and elapsed < 30.0
    report(4, "linearized vs FD gradient", ok,
           f"max rel err {worst:.2e} over 5 directions, runtime {elapsed:.1f}s")
    assert worst <= 1e-6
    assert elapsed < 30.0


def test_criterion_5_adjoint_duality_refinement():
    started = time.monotonic()
    gaps = []
    signs_ok = True
    for cells, steps in ((32, 100), (64, 200), (128, 400)):
        problem = make_problem(cells=cells, steps=steps)
        control = constant_control(problem)
        cost = tracking_cost(problem, kappa=0.0, sparsity_kind="none")
        base = problem.solve_state(control)
        adj = problem.solve_adjoint(base, control, cost)
        grad = smooth_gradient(adj, base, control, cost, problem.nl,
                               problem.tg, problem.grid)
        # one fixed smooth direction, sampled on each grid
        x = problem.grid.cell_centers()[0]
        t = problem.tg.times()[:-1]
        h = (np.cos(2 * np.pi * x)[None, :] * np.exp(-t)[:, None],
             np.full((t.size, x.size), 0.7))
        dj_lin = directional_derivative(problem, control, h, cost, base=base)
        dj_adj = gradient_pairing(grad, h, problem.tg, problem.grid)
        gaps.append(abs(dj_adj - dj_lin) / abs(dj_lin))
        signs_ok = signs_ok and (np.sign(dj_adj) == np.sign(dj_lin))
    elapsed = time.monotonic() - started
    decreasing = gaps[1] < gaps[0] and gaps[2] < gaps[1]
    ok = gaps[0] <= 5e-2 and decreasing and signs_ok and elapsed < 120.0
    report(5, "adjoint duality", ok,
           f"gaps {gaps[0]:.3e} -> {gaps[1]:.3e} -> {gaps[2]:.3e}, "
           f"signs agree {signs_ok}, runtime {elapsed:.1f}s")
    assert gaps[0] <= 5e-2
    assert decreasing
    assert signs_ok
    assert elapsed < 120.0


def test_criterion_6_operator_transpose():
    started = time.monotonic()
    grid = Grid((32,), (1.0,))
    spec = HSpec("gaussian", radius=3, sigma=1.5)
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(10):
        x = rng.standard_normal((20, grid.ncells))
        y = rng.standard_normal((20, grid.ncells))
        lhs = np.sum(operator_H(spec, x, grid) * y)
        rhs = np.sum(x * operator_H_adjoint(spec, y, grid))
        worst = max(worst,
                    abs(lhs - rhs) / (np.linalg.norm(x) * np.linalg.norm(y)))
    elapsed = time.monotonic() - started
    ok = worst <= 1e-12 and elapsed < 1.0
    report(6, "operator transpose", ok,
           f"max normalized defect {worst:.2e}, runtime {elapsed:.2f}s")
    assert worst <= 1e-12
    assert elapsed < 1.0


def test_criterion_7_stationarity(baseline_opt):
    problem, cost, result, elapsed = baseline_opt
    hist = result.cost_history
    monotone = all(b <= a + 1e-15 for a, b in zip(hist, hist[1:]))
    ok = (result.converged and result.stationarity_residual <= 1e-6
          and result.iterates <= 500 and monotone and elapsed < 300.0)
    report(7, "optimizer stationarity", ok,
           f"residual {result.stationarity_residual:.2e} after "
           f"{result.iterates} iterates, monotone {monotone}, "
           f"runtime {elapsed:.1f}s")
    assert result.converged
    assert result.stationarity_residual <= 1e-6
    assert result.iterates <= 500
    assert monotone
    assert elapsed < 300.0


def test_criterion_8_sparsity_equivalences(baseline_opt):
    problem, cost, result, _ = baseline_opt
    rep = sparsity_map(result.trajectory, result.dual, result.control, cost,
                       problem.nl, problem.tg, problem.grid)
    ok = rep.agreement_1 >= 0.99 and rep.agreement_2 >= 0.99
    report(8, "sparsity equivalences", ok,
           f"mask agreement u1 {rep.agreement_1:.4f}, u2 {rep.agreement_2:.4f}"
           f" (excluded {int(np.sum(rep.excluded_1))}+"
           f"{int(np.sum(rep.excluded_2))} cells)")
    assert rep.agreement_1 >= 0.99
    assert rep.agreement_2 >= 0.99


def test_criterion_9_large_kappa_vanishing():
    started = time.monotonic()
    problem = make_problem(cells=32, steps=100)
    cost0 = tracking_cost(problem, kappa=0.0)
    kappa = 2.0 * vanishing_threshold(problem, cost0)
    cost = tracking_cost(problem, kappa=kappa)
    result = optimize(problem, problem.zero_control(), cost, unit_box(),
                      OptOptions(max_iterations=500, tolerance=1e-6))
    sup = max(np.max(np.abs(result.control.u1)),
              np.max(np.abs(result.control.u2)))
    elapsed = time.monotonic() - started
    ok = (sup <= 1e-8 and result.sparsity_fraction == (1.0, 1.0)
          and elapsed < 120.0)
    report(9, "large-kappa vanishing", ok,
           f"kappa {kappa:.3f}, sup|u| {sup:.2e}, fractions "
           f"{result.sparsity_fraction}, runtime {elapsed:.1f}s")
    assert sup <= 1e-8
    assert result.sparsity_fraction == (1.0, 1.0)
    assert elapsed < 120.0


def test_criterion_10_separation():
    problem = make_problem(cells=48, steps=200, kind="logarithmic")
    x = problem.grid.cell_centers()[0]
    problem.init.phi0.values[:] = 0.5 * np.cos(np.pi * x)
    traj = problem.solve_state(constant_control(problem, u1=0.3, u2=-0.2))
    rep = check_separation(traj, problem.pot)
    inside = (rep.r_star_observed > -1.0 + 1e-3
              and rep.r_upper_observed < 1.0 - 1e-3)
    ok = inside and traj.newton_iterations_max <= 50
    report(10, "separation", ok,
           f"phi in [{rep.r_star_observed:.4f}, {rep.r_upper_observed:.4f}], "
           f"margin {rep.margin_to_domain:.4f}, "
           f"max Newton iters {traj.newton_iterations_max}")
    assert inside
    assert traj.newton_iterations_max <= 50


def test_criterion_11_continuous_dependence():
    problem = make_problem(cells=32, steps=100)
    control = constant_control(problem)
    base = problem.solve_state(control)
    rng = np.random.default_rng(17)
    shape = (problem.tg.steps, problem.grid.ncells)
    d1 = rng.uniform(-1.0, 1.0, shape)
    d2 = rng.uniform(-1.0, 1.0, shape)
    weight = problem.tg.dt * problem.grid.cell_volume
    unit = np.sqrt(weight * (np.sum(d1 * d1) + np.sum(d2 * d2)))
    d1, d2 = d1 / unit, d2 / unit

    ratios = []
    for magnitude in (1e-2, 5e-3, 2.5e-3):
        ctrl = control.with_raw(control.u1 + magnitude * d1,
                                control.u2 + magnitude * d2)
        diff = trajectory_difference_norm(problem.solve_state(ctrl), base)
        ratios.append(diff / magnitude)
    spread = max(ratios) / min(ratios)
    ok = spread <= 2.0
    report(11, "continuous-dependence trend", ok,
           f"response ratios {[f'{r:.4f}' for r in ratios]}, spread "
           f"{spread:.3f}")
    assert spread <= 2.0
