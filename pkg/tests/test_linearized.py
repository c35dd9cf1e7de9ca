"""Linearized solver: exact Jacobian action and Taylor remainder."""

import numpy as np
import pytest

from chcontrol.linearized import (linearized_norm, solve_linearized,
                                  taylor_test, triple_norm)

from conftest import constant_control, make_problem, random_direction


@pytest.fixture(scope="module")
def setup():
    problem = make_problem(cells=16, steps=50)
    control = constant_control(problem)
    base = problem.solve_state(control)
    return problem, control, base


class TestLinearizedSolve:
    def test_zero_increment_gives_zero(self, setup):
        problem, control, base = setup
        shape = (problem.tg.steps, problem.grid.ncells)
        lin = problem.solve_linearized(base, control,
                                       (np.zeros(shape), np.zeros(shape)))
        assert linearized_norm(lin) == 0.0

    def test_zero_initial_conditions_exact(self, setup):
        problem, control, base = setup
        lin = problem.solve_linearized(base, control, random_direction(problem, 0))
        for arr in (lin.eta, lin.eta_t, lin.psi, lin.xi):
            assert np.all(arr[0] == 0.0)

    def test_superposition(self, setup):
        problem, control, base = setup
        h = random_direction(problem, 1, bound=0.1)
        g = random_direction(problem, 2, bound=0.1)
        combined = (h[0] + g[0], h[1] + g[1])
        lin_h = problem.solve_linearized(base, control, h)
        lin_g = problem.solve_linearized(base, control, g)
        lin_hg = problem.solve_linearized(base, control, combined)
        gap = triple_norm(problem.grid,
                          lin_hg.eta - lin_h.eta - lin_g.eta,
                          lin_hg.psi - lin_h.psi - lin_g.psi,
                          lin_hg.xi - lin_h.xi - lin_g.xi)
        assert gap <= 1e-12 * max(1.0, linearized_norm(lin_hg))

    def test_matches_central_difference_of_forward_map(self, setup):
        # the solver is the exact discrete Jacobian action, so agreement is
        # limited only by the probe step and arithmetic
        problem, control, base = setup
        h = random_direction(problem, 3)
        lin = problem.solve_linearized(base, control, h)
        t = 1e-5
        plus = problem.solve_state(
            control.with_raw(control.u1 + t * h[0], control.u2 + t * h[1]))
        minus = problem.solve_state(
            control.with_raw(control.u1 - t * h[0], control.u2 - t * h[1]))
        num = triple_norm(problem.grid,
                          (plus.mu - minus.mu) / (2 * t) - lin.eta,
                          (plus.phi - minus.phi) / (2 * t) - lin.psi,
                          (plus.sigma - minus.sigma) / (2 * t) - lin.xi)
        assert num / linearized_norm(lin) <= 1e-6

    def test_length_mismatch_rejected(self, setup):
        problem, control, base = setup
        bad = (np.zeros((3, problem.grid.ncells)),
               np.zeros((3, problem.grid.ncells)))
        with pytest.raises(ValueError):
            solve_linearized(base, control, bad, problem.params, problem.pot,
                             problem.nl, problem.tg)


class TestTaylor:
    def test_remainder_slope_is_quadratic(self, setup):
        problem, control, _ = setup
        result = taylor_test(problem.init, control, random_direction(problem, 4),
                             problem.params, problem.pot, problem.nl, problem.tg)
        assert not result.exact
        assert 1.8 <= result.slope <= 2.2

    def test_zero_increment_reported_exact(self, setup):
        problem, control, _ = setup
        shape = (problem.tg.steps, problem.grid.ncells)
        result = taylor_test(problem.init, control,
                             (np.zeros(shape), np.zeros(shape)),
                             problem.params, problem.pot, problem.nl,
                             problem.tg)
        assert result.exact
        assert result.slope is None
        assert np.all(result.remainders == 0.0)

    def test_slope_persists_under_refinement(self):
        # differentiability of the discrete map holds at every resolution
        problem = make_problem(cells=32, steps=100)
        control = constant_control(problem)
        result = taylor_test(problem.init, control, random_direction(problem, 4),
                             problem.params, problem.pot, problem.nl,
                             problem.tg)
        assert 1.8 <= result.slope <= 2.2
