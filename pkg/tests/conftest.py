"""Shared fixtures: desk-scale problems reused across the test modules."""

import numpy as np
import pytest

from chcontrol.control import BoxConstraints, Control, SparsitySpec
from chcontrol.forward import InitialData, TimeGrid
from chcontrol.grid import Field, Grid
from chcontrol.model import ModelParams, NonlinearitySpec, PotentialSpec
from chcontrol.reduced import CostSpec, Problem

BASE_PARAMS = ModelParams(alpha=1.0, tau=1.0, chi=0.5)
BASE_NL = NonlinearitySpec(p0=0.5)


def make_problem(cells=32, steps=100, t_final=1.0, kind="regular",
                 params=BASE_PARAMS, nl=BASE_NL, length=1.0):
    """1D problem with smooth cosine initial data, strictly inside (-1, 1)."""
    grid = Grid((cells,), (length,))
    tg = TimeGrid(t_final, steps)
    pot = PotentialSpec(kind)
    x = grid.cell_centers()[0]
    init = InitialData(
        Field(grid, 0.1 * np.cos(np.pi * x / length)),
        Field.constant(grid, 0.0),
        Field(grid, 0.2 * np.cos(np.pi * x / length)),
        Field(grid, 0.3 + 0.1 * np.cos(np.pi * x / length)),
    )
    return Problem(grid, tg, params, pot, nl, init)


def constant_control(problem, u1=0.2, u2=-0.1):
    shape = (problem.tg.steps, problem.grid.ncells)
    return Control.full(np.full(shape, u1), np.full(shape, u2))


def random_direction(problem, seed, bound=1.0):
    rng = np.random.default_rng(seed)
    shape = (problem.tg.steps, problem.grid.ncells)
    return (rng.uniform(-bound, bound, shape), rng.uniform(-bound, bound, shape))


def tracking_cost(problem, b1=1.0, b2=1.0, b3=0.1, kappa=0.01,
                  sparsity_kind="l1_full"):
    x = problem.grid.cell_centers()[0]
    target = -0.1 + 0.3 * np.cos(np.pi * x / problem.grid.lengths[0])
    return CostSpec(b1=b1, b2=b2, b3=b3, kappa=kappa,
                    target_q=target, target_omega=target,
                    sparsity=SparsitySpec(sparsity_kind, kappa))


def unit_box():
    return BoxConstraints(-1.0, 1.0, -1.0, 1.0)


@pytest.fixture(scope="session")
def baseline_problem():
    return make_problem(cells=32, steps=100)


@pytest.fixture(scope="session")
def baseline_control(baseline_problem):
    return constant_control(baseline_problem)


@pytest.fixture(scope="session")
def baseline_state(baseline_problem, baseline_control):
    return baseline_problem.solve_state(baseline_control)
