"""Exact linearization of the discrete forward map around a base trajectory.

Each forward sub-step is differentiated with respect to state and control,
so the triple (eta, psi, xi) produced here is the exact Jacobian action of
the discrete solver: central finite differences of the forward map agree
with it to probe-step order, and the Taylor remainder of the full map decays
quadratically. The discrete updates coincide with a consistent discretization
of the continuous linearized system, with coefficients P(phi), P'(phi),
h(phi), h'(phi), F''(phi) frozen along the base trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import (InitialData, SolverError, StateTrajectory, TimeGrid,
                      diffusion_substep, solve_forward, wave_substep)
from .grid import Grid, h1_norm_values, l2_norm_values
from .model import (ModelParams, NonlinearitySpec, PotentialSpec, potential,
                    proliferation, truncation)


@dataclass
class LinearizedTrajectory:
    """Directional-derivative records (eta, eta_t, psi, xi), zero at t = 0."""

    grid: Grid
    tg: TimeGrid
    eta: np.ndarray
    eta_t: np.ndarray
    psi: np.ndarray
    xi: np.ndarray


def triple_norm(grid: Grid, d_mu: np.ndarray, d_phi: np.ndarray,
                d_sigma: np.ndarray) -> float:
    """Trajectory norm max_t (||mu|| + ||phi||_V + ||sigma||) used in tests."""
    return float(max(
        l2_norm_values(grid, m) + h1_norm_values(grid, p) + l2_norm_values(grid, s)
        for m, p, s in zip(d_mu, d_phi, d_sigma)))


def linearized_norm(lin: LinearizedTrajectory) -> float:
    return triple_norm(lin.grid, lin.eta, lin.psi, lin.xi)


def solve_linearized(base: StateTrajectory, base_control, increment,
                     params: ModelParams, pot: PotentialSpec,
                     nl: NonlinearitySpec, tg: TimeGrid) -> LinearizedTrajectory:
    """Advance the exact derivative of each discrete forward sub-step.

    `increment` is the full-cylinder pair (h1, h2), each (steps, ncells);
    scenario increments must be expanded first (Control.expand_increment).
    """
    grid = base.grid
    n, steps = grid.ncells, tg.steps
    if base.mu.shape[0] != steps + 1:
        raise ValueError("base trajectory does not match the time grid")
    h1_all, h2_all = increment
    h1_all = np.asarray(h1_all, float)
    h2_all = np.asarray(h2_all, float)
    if h1_all.shape != (steps, n) or h2_all.shape != (steps, n):
        raise ValueError(f"increment must be defined on all {steps} steps")
    if hasattr(base_control, "expand"):
        u1_all, _ = base_control.expand(tg, grid)
    else:
        u1_all, _ = base_control

    dt = tg.dt
    chi = params.chi

    eta = np.zeros((steps + 1, n))
    eta_t = np.zeros_like(eta)
    psi = np.zeros_like(eta)
    xi = np.zeros_like(eta)

    for k in range(steps):
        phi_k, phi_next = base.phi[k], base.phi[k + 1]
        # Newton-linearized phase step with the Jacobian frozen at the
        # converged base phase of the new level
        rhs = (params.tau / dt) * psi[k] + eta[k] + chi * xi[k]
        psi[k + 1] = grid.solve_shifted(params.tau / dt,
                                        potential(pot, phi_next, 2), rhs)

        excess = base.sigma[k] + chi * (1.0 - phi_k) - base.mu[k]
        d_reaction = (proliferation(nl, phi_k, 1) * excess * psi[k]
                      + proliferation(nl, phi_k)
                      * (xi[k] - chi * psi[k] - eta[k]))
        source_eta = (d_reaction
                      - truncation(nl, phi_k, 1) * u1_all[k] * psi[k]
                      - truncation(nl, phi_k) * h1_all[k]
                      - (psi[k + 1] - psi[k]) / dt)
        eta[k + 1], eta_t[k + 1] = wave_substep(grid, params.alpha, dt,
                                                eta[k], eta_t[k], source_eta)

        source_xi = (-chi * grid.apply_laplacian(psi[k + 1])
                     - d_reaction + h2_all[k])
        xi[k + 1] = diffusion_substep(grid, dt, xi[k], source_xi)

    return LinearizedTrajectory(grid, tg, eta, eta_t, psi, xi)


@dataclass
class TaylorResult:
    """Remainders r(t) of the first-order expansion and their log-log slope."""

    t_values: np.ndarray
    remainders: np.ndarray
    local_slopes: np.ndarray
    slope: float | None
    exact: bool = False


def taylor_test(init: InitialData, base_control, increment, params: ModelParams,
                pot: PotentialSpec, nl: NonlinearitySpec, tg: TimeGrid,
                t_values=None) -> TaylorResult:
    """Remainder study of S(u + t h) - S(u) - t DS(u)[h] in the trajectory norm.

    `increment` is a raw pair matching the control's parametrization. A
    quadratic remainder (slope about 2 in log-log) is the numerical face of
    Frechet differentiability of the discrete solution map.
    """
    if t_values is None:
        t_values = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    t_values = np.asarray(t_values, float)
    grid = init.grid

    base = solve_forward(init, base_control, params, pot, nl, tg)
    h_first, h2 = increment
    hq = base_control.expand_increment(h_first, h2, tg, grid)
    lin = solve_linearized(base, base_control, hq, params, pot, nl, tg)

    remainders = np.empty_like(t_values)
    for i, t in enumerate(t_values):
        first = None
        if base_control.first_raw is not None:
            first = base_control.first_raw + t * np.asarray(h_first, float)
        probe = base_control.with_raw(first, base_control.u2 + t * h2)
        try:
            traj = solve_forward(init, probe, params, pot, nl, tg)
        except SolverError as err:
            raise SolverError(f"forward solve failed at probe t={t:g}: {err}")
        remainders[i] = triple_norm(grid,
                                    traj.mu - base.mu - t * lin.eta,
                                    traj.phi - base.phi - t * lin.psi,
                                    traj.sigma - base.sigma - t * lin.xi)

    positive = remainders > 0.0
    if np.count_nonzero(positive) < 2:
        # vanishing remainder: the expansion is exact to roundoff
        return TaylorResult(t_values, remainders, np.zeros(0), None, exact=True)
    logs_t = np.log(t_values[positive])
    logs_r = np.log(remainders[positive])
    local = np.diff(logs_r) / np.diff(logs_t)
    slope = float(np.polyfit(logs_t, logs_r, 1)[0])
    return TaylorResult(t_values, remainders, local, slope)
