"""Backward-in-time integration of the adjoint system along a base trajectory.

The dual triple (p, q, r) solves, in reversed time, the mirror of the forward
scheme: the q-equation (which pairs with the phase) gets implicit diffusion
and an implicit zeroth-order F''(phi) term, the p-equation is the hyperbolic
block integrated as a first-order system in (p, p_t) with the wave substep
run in reversed orientation, and the r-equation gets implicit diffusion with
the freshly computed q in its source. Coefficients at backward step n are
the stored forward fields at the same index (no sub-step interpolation),
which is consistent to the order of the scheme.

Terminal data: p(T) = 0, p_t(T) = 0, q(T) = (b2 / tau)(phi(T) - target),
r(T) = 0; they hold exactly at the last index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import (SolverError, StateTrajectory, TimeGrid,
                      diffusion_substep, wave_substep)
from .grid import Grid
from .model import (ModelParams, NonlinearitySpec, PotentialSpec, potential,
                    proliferation, truncation)


def broadcast_space_target(target, n: int) -> np.ndarray:
    """Normalize a final-time target to a flat field of length n."""
    arr = np.asarray(target, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape == (n,):
        return arr
    raise ValueError(f"target has shape {arr.shape}, expected scalar or ({n},)")


def broadcast_cylinder_target(target, steps: int, n: int) -> np.ndarray:
    """Normalize a tracking target to shape (steps + 1, ncells)."""
    arr = np.asarray(target, dtype=float)
    if arr.ndim == 0:
        return np.full((steps + 1, n), float(arr))
    if arr.shape == (n,):
        return np.broadcast_to(arr, (steps + 1, n)).copy()
    if arr.shape == (steps + 1, n):
        return arr
    raise ValueError(
        f"tracking target has shape {arr.shape}, expected scalar, ({n},) "
        f"or ({steps + 1}, {n})")


@dataclass
class AdjointTrajectory:
    """Time-indexed dual records (p, p_t, q, r)."""

    grid: Grid
    tg: TimeGrid
    p: np.ndarray
    p_t: np.ndarray
    q: np.ndarray
    r: np.ndarray


def solve_adjoint(base: StateTrajectory, base_control, cost,
                  params: ModelParams, pot: PotentialSpec,
                  nl: NonlinearitySpec, tg: TimeGrid) -> AdjointTrajectory:
    """Integrate the adjoint system backward from T to 0.

    `cost` provides b1, b2 and the targets (chcontrol.reduced.CostSpec);
    kappa and b3 do not enter the dual system, which is linear in (b1, b2).
    """
    grid = base.grid
    n, steps = grid.ncells, tg.steps
    if base.mu.shape[0] != steps + 1:
        raise SolverError("base trajectory does not match the time grid")
    if hasattr(base_control, "expand"):
        u1_all, _ = base_control.expand(tg, grid)
    else:
        u1_all, _ = base_control

    dt = tg.dt
    chi = params.chi
    target_q = broadcast_cylinder_target(cost.target_q, steps, n)
    target_omega = broadcast_space_target(cost.target_omega, n)

    p = np.zeros((steps + 1, n))
    p_t = np.zeros_like(p)
    q = np.zeros_like(p)
    r = np.zeros_like(p)
    q[steps] = (cost.b2 / params.tau) * (base.phi[steps] - target_omega)

    for k in range(steps - 1, -1, -1):
        phi_k = base.phi[k]
        prolif = proliferation(nl, phi_k)
        excess = base.sigma[k] + chi * (1.0 - phi_k) - base.mu[k]
        p_minus_r = p[k + 1] - r[k + 1]

        source_q = (p_t[k + 1]
                    - chi * grid.apply_laplacian(r[k + 1])
                    + proliferation(nl, phi_k, 1) * excess * p_minus_r
                    - chi * prolif * p_minus_r
                    - truncation(nl, phi_k, 1) * u1_all[k] * p[k + 1]
                    + cost.b1 * (phi_k - target_q[k]))
        q[k] = grid.solve_shifted(params.tau / dt, potential(pot, phi_k, 2),
                                  (params.tau / dt) * q[k + 1] + source_q)

        # hyperbolic block in reversed time: velocity flips sign
        source_p = q[k] - prolif * p_minus_r
        p[k], w_new = wave_substep(grid, params.alpha, dt,
                                   p[k + 1], -p_t[k + 1], source_p)
        p_t[k] = -w_new

        source_r = chi * q[k] + prolif * p_minus_r
        r[k] = diffusion_substep(grid, dt, r[k + 1], source_r)

        if not (np.all(np.isfinite(q[k])) and np.all(np.isfinite(p[k]))
                and np.all(np.isfinite(r[k]))):
            raise SolverError("non-finite dual iterate", step=k)

    return AdjointTrajectory(grid, tg, p, p_t, q, r)


@dataclass
class DiscreteDual:
    """Duals from the exact transpose of the discrete linearized stepping.

    p and r are stored at indices 0..steps (the entries at index `steps`
    are zero, matching the terminal conditions); slice k pairs with the
    control slice k, and the reduced gradient built from them reproduces
    the linearized directional derivative to machine precision. This is
    the gradient the optimizer descends on: the time-mirrored scheme of
    ``solve_adjoint`` is consistent only to O(dt) with the discrete cost,
    which is not enough for a monotone line search to certify tight
    stationarity tolerances.
    """

    grid: Grid
    tg: TimeGrid
    p: np.ndarray
    q: np.ndarray
    r: np.ndarray


def solve_discrete_dual(base: StateTrajectory, base_control, cost,
                        params: ModelParams, pot: PotentialSpec,
                        nl: NonlinearitySpec, tg: TimeGrid) -> DiscreteDual:
    """Backward recursion transposing each forward sub-step exactly.

    The dual state (lam_eta, lam_w, lam_psi, lam_xi) carries the cost
    sensitivities with respect to (mu, mu_t, phi, sigma) at each level;
    the stored duals are rescaled so that the gradient keeps the pointwise
    form d0 = (-h(phi) p, r).
    """
    grid = base.grid
    n, steps = grid.ncells, tg.steps
    if base.mu.shape[0] != steps + 1:
        raise SolverError("base trajectory does not match the time grid")
    if hasattr(base_control, "expand"):
        u1_all, _ = base_control.expand(tg, grid)
    else:
        u1_all, _ = base_control

    dt = tg.dt
    alpha, tau, chi = params.alpha, params.tau, params.chi
    lap = grid.laplacian
    target_q = broadcast_cylinder_target(cost.target_q, steps, n)
    target_omega = broadcast_space_target(cost.target_omega, n)

    lam_eta = np.zeros(n)
    lam_w = np.zeros(n)
    lam_psi = cost.b2 * (base.phi[steps] - target_omega)
    lam_xi = np.zeros(n)

    p = np.zeros((steps + 1, n))
    q = np.zeros_like(p)
    r = np.zeros_like(p)

    for k in range(steps - 1, -1, -1):
        phi_k = base.phi[k]
        prolif = proliferation(nl, phi_k)
        slope = proliferation(nl, phi_k, 1) * (
            base.sigma[k] + chi * (1.0 - phi_k) - base.mu[k])
        gate = truncation(nl, phi_k, 1) * u1_all[k]

        z_hat = grid.helmholtz_solve(dt, lam_xi)
        f_hat = grid.helmholtz_solve(dt * dt / alpha, lam_w + dt * lam_eta)
        g_tilde = lam_psi - chi * dt * (lap @ z_hat) - f_hat / alpha
        g_hat = grid.solve_shifted(tau / dt, potential(pot, base.phi[k + 1], 2),
                                   g_tilde)

        p[k] = f_hat / alpha
        q[k] = g_hat
        r[k] = z_hat

        lam_eta = (lam_eta + dt * prolif * z_hat
                   + (dt / alpha) * ((lap @ f_hat) - prolif * f_hat) + g_hat)
        lam_psi = (dt * (chi * prolif - slope) * z_hat
                   + (dt / alpha) * (slope - chi * prolif - gate) * f_hat
                   + f_hat / alpha + (tau / dt) * g_hat
                   + cost.b1 * dt * (phi_k - target_q[k]))
        lam_xi = ((1.0 - dt * prolif) * z_hat
                  + (dt / alpha) * prolif * f_hat + chi * g_hat)
        lam_w = f_hat

    return DiscreteDual(grid, tg, p, q, r)


@dataclass
class DualBoundReport:
    """Sup norms of the dual variables that set the large-kappa threshold.

    Any kappa above max(weighted_p_sup, r_sup) forces every stationary
    control to vanish, since the sparsity inequalities then hold everywhere.
    """

    p_sup: float
    r_sup: float
    weighted_p_sup: float | None = None


def dual_bound_report(adj: AdjointTrajectory, base: StateTrajectory = None,
                      nl: NonlinearitySpec = None) -> DualBoundReport:
    """Sup norms of p and r over the cylinder.

    When the base trajectory and nonlinearity shapes are supplied, also
    reports sup |h(phi) p|, the dual magnitude the first control's sparsity
    threshold actually compares against.
    """
    p_sup = float(np.max(np.abs(adj.p)))
    r_sup = float(np.max(np.abs(adj.r)))
    weighted = None
    if base is not None and nl is not None:
        weighted = float(np.max(np.abs(truncation(nl, base.phi) * adj.p)))
    return DualBoundReport(p_sup, r_sup, weighted)
