"""Semi-implicit time integration of the coupled state system.

One step advances, in this order,

  (i)   the phase equation  tau phi_t - lap(phi) + F'(phi) = mu + chi sigma
        with implicit diffusion and an implicit Newton treatment of F',
        chemical potential and nutrient frozen at the previous level;
  (ii)  the hyperbolic chemical-potential equation, written as a first-order
        system in (mu, v = mu_t):
          alpha v_t - lap(mu) = P(phi)(sigma + chi (1 - phi) - mu)
                                - h(phi) u1 - phi_t
        with the reaction term explicit, the freshly computed phi_t, and an
        implicit linear solve for v (mu advanced with the new velocity);
  (iii) the nutrient equation with implicit diffusion, the fresh -chi lap(phi),
        and explicit reaction coupling plus the control u2.

The stiffest nonlinearity F' is the only implicitly-iterated piece; all
cross-coupling stays explicit, giving a first-order scheme whose accuracy is
pinned down by the ODE-reduction oracle and temporal-order tests rather than
by design claims.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .grid import Field, Grid, h1_norm_values, l2_norm_values
from .model import (ModelParams, NonlinearitySpec, PotentialSpec, potential,
                    proliferation, truncation)

NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-12


class SolverError(RuntimeError):
    """Time stepping failed; carries the offending step index when known."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] into `steps` intervals."""

    t_final: float
    steps: int

    def __post_init__(self):
        if self.t_final <= 0 or self.steps <= 0:
            raise ValueError("need t_final > 0 and steps > 0")

    @property
    def dt(self) -> float:
        return self.t_final / self.steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.steps + 1)


@dataclass
class InitialData:
    """Initial state (mu0, mu0', phi0, sigma0)."""

    mu0: Field
    mu0_prime: Field
    phi0: Field
    sigma0: Field

    @classmethod
    def constants(cls, grid: Grid, mu0=0.0, mu0_prime=0.0, phi0=0.0, sigma0=0.0):
        return cls(Field.constant(grid, mu0), Field.constant(grid, mu0_prime),
                   Field.constant(grid, phi0), Field.constant(grid, sigma0))

    @property
    def grid(self) -> Grid:
        return self.mu0.grid

    def check_phase_domain(self, pot: PotentialSpec):
        lo, hi = pot.domain
        p = self.phi0.values
        if not (np.all(p > lo) and np.all(p < hi)):
            raise ValueError(
                "phi0 must take values strictly inside the potential domain "
                f"({lo:g}, {hi:g})")


class StateRecord(NamedTuple):
    mu: np.ndarray
    mu_t: np.ndarray
    phi: np.ndarray
    sigma: np.ndarray


@dataclass
class StateTrajectory:
    """Time-indexed solution records (mu, mu_t, phi, sigma)."""

    grid: Grid
    tg: TimeGrid
    mu: np.ndarray      # (steps + 1, ncells)
    mu_t: np.ndarray
    phi: np.ndarray
    sigma: np.ndarray
    newton_iterations_max: int = 0

    @property
    def steps(self) -> int:
        return self.tg.steps

    def record(self, k: int) -> StateRecord:
        return StateRecord(self.mu[k], self.mu_t[k], self.phi[k], self.sigma[k])

    def field(self, name: str, k: int) -> Field:
        return Field(self.grid, getattr(self, name)[k].copy())


@dataclass
class SeparationReport:
    """Observed phase extrema over the closed space-time cylinder."""

    r_star_observed: float
    r_upper_observed: float
    margin_to_domain: float


def wave_substep(grid: Grid, alpha: float, dt: float, mu: np.ndarray,
                 v: np.ndarray, source: np.ndarray):
    """One implicit step of  alpha v' - lap(mu) = source,  mu' = v.

    The position is advanced with the new velocity, so the solve is
    (I - (dt^2/alpha) lap) v_new = v + (dt/alpha)(source + lap(mu)).
    With zero source the discrete energy alpha/2 ||v||^2 + 1/2 ||grad mu||^2
    is nonincreasing.
    """
    rhs = v + (dt / alpha) * (source + grid.apply_laplacian(mu))
    v_new = grid.helmholtz_solve(dt * dt / alpha, rhs)
    return mu + dt * v_new, v_new


def diffusion_substep(grid: Grid, dt: float, old: np.ndarray,
                      source: np.ndarray) -> np.ndarray:
    """One implicit-diffusion step of  y' - lap(y) = source."""
    return grid.helmholtz_solve(dt, old + dt * source)


def _solve_phase_implicit(grid: Grid, phi_old: np.ndarray, rhs: np.ndarray,
                          tau_over_dt: float, pot: PotentialSpec,
                          tol: float = NEWTON_TOL,
                          max_iter: int = NEWTON_MAX_ITER):
    """Newton solve of  tau/dt (phi - phi_old) - lap(phi) + F'(phi) = rhs.

    Initial guess is the previous phase; steps are halved whenever a
    logarithmic iterate would leave the safeguarded domain. Returns the
    solution and the number of Newton iterations used.
    """
    lap = grid.laplacian
    lo, hi = pot.domain
    eps = pot.safeguard_eps

    def residual(candidate):
        # overflow in F' on wild iterates is caught by the finiteness check
        with np.errstate(over="ignore", invalid="ignore"):
            return (tau_over_dt * (candidate - phi_old) - lap @ candidate
                    + potential(pot, candidate, 1) - rhs)

    phi = phi_old.copy()
    res = residual(phi)
    # rounding floor of the residual evaluation at this stencil scale; the
    # requested tolerance cannot be certified below it
    scale = (tau_over_dt * np.max(np.abs(phi_old)) + np.max(np.abs(rhs))
             + np.max(np.abs(lap @ phi_old)) + 1.0)
    tol_eff = max(tol, 64.0 * np.finfo(float).eps * scale)
    for it in range(1, max_iter + 1):
        if not np.all(np.isfinite(res)):
            raise SolverError("non-finite Newton residual in phase solve")
        if np.max(np.abs(res)) <= tol_eff:
            return phi, it - 1
        res_l2 = np.linalg.norm(res)
        delta = grid.solve_shifted(tau_over_dt, potential(pot, phi, 2), -res)
        step = 1.0
        if np.isfinite(lo):
            # ceiling so the iterate stays strictly inside the safeguarded
            # domain, where the singular force remains evaluable
            for _ in range(60):
                trial = phi + step * delta
                if np.all(trial > lo + eps) and np.all(trial < hi - eps):
                    break
                step *= 0.5
            else:
                raise SolverError("phase Newton step could not be damped "
                                  "into the potential domain")
        # halve further until the l2 residual drops (Newton directions
        # guarantee descent of it); full steps win near the solution
        for _ in range(60):
            trial_res = residual(phi + step * delta)
            if (np.all(np.isfinite(trial_res))
                    and np.linalg.norm(trial_res) < res_l2):
                break
            step *= 0.5
        else:
            raise SolverError("phase Newton stalled: no damped step "
                              "decreases the residual")
        phi = phi + step * delta
        res = trial_res
    raise SolverError(f"phase Newton did not converge in {max_iter} iterations")


def step_state(grid: Grid, prev: StateRecord, controls_at_step, params: ModelParams,
               pot: PotentialSpec, nl: NonlinearitySpec, dt: float,
               newton_tol: float = NEWTON_TOL):
    """Advance one state record by dt; returns (record, newton iterations)."""
    u1, u2 = controls_at_step
    mu, v, phi, sigma = prev
    if not all(np.all(np.isfinite(a)) for a in prev):
        raise SolverError("non-finite state passed to step")
    chi = params.chi

    phi_new, iters = _solve_phase_implicit(
        grid, phi, mu + chi * sigma, params.tau / dt, pot, tol=newton_tol)

    reaction = proliferation(nl, phi) * (sigma + chi * (1.0 - phi) - mu)
    source_mu = reaction - truncation(nl, phi) * u1 - (phi_new - phi) / dt
    mu_new, v_new = wave_substep(grid, params.alpha, dt, mu, v, source_mu)

    source_sigma = (-chi * grid.apply_laplacian(phi_new) - reaction + u2)
    sigma_new = diffusion_substep(grid, dt, sigma, source_sigma)

    rec = StateRecord(mu_new, v_new, phi_new, sigma_new)
    if not all(np.all(np.isfinite(a)) for a in rec):
        raise SolverError("non-finite state after step")
    return rec, iters


def solve_forward(init: InitialData, control, params: ModelParams,
                  pot: PotentialSpec, nl: NonlinearitySpec, tg: TimeGrid,
                  newton_tol: float = NEWTON_TOL) -> StateTrajectory:
    """Integrate the state system over the whole time grid.

    `control` is anything with an ``expand(tg, grid)`` method returning the
    per-step control pair on the cylinder (see chcontrol.control.Control),
    or a plain (u1, u2) array pair of shape (steps, ncells).
    """
    grid = init.grid
    init.check_phase_domain(pot)
    if hasattr(control, "expand"):
        u1_all, u2_all = control.expand(tg, grid)
    else:
        u1_all, u2_all = control
    n, steps = grid.ncells, tg.steps
    if u1_all.shape != (steps, n) or u2_all.shape != (steps, n):
        raise SolverError(f"control must be defined on all {steps} steps")

    mu = np.empty((steps + 1, n))
    mu_t = np.empty_like(mu)
    phi = np.empty_like(mu)
    sigma = np.empty_like(mu)
    mu[0], mu_t[0] = init.mu0.values, init.mu0_prime.values
    phi[0], sigma[0] = init.phi0.values, init.sigma0.values

    rec = StateRecord(mu[0], mu_t[0], phi[0], sigma[0])
    worst = 0
    for k in range(steps):
        try:
            rec, iters = step_state(grid, rec, (u1_all[k], u2_all[k]),
                                    params, pot, nl, tg.dt, newton_tol)
        except SolverError as err:
            raise SolverError(str(err), step=k) from err
        worst = max(worst, iters)
        mu[k + 1], mu_t[k + 1] = rec.mu, rec.mu_t
        phi[k + 1], sigma[k + 1] = rec.phi, rec.sigma
    return StateTrajectory(grid, tg, mu, mu_t, phi, sigma,
                           newton_iterations_max=worst)


def check_separation(traj: StateTrajectory, pot: PotentialSpec) -> SeparationReport:
    """Observed min/max of phi over the cylinder and margin to the domain."""
    r_star = float(np.min(traj.phi))
    r_upper = float(np.max(traj.phi))
    lo, hi = pot.domain
    if np.isfinite(lo):
        margin = float(min(r_star - lo, hi - r_upper))
    else:
        margin = np.inf
    return SeparationReport(r_star, r_upper, margin)


@dataclass
class NormSummary:
    """Sup-in-time and L2-in-time norms monitored for stability reporting."""

    sup_mu_t: float
    sup_mu_v: float
    sup_phi_inf: float
    sup_sigma_v: float
    l2t_phi_t_v: float


def stability_norms(traj: StateTrajectory) -> NormSummary:
    g, dt = traj.grid, traj.tg.dt
    sup_mu_t = max(l2_norm_values(g, v) for v in traj.mu_t)
    sup_mu_v = max(h1_norm_values(g, v) for v in traj.mu)
    sup_phi_inf = float(np.max(np.abs(traj.phi)))
    sup_sigma_v = max(h1_norm_values(g, v) for v in traj.sigma)
    phi_t = np.diff(traj.phi, axis=0) / dt
    l2t = np.sqrt(sum(dt * h1_norm_values(g, v) ** 2 for v in phi_t))
    return NormSummary(sup_mu_t, sup_mu_v, sup_phi_inf, sup_sigma_v, float(l2t))


def trajectory_difference_norm(a: StateTrajectory, b: StateTrajectory) -> float:
    """Stability-style distance between two trajectories.

    Sup-in-time L2 distances of mu, phi, sigma plus L2-in-time H1 distances
    of phi and sigma, mirroring the continuous-dependence estimate the
    empirical Lipschitz checks probe.
    """
    if a.grid != b.grid or a.tg != b.tg:
        raise ValueError("trajectories live on different grids")
    g, dt = a.grid, a.tg.dt
    d_mu = a.mu - b.mu
    d_phi = a.phi - b.phi
    d_sigma = a.sigma - b.sigma
    total = max(l2_norm_values(g, v) for v in d_mu)
    total += max(l2_norm_values(g, v) for v in d_phi)
    total += max(l2_norm_values(g, v) for v in d_sigma)
    total += np.sqrt(sum(dt * h1_norm_values(g, v) ** 2 for v in d_phi))
    total += np.sqrt(sum(dt * h1_norm_values(g, v) ** 2 for v in d_sigma))
    return float(total)
