"""Reduced cost, its gradients, the proximal-gradient optimizer, and sparsity.

The reduced cost J~(u) evaluates the tracking functional through the forward
solver. Its smooth part has the pointwise gradient d0 + b3 u with
d0 = (-h(phi) p, r) built from the adjoint state; the directional derivative
through the linearized system is exact for the discrete map and serves as
the anchor for gradient verification. The optimizer is projected proximal
gradient with monotone backtracking: its fixed points satisfy the pointwise
projection formulas, which is what makes the sparsity equivalences directly
checkable on converged controls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adjoint import (AdjointTrajectory, DiscreteDual,
                      broadcast_cylinder_target, broadcast_space_target,
                      dual_bound_report, solve_adjoint, solve_discrete_dual)
from .control import (CYLINDER, SERIES, BoxConstraints, Control, SparsitySpec,
                      operator_H_adjoint, prox_l1_box, sparsity_value)
from .forward import (InitialData, SolverError, StateTrajectory, TimeGrid,
                      solve_forward)
from .grid import Grid
from .linearized import LinearizedTrajectory, solve_linearized
from .model import ModelParams, NonlinearitySpec, PotentialSpec, truncation


@dataclass
class CostSpec:
    """Tracking weights, Tikhonov weight, sparsity coefficient, and targets.

    target_q may be a scalar, a field, or a full (steps + 1, ncells) array;
    target_omega a scalar or a field. Validation of the sign conditions
    (b1, b2 >= 0, b3 > 0, kappa >= 0) lives in the config loader so that
    deliberately degenerate specs stay constructible in tests.
    """

    b1: float
    b2: float
    b3: float
    kappa: float = 0.0
    target_q: float | np.ndarray = 0.0
    target_omega: float | np.ndarray = 0.0
    sparsity: SparsitySpec = field(default_factory=SparsitySpec)

    @property
    def effective_kappa(self) -> float:
        return self.kappa if self.sparsity.kind != "none" else 0.0


@dataclass
class Problem:
    """A fixed state-system setup: everything but the control and the cost."""

    grid: Grid
    tg: TimeGrid
    params: ModelParams
    pot: PotentialSpec
    nl: NonlinearitySpec
    init: InitialData

    def zero_control(self) -> Control:
        return Control.zero(self.tg, self.grid)

    def solve_state(self, control) -> StateTrajectory:
        return solve_forward(self.init, control, self.params, self.pot,
                             self.nl, self.tg)

    def solve_adjoint(self, base: StateTrajectory, control,
                      cost: CostSpec) -> AdjointTrajectory:
        return solve_adjoint(base, control, cost, self.params, self.pot,
                             self.nl, self.tg)

    def solve_discrete_dual(self, base: StateTrajectory, control,
                            cost: CostSpec) -> DiscreteDual:
        return solve_discrete_dual(base, control, cost, self.params, self.pot,
                                   self.nl, self.tg)

    def solve_linearized(self, base: StateTrajectory, control,
                         raw_increment) -> LinearizedTrajectory:
        hq = control.expand_increment(raw_increment[0], raw_increment[1],
                                      self.tg, self.grid)
        return solve_linearized(base, control, hq, self.params, self.pot,
                                self.nl, self.tg)


# -- inner products over raw control pairs ----------------------------------


def _pair_weights(first_kind, tg: TimeGrid, grid: Grid):
    w2 = tg.dt * grid.cell_volume
    if first_kind is None:
        return None, w2
    return (tg.dt if first_kind == SERIES else w2), w2


def pair_inner(a_pair, b_pair, first_kind, tg: TimeGrid, grid: Grid) -> float:
    w1, w2 = _pair_weights(first_kind, tg, grid)
    total = w2 * float(np.sum(a_pair[1] * b_pair[1]))
    if a_pair[0] is not None:
        total += w1 * float(np.sum(a_pair[0] * b_pair[0]))
    return total


def pair_norm(a_pair, first_kind, tg: TimeGrid, grid: Grid) -> float:
    return float(np.sqrt(pair_inner(a_pair, a_pair, first_kind, tg, grid)))


def _pair_sub(a_pair, b_pair):
    first = None if a_pair[0] is None else a_pair[0] - b_pair[0]
    return first, a_pair[1] - b_pair[1]


# -- cost and gradients ------------------------------------------------------


@dataclass
class CostValue:
    smooth: float
    sparsity: float
    total: float


def cost_eval(traj: StateTrajectory, control: Control, cost: CostSpec,
              tg: TimeGrid, grid: Grid) -> CostValue:
    """Tracking + Tikhonov cost of a trajectory/control pair.

    Time integrals over the cylinder use the left-endpoint rule on the
    `steps` intervals, matching the per-step control slicing; the final-time
    tracking term uses the last trajectory record.
    """
    n, steps = grid.ncells, tg.steps
    vol, dt = grid.cell_volume, tg.dt
    target_q = broadcast_cylinder_target(cost.target_q, steps, n)
    target_omega = broadcast_space_target(cost.target_omega, n)

    diff_q = traj.phi[:steps] - target_q[:steps]
    track_q = 0.5 * cost.b1 * dt * vol * float(np.sum(diff_q * diff_q))
    diff_t = traj.phi[steps] - target_omega
    track_t = 0.5 * cost.b2 * vol * float(np.sum(diff_t * diff_t))

    raw = control.raw_pair()
    kind = control.first_kind
    tik = 0.5 * cost.b3 * pair_inner(raw, raw, kind, tg, grid)
    smooth = track_q + track_t + tik
    g_val = sparsity_value(cost.sparsity, raw, tg, grid,
                           first_kind=kind or CYLINDER)
    return CostValue(smooth, g_val, smooth + cost.effective_kappa * g_val)


def smooth_cost(problem: Problem, control: Control, cost: CostSpec,
                traj: StateTrajectory = None) -> float:
    if traj is None:
        traj = problem.solve_state(control)
    return cost_eval(traj, control, cost, problem.tg, problem.grid).smooth


@dataclass
class ReducedGradient:
    """Pointwise gradient d0 + b3 u of the smooth reduced cost.

    g1 matches the raw first component of the control parametrization
    (cylinder field for full/scenario3, time series for scenario2, absent
    for scenario1); g2 is always the cylinder field r + b3 u2.
    """

    g1: np.ndarray | None
    g2: np.ndarray
    first_kind: str | None = CYLINDER

    def pair(self):
        return (self.g1, self.g2)


def smooth_gradient(adj, base: StateTrajectory,
                    control: Control, cost: CostSpec, nl: NonlinearitySpec,
                    tg: TimeGrid, grid: Grid) -> ReducedGradient:
    """Assemble the smooth-part gradient from the dual variables.

    `adj` is either the time-mirrored AdjointTrajectory (consistent with
    the continuous optimality system to O(dt)) or a DiscreteDual (exactly
    consistent with the discrete cost); both expose p and r at indices
    0..steps. Per control slice n the duals at the same index enter: the
    full first component gets -h(phi_n) p_n + b3 u1, scenario 2 reduces it
    over the domain against the spatial profile, and scenario 3 routes it
    through the transpose of H. The second component is always r_n + b3 u2.
    """
    steps = tg.steps
    hp = truncation(nl, base.phi[:steps]) * adj.p[:steps]
    g2 = adj.r[:steps] + cost.b3 * control.u2

    kind = control.first_kind
    if kind is None:
        g1 = None
    elif control.parametrization == "full":
        g1 = -hp + cost.b3 * control.u1
    elif control.parametrization == "scenario2":
        reduced_series = -grid.cell_volume * (hp @ control.z_hat)
        g1 = reduced_series + cost.b3 * control.u
    else:
        g1 = -operator_H_adjoint(control.h_spec, hp, grid) + cost.b3 * control.w1
    return ReducedGradient(g1, g2, first_kind=kind)


def directional_derivative(problem: Problem, base_control: Control, increment,
                           cost: CostSpec, base: StateTrajectory = None,
                           lin: LinearizedTrajectory = None) -> float:
    """Exact directional derivative of the smooth reduced cost.

    Evaluates b1 (phi - target, psi)_Q + b2 (phi(T) - target, psi(T))
    + b3 (u, h) with psi from the linearized solver; `increment` is a raw
    pair matching the control parametrization.
    """
    tg, grid = problem.tg, problem.grid
    n, steps = grid.ncells, tg.steps
    if base is None:
        base = problem.solve_state(base_control)
    if lin is None:
        lin = problem.solve_linearized(base, base_control, increment)
    target_q = broadcast_cylinder_target(cost.target_q, steps, n)
    target_omega = broadcast_space_target(cost.target_omega, n)
    vol, dt = grid.cell_volume, tg.dt

    val = cost.b1 * dt * vol * float(
        np.sum((base.phi[:steps] - target_q[:steps]) * lin.psi[:steps]))
    val += cost.b2 * vol * float(
        np.sum((base.phi[steps] - target_omega) * lin.psi[steps]))
    val += cost.b3 * pair_inner(base_control.raw_pair(), increment,
                                base_control.first_kind, tg, grid)
    return val


def gradient_pairing(grad: ReducedGradient, increment, tg: TimeGrid,
                     grid: Grid) -> float:
    """Adjoint-route directional derivative <d0 + b3 u, h>."""
    return pair_inner(grad.pair(), increment, grad.first_kind, tg, grid)


# -- stationarity and the optimizer ------------------------------------------


def stationarity_residual(u_pair, grad: ReducedGradient, cost: CostSpec,
                          box: BoxConstraints, gamma: float, tg: TimeGrid,
                          grid: Grid) -> float:
    """Normalized prox residual ||u - prox(u - gamma grad)|| / max(1, ||u||).

    Vanishes exactly at controls satisfying the pointwise projection
    formulas, for any gamma > 0.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    kind = grad.first_kind
    step1 = None if u_pair[0] is None else u_pair[0] - gamma * grad.g1
    step2 = u_pair[1] - gamma * grad.g2
    prox = prox_l1_box((step1, step2), gamma * cost.effective_kappa, box)
    resid = _pair_sub(u_pair, prox)
    denom = max(1.0, pair_norm(u_pair, kind, tg, grid))
    return pair_norm(resid, kind, tg, grid) / denom


class OptimizationError(RuntimeError):
    pass


@dataclass
class OptOptions:
    """Proximal-gradient settings; step0 defaults to 1 / b3."""

    step0: float | None = None
    backtrack_factor: float = 0.5
    sufficient_decrease: float = 1e-4
    max_iterations: int = 500
    tolerance: float = 1e-6
    max_backtracks: int = 60


@dataclass
class OptResult:
    control: Control
    iterates: int
    cost_history: list[float]
    stationarity_residual: float
    sparsity_fraction: tuple[float | None, float]
    converged: bool
    residual_history: list[float] = field(default_factory=list)
    trajectory: StateTrajectory | None = None
    dual: DiscreteDual | None = None


def _zero_fraction(u_pair, tol=1e-12):
    first, u2 = u_pair
    f1 = None if first is None else float(np.mean(np.abs(first) <= tol))
    return f1, float(np.mean(np.abs(u2) <= tol))


def optimize(problem: Problem, initial: Control, cost: CostSpec,
             box: BoxConstraints, opts: OptOptions = None) -> OptResult:
    """Proximal projected gradient descent on the reduced cost.

    Iterates u+ = prox(u - gamma (d0 + b3 u), gamma kappa, box) with
    monotone backtracking on the total cost; terminates once the prox
    residual at the reference step drops below the tolerance. The recorded
    cost history is nonincreasing by construction.

    d0 comes from the exact transpose of the discrete linearized stepping,
    so the search direction is consistent with the evaluated cost down to
    solver tolerances; trial steps are seeded with a curvature estimate from
    the previous accepted step and safeguarded by the backtracking.
    """
    opts = opts or OptOptions()
    tg, grid = problem.tg, problem.grid
    step0 = opts.step0 if opts.step0 is not None else 1.0 / cost.b3
    kappa = cost.effective_kappa
    kind = initial.first_kind

    # start from an admissible point
    raw = initial.raw_pair()
    raw = prox_l1_box(raw, 0.0, box)
    u = initial.with_raw(*raw)

    traj = problem.solve_state(u)
    current = cost_eval(traj, u, cost, tg, grid)
    history = [current.total]
    residuals = []
    gamma = step0
    dual = None
    prev_raw = prev_grad = None
    converged = False
    iterates = 0

    for _ in range(opts.max_iterations):
        dual = problem.solve_discrete_dual(traj, u, cost)
        grad = smooth_gradient(dual, traj, u, cost, problem.nl, tg, grid)
        resid = stationarity_residual(u.raw_pair(), grad, cost, box, step0,
                                      tg, grid)
        residuals.append(resid)
        if resid <= opts.tolerance:
            converged = True
            break

        if prev_raw is not None:
            # secant curvature estimate: <du, du> / <du, dg>
            du = _pair_sub(u.raw_pair(), prev_raw)
            dg = _pair_sub(grad.pair(), prev_grad)
            denom = pair_inner(du, dg, kind, tg, grid)
            if denom > 0:
                gamma = pair_inner(du, du, kind, tg, grid) / denom
        gamma = float(np.clip(gamma, 1e-12, step0))
        prev_raw, prev_grad = u.raw_pair(), grad.pair()

        accepted = False
        for _ in range(opts.max_backtracks):
            step1 = None if u.first_raw is None else u.first_raw - gamma * grad.g1
            cand_raw = prox_l1_box((step1, u.u2 - gamma * grad.g2),
                                   gamma * kappa, box)
            cand = u.with_raw(*cand_raw)
            try:
                cand_traj = problem.solve_state(cand)
            except SolverError:
                gamma *= opts.backtrack_factor
                continue
            cand_cost = cost_eval(cand_traj, cand, cost, tg, grid)
            dist = pair_norm(_pair_sub(cand_raw, u.raw_pair()), kind, tg, grid)
            if cand_cost.total <= current.total - (
                    opts.sufficient_decrease / gamma) * dist * dist:
                accepted = True
                break
            gamma *= opts.backtrack_factor
        if not accepted:
            raise OptimizationError(
                f"no monotone step after {opts.max_backtracks} backtracks")
        u, traj, current = cand, cand_traj, cand_cost
        history.append(current.total)
        iterates += 1

    if not converged:
        dual = problem.solve_discrete_dual(traj, u, cost)
        grad = smooth_gradient(dual, traj, u, cost, problem.nl, tg, grid)
        resid = stationarity_residual(u.raw_pair(), grad, cost, box, step0,
                                      tg, grid)
        residuals.append(resid)
        converged = resid <= opts.tolerance

    return OptResult(control=u, iterates=iterates, cost_history=history,
                     stationarity_residual=residuals[-1],
                     sparsity_fraction=_zero_fraction(u.raw_pair()),
                     converged=converged, residual_history=residuals,
                     trajectory=traj, dual=dual)


# -- sparsity structure -------------------------------------------------------


@dataclass
class SparsityReport:
    """Predicted-zero vs actual-zero masks and their agreement.

    Prediction uses the closed dual inequalities |h(phi) p| <= kappa and
    |r| <= kappa (ties count as predicted zero); cells whose dual magnitude
    lies within the fuzz band around kappa are excluded from the agreement
    count to absorb discretization noise.
    """

    predicted_zero_1: np.ndarray | None
    actual_zero_1: np.ndarray | None
    excluded_1: np.ndarray | None
    agreement_1: float | None
    predicted_zero_2: np.ndarray
    actual_zero_2: np.ndarray
    excluded_2: np.ndarray
    agreement_2: float

    @property
    def agreement(self) -> float:
        parts = [a for a in (self.agreement_1, self.agreement_2) if a is not None]
        return min(parts)


def _mask_agreement(dual_mag, u_raw, kappa, fuzz, zero_tol):
    predicted = dual_mag <= kappa
    actual = np.abs(u_raw) <= zero_tol
    excluded = (np.abs(dual_mag - kappa) <= fuzz) if fuzz > 0 else \
        np.zeros_like(predicted)
    counted = ~excluded
    if not np.any(counted):
        return predicted, actual, excluded, 1.0
    agree = float(np.mean(predicted[counted] == actual[counted]))
    return predicted, actual, excluded, agree


def sparsity_map(base: StateTrajectory, adj: AdjointTrajectory,
                 control: Control, cost: CostSpec, nl: NonlinearitySpec,
                 tg: TimeGrid, grid: Grid, zero_tol: float = 1e-12,
                 fuzz_rel: float = 1e-3) -> SparsityReport:
    """Compare dual-predicted zero sets with the actual zeros of a control.

    Meant for converged controls: at exact prox fixed points the
    equivalences hold cell by cell. With kappa = 0 the fuzz band is
    degenerate and disabled; the predicted-zero set is then exactly the
    zero set of the dual magnitude.
    """
    steps = tg.steps
    kappa = cost.effective_kappa
    fuzz = fuzz_rel * kappa if kappa > 0 else 0.0
    hp = truncation(nl, base.phi[:steps]) * adj.p[:steps]

    kind = control.first_kind
    if kind is None:
        pred1 = act1 = exc1 = agree1 = None
    else:
        if control.parametrization == "scenario2":
            dual1 = np.abs(grid.cell_volume * (hp @ control.z_hat))
        elif control.parametrization == "scenario3":
            dual1 = np.abs(operator_H_adjoint(control.h_spec, hp, grid))
        else:
            dual1 = np.abs(hp)
        pred1, act1, exc1, agree1 = _mask_agreement(
            dual1, control.first_raw, kappa, fuzz, zero_tol)

    pred2, act2, exc2, agree2 = _mask_agreement(
        np.abs(adj.r[:steps]), control.u2, kappa, fuzz, zero_tol)
    return SparsityReport(pred1, act1, exc1, agree1, pred2, act2, exc2, agree2)


def vanishing_threshold(problem: Problem, cost: CostSpec,
                        control: Control = None) -> float:
    """Dual bound max(sup |h(phi) p|, sup |r|) at a reference control.

    Any kappa strictly above this value makes the zero control stationary,
    so the optimizer collapses to u = 0 (the large-kappa vanishing effect).
    """
    control = control if control is not None else problem.zero_control()
    base = problem.solve_state(control)
    adj = problem.solve_adjoint(base, control, cost)
    report = dual_bound_report(adj, base, problem.nl)
    return max(report.weighted_p_sup, report.r_sup)
