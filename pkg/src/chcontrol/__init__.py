"""Sparse optimal control of a hyperbolically relaxed Cahn-Hilliard system.

Library layout:

  grid        cell-centered grids, Neumann Laplacian, inner products, snapshots
  model       potentials, proliferation/truncation shapes, assumption checks
  forward     semi-implicit state solver with separation monitoring
  linearized  exact discrete linearization and Taylor remainder test
  adjoint     backward dual solver and dual sup-norm bounds
  control     control parametrizations, operator H, box projection, L1 prox
  reduced     reduced cost, gradients, prox-gradient optimizer, sparsity maps
  config/cli  run configuration, subcommands, manifests, figure reports
"""

__version__ = "0.1.0"

from .grid import Field, Grid, GridMismatchError  # noqa: F401
from .model import (ModelParams, NonlinearitySpec, PotentialSpec,  # noqa: F401
                    validate_assumptions)
from .forward import (InitialData, SolverError, StateTrajectory,  # noqa: F401
                      TimeGrid, check_separation, solve_forward,
                      stability_norms)
from .linearized import solve_linearized, taylor_test  # noqa: F401
from .adjoint import dual_bound_report, solve_adjoint  # noqa: F401
from .control import (BoxConstraints, Control, HSpec,  # noqa: F401
                      SparsitySpec, operator_H, operator_H_adjoint,
                      project_box, prox_l1_box, sparsity_value,
                      subgradient_select)
from .reduced import (CostSpec, OptOptions, OptResult, Problem,  # noqa: F401
                      cost_eval, directional_derivative, optimize,
                      smooth_gradient, sparsity_map, stationarity_residual)
