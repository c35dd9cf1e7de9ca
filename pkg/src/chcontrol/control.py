"""Control representations, admissible boxes, the operator H, and L1 sparsity.

A control is the pair (u1, u2) on the space-time cylinder; u2 is always a raw
per-step field sequence while u1 may be parametrized:

  full       u1 itself is the raw variable
  scenario1  u1 is a fixed given datum; only u2 is free
  scenario2  u1(x, t) = z_hat(x) u(t); the raw variable is the time series u
  scenario3  u1 = z_tilde + H[w1] with a linear operator H; raw variable w1

H is realized as a spatial convolution with a finite symmetric kernel applied
slice-wise in time, with mirror boundary handling, so its discrete transpose
is H itself (verified by the dot-product test). Per-step control slices are
indexed by the left endpoints of the time intervals; cylinder integrals use
dt x cell-volume weights and time-series integrals use dt weights.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import convolve1d

from .grid import Grid
from .forward import TimeGrid

CYLINDER = "cylinder"
SERIES = "series"


@dataclass(frozen=True)
class HSpec:
    """Spatial convolution kernel for the scenario-3 operator.

    gaussian -- normalized discrete Gaussian of the given radius and width
    delta    -- identity
    null     -- zero operator (reduces scenario 3 to scenario 1)
    """

    kind: str = "gaussian"
    radius: int = 2
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "delta", "null"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian" and (self.radius < 1 or self.sigma <= 0):
            raise ValueError("gaussian kernel needs radius >= 1 and sigma > 0")

    def kernel(self) -> np.ndarray:
        if self.kind == "delta":
            return np.array([1.0])
        if self.kind == "null":
            return np.array([0.0])
        j = np.arange(-self.radius, self.radius + 1, dtype=float)
        k = np.exp(-0.5 * (j / self.sigma) ** 2)
        return k / k.sum()


def operator_H(spec: HSpec, w: np.ndarray, grid: Grid) -> np.ndarray:
    """Apply H slice-wise in time to fields of shape (steps, ncells)."""
    if spec.kind == "null":
        return np.zeros_like(np.asarray(w, dtype=float))
    kernel = spec.kernel()
    if kernel.size > min(grid.cells):
        raise ValueError(
            f"kernel of width {kernel.size} is wider than the grid {grid.cells}")
    w = np.asarray(w, dtype=float)
    out = w.reshape(w.shape[0], *grid.shape)
    # mirror ghost cells == scipy.ndimage 'reflect' mode
    for axis in range(grid.dim):
        out = convolve1d(out, kernel, axis=axis + 1, mode="reflect")
    return out.reshape(w.shape)


def operator_H_adjoint(spec: HSpec, y: np.ndarray, grid: Grid) -> np.ndarray:
    """Transpose of the discrete H.

    The kernel is symmetric and the mirror closure makes the convolution
    matrix symmetric, so H* coincides with H; kept as a named operation so
    gradient code reads like the optimality system.
    """
    return operator_H(spec, y, grid)


@dataclass(frozen=True)
class BoxConstraints:
    """Admissible box lo_i <= u_i <= hi_i; bounds are constants or arrays."""

    lo1: float | np.ndarray = -np.inf
    hi1: float | np.ndarray = np.inf
    lo2: float | np.ndarray = -np.inf
    hi2: float | np.ndarray = np.inf

    def __post_init__(self):
        if np.any(np.asarray(self.lo1) > np.asarray(self.hi1)) or \
           np.any(np.asarray(self.lo2) > np.asarray(self.hi2)):
            raise ValueError("box thresholds must satisfy lo <= hi")

    def bounds(self, component: int):
        return (self.lo1, self.hi1) if component == 1 else (self.lo2, self.hi2)

    def satisfies_sign_condition(self, component: int) -> bool:
        lo, hi = self.bounds(component)
        return bool(np.all(np.asarray(lo) < 0.0) and np.all(np.asarray(hi) > 0.0))


@dataclass(frozen=True)
class SparsitySpec:
    """Choice of sparsity functional: none, or the full L1 cylinder norm."""

    kind: str = "l1_full"
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "l1_full"):
            raise ValueError(f"unknown sparsity kind {self.kind!r}")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")


@dataclass
class Control:
    """Control pair on the cylinder with its parametrization.

    Raw (optimizable) components: (u1, u2) for full, (u2,) for scenario1,
    (u, u2) for scenario2, (w1, u2) for scenario3. ``expand`` always returns
    the full per-step pair on the cylinder.
    """

    u2: np.ndarray
    parametrization: str = "full"
    u1: np.ndarray | None = None
    u1_fixed: np.ndarray | None = None
    z_hat: np.ndarray | None = None
    u: np.ndarray | None = None
    z_tilde: np.ndarray | None = None
    h_spec: HSpec | None = None
    w1: np.ndarray | None = None

    @classmethod
    def full(cls, u1: np.ndarray, u2: np.ndarray) -> "Control":
        return cls(u2=np.asarray(u2, float), u1=np.asarray(u1, float))

    @classmethod
    def scenario1(cls, u1_fixed: np.ndarray, u2: np.ndarray) -> "Control":
        return cls(u2=np.asarray(u2, float), parametrization="scenario1",
                   u1_fixed=np.asarray(u1_fixed, float))

    @classmethod
    def scenario2(cls, z_hat: np.ndarray, u: np.ndarray, u2: np.ndarray) -> "Control":
        return cls(u2=np.asarray(u2, float), parametrization="scenario2",
                   z_hat=np.asarray(z_hat, float), u=np.asarray(u, float))

    @classmethod
    def scenario3(cls, z_tilde: np.ndarray, h_spec: HSpec, w1: np.ndarray,
                  u2: np.ndarray) -> "Control":
        return cls(u2=np.asarray(u2, float), parametrization="scenario3",
                   z_tilde=np.asarray(z_tilde, float), h_spec=h_spec,
                   w1=np.asarray(w1, float))

    @classmethod
    def zero(cls, tg: TimeGrid, grid: Grid) -> "Control":
        shape = (tg.steps, grid.ncells)
        return cls.full(np.zeros(shape), np.zeros(shape))

    # -- raw-variable view -------------------------------------------------

    @property
    def first_name(self) -> str | None:
        return {"full": "u1", "scenario1": None,
                "scenario2": "u", "scenario3": "w1"}[self.parametrization]

    @property
    def first_kind(self) -> str | None:
        """Quadrature kind of the raw first component."""
        return {"full": CYLINDER, "scenario1": None,
                "scenario2": SERIES, "scenario3": CYLINDER}[self.parametrization]

    @property
    def first_raw(self) -> np.ndarray | None:
        name = self.first_name
        return None if name is None else getattr(self, name)

    def with_raw(self, first: np.ndarray | None, u2: np.ndarray) -> "Control":
        kwargs = {"u2": u2}
        if self.first_name is not None:
            kwargs[self.first_name] = first
        return replace(self, **kwargs)

    def raw_pair(self):
        return (self.first_raw, self.u2)

    # -- expansion to the cylinder ------------------------------------------

    def expand(self, tg: TimeGrid, grid: Grid):
        """Full-cylinder (u1, u2), each of shape (steps, ncells)."""
        shape = (tg.steps, grid.ncells)
        u2 = np.asarray(self.u2, float)
        if u2.shape != shape:
            raise ValueError(f"u2 has shape {u2.shape}, expected {shape}")
        if self.parametrization == "full":
            u1 = np.asarray(self.u1, float)
        elif self.parametrization == "scenario1":
            u1 = np.asarray(self.u1_fixed, float)
        elif self.parametrization == "scenario2":
            if self.z_hat.shape != (grid.ncells,) or self.u.shape != (tg.steps,):
                raise ValueError("scenario2 needs z_hat on the grid and a "
                                 "time series with one value per step")
            u1 = self.u[:, None] * self.z_hat[None, :]
        else:
            u1 = self.z_tilde + operator_H(self.h_spec, self.w1, grid)
        if u1.shape != shape:
            raise ValueError(f"u1 expands to shape {u1.shape}, expected {shape}")
        return u1, u2

    def expand_increment(self, h_first: np.ndarray | None, h2: np.ndarray,
                         tg: TimeGrid, grid: Grid):
        """Derivative of ``expand`` applied to a raw increment.

        Expansion is affine in the raw variables, so this is exact: the
        fixed data (u1_fixed, z_hat profile, z_tilde offset) drop out.
        """
        shape = (tg.steps, grid.ncells)
        h2 = np.asarray(h2, float)
        if self.parametrization == "full":
            h1 = np.asarray(h_first, float)
        elif self.parametrization == "scenario1":
            h1 = np.zeros(shape)
        elif self.parametrization == "scenario2":
            h1 = np.asarray(h_first, float)[:, None] * self.z_hat[None, :]
        else:
            h1 = operator_H(self.h_spec, np.asarray(h_first, float), grid)
        return h1, h2


# -- pointwise operations on control pairs ---------------------------------


def project_box(u_pair, box: BoxConstraints):
    """Componentwise clamp onto the admissible box."""
    u1, u2 = u_pair
    out1 = None if u1 is None else np.clip(u1, *box.bounds(1))
    return out1, np.clip(u2, *box.bounds(2))


def prox_l1_box(u_pair, weight: float, box: BoxConstraints):
    """Soft-threshold by `weight`, then clamp to the box.

    This is the exact proximal map of weight * |.| plus the box indicator
    whenever 0 lies inside the box, which the sign condition lo < 0 < hi
    guarantees; it is enforced wherever weight > 0.
    """
    if weight < 0:
        raise ValueError("prox weight must be nonnegative")
    u1, u2 = u_pair
    if weight > 0:
        for comp, u in ((1, u1), (2, u2)):
            if u is not None and not box.satisfies_sign_condition(comp):
                raise ValueError(
                    f"box component {comp} must satisfy lo < 0 < hi when the "
                    "sparsity weight is positive")

    def _one(u, comp):
        if u is None:
            return None
        soft = np.sign(u) * np.maximum(np.abs(u) - weight, 0.0)
        return np.clip(soft, *box.bounds(comp))

    return _one(u1, 1), _one(u2, 2)


def sparsity_value(spec: SparsitySpec, u_pair, tg: TimeGrid, grid: Grid,
                   first_kind: str = CYLINDER) -> float:
    """L1 functional of the control pair under the discrete measures.

    Cylinder components integrate with dt x cell-volume weights; a
    time-series first component (scenario 2) integrates with dt weights.
    The sparsity coefficient kappa is applied by the caller.
    """
    if spec.kind == "none":
        return 0.0
    u1, u2 = u_pair
    dt = tg.dt
    total = float(np.sum(np.abs(u2))) * dt * grid.cell_volume
    if u1 is not None:
        w = dt if first_kind == SERIES else dt * grid.cell_volume
        total += float(np.sum(np.abs(u1))) * w
    return total


def subgradient_select(u_pair):
    """Canonical subgradient of the L1 functional: sign(u), zero at zero.

    Any value in [-1, 1] is admissible where u vanishes; the sign selection
    is for diagnostics only, the optimizer keeps the subgradient implicit in
    the proximal map.
    """
    u1, u2 = u_pair
    out1 = None if u1 is None else np.sign(u1)
    return out1, np.sign(u2)
