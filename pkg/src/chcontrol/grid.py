"""Uniform cell-centered grids with zero-flux (Neumann) boundary closure.

The spatial domain is a 1D interval or a 2D rectangle, discretized by
cell-centered finite differences. Ghost cells mirror the adjacent interior
cell across each face, which makes the discrete normal derivative vanish and
renders the Laplacian matrix exactly symmetric; the adjoint machinery relies
on that symmetry. Fields live on the grid as flat float64 arrays, one value
per cell, flattened in row-major order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

# Above this many unknowns the implicit solves switch from a prefactored
# direct solve to conjugate gradient (relative residual 1e-10).
DIRECT_SOLVE_LIMIT = 10_000
CG_RTOL = 1e-10
# Up to this many unknowns dense LAPACK factorizations beat sparse solves.
DENSE_LIMIT = 512

FIELD_MAGIC = b"FLD1"


class GridMismatchError(ValueError):
    """An operation mixed fields or operators from different grids."""


def _laplacian_1d(n: int, h: float) -> sps.csr_matrix:
    """Second-order centered Laplacian with mirror ghost cells.

    The mirror closure (ghost value equals the adjacent interior value)
    turns the boundary rows into (f[1] - f[0]) / h^2 and its counterpart,
    so the matrix is symmetric with zero row sums.
    """
    a = 1.0 / (h * h)
    main = np.full(n, -2.0 * a)
    main[0] = main[-1] = -a
    off = np.full(n - 1, a)
    return sps.diags([off, main, off], offsets=[-1, 0, 1], format="csr")


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on [0, L1] or [0, L1] x [0, L2].

    cells    -- number of cells per axis (each >= 4)
    lengths  -- side lengths of the domain (each > 0)
    """

    cells: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cells)
        lengths = tuple(float(x) for x in self.lengths)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "lengths", lengths)
        if len(cells) not in (1, 2) or len(lengths) != len(cells):
            raise ValueError("grid must be 1D or 2D with one length per axis")
        if any(c < 4 for c in cells):
            raise ValueError("need at least 4 cells per axis")
        if any(l <= 0 for l in lengths):
            raise ValueError("domain side lengths must be positive")

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(l / c for l, c in zip(self.lengths, self.cells))

    @property
    def ncells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def measure(self) -> float:
        """Total measure of the domain."""
        return float(np.prod(self.lengths))

    def cell_centers(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinates per axis."""
        return tuple(
            (np.arange(c) + 0.5) * h for c, h in zip(self.cells, self.spacing)
        )

    def coordinate_arrays(self) -> tuple[np.ndarray, ...]:
        """Flat coordinate arrays, one per axis, aligned with field storage."""
        axes = self.cell_centers()
        if self.dim == 1:
            return (axes[0].copy(),)
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        return (xx.ravel(), yy.ravel())

    @cached_property
    def laplacian(self) -> sps.csr_matrix:
        """Sparse Neumann Laplacian acting on flat cell values."""
        h = self.spacing
        if self.dim == 1:
            return _laplacian_1d(self.cells[0], h[0])
        l0 = _laplacian_1d(self.cells[0], h[0])
        l1 = _laplacian_1d(self.cells[1], h[1])
        i0 = sps.identity(self.cells[0], format="csr")
        i1 = sps.identity(self.cells[1], format="csr")
        return (sps.kron(l0, i1) + sps.kron(i0, l1)).tocsr()

    def apply_laplacian(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.ncells,):
            raise GridMismatchError(
                f"field has {values.shape} values, grid has {self.ncells} cells"
            )
        return self.laplacian @ values

    @cached_property
    def dense_laplacian(self) -> np.ndarray:
        return self.laplacian.toarray()

    @cached_property
    def _helmholtz_cache(self) -> dict:
        return {}

    def helmholtz_solve(self, c: float, rhs: np.ndarray) -> np.ndarray:
        """Solve (I - c * Laplacian) x = rhs.

        Prefactored direct solve below DIRECT_SOLVE_LIMIT unknowns (dense
        LAPACK factors at desk scale), CG with relative residual 1e-10
        above. Factorizations are cached per c.
        """
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.ncells,):
            raise GridMismatchError(
                f"rhs has {rhs.shape} values, grid has {self.ncells} cells"
            )
        c = float(c)
        n = self.ncells
        if n <= DENSE_LIMIT:
            factors = self._helmholtz_cache.get(c)
            if factors is None:
                mat = np.eye(n) - c * self.dense_laplacian
                factors = sla.lu_factor(mat)
                self._helmholtz_cache[c] = factors
            return sla.lu_solve(factors, rhs)
        if n <= DIRECT_SOLVE_LIMIT:
            solve = self._helmholtz_cache.get(c)
            if solve is None:
                mat = (sps.identity(n, format="csc")
                       - c * self.laplacian.tocsc())
                solve = spla.factorized(mat)
                self._helmholtz_cache[c] = solve
            return solve(rhs)
        mat = self._helmholtz_cache.get(c)
        if mat is None:
            mat = (sps.identity(n, format="csr") - c * self.laplacian)
            self._helmholtz_cache[c] = mat
        x, info = spla.cg(mat, rhs, rtol=CG_RTOL, atol=0.0)
        if info != 0:
            raise RuntimeError(f"CG failed to converge (info={info})")
        return x

    def solve_shifted(self, shift: float, diag: np.ndarray,
                      rhs: np.ndarray) -> np.ndarray:
        """Solve (shift * I - Laplacian + diag(d)) x = rhs.

        The per-step implicit systems of the phase block and its duals have
        this form with a step-dependent diagonal; dense LAPACK at desk
        scale, sparse direct above.
        """
        n = self.ncells
        if n <= DENSE_LIMIT:
            mat = -self.dense_laplacian.copy()
            idx = np.arange(n)
            mat[idx, idx] += shift + diag
            return np.linalg.solve(mat, rhs)
        mat = (shift * sps.identity(n, format="csr") - self.laplacian
               + sps.diags(diag))
        return spla.spsolve(mat.tocsc(), rhs)


@dataclass
class Field:
    """Scalar function sampled at the cell centers of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != self.grid.ncells:
            raise GridMismatchError(
                f"field has {values.size} values, grid has {self.grid.ncells} cells"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.values = values

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.ncells, float(value)))

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def _check_same_grid(f: Field, g: Field):
    if f.grid != g.grid:
        raise GridMismatchError("fields live on different grids")


def laplacian_neumann(f: Field) -> Field:
    """Apply the mirror-closed Neumann Laplacian to a field."""
    return Field(f.grid, f.grid.apply_laplacian(f.values))


def inner(f: Field, g: Field) -> float:
    """Discrete L2 inner product: sum(f * g) * cell volume."""
    _check_same_grid(f, g)
    return float(f.values @ g.values) * f.grid.cell_volume


def norm(f: Field) -> float:
    return float(np.sqrt(inner(f, f)))


def grad_sq_values(grid: Grid, values: np.ndarray) -> float:
    """Integral of |grad f|^2 from one-sided differences at interior faces."""
    vol = grid.cell_volume
    arr = values.reshape(grid.shape)
    total = 0.0
    for axis, h in enumerate(grid.spacing):
        d = np.diff(arr, axis=axis) / h
        total += float(np.sum(d * d)) * vol
    return total

def h1_norm(f: Field) -> float:
    """Discrete H1 norm: sqrt(||f||^2 + ||grad_h f||^2)."""
    l2sq = inner(f, f)
    return float(np.sqrt(l2sq + grad_sq_values(f.grid, f.values)))


def l2_norm_values(grid: Grid, values: np.ndarray) -> float:
    return float(np.sqrt(np.sum(values * values) * grid.cell_volume))


def h1_norm_values(grid: Grid, values: np.ndarray) -> float:
    l2sq = np.sum(values * values) * grid.cell_volume
    return float(np.sqrt(l2sq + grad_sq_values(grid, values)))


def write_field(path, f: Field):
    """Write a field snapshot: magic 'FLD1', dim, cells per axis, float64 values.

    All integers are little-endian uint32; values are little-endian float64
    in row-major order.
    """
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<I", f.grid.dim))
        for c in f.grid.cells:
            fh.write(struct.pack("<I", c))
        fh.write(f.values.astype("<f8").tobytes())


def read_field(path, grid: Grid) -> Field:
    """Read a field snapshot and bind it to the given grid."""
    cells, values = read_field_raw(path)
    if cells != grid.cells:
        raise GridMismatchError(
            f"snapshot has cells {cells}, grid has {grid.cells}"
        )
    return Field(grid, values)


def read_field_raw(path) -> tuple[tuple[int, ...], np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FIELD_MAGIC:
            raise ValueError(f"not a field snapshot (magic {magic!r})")
        (dim,) = struct.unpack("<I", fh.read(4))
        if dim not in (1, 2):
            raise ValueError(f"unsupported snapshot dimension {dim}")
        cells = struct.unpack(f"<{dim}I", fh.read(4 * dim))
        n = int(np.prod(cells))
        values = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(float)
        if values.size != n:
            raise ValueError("snapshot truncated")
    return cells, values
