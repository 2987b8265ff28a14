"""
Uniform lattice, discrete measures and staggered flux fields.

Vertices are cell centers: vertex i of a grid with spacing dx sits at
origin + i * dx, where origin is half a cell inside the bounding box.
Arrays are laid out row-major over multi-indices (last axis fastest).

A flux entry (i, v) holds the mass crossing the face between vertex i and
its successor along axis v. Faces on the far boundary of each axis are
pinned to zero, which is the zero-flux condition; with that convention the
divergence and gradient below are exact negative adjoints of each other.
"""
from dataclasses import dataclass
from functools import reduce
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sps

from .exceptions import (
    ConfigurationError,
    IncompatibleFieldsError,
    InvalidFluxError,
    InvalidMeasureError,
)

SPACING_TOLERANCE = 1e-9


@dataclass(frozen=True)
class LatticeGrid:
    """Geometry of a uniform d-dimensional cell-centered lattice."""

    shape: Tuple[int, ...]
    spacing: float
    origin: Tuple[float, ...]

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        origin = tuple(float(x) for x in self.origin)
        spacing = float(self.spacing)

        if not shape:
            raise ConfigurationError("a lattice needs at least one axis")
        if any(n < 1 for n in shape):
            raise ConfigurationError(f"all shape entries must be >= 1, got {shape}")
        if not np.isfinite(spacing) or spacing <= 0:
            raise ConfigurationError(f"spacing must be positive, got {spacing}")
        if len(origin) != len(shape):
            raise ConfigurationError(
                f"origin has {len(origin)} components but the grid has {len(shape)} axes"
            )
        if not all(np.isfinite(origin)):
            raise ConfigurationError("origin must be finite")

        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)

    @classmethod
    def from_box(cls, shape: Sequence[int], lower: Sequence[float], upper: Sequence[float]) -> "LatticeGrid":
        """
        Build a cell-centered grid covering the box [lower, upper].

        Raises:
            IncompatibleFieldsError: if the box does not give the same spacing on every axis.
        """
        shape = tuple(int(n) for n in shape)
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if lower.shape != (len(shape),) or upper.shape != (len(shape),):
            raise IncompatibleFieldsError("box corners must have one entry per axis")
        if np.any(upper <= lower):
            raise ConfigurationError("box upper corner must exceed the lower corner")

        spacings = (upper - lower) / np.asarray(shape, dtype=float)
        if np.any(np.abs(spacings - spacings[0]) > SPACING_TOLERANCE):
            raise IncompatibleFieldsError(f"non-uniform spacing {spacings.tolist()}")
        spacing = float(spacings[0])
        return cls(shape=shape, spacing=spacing, origin=tuple(lower + spacing / 2.0))

    @classmethod
    def square(cls, n: int, low: float = -2.0, high: float = 2.0, dims: int = 2) -> "LatticeGrid":
        """n^dims lattice on the cube [low, high]^dims."""
        return cls.from_box((n,) * dims, (low,) * dims, (high,) * dims)

    @property
    def dims(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        """Total vertex count N."""
        return int(np.prod(self.shape))

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners of the covered box."""
        origin = np.asarray(self.origin)
        half = self.spacing / 2.0
        return origin - half, origin + self.spacing * (np.asarray(self.shape) - 1) + half

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing * np.arange(self.shape[axis])

    def coordinates(self) -> np.ndarray:
        """Vertex coordinates, shape (*shape, dims)."""
        axes = [self.axis_coordinates(v) for v in range(self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def vertex_coordinate(self, index: Sequence[int]) -> np.ndarray:
        index = np.asarray(index, dtype=float)
        if index.shape != (self.dims,):
            raise IncompatibleFieldsError(f"expected a {self.dims}-component index")
        return np.asarray(self.origin) + self.spacing * index

    def linear_index(self, index: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(i) for i in index), self.shape))

    def multi_index(self, linear: int) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(int(linear), self.shape))


def boundary_mask(grid: LatticeGrid) -> np.ndarray:
    """True at every face (i, v) where i is the last vertex along axis v."""
    mask = np.zeros(grid.shape + (grid.dims,), dtype=bool)
    for v in range(grid.dims):
        index = [slice(None)] * grid.dims
        index[v] = -1
        mask[tuple(index) + (v,)] = True
    return mask


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _shaped(values, shape: Tuple[int, ...], what: str) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.size != int(np.prod(shape)):
        raise IncompatibleFieldsError(f"{what} has {array.size} entries, expected shape {shape}")
    return array.reshape(shape)


@dataclass(frozen=True, eq=False)
class DensityField:
    """Per-vertex probability masses p_i."""

    grid: LatticeGrid
    mass: np.ndarray

    def __post_init__(self):
        mass = _shaped(self.mass, self.grid.shape, "density")
        if not np.all(np.isfinite(mass)):
            raise InvalidMeasureError("density holds non-finite values")
        if np.any(mass < 0):
            raise InvalidMeasureError("density holds negative values")
        object.__setattr__(self, "mass", _frozen(mass))

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    @property
    def flat(self) -> np.ndarray:
        return self.mass.reshape(-1)


@dataclass(frozen=True, eq=False)
class FluxField:
    """Staggered face fluxes, values[..., v] is the flux through the +e_v face."""

    grid: LatticeGrid
    values: np.ndarray

    def __post_init__(self):
        values = _shaped(self.values, self.grid.shape + (self.grid.dims,), "flux")
        if not np.all(np.isfinite(values)):
            raise InvalidFluxError("flux holds non-finite values")
        if np.any(values[boundary_mask(self.grid)] != 0.0):
            raise InvalidFluxError("flux is nonzero on a boundary face")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def zeros(cls, grid: LatticeGrid) -> "FluxField":
        return cls(grid, np.zeros(grid.shape + (grid.dims,)))

    @classmethod
    def pinned(cls, grid: LatticeGrid, values) -> "FluxField":
        """Build a flux from arbitrary face values, zeroing the boundary faces."""
        values = _shaped(values, grid.shape + (grid.dims,), "flux")
        values[boundary_mask(grid)] = 0.0
        return cls(grid, values)

    @property
    def matrix(self) -> np.ndarray:
        """N x d view, row i holding the face vector m_{i+1/2}."""
        return self.values.reshape(self.grid.size, self.grid.dims)


@dataclass(frozen=True, eq=False)
class DualPotential:
    """Per-vertex Lagrange multipliers Phi_i."""

    grid: LatticeGrid
    values: np.ndarray

    def __post_init__(self):
        values = _shaped(self.values, self.grid.shape, "potential")
        if not np.all(np.isfinite(values)):
            raise InvalidFluxError("potential holds non-finite values")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def zeros(cls, grid: LatticeGrid) -> "DualPotential":
        return cls(grid, np.zeros(grid.shape))


def require_same_grid(*fields) -> LatticeGrid:
    """Return the common grid of the given fields or raise IncompatibleFieldsError."""
    grid = fields[0].grid
    for other in fields[1:]:
        if other.grid != grid:
            raise IncompatibleFieldsError(f"fields live on different grids: {grid} vs {other.grid}")
    return grid


def divergence_values(values: np.ndarray, spacing: float) -> np.ndarray:
    """Divergence of raw face values of shape (*shape, d); returns shape (*shape)."""
    dims = values.shape[-1]
    out = np.zeros(values.shape[:-1])
    for v in range(dims):
        # Inflow through the first face along v is zero.
        out += np.diff(values[..., v], axis=v, prepend=0.0)
    return out / spacing


def gradient_values(phi: np.ndarray, spacing: float) -> np.ndarray:
    """Forward differences of raw vertex values; boundary faces stay 0."""
    dims = phi.ndim
    out = np.zeros(phi.shape + (dims,))
    for v in range(dims):
        lo = [slice(None)] * dims
        hi = [slice(None)] * dims
        lo[v] = slice(0, -1)
        hi[v] = slice(1, None)
        out[tuple(lo) + (v,)] = (phi[tuple(hi)] - phi[tuple(lo)]) / spacing
    return out


def divergence(m: FluxField) -> np.ndarray:
    """
    Discrete divergence div_G(m), returned with the grid's shape.

    div_G(m)_i = (1/dx) * sum_v (m_{i+e_v/2} - m_{i-e_v/2}) with zero inflow
    across the first face of each axis.
    """
    return divergence_values(m.values, m.grid.spacing)


def gradient(phi: DualPotential) -> np.ndarray:
    """Face gradient (Phi_{i+e_v} - Phi_i)/dx, shape (*shape, d), 0 on boundary faces."""
    return gradient_values(phi.values, phi.grid.spacing)


def total_divergence_residual(m: FluxField, p0: DensityField, p1: DensityField) -> float:
    """Mean absolute violation (1/N) * sum_i |div_G(m)_i + p1_i - p0_i|."""
    require_same_grid(m, p0, p1)
    return float(np.mean(np.abs(divergence(m) + (p1.mass - p0.mass))))


def normalize(raw, grid: Optional[LatticeGrid] = None) -> DensityField:
    """
    Scale nonnegative raw masses to a probability density.

    Without a grid the raw array's own shape is used with unit spacing.

    Raises:
        InvalidMeasureError: on negative, non-finite or all-zero input.
    """
    raw = np.array(raw, dtype=float)
    if raw.size == 0:
        raise InvalidMeasureError("empty density")
    if not np.all(np.isfinite(raw)):
        raise InvalidMeasureError("density holds non-finite values")
    if np.any(raw < 0):
        raise InvalidMeasureError("density holds negative values")
    total = raw.sum()
    if total <= 0:
        raise InvalidMeasureError("density has zero total mass")

    if grid is None:
        shape = raw.shape if raw.ndim > 0 else (1,)
        grid = LatticeGrid(shape=shape, spacing=1.0, origin=(0.0,) * len(shape))
    return DensityField(grid, raw / total)


def _backward_difference(n: int) -> sps.csr_matrix:
    """n x n matrix mapping face values to f_i - f_{i-1}, with the last face pinned."""
    if n == 1:
        return sps.csr_matrix((1, 1))
    main = np.ones(n)
    main[-1] = 0.0
    return sps.diags([main, -np.ones(n - 1)], [0, -1], shape=(n, n), format="csr")


def divergence_matrix(grid: LatticeGrid) -> sps.csr_matrix:
    """
    Assembled divergence operator K of shape (N, N*d).

    Columns follow FluxField.matrix flattened row-major, so
    K @ m.values.ravel() equals divergence(m).ravel().
    """
    n_vertices, dims = grid.size, grid.dims
    blocks = []
    for v in range(dims):
        factors = [sps.identity(n, format="csr") for n in grid.shape]
        factors[v] = _backward_difference(grid.shape[v])
        blocks.append(reduce(lambda a, b: sps.kron(a, b, format="csr"), factors))
    stacked = sps.hstack(blocks, format="csc") * (1.0 / grid.spacing)

    # hstack orders columns axis-major; reorder to vertex-major.
    columns = np.arange(n_vertices * dims)
    order = (columns % dims) * n_vertices + columns // dims
    return stacked[:, order].tocsr()


def estimate_operator_norm(grid: LatticeGrid, iters: int = 200, seed: int = 0) -> float:
    """Power-iteration estimate of ||K||^2, the largest eigenvalue of K K^T."""
    k = divergence_matrix(grid)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(grid.size)
    x /= np.linalg.norm(x)

    estimate = 0.0
    for _ in range(iters):
        y = k @ (k.T @ x)
        estimate = float(np.linalg.norm(y))
        if estimate == 0.0:
            break
        x = y / estimate
    return estimate
