"""
Named density pairs for reproducing the reference experiments.

All examples live on a 2D lattice (by default 40 x 40 cells on [-2, 2]^2).
Point masses are snapped to the nearest cell-center vertex, ties going to
the lower index (toward negative coordinates). Smooth densities are sampled
at cell centers and normalized.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .config import DEFAULT_GRID, DOMAIN_HIGH, DOMAIN_LOW
from .exceptions import ConfigurationError
from .lattice import DensityField, LatticeGrid, normalize

SNAP_TIE_TOLERANCE = 1e-9


class ExampleName(str, Enum):
    DIRAC_PAIR = "dirac_pair"
    DIRAC_SPLIT2 = "dirac_split2"
    DIRAC_SPLIT4 = "dirac_split4"
    DIRAC_TO_RING = "dirac_to_ring"
    CROSS_TO_RING = "cross_to_ring"
    DISK_TO_FOUR_DISKS = "disk_to_four_disks"


DEFAULT_SIGMA: Dict[ExampleName, float] = {
    ExampleName.DIRAC_TO_RING: 1e-3,
    ExampleName.CROSS_TO_RING: 0.2,
}

# Published (EMD-L1, EMD-L2) values on the 40 x 40 lattice.
REFERENCE_VALUES: Dict[ExampleName, Tuple[float, float]] = {
    ExampleName.DIRAC_PAIR: (0.7981, 0.6232),
    ExampleName.DIRAC_SPLIT2: (0.8016, 0.6232),
    ExampleName.DIRAC_SPLIT4: (0.8002, 0.5882),
    ExampleName.DIRAC_TO_RING: (0.8794, 0.6943),
    ExampleName.CROSS_TO_RING: (0.1778, 0.1259),
}

# Continuous (EMD-L1, EMD-L2) values; every unit of mass travels (0.4, 0.4).
ANALYTIC_VALUES: Dict[ExampleName, Tuple[float, float]] = {
    ExampleName.DIRAC_PAIR: (0.8, 0.4 * np.sqrt(2.0)),
    ExampleName.DIRAC_SPLIT2: (0.8, 0.4 * np.sqrt(2.0)),
    ExampleName.DIRAC_SPLIT4: (0.8, 0.4 * np.sqrt(2.0)),
}

_ORIGIN = (0.0, 0.0)
_OFFSET = 0.4

DISK_RADIUS = 0.6
SMALL_DISK_RADIUS = 0.3
SMALL_DISK_CENTERS = ((1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0))


@dataclass(frozen=True)
class ExampleSpec:
    """A named example on a 2D grid; sigma shapes the smooth densities."""

    name: ExampleName
    grid: LatticeGrid
    sigma: Optional[float] = None

    def __post_init__(self):
        try:
            name = ExampleName(self.name)
        except ValueError as exc:
            raise ConfigurationError(f"unknown example {self.name!r}") from exc
        if self.grid.dims != 2:
            raise ConfigurationError(f"examples need a 2D grid, got {self.grid.dims}D")

        sigma = self.sigma if self.sigma is not None else DEFAULT_SIGMA.get(name)
        if name in DEFAULT_SIGMA and not (sigma is not None and sigma > 0):
            raise ConfigurationError(f"sigma must be positive for {name.value}, got {sigma}")

        object.__setattr__(self, "name", name)
        object.__setattr__(self, "sigma", sigma)


def make_spec(name, n: int = DEFAULT_GRID, sigma: Optional[float] = None,
              low: float = DOMAIN_LOW, high: float = DOMAIN_HIGH) -> ExampleSpec:
    """ExampleSpec on the n x n lattice over [low, high]^2."""
    return ExampleSpec(name=name, grid=LatticeGrid.square(n, low, high), sigma=sigma)


def snap_to_vertex(grid: LatticeGrid, point: Sequence[float]) -> Tuple[int, ...]:
    """Nearest vertex multi-index; exact ties go to the lower index."""
    point = np.asarray(point, dtype=float)
    position = (point - np.asarray(grid.origin)) / grid.spacing
    index = np.ceil(position - 0.5 - SNAP_TIE_TOLERANCE).astype(int)
    index = np.clip(index, 0, np.asarray(grid.shape) - 1)
    return tuple(int(i) for i in index)


def dirac_density(grid: LatticeGrid, points: Sequence[Sequence[float]],
                  weights: Optional[Sequence[float]] = None) -> DensityField:
    """Point masses snapped to vertices; weights default to equal shares."""
    weights = np.full(len(points), 1.0 / len(points)) if weights is None else np.asarray(weights, dtype=float)
    raw = np.zeros(grid.shape)
    for point, weight in zip(points, weights):
        raw[snap_to_vertex(grid, point)] += weight
    return normalize(raw, grid)


def _from_log_density(grid: LatticeGrid, log_density: np.ndarray) -> DensityField:
    # Shift by the maximum before exponentiating; sigma = 1e-3 overflows otherwise.
    return normalize(np.exp(log_density - log_density.max()), grid)


def ring_log_density(coords: np.ndarray, sigma: float) -> np.ndarray:
    """log of exp((x^2+y^2)/sigma - (x^2+y^2)^2/sigma), peaked on the circle r^2 = 1/2."""
    s = np.sum(coords ** 2, axis=-1)
    return (s - s ** 2) / sigma


def cross_log_density(coords: np.ndarray, sigma: float) -> np.ndarray:
    """log of exp(-(x^2+y^2-|x|-|y|)/sigma), four bumps around (+-1/2, +-1/2)."""
    s = np.sum(coords ** 2, axis=-1)
    return -(s - np.abs(coords).sum(axis=-1)) / sigma


def _disk_indicator(coords: np.ndarray, center: Sequence[float], radius: float) -> np.ndarray:
    return (np.sum((coords - np.asarray(center)) ** 2, axis=-1) <= radius ** 2).astype(float)


def generate(spec: ExampleSpec) -> Tuple[DensityField, DensityField]:
    """Source and target densities of the named example."""
    grid = spec.grid
    o, r = _ORIGIN, _OFFSET

    if spec.name is ExampleName.DIRAC_PAIR:
        return dirac_density(grid, [o]), dirac_density(grid, [(r, r)])
    if spec.name is ExampleName.DIRAC_SPLIT2:
        return dirac_density(grid, [o]), dirac_density(grid, [(r, r), (-r, -r)])
    if spec.name is ExampleName.DIRAC_SPLIT4:
        return dirac_density(grid, [o]), dirac_density(grid, [(r, r), (r, -r), (-r, r), (-r, -r)])

    coords = grid.coordinates()
    if spec.name is ExampleName.DIRAC_TO_RING:
        return dirac_density(grid, [o]), _from_log_density(grid, ring_log_density(coords, spec.sigma))
    if spec.name is ExampleName.CROSS_TO_RING:
        return (
            _from_log_density(grid, cross_log_density(coords, spec.sigma)),
            _from_log_density(grid, ring_log_density(coords, spec.sigma)),
        )

    # DISK_TO_FOUR_DISKS
    source = _disk_indicator(coords, o, DISK_RADIUS)
    target = sum(_disk_indicator(coords, c, SMALL_DISK_RADIUS) for c in SMALL_DISK_CENTERS)
    return normalize(source, grid), normalize(target, grid)
