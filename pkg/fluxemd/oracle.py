"""
Exact Kantorovich EMD for small atomic measures.

Masses are integers over a shared denominator K. Splitting every atom into
unit atoms of mass 1/K turns the transport problem into a K x K assignment
problem, whose optimum is attained at a permutation, so the linear sum
assignment solver returns the exact transport cost.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .config import ORACLE_MAX_UNITS
from .exceptions import DimensionMismatchError, OracleError, RationalityError
from .lattice import DensityField
from .solver import Metric

REPRESENTATION_TOLERANCE = 1e-9

_CDIST_METRIC = {Metric.L1: "cityblock", Metric.L2: "euclidean"}


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """
    Finite sum of point masses counts[j] / denominator at positions[j].

    Atoms sharing a position are merged on construction.
    """

    positions: np.ndarray
    counts: np.ndarray
    denominator: int

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float)
        if positions.ndim == 1:
            positions = positions.reshape(-1, 1)
        counts = np.asarray(self.counts)
        denominator = int(self.denominator)

        if positions.ndim != 2 or positions.shape[0] != counts.shape[0]:
            raise OracleError("positions and counts must describe the same atoms")
        if positions.shape[0] == 0:
            raise OracleError("a measure needs at least one atom")
        if not np.all(np.isfinite(positions)):
            raise OracleError("atom positions must be finite")
        if denominator < 1:
            raise OracleError(f"denominator must be positive, got {denominator}")
        if not np.all(counts == np.rint(counts)) or np.any(counts <= 0):
            raise OracleError("atom counts must be positive integers")
        counts = counts.astype(np.int64)
        if int(counts.sum()) != denominator:
            raise OracleError(f"masses sum to {int(counts.sum())}/{denominator}, expected 1")

        unique, inverse = np.unique(positions, axis=0, return_inverse=True)
        merged = np.bincount(np.asarray(inverse).reshape(-1), weights=counts).astype(np.int64)

        object.__setattr__(self, "positions", unique)
        object.__setattr__(self, "counts", merged)
        object.__setattr__(self, "denominator", denominator)

    @property
    def dims(self) -> int:
        return self.positions.shape[1]

    @property
    def masses(self) -> np.ndarray:
        return self.counts / self.denominator

    def unit_atoms(self) -> np.ndarray:
        """Positions repeated once per unit of mass, shape (denominator, dims)."""
        return np.repeat(self.positions, self.counts, axis=0)


def ground_distance(x: Sequence[float], y: Sequence[float], metric) -> float:
    """Manhattan (L1) or Euclidean (L2) distance between two points."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"points have dimensions {x.size} and {y.size}")
    metric = Metric(metric)
    if metric is Metric.L1:
        return float(np.abs(x - y).sum())
    return float(np.linalg.norm(x - y))


def exact_emd(mu0: AtomicMeasure, mu1: AtomicMeasure, metric, max_units: int = ORACLE_MAX_UNITS) -> float:
    """
    Exact transport cost between two atomic measures with a shared denominator.

    Raises:
        OracleError: on mismatched denominators or more than max_units unit atoms.
        DimensionMismatchError: when the measures live in different dimensions.
    """
    metric = Metric(metric)
    if mu0.denominator != mu1.denominator:
        raise OracleError(f"denominators differ: {mu0.denominator} vs {mu1.denominator}")
    if mu0.denominator > max_units:
        raise OracleError(f"{mu0.denominator} unit atoms exceed the oracle limit of {max_units}")
    if mu0.dims != mu1.dims:
        raise DimensionMismatchError(f"measures live in dimensions {mu0.dims} and {mu1.dims}")

    costs = cdist(mu0.unit_atoms(), mu1.unit_atoms(), metric=_CDIST_METRIC[metric])
    rows, cols = linear_sum_assignment(costs)
    return float(costs[rows, cols].sum() / mu0.denominator)


def measure_from_density(p: DensityField, denominator: int) -> AtomicMeasure:
    """
    One atom per vertex carrying positive mass, at the vertex coordinate.

    Raises:
        RationalityError: if some p_i * denominator is not an integer within 1e-9.
    """
    scaled = p.flat * int(denominator)
    counts = np.rint(scaled)
    if np.max(np.abs(scaled - counts)) > REPRESENTATION_TOLERANCE:
        raise RationalityError(f"density is not representable with denominator {denominator}")
    if int(counts.sum()) != int(denominator):
        raise RationalityError(f"density does not sum to {denominator}/{denominator}")

    keep = counts > 0
    positions = p.grid.coordinates().reshape(p.grid.size, p.grid.dims)[keep]
    return AtomicMeasure(positions, counts[keep].astype(np.int64), int(denominator))
