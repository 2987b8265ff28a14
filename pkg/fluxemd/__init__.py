"""
FLUXEMD: Earth Mover's Distance on a uniform lattice.

The distance is computed from the flux formulation (minimize the total flux
norm subject to a divergence constraint) with first-order primal-dual
iterations, for the Manhattan (L1) and Euclidean (L2) ground metrics. An
exact assignment-based oracle is included for verification on small
instances.
"""

from .lattice import DensityField, DualPotential, FluxField, LatticeGrid, normalize
from .solver import EMDSolver, Metric, SolveReport, SolverConfig, solve

__version__ = "1.1.0"
__all__ = [
    "DensityField",
    "DualPotential",
    "EMDSolver",
    "FluxField",
    "LatticeGrid",
    "Metric",
    "SolveReport",
    "SolverConfig",
    "normalize",
    "solve",
]
