"""
Primal-dual solver for the flux formulation of the Earth Mover's Distance.

The discrete problem is

    minimize  cost(m)   subject to  div_G(m) + p1 - p0 = 0

with cost(m) = sum_i ||m_{i+1/2}||_2 (Euclidean ground metric) or
sum_{i,v} |m_{i+e_v/2}| + (eps/2) ||m||_2^2 (Manhattan ground metric, eps
regularized). Both are solved with first-order primal-dual iterations:
a proximal (shrink) step on the flux followed by an extrapolated ascent
step on the potential.
"""
import logging
import time
import warnings
from contextlib import nullcontext
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator

from .config import PARALLEL_MIN_FACES
from .exceptions import ConfigurationError, InvalidMeasureError, NumericalDivergenceError, StepSizeError
from .lattice import (
    DensityField,
    DualPotential,
    FluxField,
    LatticeGrid,
    divergence_values,
    gradient,
    gradient_values,
    require_same_grid,
)

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-9
DEFAULT_STEP = 0.025
STEP_PRODUCT_TARGET = 0.5


class Metric(str, Enum):
    """Ground metric of the transport problem."""

    L1 = "l1"
    L2 = "l2"


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the primal-dual iteration."""

    metric: Metric = Metric.L2
    mu: float = DEFAULT_STEP
    tau: float = DEFAULT_STEP
    theta: float = 1.0
    epsilon: float = 0.01
    tol: float = 1e-5
    max_iters: int = 100000
    residual_check_interval: int = 1
    strict_steps: bool = False
    allow_nonunique: bool = False
    n_jobs: int = 1
    gap_tol: Optional[float] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "metric", Metric(self.metric))
        except ValueError as exc:
            raise ConfigurationError(f"unknown metric {self.metric!r}") from exc

        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ConfigurationError(f"mu must be positive, got {self.mu}")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigurationError(f"theta must lie in [0, 1], got {self.theta}")
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ConfigurationError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not (np.isfinite(self.tol) and self.tol > 0):
            raise ConfigurationError(f"tol must be positive, got {self.tol}")
        if int(self.max_iters) < 1:
            raise ConfigurationError(f"max_iters must be >= 1, got {self.max_iters}")
        if int(self.residual_check_interval) < 1:
            raise ConfigurationError("residual_check_interval must be >= 1")
        if int(self.n_jobs) < 1:
            raise ConfigurationError(f"n_jobs must be >= 1, got {self.n_jobs}")
        if self.gap_tol is not None and not (np.isfinite(self.gap_tol) and self.gap_tol > 0):
            raise ConfigurationError(f"gap_tol must be positive, got {self.gap_tol}")
        if self.metric is Metric.L1 and self.epsilon == 0 and not self.allow_nonunique:
            raise ConfigurationError(
                "epsilon = 0 leaves the L1 minimizer non-unique; pass allow_nonunique=True to accept that"
            )

    @property
    def regularization(self) -> float:
        """Quadratic weight actually applied; the L2 path ignores epsilon."""
        return self.epsilon if self.metric is Metric.L1 else 0.0


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Result of a primal-dual solve."""

    flux: FluxField
    potential: DualPotential
    distance: float
    regularized_distance: float
    iterations: int
    residual_history: Tuple[Tuple[int, float], ...]
    converged: bool
    wall_time: float
    metric: Metric
    epsilon: float

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1][1]


def shrink(y, alpha: float):
    """
    Soft threshold sign(y) * max(|y| - alpha, 0), elementwise.

    The dead zone is closed: |y| == alpha maps to 0.
    """
    return np.sign(y) * np.maximum(np.abs(y) - alpha, 0.0)


def shrink2(y, alpha: float) -> np.ndarray:
    """
    Vector soft threshold (y/||y||) * max(||y|| - alpha, 0) over the last axis.

    The zero vector maps to the zero vector.
    """
    y = np.asarray(y, dtype=float)
    norm = np.linalg.norm(y, axis=-1, keepdims=True)
    factor = np.maximum(norm - alpha, 0.0) / np.where(norm > 0, norm, 1.0)
    return y * factor


def _primal_kernel(shifted: np.ndarray, mu: float, metric: Metric, epsilon: float) -> np.ndarray:
    if metric is Metric.L2:
        return shrink2(shifted, mu)
    return shrink(shifted, mu) / (1.0 + epsilon * mu)


def primal_update_l2(m_prev: FluxField, phi: DualPotential, mu: float) -> FluxField:
    """m^{k+1}_{i+1/2} = shrink2(m^k_{i+1/2} + mu * grad Phi_{i+1/2}, mu) per vertex."""
    grid = require_same_grid(m_prev, phi)
    shifted = m_prev.values + mu * gradient(phi)
    return FluxField(grid, _primal_kernel(shifted, mu, Metric.L2, 0.0))


def primal_update_l1(m_prev: FluxField, phi: DualPotential, mu: float, epsilon: float) -> FluxField:
    """m^{k+1}_{i+e_v/2} = shrink(m^k + mu * grad Phi, mu) / (1 + eps * mu) per face."""
    grid = require_same_grid(m_prev, phi)
    shifted = m_prev.values + mu * gradient(phi)
    return FluxField(grid, _primal_kernel(shifted, mu, Metric.L1, epsilon))


def _dual_values(
    phi: np.ndarray,
    m_next: np.ndarray,
    m_prev: np.ndarray,
    source: np.ndarray,
    spacing: float,
    tau: float,
    theta: float,
) -> np.ndarray:
    extrapolated = m_next + theta * (m_next - m_prev)
    return phi + tau * (divergence_values(extrapolated, spacing) + source)


def dual_update(
    phi_prev: DualPotential,
    m_next: FluxField,
    m_prev: FluxField,
    p0: DensityField,
    p1: DensityField,
    tau: float,
    theta: float,
) -> DualPotential:
    """Phi^{k+1} = Phi^k + tau * (div_G(m^{k+1} + theta (m^{k+1} - m^k)) + p1 - p0)."""
    grid = require_same_grid(phi_prev, m_next, m_prev, p0, p1)
    values = _dual_values(
        phi_prev.values, m_next.values, m_prev.values, p1.mass - p0.mass, grid.spacing, tau, theta
    )
    return DualPotential(grid, values)


def _objective_values(values: np.ndarray, metric: Metric, epsilon: float) -> float:
    if metric is Metric.L2:
        return float(np.linalg.norm(values, axis=-1).sum())
    value = float(np.abs(values).sum())
    if epsilon > 0:
        value += 0.5 * epsilon * float(np.sum(values ** 2))
    return value


def cost(m: FluxField, metric) -> float:
    """Sum of per-vertex Euclidean norms (L2) or of absolute face values (L1)."""
    return _objective_values(m.values, Metric(metric), 0.0)


def regularized_cost(m: FluxField, metric, epsilon: float) -> float:
    """cost(m) + (eps/2) ||m||_2^2 for L1; plain cost for L2."""
    return _objective_values(m.values, Metric(metric), epsilon)


def lagrangian_gap(phi: np.ndarray, residual: np.ndarray) -> float:
    """
    |Phi . (div_G m + p1 - p0)|, the first-order cost deficit of an infeasible flux.

    The Lagrangian value cost(m) + Phi . r differs from the saddle value only at
    second order, so this term estimates how far cost(m) still sits from it.
    """
    return abs(float(np.dot(np.ravel(phi), np.ravel(residual))))


def operator_norm_bound(grid: LatticeGrid) -> float:
    """Analytic bound ||K||^2 <= 4 d / dx^2 for the discrete divergence K."""
    return 4.0 * grid.dims / grid.spacing ** 2


def default_step_sizes(grid: LatticeGrid) -> Tuple[float, float]:
    """
    Equal step sizes with tau * mu * bound = 0.5.

    On the 40 x 40 lattice over [-2, 2]^2 this gives mu = tau = 0.025.
    """
    step = float(np.sqrt(STEP_PRODUCT_TARGET / operator_norm_bound(grid)))
    return step, step


def check_step_sizes(config: SolverConfig, grid: LatticeGrid) -> float:
    """
    Validate tau * mu * ||K||^2 < 1.

    Returns:
        The product tau * mu * operator_norm_bound(grid).

    Raises:
        StepSizeError: in strict mode when the product is >= 1.
    """
    product = config.tau * config.mu * operator_norm_bound(grid)
    if product >= 1.0:
        message = (
            f"step sizes violate the convergence condition: tau*mu*||K||^2 = {product:.4g} >= 1 "
            f"(mu={config.mu}, tau={config.tau}, dx={grid.spacing})"
        )
        if config.strict_steps:
            raise StepSizeError(message)
        logger.warning(message, extra={"step_product": product})
        warnings.warn(message, RuntimeWarning, stacklevel=3)
    return product


def _require_normalized(p: DensityField, name: str) -> None:
    if abs(p.total - 1.0) > NORMALIZATION_TOLERANCE:
        raise InvalidMeasureError(f"{name} sums to {p.total!r}, expected 1")


def _uses_threads(config: SolverConfig, grid: LatticeGrid) -> bool:
    return config.n_jobs > 1 and grid.size * grid.dims >= PARALLEL_MIN_FACES


class _PrimalStep:
    """Applies the primal kernel, optionally split over threads along the first axis."""

    def __init__(self, config: SolverConfig, parallel: Optional[Parallel], first_axis: int):
        self.mu = config.mu
        self.metric = config.metric
        self.epsilon = config.regularization
        self.parallel = parallel
        self.blocks = [
            slice(rows[0], rows[-1] + 1)
            for rows in np.array_split(np.arange(first_axis), config.n_jobs)
            if rows.size
        ]

    def __call__(self, shifted: np.ndarray) -> np.ndarray:
        if self.parallel is None:
            return _primal_kernel(shifted, self.mu, self.metric, self.epsilon)

        out = np.empty_like(shifted)

        def run(block: slice) -> None:
            out[block] = _primal_kernel(shifted[block], self.mu, self.metric, self.epsilon)

        # Elementwise kernel, so the split does not change any bit of the result.
        self.parallel(delayed(run)(block) for block in self.blocks)
        return out


def solve(
    p0: DensityField,
    p1: DensityField,
    config: Optional[SolverConfig] = None,
    m0: Optional[FluxField] = None,
    phi0: Optional[DualPotential] = None,
) -> SolveReport:
    """
    Run the primal-dual iteration until the mean divergence residual drops to tol.

    With config.gap_tol set, a checkpoint also needs lagrangian_gap(Phi, r) <=
    gap_tol * regularized cost before the solve counts as converged.

    Args:
        p0: Source density.
        p1: Target density.
        config: Solver parameters; defaults to SolverConfig().
        m0: Initial flux, zeros by default.
        phi0: Initial potential, zeros by default.

    Returns:
        SolveReport with final fields, cost, residual history and convergence flag.

    Raises:
        InvalidMeasureError: if p0 or p1 does not sum to 1.
        IncompatibleFieldsError: if the fields live on different grids.
        StepSizeError: if the step condition fails in strict mode.
        NumericalDivergenceError: if NaN/Inf appears at a residual check.
    """
    config = config or SolverConfig()
    grid = require_same_grid(p0, p1)
    _require_normalized(p0, "p0")
    _require_normalized(p1, "p1")
    m0 = m0 if m0 is not None else FluxField.zeros(grid)
    phi0 = phi0 if phi0 is not None else DualPotential.zeros(grid)
    require_same_grid(p0, m0, phi0)

    check_step_sizes(config, grid)
    if config.metric is Metric.L1 and config.epsilon == 0:
        logger.warning("solving EMD-L1 with epsilon = 0; the minimizer may not be unique")

    spacing = grid.spacing
    mu, tau, theta = config.mu, config.tau, config.theta
    source = p1.mass - p0.mass
    m = np.array(m0.values)
    phi = np.array(phi0.values)

    history = []
    converged = False
    iteration = 0
    threaded = _uses_threads(config, grid)
    workers = Parallel(n_jobs=config.n_jobs, require="sharedmem") if threaded else nullcontext()
    if config.n_jobs > 1 and not threaded:
        logger.debug("grid below the threading threshold, running serially", extra={"vertices": grid.size})

    start = time.perf_counter()
    with workers as parallel:
        primal = _PrimalStep(config, parallel, grid.shape[0])
        for iteration in range(1, int(config.max_iters) + 1):
            m_next = primal(m + mu * gradient_values(phi, spacing))
            phi = _dual_values(phi, m_next, m, source, spacing, tau, theta)
            m = m_next

            if iteration % config.residual_check_interval and iteration != config.max_iters:
                continue

            constraint = divergence_values(m, spacing) + source
            residual = float(np.mean(np.abs(constraint)))
            history.append((iteration, residual))
            logger.debug("residual check", extra={"iteration": iteration, "residual": residual})
            if not (np.isfinite(residual) and np.all(np.isfinite(phi))):
                raise NumericalDivergenceError(
                    f"non-finite iterates detected at iteration {iteration}", iteration=iteration
                )
            if residual > config.tol:
                continue
            if config.gap_tol is not None:
                objective = _objective_values(m, config.metric, config.regularization)
                if lagrangian_gap(phi, constraint) > config.gap_tol * objective:
                    continue
            converged = True
            break
    wall_time = time.perf_counter() - start

    flux = FluxField(grid, m)
    potential = DualPotential(grid, phi)
    distance = cost(flux, config.metric)
    report = SolveReport(
        flux=flux,
        potential=potential,
        distance=distance,
        regularized_distance=regularized_cost(flux, config.metric, config.regularization),
        iterations=iteration,
        residual_history=tuple(history),
        converged=converged,
        wall_time=wall_time,
        metric=config.metric,
        epsilon=config.regularization,
    )
    logger.info(
        "solve finished",
        extra={
            "metric": config.metric.value,
            "iterations": iteration,
            "converged": converged,
            "distance": distance,
            "wall_time": wall_time,
        },
    )
    return report


def eikonal_violation(flux: FluxField, potential: DualPotential, metric, rel_threshold: float = 1e-3) -> float:
    """
    Largest deviation of the dual gradient norm from 1 where the flux is significant.

    L2 compares ||grad Phi_{i+1/2}||_2 (interior faces only) on vertices whose
    flux vector norm exceeds rel_threshold times the maximum; L1 compares
    |grad Phi| face by face. Returns 0.0 when the flux vanishes.
    """
    grid = require_same_grid(flux, potential)
    metric = Metric(metric)
    grad = gradient(potential)

    if metric is Metric.L2:
        magnitude = np.linalg.norm(flux.values, axis=-1)
        dual = np.linalg.norm(grad, axis=-1)
    else:
        magnitude = np.abs(flux.values)
        dual = np.abs(grad)

    peak = magnitude.max() if magnitude.size else 0.0
    if peak == 0.0:
        return 0.0
    active = magnitude > rel_threshold * peak
    logger.debug("eikonal check", extra={"active": int(active.sum()), "vertices": grid.size})
    return float(np.max(np.abs(dual[active] - 1.0)))


class EMDSolver(BaseEstimator):
    """
    Estimator-style front end to solve().

    Parameters mirror SolverConfig, so get_params/set_params and cloning work
    as with any scikit-learn estimator. After fit(), the SolveReport is
    available as report_.
    """

    def __init__(
        self,
        metric: str = "l2",
        mu: float = DEFAULT_STEP,
        tau: float = DEFAULT_STEP,
        theta: float = 1.0,
        epsilon: float = 0.01,
        tol: float = 1e-5,
        max_iters: int = 100000,
        residual_check_interval: int = 1,
        strict_steps: bool = False,
        allow_nonunique: bool = False,
        n_jobs: int = 1,
        gap_tol: Optional[float] = None,
    ):
        self.metric = metric
        self.mu = mu
        self.tau = tau
        self.theta = theta
        self.epsilon = epsilon
        self.tol = tol
        self.max_iters = max_iters
        self.residual_check_interval = residual_check_interval
        self.strict_steps = strict_steps
        self.allow_nonunique = allow_nonunique
        self.n_jobs = n_jobs
        self.gap_tol = gap_tol

    def to_config(self) -> SolverConfig:
        return SolverConfig(**self.get_params())

    def fit(
        self,
        p0: DensityField,
        p1: DensityField,
        m0: Optional[FluxField] = None,
        phi0: Optional[DualPotential] = None,
    ) -> "EMDSolver":
        self.report_ = solve(p0, p1, self.to_config(), m0=m0, phi0=phi0)
        return self

    @property
    def distance_(self) -> float:
        return self.report_.distance

    @property
    def regularized_distance_(self) -> float:
        return self.report_.regularized_distance


def residual_tail_is_monotone(history: Sequence[Tuple[int, float]], fraction: float = 0.25, jitter: float = 0.01) -> bool:
    """True when the last `fraction` of checkpoints never rises by more than `jitter` relative."""
    residuals = [r for _, r in history]
    if len(residuals) < 2:
        return True
    tail = residuals[-max(2, int(np.ceil(len(residuals) * fraction))):]
    return all(b <= a * (1.0 + jitter) for a, b in zip(tail, tail[1:]))
