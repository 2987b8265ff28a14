"""
Parameter sweeps reproducing the reference timing and accuracy tables.

t1  EMD-L2 on the three Dirac examples, N in {100, 400, 1600, 6400}, tol 1e-5
t2  EMD-L1 (eps = 0.01) on the three Dirac examples, same grids, tol 1e-9
t3  four-point split: L1 vs L2 wall time per grid, tol 1e-5
t4  four-point split, L1 with eps = 0, N in {400, 1600, 6400}, tol 1e-6
t5  four-point split, N = 1600, eps in {0.1, 0.01, 0.001, 0.0001}, tol 1e-6,
    cost gap (see solver.lagrangian_gap) also held to 1e-6

Cells are run sequentially so timings are comparable. A cell that raises
or stops at max_iters is kept in the table with NaN values and status FAILED.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .config import DEFAULT_MAX_ITERS, DOMAIN_HIGH, DOMAIN_LOW
from .examples import ANALYTIC_VALUES, ExampleName, generate, make_spec
from .exceptions import ConfigurationError, FluxEMDError
from .solver import Metric, SolveReport, SolverConfig, default_step_sizes, solve

logger = logging.getLogger(__name__)

TABLE_IDS = ("t1", "t2", "t3", "t4", "t5")
GRID_SIZES = (10, 20, 40, 80)
EPSILON_GRID_SIZES = (20, 40, 80)
EPSILON_SWEEP = (0.1, 0.01, 0.001, 0.0001)
EPSILON_SWEEP_GRID = 40
EPSILON_SWEEP_GAP_TOL = 1e-6
DIRAC_EXAMPLES = (ExampleName.DIRAC_PAIR, ExampleName.DIRAC_SPLIT2, ExampleName.DIRAC_SPLIT4)

STATUS_OK = "ok"
STATUS_FAILED = "FAILED"


def relative_error(value: float, reference: float) -> float:
    return abs(value - reference) / reference


def _run_cell(name: ExampleName, n: int, metric: Metric, tol: float, epsilon: float,
              max_iters: int, n_jobs: int, gap_tol: Optional[float] = None) -> Optional[SolveReport]:
    spec = make_spec(name, n=n, low=DOMAIN_LOW, high=DOMAIN_HIGH)
    mu, tau = default_step_sizes(spec.grid)
    try:
        config = SolverConfig(
            metric=metric, mu=mu, tau=tau, epsilon=epsilon, tol=tol, max_iters=max_iters,
            allow_nonunique=epsilon == 0, n_jobs=n_jobs, gap_tol=gap_tol,
        )
        p0, p1 = generate(spec)
        report = solve(p0, p1, config)
    except FluxEMDError as exc:
        logger.warning("table cell failed", extra={"example": name.value, "n": n, "error": str(exc)})
        return None
    if not report.converged:
        logger.warning("table cell did not converge",
                       extra={"example": name.value, "n": n, "iterations": report.iterations})
        return None
    return report


def _cell_row(report: Optional[SolveReport], reference: float, use_regularized: bool) -> Dict[str, object]:
    if report is None:
        return {"time": np.nan, "iterations": np.nan, "relative_error": np.nan, "status": STATUS_FAILED}
    value = report.regularized_distance if use_regularized else report.distance
    return {
        "time": report.wall_time,
        "iterations": report.iterations,
        "relative_error": relative_error(value, reference),
        "status": STATUS_OK,
    }


def _dirac_table(metric: Metric, tol: float, epsilon: float, grid_sizes: Sequence[int],
                 max_iters: int, n_jobs: int) -> pd.DataFrame:
    reference_index = 0 if metric is Metric.L1 else 1
    rows: List[Dict[str, object]] = []
    for name in DIRAC_EXAMPLES:
        reference = ANALYTIC_VALUES[name][reference_index]
        for n in grid_sizes:
            report = _run_cell(name, n, metric, tol, epsilon, max_iters, n_jobs)
            rows.append({"example": name.value, "N": n * n,
                         **_cell_row(report, reference, use_regularized=metric is Metric.L1)})
    return pd.DataFrame(rows)


def _timing_table(grid_sizes: Sequence[int], max_iters: int, n_jobs: int) -> pd.DataFrame:
    rows = []
    for n in grid_sizes:
        l1 = _run_cell(ExampleName.DIRAC_SPLIT4, n, Metric.L1, 1e-5, 0.01, max_iters, n_jobs)
        l2 = _run_cell(ExampleName.DIRAC_SPLIT4, n, Metric.L2, 1e-5, 0.0, max_iters, n_jobs)
        rows.append({
            "N": n * n,
            "time_l1": l1.wall_time if l1 else np.nan,
            "time_l2": l2.wall_time if l2 else np.nan,
            "status": STATUS_OK if l1 and l2 else STATUS_FAILED,
        })
    return pd.DataFrame(rows)


def _unregularized_mesh_table(grid_sizes: Sequence[int], max_iters: int, n_jobs: int) -> pd.DataFrame:
    reference = ANALYTIC_VALUES[ExampleName.DIRAC_SPLIT4][0]
    rows = []
    for n in grid_sizes:
        report = _run_cell(ExampleName.DIRAC_SPLIT4, n, Metric.L1, 1e-6, 0.0, max_iters, n_jobs)
        rows.append({"N": n * n, **_cell_row(report, reference, use_regularized=False)})
    return pd.DataFrame(rows)


def _epsilon_table(epsilons: Sequence[float], n: int, max_iters: int, n_jobs: int) -> pd.DataFrame:
    reference = ANALYTIC_VALUES[ExampleName.DIRAC_SPLIT4][0]
    rows = []
    for epsilon in epsilons:
        report = _run_cell(ExampleName.DIRAC_SPLIT4, n, Metric.L1, 1e-6, epsilon, max_iters, n_jobs,
                           gap_tol=EPSILON_SWEEP_GAP_TOL)
        rows.append({"epsilon": epsilon, **_cell_row(report, reference, use_regularized=True)})
    return pd.DataFrame(rows)


def run_table(table_id: str, grid_sizes: Optional[Sequence[int]] = None,
              epsilons: Optional[Sequence[float]] = None, max_iters: int = DEFAULT_MAX_ITERS,
              n_jobs: int = 1) -> pd.DataFrame:
    """
    Run one sweep and return its table.

    Args:
        table_id: One of t1..t5.
        grid_sizes: Cells per axis; N = n^2. Defaults follow the reference tables.
        epsilons: Regularization values for t5.
        max_iters: Iteration cap per cell.
        n_jobs: Threads for the primal update.
    """
    if table_id not in TABLE_IDS:
        raise ConfigurationError(f"unknown table {table_id!r}, expected one of {', '.join(TABLE_IDS)}")
    logger.info("running table", extra={"table": table_id})

    if table_id == "t1":
        return _dirac_table(Metric.L2, 1e-5, 0.0, grid_sizes or GRID_SIZES, max_iters, n_jobs)
    if table_id == "t2":
        return _dirac_table(Metric.L1, 1e-9, 0.01, grid_sizes or GRID_SIZES, max_iters, n_jobs)
    if table_id == "t3":
        return _timing_table(grid_sizes or GRID_SIZES, max_iters, n_jobs)
    if table_id == "t4":
        return _unregularized_mesh_table(grid_sizes or EPSILON_GRID_SIZES, max_iters, n_jobs)
    n = grid_sizes[0] if grid_sizes else EPSILON_SWEEP_GRID
    return _epsilon_table(epsilons or EPSILON_SWEEP, n, max_iters, n_jobs)


def render_table(frame: pd.DataFrame) -> str:
    """Fixed-width text; failed cells read FAILED."""
    return frame.to_string(index=False, na_rep=STATUS_FAILED, float_format=lambda v: f"{v:.12g}")


def write_table(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_table(frame) + "\n")
    return path
