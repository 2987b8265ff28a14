"""
Optional MLflow tracking of solves and table sweeps.

Only imported when the CLI runs with --track.
"""
import logging
from pathlib import Path
from typing import Iterable, Mapping

import mlflow
import pandas as pd

from .config import EXPERIMENT_NAME, TRACKING_URI
from .solver import SolveReport

logger = logging.getLogger(__name__)


def setup_mlflow(run_name: str):
    """Set up MLflow tracking and start a run."""
    mlflow.set_tracking_uri(TRACKING_URI)
    mlflow.set_experiment(EXPERIMENT_NAME)
    return mlflow.start_run(run_name=run_name)


def log_solve(report: SolveReport, params: Mapping[str, object], artifacts: Iterable[Path] = ()) -> str:
    """
    Log one solve: parameters, final metrics, the residual curve and output files.

    Returns:
        The MLflow run id.
    """
    run = setup_mlflow("solve")
    try:
        mlflow.log_params({key: str(value) for key, value in params.items()})
        mlflow.log_metrics({
            "distance": report.distance,
            "regularized_distance": report.regularized_distance,
            "iterations": float(report.iterations),
            "wall_time": report.wall_time,
            "final_residual": report.final_residual,
            "converged": float(report.converged),
        })
        for iteration, residual in report.residual_history:
            mlflow.log_metric("residual", residual, step=iteration)
        for path in artifacts:
            mlflow.log_artifact(str(path))
        logger.info("logged solve to mlflow", extra={"run_id": run.info.run_id})
        return run.info.run_id
    finally:
        mlflow.end_run()


def log_table(table_id: str, frame: pd.DataFrame, path: Path) -> str:
    """Log a table sweep: one metric series per numeric column plus the rendered table."""
    run = setup_mlflow(f"table-{table_id}")
    try:
        mlflow.log_param("table", table_id)
        for column in frame.select_dtypes("number").columns:
            for step, value in enumerate(frame[column]):
                if pd.notna(value):
                    mlflow.log_metric(str(column), float(value), step=step)
        mlflow.log_artifact(str(path))
        logger.info("logged table to mlflow", extra={"run_id": run.info.run_id, "table": table_id})
        return run.info.run_id
    finally:
        mlflow.end_run()
