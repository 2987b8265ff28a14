"""
Command-line interface for FLUXEMD.

Examples:
    python -m fluxemd --example dirac_pair --grid 40 --metric l2 --tol 1e-5
    python -m fluxemd --rho0 a.txt --rho1 b.txt --metric l1 --out-flux flux.txt
    python -m fluxemd --table t5
    python -m fluxemd --oracle-check --grid 4 --instances 10 --seed 0

Exit codes: 0 success, 1 usage/parse/configuration error, 2 numerical
failure (NaN, or an oracle check gap above 1%), 3 non-convergence.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import tables
from .config import (
    DEFAULT_CHECK_INTERVAL,
    DEFAULT_EPSILON,
    DEFAULT_GRID,
    DEFAULT_MAX_ITERS,
    DEFAULT_THETA,
    DEFAULT_TOL,
    DOMAIN_HIGH,
    DOMAIN_LOW,
    LOG_LEVEL,
    ORACLE_CHECK_MAX_DENOMINATOR,
    ORACLE_CHECK_MAX_GRID,
    OUTPUT_DIR,
)
from .density_io import format_summary, read_density, write_flux, write_potential, write_residuals
from .examples import ExampleName, generate, make_spec
from .exceptions import FluxEMDError, NumericalDivergenceError
from .lattice import DensityField, LatticeGrid, normalize, require_same_grid
from .logging_config import configure_logging
from .oracle import exact_emd, measure_from_density
from .solver import EMDSolver, Metric, SolveReport, SolverConfig, default_step_sizes, solve

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_NOT_CONVERGED = 3

SUMMARY_KEYS = (
    "metric",
    "distance",
    "regularized_distance",
    "iterations",
    "converged",
    "final_residual",
    "wall_time",
)

ORACLE_EPSILON = 1e-4
ORACLE_TOL = 1e-9
ORACLE_MAX_GAP = 0.01
ORACLE_DEFAULT_GRID = 4


class _ArgumentParser(argparse.ArgumentParser):
    """argparse with exit status 1 for usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"fluxemd: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="fluxemd",
        description="Earth Mover's Distance on a uniform lattice by primal-dual flux minimization",
    )
    source = parser.add_argument_group("input")
    source.add_argument("--example", choices=[name.value for name in ExampleName],
                        help="generate a named density pair")
    source.add_argument("--rho0", type=Path, help="source density file")
    source.add_argument("--rho1", type=Path, help="target density file")
    source.add_argument("--grid", type=int, default=None,
                        help=f"cells per axis on [{DOMAIN_LOW:g}, {DOMAIN_HIGH:g}]^2 (default {DEFAULT_GRID})")
    source.add_argument("--sigma", type=float, default=None, help="shape parameter of the smooth examples")

    solver = parser.add_argument_group("solver")
    solver.add_argument("--metric", choices=[m.value for m in Metric], default=Metric.L2.value)
    solver.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON,
                        help="quadratic regularization for l1; 0 accepts a non-unique minimizer")
    solver.add_argument("--mu", type=float, default=None, help="primal step (default: scaled to the grid)")
    solver.add_argument("--tau", type=float, default=None, help="dual step (default: scaled to the grid)")
    solver.add_argument("--theta", type=float, default=DEFAULT_THETA)
    solver.add_argument("--tol", type=float, default=DEFAULT_TOL)
    solver.add_argument("--gap-tol", type=float, default=None,
                        help="also require |Phi . residual| <= GAP_TOL * cost before stopping")
    solver.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    solver.add_argument("--check-interval", type=int, default=DEFAULT_CHECK_INTERVAL)
    solver.add_argument("--threads", type=int, default=1, help="threads for the primal update")
    solver.add_argument("--strict-steps", action="store_true",
                        help="reject step sizes violating tau*mu*||K||^2 < 1 instead of warning")

    output = parser.add_argument_group("output")
    output.add_argument("--out-flux", type=Path)
    output.add_argument("--out-potential", type=Path)
    output.add_argument("--out-residuals", type=Path)
    output.add_argument("--out-table", type=Path)

    modes = parser.add_argument_group("modes")
    modes.add_argument("--table", choices=tables.TABLE_IDS, help="run a reproduction sweep")
    modes.add_argument("--table-grids", type=int, nargs="+", help="override the sweep's cells per axis")
    modes.add_argument("--oracle-check", action="store_true", help="compare against the exact oracle")
    modes.add_argument("--instances", type=int, default=10, help="random instances for --oracle-check")
    modes.add_argument("--denominator", type=int, default=8, help="mass resolution 1/K for --oracle-check")
    modes.add_argument("--seed", type=int, default=0)

    misc = parser.add_argument_group("misc")
    misc.add_argument("--track", action="store_true", help="log the run to MLflow")
    misc.add_argument("--log-level", default=LOG_LEVEL)
    return parser


def _fail(message: str, status: int) -> int:
    print(f"fluxemd: error: {message}", file=sys.stderr)
    return status


def _step_sizes(args: argparse.Namespace, grid: LatticeGrid) -> Tuple[float, float]:
    auto_mu, auto_tau = default_step_sizes(grid)
    return (args.mu if args.mu is not None else auto_mu,
            args.tau if args.tau is not None else auto_tau)


def _load_inputs(args: argparse.Namespace) -> Tuple[DensityField, DensityField]:
    if args.example:
        spec = make_spec(args.example, n=args.grid or DEFAULT_GRID, sigma=args.sigma,
                         low=DOMAIN_LOW, high=DOMAIN_HIGH)
        return generate(spec)
    return read_density(args.rho0), read_density(args.rho1)


def _write_outputs(args: argparse.Namespace, report: SolveReport) -> List[Path]:
    written = []
    if args.out_residuals:
        written.append(write_residuals(args.out_residuals, report.residual_history))
    if args.out_flux:
        written.append(write_flux(args.out_flux, report.flux))
    if args.out_potential:
        written.append(write_potential(args.out_potential, report.potential))
    return written


def summarize(report: SolveReport) -> dict:
    values = {
        "metric": report.metric.value,
        "distance": report.distance,
        "regularized_distance": report.regularized_distance,
        "iterations": report.iterations,
        "converged": report.converged,
        "final_residual": report.final_residual,
        "wall_time": report.wall_time,
    }
    return {key: values[key] for key in SUMMARY_KEYS}


def run_solve(args: argparse.Namespace) -> int:
    """Solve one density pair, print the summary and write the requested files."""
    if args.example and (args.rho0 or args.rho1):
        return _fail("give either --example or --rho0/--rho1, not both", EXIT_USAGE)
    if not args.example and not (args.rho0 and args.rho1):
        return _fail("give --example NAME or both --rho0 and --rho1", EXIT_USAGE)
    if not args.example and (args.grid is not None or args.sigma is not None):
        return _fail("--grid and --sigma only apply to --example; density files carry their own grid", EXIT_USAGE)

    try:
        p0, p1 = _load_inputs(args)
        grid = require_same_grid(p0, p1)
        mu, tau = _step_sizes(args, grid)
        metric = Metric(args.metric)
        allow_nonunique = metric is Metric.L1 and args.epsilon == 0
        estimator = EMDSolver(
            metric=metric.value,
            mu=mu,
            tau=tau,
            theta=args.theta,
            epsilon=args.epsilon,
            tol=args.tol,
            max_iters=args.max_iters,
            residual_check_interval=args.check_interval,
            strict_steps=args.strict_steps,
            allow_nonunique=allow_nonunique,
            n_jobs=args.threads,
            gap_tol=args.gap_tol,
        )
        report = estimator.fit(p0, p1).report_
    except NumericalDivergenceError as exc:
        return _fail(str(exc), EXIT_NUMERICAL)
    except FluxEMDError as exc:
        return _fail(str(exc), EXIT_USAGE)

    written = _write_outputs(args, report)
    print(format_summary(summarize(report)))

    if args.track:
        from . import tracking

        tracking.log_solve(report, {**estimator.get_params(), "grid": grid.shape}, written)

    if not report.converged:
        return _fail(
            f"no convergence within {report.iterations} iterations (residual {report.final_residual:.3g})",
            EXIT_NOT_CONVERGED,
        )
    return EXIT_OK


def run_table(args: argparse.Namespace) -> int:
    """Run a reproduction sweep, write it to a text file and echo it."""
    try:
        frame = tables.run_table(args.table, grid_sizes=args.table_grids,
                                 max_iters=args.max_iters, n_jobs=args.threads)
    except FluxEMDError as exc:
        return _fail(str(exc), EXIT_USAGE)

    path = tables.write_table(frame, args.out_table or OUTPUT_DIR / f"table_{args.table}.txt")
    print(tables.render_table(frame))

    if args.track:
        from . import tracking

        tracking.log_table(args.table, frame, path)
    return EXIT_OK


def random_rational_density(rng: np.random.Generator, grid: LatticeGrid, denominator: int) -> DensityField:
    """Drop `denominator` unit masses on uniformly chosen vertices."""
    counts = np.bincount(rng.integers(0, grid.size, size=denominator), minlength=grid.size)
    return normalize(counts.reshape(grid.shape), grid)


def oracle_instance_summary(instance: int, exact: float, distance: float, gap: float, passed: bool) -> dict:
    """key=value items for one oracle instance, keys prefixed `instance<i>.`."""
    values = {"exact": exact, "solver": distance, "gap": gap, "passed": passed}
    return {f"instance{instance}.{key}": value for key, value in values.items()}


def run_oracle_check(args: argparse.Namespace) -> int:
    """Compare the L1 solver with the exact oracle on seeded random instances."""
    n = args.grid or ORACLE_DEFAULT_GRID
    if not 1 <= n <= ORACLE_CHECK_MAX_GRID:
        return _fail(f"--grid must be between 1 and {ORACLE_CHECK_MAX_GRID} for --oracle-check", EXIT_USAGE)
    if not 1 <= args.denominator <= ORACLE_CHECK_MAX_DENOMINATOR:
        return _fail(f"--denominator must be between 1 and {ORACLE_CHECK_MAX_DENOMINATOR}", EXIT_USAGE)

    grid = LatticeGrid.square(n, DOMAIN_LOW, DOMAIN_HIGH)
    rng = np.random.default_rng(args.seed)
    try:
        mu, tau = _step_sizes(args, grid)
        config = SolverConfig(metric=Metric.L1, mu=mu, tau=tau, theta=args.theta, epsilon=ORACLE_EPSILON,
                              tol=ORACLE_TOL, max_iters=args.max_iters, strict_steps=args.strict_steps,
                              n_jobs=args.threads)
    except FluxEMDError as exc:
        return _fail(str(exc), EXIT_USAGE)

    failures = 0
    for instance in range(args.instances):
        p0 = random_rational_density(rng, grid, args.denominator)
        p1 = random_rational_density(rng, grid, args.denominator)
        try:
            exact = exact_emd(measure_from_density(p0, args.denominator),
                              measure_from_density(p1, args.denominator), Metric.L1)
            report = solve(p0, p1, config)
        except NumericalDivergenceError as exc:
            return _fail(str(exc), EXIT_NUMERICAL)
        except FluxEMDError as exc:
            return _fail(str(exc), EXIT_USAGE)

        gap = abs(report.distance - exact) / exact if exact > 0 else abs(report.distance)
        passed = report.converged and gap <= ORACLE_MAX_GAP
        failures += not passed
        print(format_summary(oracle_instance_summary(instance, exact, report.distance, gap, passed)))

    print(f"failures={failures}")
    logger.info("oracle check finished",
                extra={"grid": n, "denominator": args.denominator, "instances": args.instances, "failures": failures})
    if failures:
        return _fail(f"{failures} of {args.instances} instances exceed a {ORACLE_MAX_GAP:.0%} gap", EXIT_NUMERICAL)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    if args.table and args.oracle_check:
        return _fail("--table and --oracle-check are mutually exclusive", EXIT_USAGE)
    if args.table:
        return run_table(args)
    if args.oracle_check:
        return run_oracle_check(args)
    return run_solve(args)


if __name__ == "__main__":
    sys.exit(main())
