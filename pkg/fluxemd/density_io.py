"""
Plain-text file formats.

Density files: first line `nx ny xmin xmax ymin ymax`, then nx*ny
whitespace-separated values in row-major order over (ix, iy), iy fastest.
All numbers are written with '%.12g', which does not depend on the locale.
"""
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Tuple, Union

import numpy as np

from .exceptions import DensityFileError
from .lattice import DensityField, DualPotential, FluxField, LatticeGrid, normalize

PathLike = Union[str, Path]
NUMBER_FORMAT = "%.12g"


def _ensure_parent(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def read_density(path: PathLike) -> DensityField:
    """
    Load and normalize a 2D density file.

    Raises:
        DensityFileError: on unreadable files, malformed headers or a wrong value count.
        IncompatibleFieldsError: if the box does not give a uniform spacing.
        InvalidMeasureError: on negative or all-zero values.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DensityFileError(f"cannot read {path}: {exc.strerror}") from exc

    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise DensityFileError(f"{path} is empty")

    header = lines[0].split()
    if len(header) != 6:
        raise DensityFileError(f"{path}: header needs 'nx ny xmin xmax ymin ymax', got {lines[0]!r}")
    try:
        nx, ny = int(header[0]), int(header[1])
        xmin, xmax, ymin, ymax = (float(v) for v in header[2:])
        values = np.array([float(v) for v in " ".join(lines[1:]).split()])
    except ValueError as exc:
        raise DensityFileError(f"{path}: {exc}") from exc

    if nx < 1 or ny < 1:
        raise DensityFileError(f"{path}: grid size must be positive, got {nx} x {ny}")
    if values.size != nx * ny:
        raise DensityFileError(f"{path}: expected {nx * ny} values, found {values.size}")

    grid = LatticeGrid.from_box((nx, ny), (xmin, ymin), (xmax, ymax))
    return normalize(values.reshape(nx, ny), grid)


def write_density(path: PathLike, values, grid: LatticeGrid) -> Path:
    """Write raw 2D values in the density file format."""
    if grid.dims != 2:
        raise DensityFileError("density files hold 2D grids only")
    (xmin, ymin), (xmax, ymax) = grid.bounds()
    values = np.asarray(values, dtype=float).reshape(grid.shape)
    header = " ".join(
        [str(grid.shape[0]), str(grid.shape[1])]
        + [NUMBER_FORMAT % v for v in (xmin, xmax, ymin, ymax)]
    )
    path = _ensure_parent(path)
    np.savetxt(path, values, fmt=NUMBER_FORMAT, header=header, comments="")
    return path


def write_residuals(path: PathLike, history: Sequence[Tuple[int, float]]) -> Path:
    """Two columns: iteration, residual."""
    path = _ensure_parent(path)
    with path.open("w") as handle:
        for iteration, residual in history:
            handle.write(f"{int(iteration)} {NUMBER_FORMAT % residual}\n")
    return path


def write_flux(path: PathLike, flux: FluxField) -> Path:
    """One line per face: vertex multi-index columns, axis, value."""
    grid = flux.grid
    indices = np.indices(grid.shape).reshape(grid.dims, -1).T
    rows = np.repeat(indices, grid.dims, axis=0)
    axes = np.tile(np.arange(grid.dims), grid.size)
    values = flux.values.reshape(-1)

    path = _ensure_parent(path)
    with path.open("w") as handle:
        for index, axis, value in zip(rows, axes, values):
            columns = [str(int(i)) for i in index] + [str(int(axis)), NUMBER_FORMAT % value]
            handle.write(" ".join(columns) + "\n")
    return path


def write_potential(path: PathLike, potential: DualPotential) -> Path:
    """Row-major grid text, one line per index along the first axis."""
    path = _ensure_parent(path)
    values = potential.values.reshape(potential.grid.shape[0], -1)
    np.savetxt(path, values, fmt=NUMBER_FORMAT)
    return path


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return NUMBER_FORMAT % value
    return str(value)


def format_summary(items: Mapping[str, object]) -> str:
    """key=value lines in insertion order."""
    return "\n".join(f"{key}={format_value(value)}" for key, value in items.items())


def read_summary(lines: Iterable[str]) -> dict:
    """Parse key=value lines back into a dict of strings."""
    summary = {}
    for line in lines:
        line = line.strip()
        if line:
            key, _, value = line.partition("=")
            summary[key] = value
    return summary
