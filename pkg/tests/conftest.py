"""
Pytest configuration and fixtures for testing FLUXEMD.
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add the project root to the Python path
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

# Import after adding to path
from fluxemd.lattice import LatticeGrid, normalize


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running reproduction of published results")


@pytest.fixture
def rng():
    """Seeded generator so randomized checks are reproducible."""
    return np.random.default_rng(20240611)


@pytest.fixture
def line2():
    """1D lattice with two vertices and unit spacing."""
    return LatticeGrid(shape=(2,), spacing=1.0, origin=(0.0,))


@pytest.fixture
def grid40():
    """The default 40 x 40 lattice on [-2, 2]^2."""
    return LatticeGrid.square(40)


@pytest.fixture
def transport_pair(line2):
    """Unit mass moving from vertex 0 to vertex 1 of line2."""
    return normalize([1.0, 0.0], line2), normalize([0.0, 1.0], line2)


@pytest.fixture
def density_file(tmp_path):
    """Write a small density file and return its path."""

    def _write(values, name="rho.txt", box=(-2.0, 2.0, -2.0, 2.0)):
        values = np.asarray(values, dtype=float)
        nx, ny = values.shape
        header = f"{nx} {ny} " + " ".join(f"{v:g}" for v in box)
        path = tmp_path / name
        path.write_text(header + "\n" + "\n".join(" ".join(f"{v:.12g}" for v in row) for row in values) + "\n")
        return path

    return _write
