"""
Configuration settings for FLUXEMD.
Loads settings from environment variables with fallback to defaults.
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Base directory of the project
BASE_DIR = Path(__file__).parent.parent

# Application settings
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
OUTPUT_DIR = Path(os.getenv("FLUXEMD_OUTPUT_DIR", str(BASE_DIR / "output")))

# Solver defaults used by the CLI and the table sweeps
DEFAULT_THETA = float(os.getenv("FLUXEMD_THETA", "1.0"))
DEFAULT_EPSILON = float(os.getenv("FLUXEMD_EPSILON", "0.01"))
DEFAULT_TOL = float(os.getenv("FLUXEMD_TOL", "1e-5"))
DEFAULT_MAX_ITERS = int(os.getenv("FLUXEMD_MAX_ITERS", "100000"))
DEFAULT_CHECK_INTERVAL = int(os.getenv("FLUXEMD_CHECK_INTERVAL", "1"))

# Smallest face count (vertices x dims) at which --threads splits the primal step
PARALLEL_MIN_FACES = int(os.getenv("FLUXEMD_PARALLEL_MIN_FACES", str(1 << 20)))

# Default lattice: n x n cells on [DOMAIN_LOW, DOMAIN_HIGH]^2
DEFAULT_GRID = int(os.getenv("FLUXEMD_GRID", "40"))
DOMAIN_LOW = float(os.getenv("FLUXEMD_DOMAIN_LOW", "-2.0"))
DOMAIN_HIGH = float(os.getenv("FLUXEMD_DOMAIN_HIGH", "2.0"))

# Exact oracle guards
ORACLE_MAX_UNITS = int(os.getenv("FLUXEMD_ORACLE_MAX_UNITS", "256"))
ORACLE_CHECK_MAX_GRID = 8
ORACLE_CHECK_MAX_DENOMINATOR = 64

# MLflow settings - with environment variable fallbacks
TRACKING_URI = os.getenv("MLFLOW_TRACKING_URI", "file:./mlruns")
EXPERIMENT_NAME = os.getenv("MLFLOW_EXPERIMENT_NAME", "fluxemd")
