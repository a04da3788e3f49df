"""Application configuration."""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Base directory
BASE_DIR = Path(__file__).resolve().parent


def _band(value: str, default):
    """Parse 'low,high' into a tuple of floats."""
    if not value:
        return default
    low, high = (float(part) for part in value.split(","))
    return (low, high)


class Config:
    """Base configuration."""

    TOOLKIT_VERSION = '1.0.0'
    LOG_LEVEL = os.getenv('TOOLKIT_LOG_LEVEL', 'INFO')

    # Output
    OUTPUT_DIR = Path(os.getenv('TOOLKIT_OUTPUT_DIR', BASE_DIR / 'runs'))

    # Path-level parallelism; the batch size fixes the reduction order
    DEFAULT_THREADS = int(os.getenv('TOOLKIT_THREADS', 1))
    PATH_BATCH_SIZE = int(os.getenv('TOOLKIT_BATCH_SIZE', 256))

    # Implicit step solver
    SOLVER_MAX_ITERS = int(os.getenv('TOOLKIT_SOLVER_MAX_ITERS', 100))
    SOLVER_BOUNDARY_FRACTION = float(os.getenv('TOOLKIT_SOLVER_BOUNDARY_FRACTION', 0.9))

    # Convergence harness
    REFERENCE_RATIO = 16
    EM_SLOPE_BAND = _band(os.getenv('TOOLKIT_EM_SLOPE_BAND', ''), (-1.25, -0.75))
    MILSTEIN_SLOPE_BAND = _band(os.getenv('TOOLKIT_MILSTEIN_SLOPE_BAND', ''), (-2.3, -1.7))

    # Identity check
    IDENTITY_TOLERANCE = 1e-12


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    TESTING = False
    LOG_LEVEL = os.getenv('TOOLKIT_LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production configuration."""
    DEBUG = False
    TESTING = False


class TestingConfig(Config):
    """Testing configuration."""
    DEBUG = True
    TESTING = True
    PATH_BATCH_SIZE = 64
    LOG_LEVEL = 'WARNING'


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': ProductionConfig
}
