"""Configuration management for the R-EDDPC toolkit."""
import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    """Application configuration."""

    # Logging
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO").upper()

    # Reproducibility and output
    SEED: int = int(os.getenv("REDDPC_SEED", "0"))
    OUTPUT_DIR: str = os.getenv("REDDPC_OUTPUT_DIR", "results")

    # Synthesis and Monte Carlo pools
    MAX_WORKERS: int = int(os.getenv("REDDPC_MAX_WORKERS", "1"))

    # Numerical tolerances
    RANK_EXPONENT: int = int(os.getenv("REDDPC_RANK_EXPONENT", "40"))
    REGION_TOL: float = float(os.getenv("REDDPC_REGION_TOL", "1e-9"))
    INTERIOR_TOL: float = float(os.getenv("REDDPC_INTERIOR_TOL", "1e-9"))

    VERSION: str = "0.1.0"

    # Long acceptance benchmarks in the test-suite (minutes of runtime)
    RUN_BENCHMARKS: bool = os.getenv("REDDPC_RUN_BENCHMARKS", "False").lower() in ("true", "1", "yes")

    @classmethod
    def validate(cls) -> None:
        """Validate that numerical settings are usable."""
        if cls.MAX_WORKERS < 1:
            raise ValueError("REDDPC_MAX_WORKERS must be at least 1")
        if cls.RANK_EXPONENT < 1:
            raise ValueError("REDDPC_RANK_EXPONENT must be positive")
        if cls.REGION_TOL <= 0 or cls.INTERIOR_TOL <= 0:
            raise ValueError("REDDPC_REGION_TOL and REDDPC_INTERIOR_TOL must be positive")
