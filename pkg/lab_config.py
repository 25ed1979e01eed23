"""
Lab Configuration
Process-level defaults for solves, analysis and artifact output
"""
import os
from dataclasses import dataclass

from dotenv import load_dotenv

load_dotenv()


@dataclass
class LabConfig:
    """Defaults shared by every experiment; overridable from the environment."""

    # Outer fixed point
    TOL_RESIDUAL: float = 1e-10  # relative to 1 + max u^(gamma-1)
    MAX_OUTER: int = 500
    RELAXATION: float = 0.8
    INNER_TOL_FACTOR: float = 0.01  # inner tolerance = factor * outer tolerance
    SETTLE_RTOL: float = 1e-3  # max relative outer update above the contact floor
    CONTACT_FLOOR_FACTOR: float = 1e-2  # contact floor = factor * c_ref * h^beta

    # Damping guard
    GUARD_WARMUP: int = 5
    GUARD_GROWTH: float = 1.5
    GUARD_THRESHOLD: int = 3
    GUARD_FLOOR: float = 0.05

    # Analysis
    REFERENCE_N: int = 129  # reference grid over [-1.1, 1.1]^d
    REFERENCE_EXTENT: float = 1.1
    ANGULAR_SAMPLES: int = 720

    # Output
    OUTPUT_DIR: str = "runs"
    THREADS: int = 1
    LOG_LEVEL: str = "INFO"

    @classmethod
    def from_env(cls) -> "LabConfig":
        """Load configuration from environment variables."""
        return cls(
            TOL_RESIDUAL=float(os.getenv("LAB_TOL_RESIDUAL", 1e-10)),
            MAX_OUTER=int(os.getenv("LAB_MAX_OUTER", 500)),
            RELAXATION=float(os.getenv("LAB_RELAXATION", 0.8)),
            SETTLE_RTOL=float(os.getenv("LAB_SETTLE_RTOL", 1e-3)),
            OUTPUT_DIR=os.getenv("LAB_OUTPUT_DIR", "runs"),
            THREADS=int(os.getenv("LAB_THREADS", 1)),
            LOG_LEVEL=os.getenv("LAB_LOG_LEVEL", "INFO").upper(),
        )


# Global configuration instance
LAB_CONFIG = LabConfig.from_env()
