"""
Damping Guard
Halves the outer relaxation when the residual keeps growing
"""
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional

from loguru import logger

from lab_config import LAB_CONFIG


class GuardState(Enum):
    """Guard state."""
    WARMUP = "warmup"  # too early to judge
    WATCHING = "watching"
    TRIPPED = "tripped"  # relaxation was reduced at least once


@dataclass
class DampingGuard:
    """
    Watches the outer residual history.

    After ``warmup`` observations, a residual above ``growth`` times the best
    residual seen so far is a failure. ``failure_threshold`` failures halve
    the relaxation (never below ``floor``) and reset the failure count.
    """
    name: str
    relaxation: float = LAB_CONFIG.RELAXATION
    warmup: int = LAB_CONFIG.GUARD_WARMUP
    growth: float = LAB_CONFIG.GUARD_GROWTH
    failure_threshold: int = LAB_CONFIG.GUARD_THRESHOLD
    floor: float = LAB_CONFIG.GUARD_FLOOR

    state: GuardState = GuardState.WARMUP
    failure_count: int = 0
    best_residual: Optional[float] = None

    total_observations: int = 0
    total_failures: int = 0
    trips: int = 0

    def record(self, residual: float) -> float:
        """Record one outer residual and return the relaxation for the next step."""
        self.total_observations += 1
        if self.best_residual is None or residual < self.best_residual:
            self.best_residual = residual

        if self.total_observations <= self.warmup:
            return self.relaxation
        if self.state is GuardState.WARMUP:
            self.state = GuardState.WATCHING

        if residual > self.growth * self.best_residual:
            self.failure_count += 1
            self.total_failures += 1
            if self.failure_count >= self.failure_threshold:
                self._trip(residual)
        return self.relaxation

    def _trip(self, residual: float) -> None:
        old = self.relaxation
        self.relaxation = max(self.floor, 0.5 * self.relaxation)
        self.failure_count = 0
        self.trips += 1
        self.state = GuardState.TRIPPED
        logger.warning(
            f"{self.name}: damping guard tripped | residual {residual:.3e} > "
            f"{self.growth:g} x best {self.best_residual:.3e} | relaxation {old:g} -> {self.relaxation:g}"
        )

    def get_stats(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "state": self.state.value,
            "relaxation": self.relaxation,
            "failure_count": self.failure_count,
            "total_observations": self.total_observations,
            "total_failures": self.total_failures,
            "trips": self.trips,
            "best_residual": self.best_residual,
        }
