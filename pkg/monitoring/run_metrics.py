"""
Run Metrics
Per-run Prometheus metrics written as a text file next to the artifacts
"""
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator

from loguru import logger
from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, write_to_textfile


class RunMetrics:
    """
    Stage timings and solver counters for one experiment.

    Each instance owns its own registry so concurrent runs never share
    collectors.
    """

    def __init__(self, experiment: str):
        self.experiment = experiment
        self.registry = CollectorRegistry()
        self.stage_times: Dict[str, float] = {}
        self._setup_metrics()
        logger.debug(f"Initialized run metrics for {experiment}")

    def _setup_metrics(self) -> None:
        self.stage_duration = Histogram(
            'lab_stage_duration_seconds',
            'Wall time per pipeline stage',
            ['stage'],
            buckets=[0.01, 0.1, 0.5, 1, 5, 15, 60, 300, 1800],
            registry=self.registry,
        )

        self.outer_iterations = Counter(
            'lab_outer_iterations',
            'Outer fixed-point iterations',
            registry=self.registry,
        )

        self.howard_steps = Counter(
            'lab_howard_steps',
            'Policy iteration steps',
            registry=self.registry,
        )

        self.final_residual = Gauge(
            'lab_final_residual',
            'Residual of the last solve',
            registry=self.registry,
        )

        self.free_boundary_points = Gauge(
            'lab_free_boundary_points',
            'Number of extracted free-boundary points',
            registry=self.registry,
        )

        self.converged = Gauge(
            'lab_converged',
            '1 if the last solve converged',
            registry=self.registry,
        )

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Time a pipeline stage."""
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.stage_times[name] = self.stage_times.get(name, 0.0) + elapsed
            self.stage_duration.labels(stage=name).observe(elapsed)
            logger.debug(f"Stage {name} took {elapsed:.3f}s")

    def record_solve(self, iterations: int, howard_steps: int, residual: float, converged: bool) -> None:
        self.outer_iterations.inc(iterations)
        self.howard_steps.inc(howard_steps)
        self.final_residual.set(residual)
        self.converged.set(1.0 if converged else 0.0)

    def record_free_boundary(self, points: int) -> None:
        self.free_boundary_points.set(points)

    def write(self, path: Path) -> None:
        write_to_textfile(str(path), self.registry)
        logger.debug(f"Wrote metrics to {path}")
