"""
Ellipticity Check
Randomised validation of (1/L)|P| <= F(M+P) - F(M) <= L d |P| for PSD P
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from core.errors import ParameterError
from core.grid import SymMatrix
from operators.operator_spec import OperatorSpec, evaluate

MARGIN_SLACK = 1e-12


@dataclass
class EllipticityReport:
    """Outcome of a randomised ellipticity check."""
    passed: bool
    trials: int
    lower_bound: float  # 1 / lam
    upper_bound: float  # lam * d
    lower_margin: float  # min over trials of increment / |P|
    upper_margin: float  # max over trials of increment / |P|
    failures: List[str] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "trials": self.trials,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "lower_margin": self.lower_margin,
            "upper_margin": self.upper_margin,
            "failures": list(self.failures),
            **self.metadata,
        }


def increment_bounds(spec: OperatorSpec, dim: int) -> Tuple[float, float]:
    """
    (1 / lam, lam * d) for unit spectral-norm PSD increments.

    Every kind is squeezed between (1/lam) tr(P) and lam tr(P), and tr(P)
    lies in [1, d] when |P| = 1. The lower bound keeps the plain 1 / lam.
    """
    return 1.0 / spec.lam, spec.lam * dim


def random_symmetric(rng: np.random.Generator, dim: int, scale: float = 1.0) -> SymMatrix:
    a = rng.standard_normal((dim, dim)) * scale
    return SymMatrix(0.5 * (a + a.T))


def random_psd_unit(rng: np.random.Generator, dim: int) -> SymMatrix:
    """Random PSD matrix with spectral norm 1; rank drawn uniformly in 1..dim."""
    rank = int(rng.integers(1, dim + 1))
    b = rng.standard_normal((dim, rank))
    p = SymMatrix(b @ b.T)
    return p * (1.0 / p.spectral_norm())


def ellipticity_check(
    spec: OperatorSpec,
    trials: int,
    rng_seed: Optional[int] = 0,
    dim: Optional[int] = None,
) -> EllipticityReport:
    """
    Sample random symmetric M and unit-norm PSD P and check the increment bounds.

    Args:
        spec: Operator under test
        trials: Number of (M, P) samples, >= 1
        rng_seed: Seed for numpy's default_rng
        dim: Matrix dimension (defaults to the family dimension, else 2)

    Returns:
        EllipticityReport with the worst margins; failures are listed, never raised
    """
    if trials < 1:
        raise ParameterError(f"trials={trials} must be >= 1")
    dim = dim or spec.dim or 2
    spec.check_dim(dim)
    lo, hi = increment_bounds(spec, dim)
    rng = np.random.default_rng(rng_seed)

    lower = np.inf
    upper = -np.inf
    failures: List[str] = []
    for t in range(trials):
        m = random_symmetric(rng, dim, scale=float(rng.uniform(0.1, 10.0)))
        p = random_psd_unit(rng, dim)
        inc = evaluate(spec, m + p) - evaluate(spec, m)
        lower = min(lower, inc)
        upper = max(upper, inc)
        if inc < lo - MARGIN_SLACK or inc > hi + MARGIN_SLACK:
            failures.append(f"trial {t}: increment {inc:.6g} outside [{lo:g}, {hi:g}]")

    report = EllipticityReport(
        passed=not failures,
        trials=trials,
        lower_bound=lo,
        upper_bound=hi,
        lower_margin=float(lower),
        upper_margin=float(upper),
        failures=failures[:20],
        metadata={"operator": spec.label, "lam": spec.lam, "dim": dim, "seed": rng_seed},
    )
    if report.passed:
        logger.info(
            f"Ellipticity check passed for {spec.label}: "
            f"increments in [{lower:.4f}, {upper:.4f}] within [{lo:g}, {hi:g}]"
        )
    else:
        logger.warning(f"Ellipticity check FAILED for {spec.label}: {len(failures)} violations")
    return report
