"""
Scaling Parameters
gamma, the scaling exponent beta = 2/(2 - gamma), and the ellipticity constant
"""
import math
from dataclasses import dataclass, field

import numpy as np

from core.errors import ParameterError

GAMMA_MIN = 1.0
GAMMA_MAX = 2.0


def beta_of(gamma: float) -> float:
    """
    Scaling exponent of the Alt-Phillips equation.

    Solutions grow like dist^beta from the free boundary and the rescaling
    u(r x + x0) / r^beta maps solutions to solutions.

    Args:
        gamma: Exponent of the right-hand side u^(gamma-1), in (1, 2)

    Returns:
        beta = 2 / (2 - gamma)
    """
    gamma = float(gamma)
    if not math.isfinite(gamma) or not GAMMA_MIN < gamma < GAMMA_MAX:
        raise ParameterError(
            f"gamma={gamma} outside admissible interval ({GAMMA_MIN:g}, {GAMMA_MAX:g})"
        )
    return 2.0 / (2.0 - gamma)


@dataclass(frozen=True)
class Params:
    """Problem parameters; beta is always derived from gamma."""
    gamma: float
    lam: float = 1.0  # ellipticity constant Lambda
    beta: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "beta", beta_of(self.gamma))
        if not math.isfinite(self.lam) or self.lam < 1.0:
            raise ParameterError(f"lambda={self.lam} must be >= 1")

    @property
    def rhs_exponent(self) -> float:
        """gamma - 1, the power on the right-hand side."""
        return self.gamma - 1.0

    def rhs(self, u):
        """u_+^(gamma-1), vectorised."""
        return np.power(np.maximum(u, 0.0), self.gamma - 1.0)
