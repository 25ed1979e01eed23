"""
Experiment Configuration
JSON experiment documents validated with pydantic
"""
import hashlib
import json
import math
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.errors import ConfigError
from core.grid import Grid
from core.params import Params
from lab_config import LAB_CONFIG
from operators.operator_spec import OperatorKind, OperatorSpec
from solver.alt_phillips_solver import ProblemSpec
from solver.boundary import BoundaryData, BoundaryKind


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class OperatorConfig(StrictModel):
    kind: Literal["trace", "pucci_plus", "bellman"] = "trace"
    lam: float = Field(default=1.0, ge=1.0)
    family: List[List[List[float]]] = Field(default_factory=list)

    def to_spec(self) -> OperatorSpec:
        if self.kind == "bellman":
            return OperatorSpec.bellman([np.asarray(a) for a in self.family], self.lam)
        if self.family:
            raise ConfigError("family is only allowed for kind 'bellman'", path="operator.family")
        if self.kind == "pucci_plus":
            return OperatorSpec.pucci_plus(self.lam)
        return OperatorSpec(OperatorKind.TRACE, self.lam)


class DomainConfig(StrictModel):
    lo: List[float]
    hi: List[float]

    @model_validator(mode="after")
    def check_box(self) -> "DomainConfig":
        if len(self.lo) != len(self.hi) or len(self.lo) not in (1, 2):
            raise ValueError(f"lo/hi must both have length 1 or 2 (got {len(self.lo)} and {len(self.hi)})")
        if any(b <= a for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"empty box lo={self.lo} hi={self.hi}")
        return self


class PolynomialTermConfig(StrictModel):
    coef: float
    powers: List[int]


class BoundaryConfig(StrictModel):
    kind: Literal["constant", "halfspace", "polynomial", "bump"]
    value: float = Field(default=0.0, ge=0.0)
    direction: List[float] = Field(default_factory=list)
    terms: List[PolynomialTermConfig] = Field(default_factory=list)
    amplitude: float = Field(default=0.01, ge=0.0)
    frequency: float = 1.0
    phase: float = math.pi / 2.0
    scale: float = Field(default=1.0, ge=0.0)

    def to_data(self) -> BoundaryData:
        return BoundaryData(
            kind=BoundaryKind(self.kind),
            value=self.value,
            direction=tuple(self.direction),
            terms=tuple((t.coef, tuple(t.powers)) for t in self.terms),
            amplitude=self.amplitude,
            frequency=self.frequency,
            phase=self.phase,
            scale=self.scale,
        )


class SolverConfig(StrictModel):
    tol_residual: float = Field(default_factory=lambda: LAB_CONFIG.TOL_RESIDUAL, gt=0.0)
    max_outer: int = Field(default_factory=lambda: LAB_CONFIG.MAX_OUTER, ge=1)
    relaxation: float = Field(default_factory=lambda: LAB_CONFIG.RELAXATION, gt=0.0, le=1.0)
    rhs_floor: float = Field(default=0.0, ge=0.0)
    linear_solver: Literal["direct", "iterative"] = "direct"


class AnalysisConfig(StrictModel):
    kappa_tau: float = Field(default=1.0, gt=0.0)
    tau_scaling: Literal["grid", "profile"] = "grid"
    delta_reg: float = Field(default=0.1, gt=0.0, le=1.0)
    r0_fraction: float = Field(default=0.25, gt=0.0, le=1.0)
    normal_window: int = Field(default=6, ge=2)
    rescale_radii: List[float] = Field(default_factory=list)
    harnack_radii: List[float] = Field(default_factory=list)
    harnack_centers: List[List[float]] = Field(default_factory=list)
    oscillation_radii: List[float] = Field(default_factory=list)
    nondegeneracy_radii: List[float] = Field(default_factory=list)
    monotonicity_delta: float = Field(default=0.5, ge=-1.0, le=1.0)
    hessian_tau_cells: float = Field(default=4.0, gt=0.0)
    hessian_margin_fraction: float = Field(default=0.25, ge=0.0, lt=1.0)  # interior band skipped, times the inradius
    lipschitz_fraction: float = Field(default=0.25, gt=0.0, le=1.0)  # Lipschitz ball radius, times the inradius
    growth_min_cells: float = Field(default=8.0, gt=0.0)
    ellipticity_trials: int = Field(default=1000, ge=1)


class ExperimentConfig(StrictModel):
    """One experiment; unknown keys anywhere are rejected."""
    name: str
    gamma: float = Field(gt=1.0, lt=2.0)
    operator: OperatorConfig = Field(default_factory=OperatorConfig)
    domain: DomainConfig
    n: int = Field(ge=3)
    boundary: BoundaryConfig
    solver: SolverConfig = Field(default_factory=SolverConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    output_dir: Optional[str] = None

    @property
    def dim(self) -> int:
        return len(self.domain.lo)

    def grid(self, n: Optional[int] = None) -> Grid:
        m = self.n if n is None else n
        return Grid(dim=self.dim, lo=tuple(self.domain.lo), hi=tuple(self.domain.hi), n=(m,) * self.dim)

    def params(self) -> Params:
        return Params(gamma=self.gamma, lam=self.operator.lam)

    def to_problem(self, n: Optional[int] = None) -> ProblemSpec:
        return ProblemSpec(
            params=self.params(),
            operator=self.operator.to_spec(),
            grid=self.grid(n),
            boundary=self.boundary.to_data(),
            tol_residual=self.solver.tol_residual,
            max_outer=self.solver.max_outer,
            relaxation=self.solver.relaxation,
            rhs_floor=self.solver.rhs_floor,
            linear_solver=self.solver.linear_solver,
        )

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form."""
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def _error_path(loc) -> str:
    return ".".join(str(p) for p in loc)


def parse_config(data: dict) -> ExperimentConfig:
    """
    Validate a config document.

    Raises:
        ConfigError: first schema violation, with its dotted path
    """
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(first["msg"], path=_error_path(first["loc"])) from e
    try:
        # constructs and validates the operator, grid and data
        cfg.to_problem()
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e), path="") from e
    return cfg


def load_config(path: Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    return parse_config(data)
