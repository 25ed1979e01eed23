"""
Scaling Report
Every measurement of one experiment with the radii and thresholds it used
"""
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np


def jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class ScalingReport:
    """
    Analysis of one computed solution.

    Sections that were not measured stay None and are written as null.
    """
    name: str
    config_hash: str
    solve: Dict[str, Any] = field(default_factory=dict)
    subharmonic: Optional[Dict[str, Any]] = None
    free_boundary: Optional[Dict[str, Any]] = None
    blowup_point: Optional[List[float]] = None
    growth: Optional[Dict[str, Any]] = None
    harnack: List[Dict[str, Any]] = field(default_factory=list)
    hessian_ratio: Optional[Dict[str, Any]] = None
    profile_distances: List[Dict[str, Any]] = field(default_factory=list)
    convexity_margins: List[Dict[str, Any]] = field(default_factory=list)
    monotonicity: List[Dict[str, Any]] = field(default_factory=list)
    nondegeneracy: Optional[Dict[str, Any]] = None
    density: Optional[Dict[str, Any]] = None
    lipschitz: Optional[Dict[str, Any]] = None
    normal_oscillation: List[Dict[str, Any]] = field(default_factory=list)
    thresholds: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    @property
    def max_harnack(self) -> Optional[float]:
        vals = [h["value"] for h in self.harnack if h.get("value") is not None]
        return max(vals) if vals else None

    def to_dict(self) -> Dict[str, Any]:
        return jsonable({
            "name": self.name,
            "config_hash": self.config_hash,
            "solve": self.solve,
            "subharmonic": self.subharmonic,
            "free_boundary": self.free_boundary,
            "blowup_point": self.blowup_point,
            "growth": self.growth,
            "harnack": self.harnack,
            "hessian_ratio": self.hessian_ratio,
            "profile_distances": self.profile_distances,
            "convexity_margins": self.convexity_margins,
            "monotonicity": self.monotonicity,
            "nondegeneracy": self.nondegeneracy,
            "density": self.density,
            "lipschitz": self.lipschitz,
            "normal_oscillation": self.normal_oscillation,
            "thresholds": self.thresholds,
            "warnings": self.warnings,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)
