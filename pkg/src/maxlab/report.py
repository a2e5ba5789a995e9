"""Machine-readable verdicts shared by every checker."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any

import numpy as np

SCHEMA = "maxlab.report/1"


class Verdict(str, Enum):
    PASS = "pass"
    HYPOTHESIS_FAILURE = "hypothesis-failure"
    CONCLUSION_FAILURE = "conclusion-failure"
    NUMERICAL_QUALITY = "numerical-quality"


@dataclass
class VerificationReport:
    check: str
    verdict: Verdict
    residual: float | None = None
    witness: dict[str, Any] = field(default_factory=dict)
    params: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    outcome: str | None = None
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA,
            "check": self.check,
            "verdict": self.verdict.value,
            "outcome": self.outcome,
            "residual": self.residual,
            "witness": self.witness,
            "params": self.params,
            "seed": self.seed,
            "message": self.message,
        }

    def to_json(self, **kwargs) -> str:
        return dumps(self.to_dict(), **kwargs)


def worst(*verdicts: Verdict) -> Verdict:
    """Combine verdicts; conclusion failures dominate everything."""
    order = [Verdict.CONCLUSION_FAILURE, Verdict.NUMERICAL_QUALITY, Verdict.HYPOTHESIS_FAILURE]
    for v in order:
        if v in verdicts:
            return v
    return Verdict.PASS


def to_jsonable(obj: Any) -> Any:
    if isinstance(obj, VerificationReport):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, Fraction):
        return {"fraction": f"{obj.numerator}/{obj.denominator}", "float": _finite(float(obj))}
    if isinstance(obj, (np.floating, float)):
        return _finite(float(obj))
    if hasattr(obj, "_mpf_"):  # mpmath numbers with unbounded exponent
        return {"mpf": str(obj)}
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def _finite(x: float):
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def dumps(obj: Any, **kwargs) -> str:
    kwargs.setdefault("indent", 2)
    kwargs.setdefault("sort_keys", True)
    return json.dumps(to_jsonable(obj), **kwargs)
