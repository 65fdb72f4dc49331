"""Pass/fail records shared by every certificate-producing routine."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v) or math.isinf(v):
            return repr(v)
        return v
    if hasattr(value, "to_dict"):
        return _jsonable(value.to_dict())
    return value


@dataclass
class Certificate:
    """Outcome of one numerical check.

    Attributes
    ----------
    name : str
        Short identifier of the check.
    passed : bool
        Verdict.
    margin : float
        Signed slack of the tightest tested inequality (positive is good),
        or NaN when the check has no scalar margin.
    witness : object
        First violating input, or the extremal input when the check passed.
    details : dict
        Free-form diagnostics, JSON serializable after conversion.
    """

    name: str
    passed: bool
    margin: float = float("nan")
    witness: Any = None
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.passed)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "margin": _jsonable(self.margin),
            "witness": _jsonable(self.witness),
            "details": _jsonable(self.details),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def bundle(name: str, parts: list[Certificate]) -> Certificate:
    """Aggregate sub-certificates; passes iff all parts pass."""
    failed = [c.name for c in parts if not c.passed]
    margins = [c.margin for c in parts if not math.isnan(c.margin)]
    return Certificate(
        name=name,
        passed=not failed,
        margin=min(margins) if margins else float("nan"),
        witness=failed[0] if failed else None,
        details={"parts": [c.to_dict() for c in parts], "failed": failed},
    )


jsonable = _jsonable
