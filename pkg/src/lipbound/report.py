"""Estimate reports and their canonical JSON form.

Canonical JSON is what the CLI prints under --json: sorted keys, no
whitespace, and no wall-clock field, so two runs with the same seed are
byte-identical. The pretty text rendering keeps the timing.
"""

import json
from dataclasses import dataclass, field

import numpy as np


def jsonify(value):
    """Convert numpy scalars/arrays and containers to plain JSON types."""
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [jsonify(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [jsonify(v) for v in value]
    if isinstance(value, dict):
        return {str(k): jsonify(v) for k, v in value.items()}
    return value


@dataclass
class BoundReport:
    """Outcome of one estimator run.

    direction is "upper" for certified upper bounds, "lower" for certified
    lower bounds, and "estimate" for heuristics that certify neither side.
    """

    method: str
    direction: str
    value: float
    per_layer: list | None = None
    per_factor: list | None = None
    params: dict = field(default_factory=dict)
    wall_time_s: float | None = None

    def __post_init__(self):
        if self.direction not in ("upper", "lower", "estimate"):
            raise ValueError(f"bad direction {self.direction!r}")
        if not self.value >= 0.0:
            raise ValueError("bound value must be non-negative")

    def to_dict(self, canonical: bool = False) -> dict:
        d = {
            "method": self.method,
            "direction": self.direction,
            "value": float(self.value),
        }
        if self.per_layer is not None:
            d["per_layer"] = jsonify(self.per_layer)
        if self.per_factor is not None:
            d["per_factor"] = jsonify(self.per_factor)
        if self.params:
            d["params"] = jsonify(self.params)
        if not canonical and self.wall_time_s is not None:
            d["wall_time_s"] = self.wall_time_s
        return d

    def to_json(self, canonical: bool = False) -> str:
        if canonical:
            return json.dumps(self.to_dict(canonical=True), sort_keys=True,
                              separators=(",", ":"))
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def pretty(self) -> str:
        lines = [
            f"method     : {self.method}",
            f"direction  : {self.direction}",
            f"value      : {self.value:.12g}",
        ]
        if self.per_layer is not None:
            vals = ", ".join(f"{float(v):.6g}" for v in self.per_layer)
            lines.append(f"per layer  : [{vals}]")
        if self.per_factor is not None:
            vals = ", ".join(f"{float(v):.6g}" for v in self.per_factor)
            lines.append(f"per factor : [{vals}]")
        for key in sorted(self.params):
            lines.append(f"{key:<11}: {jsonify(self.params[key])}")
        if self.wall_time_s is not None:
            lines.append(f"wall time  : {self.wall_time_s:.3f}s")
        return "\n".join(lines)
