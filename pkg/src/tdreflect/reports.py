"""Property reports: one row per checked inequality or residual."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if hasattr(v, "item"):
        return _clean(v.item())
    return v


@dataclass
class PropertyRow:
    check_name: str
    samples: int
    worst_violation: float
    passed: bool
    fitted_constants: dict = field(default_factory=dict)
    detail: str = ""

    def to_dict(self) -> dict:
        return _clean(asdict(self))


@dataclass
class PropertyReport:
    name: str
    rows: list = field(default_factory=list)

    def add(self, check_name, samples, worst_violation, passed, detail="", **fitted) -> PropertyRow:
        row = PropertyRow(check_name, int(samples), float(worst_violation), bool(passed), dict(fitted), detail)
        self.rows.append(row)
        return row

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def row(self, check_name: str) -> PropertyRow:
        for r in self.rows:
            if r.check_name == check_name:
                return r
        raise KeyError(check_name)

    def __contains__(self, check_name) -> bool:
        return any(r.check_name == check_name for r in self.rows)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "rows": [r.to_dict() for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def __str__(self) -> str:
        lines = [f"{self.name}:"]
        for r in self.rows:
            lines.append(f"  {'PASS' if r.passed else 'FAIL'}  {r.check_name:<28s} worst={r.worst_violation:.3e}  n={r.samples}")
        return "\n".join(lines)
