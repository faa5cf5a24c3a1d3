"""The per-run metrics bundle and its JSON schema."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional


@dataclass
class EfficiencyRecord:
    params: int
    macs: int
    flops: int
    latency_s: float
    size_mb: float

    def __post_init__(self):
        if self.params <= 0:
            raise ValueError("params must be positive")


@dataclass
class MetricsReport:
    dice: dict[str, float] = field(default_factory=dict)  # wt / tc / et / avg
    hausdorff: dict[str, Optional[float]] = field(default_factory=dict)
    hausdorff_percentile: float = 95.0
    accuracy: Optional[float] = None
    sensitivity: Optional[float] = None
    specificity: Optional[float] = None
    map_sweep: Optional[float] = None
    map_50: Optional[float] = None
    mar_sweep: Optional[float] = None
    mar_50: Optional[float] = None
    efficiency: Optional[EfficiencyRecord] = None
    num_cases: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MetricsReport":
        data = json.loads(Path(path).read_text())
        problems = validate_report(data)
        if problems:
            raise ValueError(f"invalid metrics report: {problems}")
        eff = data.pop("efficiency", None)
        report = cls(**data)
        if eff is not None:
            report.efficiency = EfficiencyRecord(**eff)
        return report


_RATE_KEYS = ("accuracy", "sensitivity", "specificity", "map_sweep", "map_50", "mar_sweep", "mar_50")


def validate_report(data: dict) -> list[str]:
    """Schema check for a serialized report; returns one message per problem."""
    problems = []
    for key in ("dice", "hausdorff", "num_cases", "hausdorff_percentile"):
        if key not in data:
            problems.append(f"missing key {key!r}")
    dice = data.get("dice", {})
    if not isinstance(dice, dict):
        problems.append("dice must be a mapping")
    else:
        for region, value in dice.items():
            if value is not None and not 0.0 <= value <= 1.0:
                problems.append(f"dice[{region}]={value} outside [0, 1]")
    hd = data.get("hausdorff", {})
    if isinstance(hd, dict):
        for region, value in hd.items():
            if value is not None and value < 0:
                problems.append(f"hausdorff[{region}]={value} negative")
    for key in _RATE_KEYS:
        value = data.get(key)
        if value is not None and not 0.0 <= value <= 1.0:
            problems.append(f"{key}={value} outside [0, 1]")
    eff = data.get("efficiency")
    if eff is not None:
        for key in ("params", "macs", "flops", "latency_s", "size_mb"):
            if key not in eff:
                problems.append(f"efficiency missing {key!r}")
        if eff.get("params", 1) <= 0:
            problems.append("efficiency params must be positive")
    return problems
