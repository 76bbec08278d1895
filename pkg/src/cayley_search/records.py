"""Self-describing result records shared by ``search`` and ``experiments``."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any


@dataclass
class ExperimentRecord:
    """Outcome of one search run plus everything needed to repeat it.

    ``spec`` holds the graph document, the schedule and the seed.  ``stages``
    lists per-stage ``gamma``, ``duration``, ``eigenpair`` and ``gap``;
    ``diagnostics`` carries the evolution space and optional population
    traces.
    """

    spec: dict[str, Any]
    success: float
    total_time: float
    gaps: list[float] = field(default_factory=list)
    expected_time: float = math.inf
    stages: list[dict[str, Any]] = field(default_factory=list)
    diagnostics: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not -1e-12 <= self.success <= 1 + 1e-12:
            raise ValueError(f"success probability out of range: {self.success}")
        if self.total_time < 0:
            raise ValueError("total time must be non-negative")

    def row(self) -> dict[str, Any]:
        """Flat CSV row; nested fields are JSON-encoded."""
        out = {
            "success": self.success,
            "total_time": self.total_time,
            "expected_time": self.expected_time,
            "n_stages": len(self.stages),
            "gammas": json.dumps([s["gamma"] for s in self.stages]),
            "durations": json.dumps([s["duration"] for s in self.stages]),
            "gaps": json.dumps(self.gaps),
            "space": self.diagnostics.get("space", ""),
            "dim": self.diagnostics.get("dim", ""),
            "seed": "" if self.seed is None else self.seed,
        }
        out.update(self.extra)
        out["spec"] = json.dumps(self.spec, sort_keys=True)
        return out

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=_jsonable, **kw)


def _jsonable(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    if hasattr(x, "item"):
        return x.item()
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")
