"""Run configuration: one serializable record per pipeline run."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from dataclasses import field as _field
from pathlib import Path
from typing import Any, Mapping

from .fieldlab import DIFF_ORDER, GridSpec

try:  # Python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover
    import tomli as _toml

# keys that control execution only; they never enter a report
_RUNTIME_KEYS = ("threads", "report", "curves")


@dataclass
class RunConfig:
    field: dict = _field(default_factory=lambda: {"kind": "hopf_unit", "params": {}})
    grid: dict = _field(default_factory=lambda: {"half_width": 8.0, "nodes": 64})
    preimage_point: list = _field(default_factory=lambda: [1.0, 0.0, 0.0])
    lift_point: list = _field(default_factory=lambda: [0.0, 0.0, 1.0])
    diff_order: int = DIFF_ORDER
    linking_backend: str = "crossing"
    seed: int = 0
    tolerance: float | None = None
    boundary_tolerance: float = 0.6
    max_boundary_fraction: float = 0.01
    pushoff_factor: float = 2.0
    winding_samples: int = 128
    patches: int = 3
    threads: int | None = None
    report: str | None = None
    curves: str | None = None

    def __post_init__(self):
        if self.linking_backend not in ("crossing", "solid_angle", "quadrature"):
            raise ValueError(f"unknown linking backend {self.linking_backend!r}")
        if self.diff_order not in (2, 4):
            raise ValueError("diff_order must be 2 or 4")
        self.grid_spec()

    def grid_spec(self) -> GridSpec:
        g = self.grid
        if "box_min" in g:
            return GridSpec(tuple(g["box_min"]), tuple(g["box_max"]), tuple(_triple(g["nodes"])))
        hw = float(g.get("half_width", 8.0))
        return GridSpec((-hw,) * 3, (hw,) * 3, tuple(_triple(g.get("nodes", 64))))

    def provenance(self) -> dict:
        """Everything that determines the numbers, without runtime knobs."""
        d = asdict(self)
        for k in _RUNTIME_KEYS:
            d.pop(k)
        return d

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, d: Mapping[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**dict(d))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RunConfig":
        p = Path(path)
        text = p.read_text()
        if p.suffix.lower() == ".toml":
            return cls.from_mapping(_toml.loads(text))
        return cls.from_mapping(json.loads(text))

    def updated(self, **overrides) -> "RunConfig":
        d = self.to_dict()
        d.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_mapping(d)


def _triple(v):
    if isinstance(v, (int, float)):
        return [int(v)] * 3
    return [int(x) for x in v]
