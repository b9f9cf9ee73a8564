"""Run configuration: thresholds, costs, bands, seeds; loadable from YAML/JSON."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml


@dataclass
class SplitConfig:
    target_fraction: float = 0.8
    tolerance: float = 0.01
    max_attempts: int = 10_000


@dataclass
class SimulatorConfig:
    accuracy: float = 1.0
    cant_solve_rate: float = 0.0
    box_jitter: float = 0.02
    duration_sigma: float = 0.35


@dataclass
class ToolkitConfig:
    seed: int = 0
    acceptance_threshold: float = 0.5
    ambiguity_band: tuple[float, float] = (0.2, 0.8)
    proposal_min_score: float = 0.01
    detector_eval_score: float = 0.3
    nms_iou: float = 0.5
    dontcare_iou: float = 0.5
    duplicate_candidate_iou: float = 0.25
    lease_seconds: float = 600.0
    split: SplitConfig = field(default_factory=SplitConfig)
    simulator: SimulatorConfig = field(default_factory=SimulatorConfig)

    @classmethod
    def load(cls, path: str | Path) -> "ToolkitConfig":
        data = yaml.safe_load(Path(path).read_text()) or {}
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "ToolkitConfig":
        kwargs = {}
        names = {f.name for f in fields(cls)}
        for key, value in data.items():
            if key not in names:
                raise KeyError(f"unknown config key {key!r}")
            if key == "split":
                value = SplitConfig(**value)
            elif key == "simulator":
                value = SimulatorConfig(**value)
            elif key == "ambiguity_band":
                value = tuple(value)
            kwargs[key] = value
        return cls(**kwargs)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(asdict(self), sort_keys=False))
