"""Run configuration shared by fitting, sampling, and the CLI."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field


@dataclass
class RunConfig:
    """All tunable knobs with their defaults.

    Defaults follow the reference protocol: band threshold 5, 12 objects per
    frame shown with probability 0.5, depth windows of width 2 on a stride-1
    grid, 50 aspect-ratio bins.
    """

    drivable_classes: list[int] = field(default_factory=lambda: [1, 2, 3])
    tau: float = 5.0
    n_objects: int = 12
    show_prob: float = 0.5
    n_bins: int = 50
    window: float = 2.0
    stride: float = 1.0
    min_window_count: int = 10
    min_samples: int = 30
    min_visible_frac: float = 0.25
    max_attempts: int = 25
    seed: int = 0
    depth_scale: float = 1.0 / 256.0
    min_visible_composite: float = 0.2
    class_prior: str = "uniform"  # "uniform" or "frequency"
    augmentable_classes: list[int] | None = None

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def replace(self, **kwargs) -> "RunConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return dataclasses.replace(self, **kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)
