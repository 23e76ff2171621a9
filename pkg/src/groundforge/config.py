from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from typing import Any, Mapping

from .templates import Task

DEFAULT_BANNED_PHRASES = ("based on the paddleocr", "according to the ocr")


@dataclass(frozen=True)
class ForgeConfig:
    """Every knob a pipeline run depends on; its digest identifies the run."""

    seed: int = 0
    min_area: float = 0.05
    tasks: tuple[str, ...] = tuple(t.value for t in Task)
    detection_cap: int | None = 10  # distinct texts per document; None = all
    recognition_cap: int | None = 10
    line_tolerance: float = 0.5
    banned_phrases: tuple[str, ...] = DEFAULT_BANNED_PHRASES
    iou_floor: float = 0.3
    max_union_tokens: int = 4
    align_max_gap: int = 2
    align_max_norm_edit: float = 0.3
    model: str = "gpt-4"
    temperature: float = 0.7
    attempts: int = 3
    backoff: float = 1.0
    max_in_flight: int = 4
    workers: int = 1
    templates: str | None = None  # optional template extension file

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(Task(t).value for t in self.tasks))
        object.__setattr__(self, "banned_phrases", tuple(self.banned_phrases))
        if not 0 <= self.min_area <= 1:
            raise ValueError(f"min_area must lie in [0, 1], got {self.min_area}")
        if not 0 <= self.iou_floor <= 1:
            raise ValueError(f"iou_floor must lie in [0, 1], got {self.iou_floor}")
        for name in ("detection_cap", "recognition_cap"):
            cap = getattr(self, name)
            if cap is not None and cap < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("attempts", "max_in_flight", "workers", "max_union_tokens"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "ForgeConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
        kwargs = dict(values)
        for name in ("tasks", "banned_phrases"):
            if isinstance(kwargs.get(name), str):
                kwargs[name] = tuple(p.strip() for p in kwargs[name].split(",") if p.strip())
        return cls(**kwargs)

    def merged(self, overrides: Mapping[str, Any]) -> "ForgeConfig":
        values = self.to_dict()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return ForgeConfig.from_mapping(values)

    def to_dict(self) -> dict[str, Any]:
        values = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        values["tasks"] = list(self.tasks)
        values["banned_phrases"] = list(self.banned_phrases)
        return values

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def load_config(path: str) -> ForgeConfig:
    """Read a flat JSON object of ForgeConfig fields."""
    with open(path, encoding="utf-8") as fh:
        values = json.load(fh)
    if not isinstance(values, dict) or any(isinstance(v, dict) for v in values.values()):
        raise ValueError(f"{path}: config must be a flat JSON object")
    return ForgeConfig.from_mapping(values)
