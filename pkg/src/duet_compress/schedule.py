"""Layer-boundary drop schedules.

A schedule is an ordered list of (boundary, ratio) stages over a stack of
total_layers decoder layers.  After layer `boundary` the token count becomes:

    absolute:        floor(ratio * n0), clamped so counts never increase
    multiplicative:  floor(ratio * previous_count)

Ratios are IEEE doubles and the floor is taken on the double product, so
parsing the same string always yields the same counts on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, UsageError

KIND_ABSOLUTE = "absolute"
KIND_MULTIPLICATIVE = "multiplicative"


@dataclass(frozen=True)
class DropSchedule:
    stages: tuple[tuple[int, float], ...]
    total_layers: int = 32
    kind: str = KIND_ABSOLUTE

    def __post_init__(self) -> None:
        if self.kind not in (KIND_ABSOLUTE, KIND_MULTIPLICATIVE):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.total_layers < 1:
            raise ConfigError(f"total_layers must be >= 1, got {self.total_layers}")
        if not self.stages:
            raise ConfigError("schedule needs at least one stage")
        prev = 0
        for boundary, ratio in self.stages:
            if boundary <= prev:
                raise ConfigError(
                    f"stage boundaries must be strictly increasing, got {self.stages}"
                )
            if boundary > self.total_layers:
                raise ConfigError(
                    f"boundary {boundary} exceeds total_layers {self.total_layers}"
                )
            if not (0.0 <= ratio <= 1.0) or math.isnan(ratio):
                raise ConfigError(f"ratios must lie in [0, 1], got {ratio}")
            prev = boundary

    @property
    def boundaries(self) -> tuple[int, ...]:
        return tuple(b for b, _ in self.stages)

    @property
    def ratios(self) -> tuple[float, ...]:
        return tuple(r for _, r in self.stages)


def parse_schedule(
    text: str, *, total_layers: int = 32, kind: str = KIND_ABSOLUTE
) -> DropSchedule:
    """Parse "16:0.5,24:0" into a DropSchedule."""
    stages = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise UsageError(f"empty stage in schedule {text!r}")
        try:
            boundary_s, ratio_s = part.split(":")
            stages.append((int(boundary_s), float(ratio_s)))
        except ValueError:
            raise UsageError(f"stage must look like LAYER:RATIO, got {part!r}")
    try:
        return DropSchedule(tuple(stages), total_layers=total_layers, kind=kind)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def format_schedule(schedule: DropSchedule) -> str:
    return ",".join(f"{b}:{r:g}" for b, r in schedule.stages)


def retained_counts(schedule: DropSchedule, n0: int) -> tuple[int, ...]:
    """Token count after each stage, starting from n0 entry tokens."""
    if n0 < 0:
        raise ConfigError(f"n0 must be >= 0, got {n0}")
    counts = []
    prev = n0
    for _, ratio in schedule.stages:
        base = n0 if schedule.kind == KIND_ABSOLUTE else prev
        count = min(math.floor(ratio * base), prev)
        counts.append(count)
        prev = count
    return tuple(counts)


def retained_count(schedule: DropSchedule, stage_index: int, n0: int) -> int:
    counts = retained_counts(schedule, n0)
    if not 0 <= stage_index < len(counts):
        raise ConfigError(f"stage index {stage_index} outside schedule")
    return counts[stage_index]
