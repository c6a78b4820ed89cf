"""Token-budget arithmetic over a layer stack.

Layers 1..b1 carry the n0 entry tokens; layers b_i+1..b_{i+1} carry the
count retained after stage i.  The average over all layers is the figure
reported as "Avg" by downstream tables, and the FLOP proxy compares
sum(c^2 + c*d_model) against running every layer at a base count.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .schedule import DropSchedule, format_schedule, retained_counts

DEFAULT_D_MODEL = 4096


@dataclass(frozen=True)
class BudgetReport:
    n0: int
    total_layers: int
    schedule_text: str
    per_layer: tuple[int, ...]
    average: float
    base_tokens: int
    reduction_pct: float
    d_model: int
    flop_proxy: float


def per_layer_counts(n0: int, schedule: DropSchedule) -> tuple[int, ...]:
    """Token count carried by each of layers 1..total_layers."""
    if n0 < 1:
        raise ConfigError(f"n0 must be >= 1, got {n0}")
    counts = retained_counts(schedule, n0)
    out = []
    current = n0
    stage = 0
    boundaries = schedule.boundaries
    for layer in range(1, schedule.total_layers + 1):
        out.append(current)
        # The drop at boundary b takes effect after layer b.
        while stage < len(boundaries) and layer == boundaries[stage]:
            current = counts[stage]
            stage += 1
    return tuple(out)


def flop_proxy(
    counts: tuple[int, ...], d_model: int, base_n0: int
) -> float:
    """Relative cost: sum(c^2 + c*d) over layers vs. a constant base_n0."""
    if d_model < 1:
        raise ConfigError(f"d_model must be >= 1, got {d_model}")
    if base_n0 < 1:
        raise ConfigError(f"base_n0 must be >= 1, got {base_n0}")
    num = 0
    for c in counts:
        num += c * c + c * d_model
    den = len(counts) * (base_n0 * base_n0 + base_n0 * d_model)
    return num / den


def average_tokens(
    n0: int,
    schedule: DropSchedule,
    *,
    base_tokens: int | None = None,
    d_model: int = DEFAULT_D_MODEL,
) -> BudgetReport:
    """Full budget report for n0 entry tokens under a schedule.

    base_tokens defaults to n0; pass the uncompressed token count to get
    reduction figures against the original stream.
    """
    counts = per_layer_counts(n0, schedule)
    base = n0 if base_tokens is None else base_tokens
    if base < 1:
        raise ConfigError(f"base_tokens must be >= 1, got {base}")
    average = sum(counts) / schedule.total_layers
    return BudgetReport(
        n0=n0,
        total_layers=schedule.total_layers,
        schedule_text=format_schedule(schedule),
        per_layer=counts,
        average=average,
        base_tokens=base,
        reduction_pct=100.0 * (1.0 - average / base),
        d_model=d_model,
        flop_proxy=flop_proxy(counts, d_model, base),
    )


def plan_entry_tokens(target: float, schedule: DropSchedule) -> int:
    """Smallest n0 whose per-layer average is within 0.5 below the target.

    The average is non-decreasing in n0, so binary search is exact.
    """
    if target < 0:
        raise ConfigError(f"target must be >= 0, got {target}")

    def avg(n0: int) -> float:
        return sum(per_layer_counts(n0, schedule)) / schedule.total_layers

    lo, hi = 1, 1
    while avg(hi) < target - 0.5:
        hi *= 2
        if hi > 2**24:
            raise ConfigError(f"target {target} unreachable under this schedule")
    while lo < hi:
        mid = (lo + hi) // 2
        if avg(mid) >= target - 0.5:
            hi = mid
        else:
            lo = mid + 1
    return lo


def budget_records(report: BudgetReport) -> list[dict]:
    """JSON-serializable rows: one per layer plus a trailing summary."""
    rows: list[dict] = [
        {"record": "layer", "layer": i + 1, "tokens": c}
        for i, c in enumerate(report.per_layer)
    ]
    rows.append(
        {
            "record": "summary",
            "n0": report.n0,
            "layers": report.total_layers,
            "schedule": report.schedule_text,
            "average": report.average,
            "base_tokens": report.base_tokens,
            "reduction_pct": report.reduction_pct,
            "d_model": report.d_model,
            "flop_proxy": report.flop_proxy,
        }
    )
    return rows
