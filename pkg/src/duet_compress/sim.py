"""Synthetic attention workloads and the end-to-end pipeline driver.

The generator is a fixture factory: it fabricates token features plus
visual and text attention maps with planted hotspot tokens whose column
mass provably dominates every competitor, so selection behavior can be
asserted exactly.  All randomness comes from a counter-based splitmix64
stream and all post-processing uses order-defined arithmetic, so a given
config produces byte-identical archives on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .budget import DEFAULT_D_MODEL, BudgetReport, average_tokens
from .errors import ConfigError, EngineError, UsageError
from .prune import PruneTrace, SalientSelector, run_prune, trace_entries
from .schedule import (
    KIND_MULTIPLICATIVE,
    DropSchedule,
    parse_schedule,
)
from .tensorio import archive_get
from .vision import (
    CompressionConfig,
    CompressionResult,
    compress_from_archive,
    result_entries,
)

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class Prng:
    """Counter-based splitmix64; draw k mixes seed + (k+1)*golden.

    Doubles are (z >> 11) * 2**-53, uniform in [0, 1).  Pure integer
    mixing plus one exact float scaling keeps the stream bit-identical
    across platforms and numpy versions.
    """

    def __init__(self, seed: int) -> None:
        self.seed = seed & _MASK
        self.counter = 0

    def doubles(self, n: int) -> np.ndarray:
        ks = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        z = (np.uint64(self.seed) + ks * np.uint64(_GOLDEN)) & np.uint64(_MASK)
        z ^= z >> np.uint64(30)
        z *= np.uint64(_MIX1)
        z ^= z >> np.uint64(27)
        z *= np.uint64(_MIX2)
        z ^= z >> np.uint64(31)
        return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def double(self) -> float:
        return float(self.doubles(1)[0])


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    n_tokens: int = 64
    d: int = 16
    m_text: int = 8
    n_stages: int = 2
    hotspot_count: int = 1
    noise_scale: float = 0.05

    def validate(self) -> None:
        if self.n_tokens < 1 or self.d < 1 or self.m_text < 1:
            raise ConfigError("n_tokens, d, and m_text must all be >= 1")
        if self.n_stages < 1:
            raise ConfigError(f"n_stages must be >= 1, got {self.n_stages}")
        if not 0 <= self.hotspot_count <= self.n_tokens:
            raise ConfigError(
                f"hotspot_count must lie in 0..{self.n_tokens}, "
                f"got {self.hotspot_count}"
            )
        if not 0.0 <= self.noise_scale < 1e6:
            raise ConfigError(f"noise_scale must be >= 0, got {self.noise_scale}")


def _normalize_rows(weights: np.ndarray) -> np.ndarray:
    """Divide each row by its left-to-right sequential sum."""
    rows, cols = weights.shape
    acc = np.zeros(rows, dtype=np.float64)
    for j in range(cols):
        acc += weights[:, j]
    return weights / acc[:, None]


def _hotspot_indices(rng: Prng, n: int, count: int) -> tuple[int, ...]:
    """count distinct token indices via rejection sampling on the stream."""
    chosen: list[int] = []
    seen: set[int] = set()
    while len(chosen) < count:
        idx = int(rng.double() * n)
        if idx not in seen:
            seen.add(idx)
            chosen.append(idx)
    return tuple(chosen)


def generate(cfg: SimConfig) -> dict[str, np.ndarray]:
    """Fabricate a pipeline input archive.

    Entries, in order: tokens (n x d in [-1, 1)), attn_v2v (n x n row
    normalized), then attn_text_<i> (m x m) and attn_t2v_<i> (m x n, full
    width) per stage.  Hotspot tokens get a multiplicative column boost of
    1 + B with B = (1 + noise)^2 + 2, which makes their column sums strictly
    dominate in every row; with noise 0 and no hotspots all rows are exactly
    uniform.  The t2v boost lands on columns 0..h-1, the output positions the
    hotspots occupy whenever compression keeps k1 >= hotspot_count.
    """
    cfg.validate()
    rng = Prng(cfg.seed)
    n, d, m = cfg.n_tokens, cfg.d, cfg.m_text
    hotspots = _hotspot_indices(rng, n, cfg.hotspot_count)
    boost = 1.0 + ((1.0 + cfg.noise_scale) * (1.0 + cfg.noise_scale) + 2.0)

    tokens = 2.0 * rng.doubles(n * d).reshape(n, d) - 1.0

    v2v = 1.0 + cfg.noise_scale * rng.doubles(n * n).reshape(n, n)
    for h in hotspots:
        v2v[:, h] *= boost
    entries: dict[str, np.ndarray] = {
        "tokens": tokens,
        "attn_v2v": _normalize_rows(v2v),
    }

    for i in range(cfg.n_stages):
        text = 1.0 + cfg.noise_scale * rng.doubles(m * m).reshape(m, m)
        entries[f"attn_text_{i}"] = _normalize_rows(text)
        t2v = 1.0 + cfg.noise_scale * rng.doubles(m * n).reshape(m, n)
        t2v[:, : cfg.hotspot_count] *= boost
        entries[f"attn_t2v_{i}"] = _normalize_rows(t2v)
    return entries


@dataclass(frozen=True)
class PipelineTrace:
    compression: CompressionResult
    prune: PruneTrace
    budget: BudgetReport

    @property
    def final_retained(self) -> tuple[int, ...]:
        return self.prune.final_retained


def run_pipeline(
    entries: Mapping[str, np.ndarray],
    cc: CompressionConfig,
    schedule: DropSchedule,
    selector: SalientSelector,
    *,
    base_tokens: int | None = None,
    d_model: int = DEFAULT_D_MODEL,
) -> PipelineTrace:
    """Compress, prune each stage, and report the budget.

    base_tokens defaults to the uncompressed token count so the reported
    reduction is against the original stream.
    """
    result = compress_from_archive(entries, cc)
    n0 = cc.k1 + cc.k2
    stage_attn = [
        (
            archive_get(entries, f"attn_text_{i}"),
            archive_get(entries, f"attn_t2v_{i}"),
        )
        for i in range(len(schedule.stages))
    ]
    trace = run_prune(n0, stage_attn, schedule, selector)
    n_original = archive_get(entries, "tokens").shape[0]
    report = average_tokens(
        n0,
        schedule,
        base_tokens=n_original if base_tokens is None else base_tokens,
        d_model=d_model,
    )
    return PipelineTrace(compression=result, prune=trace, budget=report)


def pipeline_entries(
    trace: PipelineTrace, cc: CompressionConfig
) -> dict[str, np.ndarray]:
    out = result_entries(trace.compression, cc)
    out.update(trace_entries(trace.prune))
    return out


SWEEP_AXES = ("k1", "k2", "w", "lambda", "stage_layout")
SWEEP_METRICS = ("avg_tokens", "drop_count", "survivor_overlap_with_oracle")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple[str, ...]
    cc: CompressionConfig
    schedule: DropSchedule
    selector: SalientSelector
    metric: str = "avg_tokens"

    def __post_init__(self) -> None:
        if self.axis not in SWEEP_AXES:
            raise UsageError(f"unknown sweep axis {self.axis!r}; use {SWEEP_AXES}")
        if self.metric not in SWEEP_METRICS:
            raise UsageError(f"unknown metric {self.metric!r}; use {SWEEP_METRICS}")
        if not self.values:
            raise UsageError("sweep needs at least one value")


@dataclass(frozen=True)
class SweepRow:
    value: str
    metric: float | None
    error: str = ""


def _row_config(
    spec: SweepSpec, value: str
) -> tuple[CompressionConfig, DropSchedule]:
    """Materialize the config for one sweep point.

    k1/k2 hold the total k1 + k2 fixed and move the split; w swaps the
    cluster width; lambda rebuilds the schedule as per-stage multiplicative
    retention 1 - lambda on the same boundaries; stage_layout parses a whole
    schedule string.
    """
    cc, schedule = spec.cc, spec.schedule
    if spec.axis in ("k1", "k2", "w"):
        try:
            v = int(value)
        except ValueError:
            raise UsageError(f"{spec.axis} sweep value must be an integer: {value!r}")
        total = cc.k1 + cc.k2
        if spec.axis == "k1":
            cc = replace(cc, k1=v, k2=total - v)
        elif spec.axis == "k2":
            cc = replace(cc, k1=total - v, k2=v)
        else:
            cc = replace(cc, w=v)
        if cc.k1 < 0 or cc.k2 < 0:
            raise ConfigError(f"{spec.axis}={v} leaves a negative split of {total}")
    elif spec.axis == "lambda":
        try:
            lam = float(value)
        except ValueError:
            raise UsageError(f"lambda sweep value must be a float: {value!r}")
        if not 0.0 <= lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
        schedule = DropSchedule(
            tuple((b, 1.0 - lam) for b in schedule.boundaries),
            total_layers=schedule.total_layers,
            kind=KIND_MULTIPLICATIVE,
        )
    else:  # stage_layout
        schedule = parse_schedule(
            value, total_layers=spec.schedule.total_layers, kind=spec.schedule.kind
        )
    return cc, schedule


def _overlap_with_oracle(
    entries: Mapping[str, np.ndarray],
    trace: PipelineTrace,
    cc: CompressionConfig,
    schedule: DropSchedule,
    selector: SalientSelector,
) -> float:
    from .oracle import oracle_pipeline  # local import keeps oracle sim-free

    reference = oracle_pipeline(entries, cc, schedule, selector)
    ours = set(trace.final_retained)
    theirs = set(reference["final_retained"])
    if not ours and not theirs:
        return 1.0
    return len(ours & theirs) / max(1, len(theirs))


def run_sweep(
    entries: Mapping[str, np.ndarray], spec: SweepSpec
) -> list[SweepRow]:
    """Evaluate the metric at every sweep point; failures become row errors."""
    rows: list[SweepRow] = []
    for value in spec.values:
        try:
            cc, schedule = _row_config(spec, value)
            trace = run_pipeline(entries, cc, schedule, spec.selector)
            if spec.metric == "avg_tokens":
                metric = trace.budget.average
            elif spec.metric == "drop_count":
                metric = float(len(trace.compression.dropped))
            else:
                metric = _overlap_with_oracle(
                    entries, trace, cc, schedule, spec.selector
                )
            rows.append(SweepRow(value=value, metric=metric))
        except EngineError as exc:
            rows.append(SweepRow(value=value, metric=None, error=str(exc)))
    return rows
