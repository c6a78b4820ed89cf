"""Naive reference implementations used to cross-check the engine.

Everything here is deliberately dumb: Python lists, full stable sorts,
per-coordinate loops.  Reductions run in the same left-to-right order the
engine documents, so outputs are comparable bit-for-bit, but no engine
algorithm code is shared; configuration dataclasses are consumed as data.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .prune import MODE_ALL, MODE_LAST, SalientSelector
from .schedule import KIND_ABSOLUTE, DropSchedule
from .vision import CompressionConfig


def _ranked(scores: Sequence[float], candidates: Sequence[int]) -> list[int]:
    return sorted(candidates, key=lambda i: (-scores[i], i))


def oracle_scores(a: list[list[float]]) -> list[float]:
    n = len(a)
    out = [0.0] * n
    for i in range(n):
        for j in range(n):
            out[j] += a[i][j]
    return out


def oracle_compress(
    x: list[list[float]], a: list[list[float]], cfg: CompressionConfig
) -> dict:
    n = len(x)
    s = oracle_scores(a)
    dominant = _ranked(s, range(n))[: cfg.k1]
    residual = [i for i in range(n) if i not in set(dominant)]
    centroids = _ranked(s, residual)[: cfg.k2]

    clusters: list[list[int]] = []
    pool = list(residual)
    for c in centroids:
        source = pool if cfg.disjoint else residual
        members = _ranked(a[c], source)[: cfg.w]
        clusters.append(members)
        if cfg.disjoint:
            pool = [i for i in pool if i not in set(members)]

    d = len(x[0])
    rows: list[list[float]] = [list(x[i]) for i in dominant]
    for members in clusters:
        merged = []
        for coord in range(d):
            acc = 0.0
            for midx in members:
                acc += x[midx][coord]
            merged.append(acc / len(members))
        rows.append(merged)

    covered = set()
    for members in clusters:
        covered.update(members)
    return {
        "out_tokens": np.array(rows, dtype=np.float64),
        "dominant": tuple(dominant),
        "centroids": tuple(centroids),
        "clusters": tuple(tuple(c) for c in clusters),
        "dropped": tuple(i for i in residual if i not in covered),
        "scores": s,
    }


def oracle_salient(attn_text: list[list[float]], selector: SalientSelector) -> list[int]:
    m = len(attn_text)
    if selector.mode == MODE_LAST:
        return [m - 1]
    if selector.mode == MODE_ALL:
        return list(range(m))
    start = 0 if selector.include_system else min(selector.system_prefix, m - 1)
    sums = oracle_scores(attn_text)
    eligible = list(range(start, m))
    chosen = set(_ranked(sums, eligible)[: min(selector.s, len(eligible))])
    chosen.add(m - 1)
    return sorted(chosen)


def oracle_retained_counts(schedule: DropSchedule, n0: int) -> list[int]:
    counts = []
    prev = n0
    for _, ratio in schedule.stages:
        base = n0 if schedule.kind == KIND_ABSOLUTE else prev
        counts.append(min(math.floor(ratio * base), prev))
        prev = counts[-1]
    return counts


def oracle_prune(
    n0: int,
    stage_attn: Sequence[tuple[list[list[float]], list[list[float]]]],
    schedule: DropSchedule,
    selector: SalientSelector,
) -> list[dict]:
    keeps = oracle_retained_counts(schedule, n0)
    retained = list(range(n0))
    stages = []
    for i, (boundary, _) in enumerate(schedule.stages):
        attn_text, attn_t2v = stage_attn[i]
        salient = oracle_salient(attn_text, selector)
        width = len(attn_t2v[0]) if attn_t2v else 0
        if width == len(retained):
            cols = list(range(width))
        else:
            cols = list(retained)
        scores = []
        for pos in range(len(retained)):
            acc = 0.0
            for r in salient:
                acc += attn_t2v[r][cols[pos]]
            scores.append(acc / len(salient))
        keep = min(keeps[i], len(retained))
        kept_positions = sorted(_ranked(scores, range(len(retained)))[:keep])
        retained = [retained[p] for p in kept_positions]
        stages.append(
            {
                "layer": boundary,
                "retained": tuple(retained),
                "salient": tuple(salient),
                "scores": list(scores),
            }
        )
    return stages


def oracle_per_layer_counts(schedule: DropSchedule, n0: int) -> list[int]:
    """Count at layer L = retained count after the boundaries strictly below L."""
    counts = oracle_retained_counts(schedule, n0)
    out = []
    for layer in range(1, schedule.total_layers + 1):
        below = sum(1 for b in schedule.boundaries if b < layer)
        out.append(n0 if below == 0 else counts[below - 1])
    return out


def oracle_average(schedule: DropSchedule, n0: int) -> float:
    per_layer = oracle_per_layer_counts(schedule, n0)
    return sum(per_layer) / schedule.total_layers


def oracle_flop_proxy(counts: Sequence[int], d_model: int, base_n0: int) -> float:
    num = 0
    for c in counts:
        num += c * c + c * d_model
    return num / (len(counts) * (base_n0 * base_n0 + base_n0 * d_model))


def oracle_plan(target: float, schedule: DropSchedule) -> int:
    n0 = 1
    while oracle_average(schedule, n0) < target - 0.5:
        n0 += 1
    return n0


def oracle_pipeline(
    entries: Mapping[str, np.ndarray],
    cc: CompressionConfig,
    schedule: DropSchedule,
    selector: SalientSelector,
) -> dict:
    x = np.asarray(entries["tokens"], dtype=np.float64).tolist()
    a = np.asarray(entries["attn_v2v"], dtype=np.float64).tolist()
    comp = oracle_compress(x, a, cfg=cc)
    n0 = cc.k1 + cc.k2
    stage_attn = []
    for i in range(len(schedule.stages)):
        stage_attn.append(
            (
                np.asarray(entries[f"attn_text_{i}"], dtype=np.float64).tolist(),
                np.asarray(entries[f"attn_t2v_{i}"], dtype=np.float64).tolist(),
            )
        )
    stages = oracle_prune(n0, stage_attn, schedule, selector)
    return {
        "compression": comp,
        "stages": stages,
        "final_retained": stages[-1]["retained"] if stages else tuple(range(n0)),
        "average": oracle_average(schedule, n0),
        "per_layer": oracle_per_layer_counts(schedule, n0),
    }
