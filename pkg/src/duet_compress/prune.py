"""Stage-wise visual token pruning driven by text-to-visual attention.

At each schedule boundary a set of salient text rows ranks the surviving
visual tokens by their mean received attention; the lowest-ranked tokens
are dropped down to the schedule's retained count.  The last text token
(the generation sink) is always salient regardless of selector mode, and
survivors are kept in ascending original order between stages.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, UsageError
from .schedule import DropSchedule, retained_counts
from .vision import _check_attention, top_k

MODE_LAST = "last"
MODE_ALL = "all"
MODE_TOP = "top"


@dataclass(frozen=True)
class SalientSelector:
    """Which text rows vote on visual-token saliency.

    mode "last" uses only the sink token, "all" uses every text token, and
    "top" uses the s text tokens with highest received text attention plus
    the sink.  The first system_prefix text positions are excluded from
    "top" ranking unless include_system is set (the sink is always kept).
    """

    mode: str = MODE_LAST
    s: int = 0
    system_prefix: int = 0
    include_system: bool = False

    def __post_init__(self) -> None:
        if self.mode not in (MODE_LAST, MODE_ALL, MODE_TOP):
            raise ConfigError(f"unknown selector mode {self.mode!r}")
        if self.s < 0:
            raise ConfigError(f"selector s must be >= 0, got {self.s}")
        if self.system_prefix < 0:
            raise ConfigError(f"system_prefix must be >= 0, got {self.system_prefix}")


def parse_selector(text: str) -> SalientSelector:
    """Parse CLI selector syntax: "last", "all", or "topk:<s>"."""
    if text == "last":
        return SalientSelector(MODE_LAST)
    if text == "all":
        return SalientSelector(MODE_ALL)
    if text.startswith("topk:"):
        try:
            s = int(text.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"selector {text!r}: expected topk:<int>")
        if s < 0:
            raise UsageError(f"selector {text!r}: s must be >= 0")
        return SalientSelector(MODE_TOP, s=s)
    raise UsageError(f"unknown selector {text!r}; use last, all, or topk:<s>")


def select_salient(attn_text: np.ndarray, selector: SalientSelector) -> tuple[int, ...]:
    """Salient text row indices, ascending.  Always contains the sink m-1."""
    attn_text = _check_attention(attn_text, "attn_text")
    m, cols = attn_text.shape
    if m != cols:
        raise ConfigError(f"attn_text must be square, got {attn_text.shape}")
    if m < 1:
        raise ConfigError("attn_text needs at least one text token")
    sink = m - 1
    if selector.mode == MODE_LAST:
        return (sink,)
    if selector.mode == MODE_ALL:
        return tuple(range(m))
    # "top": rank text tokens by received attention (column sums).
    start = 0 if selector.include_system else min(selector.system_prefix, sink)
    eligible = list(range(start, m))
    acc = np.zeros(m, dtype=np.float64)
    for i in range(m):
        acc += attn_text[i]
    take = min(selector.s, len(eligible))
    chosen = set(top_k(acc, take, restrict=eligible))
    chosen.add(sink)
    return tuple(sorted(chosen))


def t2v_scores(attn_sub: np.ndarray) -> np.ndarray:
    """Mean over salient rows of each visual column, rows accumulated in order."""
    attn_sub = _check_attention(attn_sub, "attn_t2v")
    rows, cols = attn_sub.shape
    if rows < 1:
        raise ConfigError("t2v scoring needs at least one salient row")
    acc = np.zeros(cols, dtype=np.float64)
    for i in range(rows):
        acc += attn_sub[i]
    return acc / rows


@dataclass(frozen=True)
class StageState:
    """Snapshot after one stage: which original x_out positions survive."""

    layer: int
    retained: tuple[int, ...]            # ascending positions into x_out
    salient: tuple[int, ...]             # text rows that voted
    scores: np.ndarray                   # pre-drop score per previous survivor
    heat: np.ndarray                     # (len(salient), previous count) slice

    @property
    def count(self) -> int:
        return len(self.retained)


@dataclass(frozen=True)
class PruneTrace:
    n0: int
    stages: tuple[StageState, ...]

    @property
    def final_retained(self) -> tuple[int, ...]:
        return self.stages[-1].retained if self.stages else tuple(range(self.n0))

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(st.count for st in self.stages)


def drop_stage(
    retained: Sequence[int], scores: np.ndarray, keep: int
) -> tuple[int, ...]:
    """Keep the top-`keep` positions by score and restore ascending order."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(retained),):
        raise ConfigError(
            f"scores length {scores.shape} does not match {len(retained)} survivors"
        )
    if not 0 <= keep <= len(retained):
        raise ConfigError(f"keep={keep} outside 0..{len(retained)}")
    kept_positions = sorted(top_k(scores, keep))
    return tuple(retained[p] for p in kept_positions)


def _stage_columns(
    attn_t2v: np.ndarray, retained: Sequence[int], n0: int
) -> np.ndarray:
    """Columns of attn_t2v for the current survivors.

    Width may equal the current survivor count (already aligned) or be at
    least n0 (full width; sliced at survivor positions).
    """
    cols = attn_t2v.shape[1]
    if cols == len(retained):
        return attn_t2v
    if cols >= n0:
        return attn_t2v[:, list(retained)]
    raise ConfigError(
        f"attn_t2v has {cols} columns; expected {len(retained)} (current) "
        f"or >= {n0} (full width)"
    )


def run_prune(
    n0: int,
    stage_attn: Sequence[tuple[np.ndarray, np.ndarray]],
    schedule: DropSchedule,
    selector: SalientSelector,
) -> PruneTrace:
    """Apply every schedule stage to n0 entry tokens.

    stage_attn holds one (attn_text, attn_t2v) pair per stage.  Counts are
    non-increasing by construction; a stage with keep=0 empties the set and
    later stages pass through.
    """
    if n0 < 1:
        raise ConfigError(f"n0 must be >= 1, got {n0}")
    if len(stage_attn) != len(schedule.stages):
        raise ConfigError(
            f"schedule has {len(schedule.stages)} stages but "
            f"{len(stage_attn)} attention pairs were provided"
        )
    keeps = retained_counts(schedule, n0)
    retained = tuple(range(n0))
    states: list[StageState] = []
    for i, (boundary, _) in enumerate(schedule.stages):
        attn_text = _check_attention(np.asarray(stage_attn[i][0]), "attn_text")
        attn_t2v = _check_attention(np.asarray(stage_attn[i][1]), "attn_t2v")
        salient = select_salient(attn_text, selector)
        if attn_t2v.shape[0] != attn_text.shape[0]:
            raise ConfigError(
                f"stage {i}: attn_t2v has {attn_t2v.shape[0]} rows but "
                f"attn_text has {attn_text.shape[0]} text tokens"
            )
        sub = _stage_columns(attn_t2v, retained, n0)[list(salient), :]
        scores = t2v_scores(sub)  # zero columns yield an empty score vector
        keep = min(keeps[i], len(retained))
        new_retained = drop_stage(retained, scores, keep)
        states.append(
            StageState(
                layer=boundary,
                retained=new_retained,
                salient=salient,
                scores=scores,
                heat=sub,
            )
        )
        retained = new_retained
    return PruneTrace(n0=n0, stages=tuple(states))


def trace_entries(trace: PruneTrace) -> dict[str, np.ndarray]:
    """Archive entries for a prune trace; empty survivor sets are omitted."""
    out: dict[str, np.ndarray] = {
        "trajectory": np.array([trace.n0, *trace.counts], dtype=np.int64),
    }
    for i, st in enumerate(trace.stages):
        if st.retained:
            out[f"survivors_{i}"] = np.array(st.retained, dtype=np.int64)
        if st.scores.size:
            out[f"scores_{i}"] = st.scores
    return out
