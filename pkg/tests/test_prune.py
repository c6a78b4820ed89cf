"""Stage-wise pruning tests: selectors, scoring, schedules, frozen traces."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duet_compress import (
    ConfigError,
    DropSchedule,
    SalientSelector,
    UsageError,
    drop_stage,
    parse_schedule,
    parse_selector,
    retained_count,
    retained_counts,
    run_prune,
    select_salient,
    t2v_scores,
    trace_entries,
)
from duet_compress.oracle import oracle_prune

# Four entry tokens, two stages; expected survivors were computed with the
# naive reference implementation and frozen.
SCHED_4 = DropSchedule(((1, 0.5), (2, 0.25)), total_layers=4)
T0 = np.array([[0.6, 0.4], [0.5, 0.5]])
V0 = np.array([[0.1, 0.2, 0.3, 0.4], [0.4, 0.1, 0.3, 0.2]])
T1 = np.array([[0.7, 0.3], [0.2, 0.8]])
V1 = np.array([[0.5, 0.1, 0.2, 0.2], [0.1, 0.9, 0.25, 0.3]])


def test_parse_selector():
    assert parse_selector("last").mode == "last"
    assert parse_selector("all").mode == "all"
    sel = parse_selector("topk:8")
    assert sel.mode == "top" and sel.s == 8
    for bad in ("topk:x", "topk:-1", "first", "topk"):
        with pytest.raises(UsageError):
            parse_selector(bad)


def test_select_salient_example():
    # column sums [0.1, 0.9, 0.3, 0.2]; top-1 is token 1, sink 3 joins
    attn = np.zeros((4, 4))
    attn[0] = [0.1, 0.9, 0.3, 0.2]
    assert select_salient(attn, SalientSelector("top", s=1)) == (1, 3)
    assert select_salient(attn, SalientSelector("last")) == (3,)
    assert select_salient(attn, SalientSelector("all")) == (0, 1, 2, 3)


def test_select_salient_sink_always_present():
    rng = np.random.default_rng(5)
    for _ in range(25):
        m = int(rng.integers(1, 9))
        attn = rng.random((m, m))
        for sel in (
            SalientSelector("last"),
            SalientSelector("all"),
            SalientSelector("top", s=int(rng.integers(0, m + 2))),
        ):
            salient = select_salient(attn, sel)
            assert m - 1 in salient
            assert list(salient) == sorted(set(salient))


def test_select_salient_system_prefix():
    attn = np.zeros((5, 5))
    attn[0] = [0.9, 0.8, 0.1, 0.2, 0.1]  # prefix columns carry the mass
    sel = SalientSelector("top", s=2, system_prefix=2)
    assert select_salient(attn, sel) == (2, 3, 4)
    sel_inc = SalientSelector("top", s=2, system_prefix=2, include_system=True)
    assert select_salient(attn, sel_inc) == (0, 1, 4)


def test_select_salient_validation():
    with pytest.raises(ConfigError):
        select_salient(np.zeros((2, 3)), SalientSelector("last"))
    with pytest.raises(ConfigError):
        SalientSelector("sink")


def test_t2v_scores_example():
    attn = np.array([[0.2, 0.8], [0.6, 0.4]])
    assert np.allclose(t2v_scores(attn), [0.4, 0.6])
    with pytest.raises(ConfigError):
        t2v_scores(np.zeros((0, 3)))
    with pytest.raises(ConfigError):
        t2v_scores(np.array([[0.1, -0.1]]))


def test_retained_counts_absolute():
    sched = DropSchedule(((16, 0.5), (24, 0.0)))
    assert retained_counts(sched, 307) == (153, 0)
    assert retained_count(sched, 0, 307) == 153
    assert retained_count(sched, 1, 307) == 0
    # an increasing ratio cannot resurrect tokens
    grow = DropSchedule(((8, 0.25), (16, 0.75)))
    assert retained_counts(grow, 100) == (25, 25)


def test_retained_counts_multiplicative():
    sched = DropSchedule(((8, 0.5), (16, 0.5), (24, 0.5)), kind="multiplicative")
    assert retained_counts(sched, 100) == (50, 25, 12)
    assert retained_counts(sched, 0) == (0, 0, 0)


def test_parse_schedule():
    sched = parse_schedule("16:0.5,24:0")
    assert sched.stages == ((16, 0.5), (24, 0.0))
    with pytest.raises(UsageError):
        parse_schedule("16:0.5,,24:0")
    with pytest.raises(UsageError):
        parse_schedule("24:0,16:0.5")  # boundaries must increase
    with pytest.raises(UsageError):
        parse_schedule("16:1.5")
    with pytest.raises(UsageError):
        parse_schedule("40:0.5", total_layers=32)
    with pytest.raises(UsageError):
        parse_schedule("16")


def test_drop_stage_example_and_ties():
    assert drop_stage((10, 11, 12), np.array([0.9, 0.1, 0.5]), 2) == (10, 12)
    # exact ties keep the earlier position
    assert drop_stage((0, 1, 2), np.array([0.5, 0.5, 0.25]), 2) == (0, 1)
    assert drop_stage((3, 7), np.array([1.0, 2.0]), 0) == ()
    assert drop_stage((3, 7), np.array([1.0, 2.0]), 2) == (3, 7)
    with pytest.raises(ConfigError):
        drop_stage((3, 7), np.array([1.0]), 1)
    with pytest.raises(ConfigError):
        drop_stage((3, 7), np.array([1.0, 2.0]), 3)


def test_frozen_trace_last_selector():
    trace = run_prune(4, [(T0, V0), (T1, V1)], SCHED_4, SalientSelector("last"))
    assert trace.counts == (2, 1)
    assert trace.stages[0].retained == (0, 2)
    assert trace.stages[0].salient == (1,)
    assert (trace.stages[0].scores == np.array([0.4, 0.1, 0.3, 0.2])).all()
    assert trace.stages[1].retained == (2,)
    assert (trace.stages[1].scores == np.array([0.1, 0.25])).all()
    assert trace.final_retained == (2,)


def test_frozen_trace_all_selector():
    trace = run_prune(4, [(T0, V0), (T1, V1)], SCHED_4, SalientSelector("all"))
    assert trace.stages[0].retained == (2, 3)
    assert trace.stages[1].retained == (3,)
    expect0 = np.array([0.25, 0.15000000000000002, 0.3, 0.30000000000000004])
    assert (trace.stages[0].scores == expect0).all()


def test_full_width_matches_exact_width():
    # Stage 1 columns supplied full width (4 >= n0) versus pre-sliced.
    sel = SalientSelector("last")
    full = run_prune(4, [(T0, V0), (T1, V1)], SCHED_4, sel)
    sliced = V1[:, [0, 2]]  # survivors after stage 0 are (0, 2)
    exact = run_prune(4, [(T0, V0), (T1, sliced)], SCHED_4, sel)
    assert full.final_retained == exact.final_retained
    assert (full.stages[1].scores == exact.stages[1].scores).all()


def test_bad_widths_and_counts():
    sel = SalientSelector("last")
    with pytest.raises(ConfigError):
        run_prune(4, [(T0, V0[:, :3]), (T1, V1)], SCHED_4, sel)  # 3 < n0
    with pytest.raises(ConfigError):
        run_prune(4, [(T0, V0)], SCHED_4, sel)  # one pair for two stages
    with pytest.raises(ConfigError):
        run_prune(4, [(T0, V0[:1]), (T1, V1)], SCHED_4, sel)  # row mismatch
    with pytest.raises(ConfigError):
        run_prune(0, [(T0, V0), (T1, V1)], SCHED_4, sel)


def test_keep_zero_then_noop():
    sched = DropSchedule(((1, 0.0), (2, 0.5)), total_layers=4)
    trace = run_prune(4, [(T0, V0), (T1, V1)], sched, SalientSelector("last"))
    assert trace.counts == (0, 0)
    assert trace.final_retained == ()


def test_trace_entries_names_and_omission():
    trace = run_prune(4, [(T0, V0), (T1, V1)], SCHED_4, SalientSelector("last"))
    ent = trace_entries(trace)
    assert (ent["trajectory"] == np.array([4, 2, 1])).all()
    assert (ent["survivors_0"] == np.array([0, 2])).all()
    assert (ent["survivors_1"] == np.array([2])).all()
    assert ent["scores_0"].shape == (4,) and ent["scores_1"].shape == (2,)
    empty = run_prune(
        4, [(T0, V0), (T1, V1)], DropSchedule(((1, 0.0), (2, 0.0)), total_layers=4),
        SalientSelector("last"),
    )
    ent_empty = trace_entries(empty)
    assert "survivors_0" not in ent_empty and "survivors_1" not in ent_empty
    assert "scores_1" not in ent_empty  # no columns left to score


@settings(max_examples=80, deadline=None)
@given(
    st.integers(min_value=0, max_value=2**32 - 1),
    st.sampled_from(["last", "all", "topk:2"]),
)
def test_prune_invariants(seed, selector_text):
    rng = np.random.default_rng(seed)
    n0 = int(rng.integers(1, 12))
    m = int(rng.integers(1, 6))
    stages = int(rng.integers(1, 4))
    bounds = sorted(rng.choice(np.arange(1, 9), size=stages, replace=False).tolist())
    ratios = rng.random(stages).round(2).tolist()
    sched = DropSchedule(tuple(zip(bounds, ratios)), total_layers=8)
    pairs = [(rng.random((m, m)), rng.random((m, n0))) for _ in range(stages)]
    trace = run_prune(n0, pairs, sched, parse_selector(selector_text))

    prev = tuple(range(n0))
    for st_state in trace.stages:
        cur = st_state.retained
        assert list(cur) == sorted(cur)           # ascending order restored
        assert set(cur) <= set(prev)              # survivors only shrink
        assert len(cur) <= len(prev)
        prev = cur
    ref = oracle_prune(
        n0,
        [(t.tolist(), v.tolist()) for t, v in pairs],
        sched,
        parse_selector(selector_text),
    )
    for st_state, ref_stage in zip(trace.stages, ref):
        assert st_state.retained == ref_stage["retained"]
        assert st_state.salient == ref_stage["salient"]
        assert (st_state.scores == np.array(ref_stage["scores"])).all()


def test_permuting_tokens_permutes_survivors():
    rng = np.random.default_rng(11)
    n0, m = 8, 3
    pairs = [(rng.random((m, m)), rng.random((m, n0)))]
    sched = DropSchedule(((2, 0.5),), total_layers=4)
    sel = SalientSelector("last")
    base = run_prune(n0, pairs, sched, sel)
    perm = rng.permutation(n0)
    permuted_pairs = [(pairs[0][0], pairs[0][1][:, perm])]
    permuted = run_prune(n0, permuted_pairs, sched, sel)
    inverse = np.argsort(perm)
    assert set(permuted.final_retained) == {
        int(inverse[i]) for i in base.final_retained
    }
