"""Budget arithmetic: per-layer counts, documented averages, planning."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duet_compress import (
    ConfigError,
    DropSchedule,
    average_tokens,
    budget_records,
    per_layer_counts,
    plan_entry_tokens,
)
from duet_compress.budget import flop_proxy
from duet_compress.oracle import (
    oracle_average,
    oracle_flop_proxy,
    oracle_per_layer_counts,
    oracle_plan,
)

SCHED = DropSchedule(((16, 0.5), (24, 0.0)), total_layers=32)

# (entry tokens, documented rounded average) for the default schedule
REFERENCE_CONFIGS = [
    (307, 192),
    (205, 128),
    (102, 64),
    (1025, 640),
    (510, 320),
    (255, 160),
    (1536, 960),
    (216, 135),
]


def test_per_layer_structure():
    counts = per_layer_counts(1536, SCHED)
    assert len(counts) == 32
    assert counts[:16] == (1536,) * 16
    assert counts[16:24] == (768,) * 8
    assert counts[24:] == (0,) * 8


def test_exact_average_for_1536():
    report = average_tokens(1536, SCHED)
    assert report.average == 960.0


@pytest.mark.parametrize("n0,avg", REFERENCE_CONFIGS)
def test_reference_config_averages(n0, avg):
    report = average_tokens(n0, SCHED)
    assert abs(round(report.average) - avg) <= 1


def test_boundary_at_last_layer_has_no_effect():
    sched = DropSchedule(((16, 0.5), (32, 0.0)), total_layers=32)
    counts = per_layer_counts(100, sched)
    assert counts[-1] == 50  # the drop after layer 32 never materializes


def test_plan_inversions():
    assert plan_entry_tokens(192, SCHED) == 307
    assert plan_entry_tokens(960, SCHED) == 1536
    assert plan_entry_tokens(0, SCHED) == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=1, max_value=400))
def test_plan_matches_linear_scan(target):
    assert plan_entry_tokens(float(target), SCHED) == oracle_plan(float(target), SCHED)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=1, max_value=3000), st.integers(min_value=1, max_value=3000))
def test_average_monotone_in_n0(a, b):
    lo, hi = sorted((a, b))
    assert average_tokens(lo, SCHED).average <= average_tokens(hi, SCHED).average


def test_flop_proxy_identity_and_reference():
    # Per-layer counts equal to the base give exactly 1.
    flat = DropSchedule(((16, 1.0),), total_layers=32)
    assert flop_proxy(per_layer_counts(576, flat), 4096, 576) == 1.0
    counts = per_layer_counts(576, SCHED)
    ours = flop_proxy(counts, 4096, 576)
    assert ours == oracle_flop_proxy(counts, 4096, 576)
    assert ours == pytest.approx(0.6172945205479452)


def test_reports_match_reference_route():
    for n0 in (7, 100, 307, 1536):
        report = average_tokens(n0, SCHED)
        assert list(report.per_layer) == oracle_per_layer_counts(SCHED, n0)
        assert report.average == oracle_average(SCHED, n0)


def test_reduction_against_base():
    report = average_tokens(307, SCHED, base_tokens=576)
    assert report.reduction_pct == pytest.approx(100.0 * (1.0 - 191.75 / 576.0))
    default = average_tokens(307, SCHED)
    assert default.base_tokens == 307


def test_budget_records_shape():
    rows = budget_records(average_tokens(10, DropSchedule(((2, 0.5),), total_layers=4)))
    assert len(rows) == 5
    assert rows[0] == {"record": "layer", "layer": 1, "tokens": 10}
    assert rows[-1]["record"] == "summary"
    assert rows[-1]["average"] == (10 + 10 + 5 + 5) / 4


def test_validation():
    with pytest.raises(ConfigError):
        per_layer_counts(0, SCHED)
    with pytest.raises(ConfigError):
        average_tokens(10, SCHED, base_tokens=0)
    with pytest.raises(ConfigError):
        flop_proxy((1, 2), 0, 4)
    with pytest.raises(ConfigError):
        DropSchedule((), total_layers=32)
    with pytest.raises(ConfigError):
        DropSchedule(((16, 0.5),), total_layers=0)
