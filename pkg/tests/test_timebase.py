from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from timeguard.timebase import (
    EPOCH_ANCHOR,
    INT64_MAX,
    Rng,
    ScenarioTooLongError,
    SimClock,
    TimeOffset,
    TimePoint,
    advance,
    gauss,
    named_streams,
)

nanos = st.integers(min_value=-(10**17), max_value=10**17)


def test_advance_one_second():
    clock = SimClock()
    assert advance(clock, TimeOffset(1.0)) == TimePoint.from_seconds(1.0)


def test_advance_quarter_second_from_five():
    clock = SimClock(TimePoint.from_seconds(5.0))
    assert advance(clock, 0.25).epoch_nanos == 5_250_000_000


def test_a_day_of_one_second_steps_is_exact():
    clock = SimClock()
    for _ in range(86_400):
        advance(clock, 1.0)
    assert clock.now.epoch_nanos == 86_400 * 10**9


@pytest.mark.parametrize("dt", [0.0, -1.0])
def test_advance_rejects_non_positive_step(dt):
    with pytest.raises(ValueError):
        advance(SimClock(), dt)


def test_advance_past_int64_is_scenario_too_long():
    clock = SimClock(TimePoint(INT64_MAX - 10))
    with pytest.raises(ScenarioTooLongError):
        advance(clock, 1.0)


def test_billion_second_scenarios_fit():
    t = TimePoint.from_seconds(1e9)
    assert float(t - TimePoint(0)) == 1e9


def test_gauss_zero_sigma_is_exactly_zero():
    assert gauss(Rng(1), 0.0) == 0.0


def test_gauss_negative_sigma_raises():
    with pytest.raises(ValueError):
        gauss(Rng(1), -1.0)


def test_gauss_mean_within_clt_bound():
    rng = Rng(2024)
    draws = np.array([gauss(rng, 1.0) for _ in range(1_000_000)])
    assert abs(draws.mean()) < 0.005


def test_gauss_variance_within_chi_square_bound():
    rng = Rng(99)
    draws = np.array([gauss(rng, 2.0) for _ in range(1_000_000)])
    assert 3.98 <= draws.var() <= 4.02


def test_equal_seeds_give_equal_streams():
    a, b = Rng(5), Rng(5)
    assert np.array_equal(a.normal(100), b.normal(100))
    assert a.bytes(16) == b.bytes(16)


def test_child_streams_differ_and_are_stable():
    root = Rng(5)
    assert not np.array_equal(root.child(0).normal(10), root.child(1).normal(10))
    assert np.array_equal(root.child(3).normal(10), Rng(5).child(3).normal(10))


def test_named_streams_keyed_by_position():
    s = named_streams(8, ["a", "b"])
    assert np.array_equal(s["b"].normal(4), Rng(8).child(1).normal(4))


def test_pcg64_stream_is_pinned():
    # first draws of numpy's PCG64 for this seed; guards against generator swaps
    assert Rng(0).generator.integers(0, 2**32, size=3).tolist() == (
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(0))).integers(0, 2**32, size=3).tolist()
    )


@given(nanos, nanos, nanos)
def test_timepoint_addition_is_associative(t, a, b):
    tp = TimePoint(t)
    oa, ob = TimeOffset.from_nanos(a), TimeOffset.from_nanos(b)
    assert (tp + oa) + ob == tp + TimeOffset.from_nanos(a + b)


@given(nanos, nanos)
def test_difference_is_lossless_at_one_nanosecond(t, a):
    tp = TimePoint(t)
    moved = tp + TimeOffset.from_nanos(a)
    assert (moved - tp).nanos == a
    assert moved - TimeOffset.from_nanos(a) == tp


@given(st.floats(min_value=-1e6, max_value=1e6), st.floats(min_value=-1e6, max_value=1e6))
def test_offsets_close_under_addition_and_negation(a, b):
    s = TimeOffset(a) + TimeOffset(b)
    assert isinstance(s, TimeOffset) and isinstance(-s, TimeOffset)
    assert float(s) == a + b


def test_ordering_is_total():
    pts = [TimePoint(5), TimePoint(-3), TimePoint(0)]
    assert sorted(pts) == [TimePoint(-3), TimePoint(0), TimePoint(5)]


def test_isoformat_against_anchor():
    t = TimePoint(3_600_000_000_123)
    assert t.isoformat(EPOCH_ANCHOR) == "2024-01-01T01:00:00.000000123Z"
