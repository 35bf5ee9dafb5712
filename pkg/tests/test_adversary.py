from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timeguard.adversary import (
    NO_ATTACK,
    PHASE_LABELS,
    AttackConfigError,
    AttackProfile,
    ClogWindow,
    RampSegment,
    canned_takeover,
    clog_factor_at,
    jammed,
    offset_at,
    phase_at,
    phases,
    spoofed_pseudorange_delta,
)
from timeguard.gnss_sim import C, EARTH_RADIUS, inject_spoof, make_constellation, solve_time_bias, synthesize_pseudoranges
from timeguard.timebase import Rng, TimePoint


def test_no_attack_is_identically_zero():
    assert all(float(offset_at(NO_ATTACK, t)) == 0.0 for t in range(0, 1000, 37))
    assert not NO_ATTACK.active


def test_step_push_switches_at_its_start():
    p = AttackProfile(kind="step_push", start=100.0, step_offset=5e-3)
    assert float(offset_at(p, 99.0)) == 0.0
    assert float(offset_at(p, 101.0)) == 5e-3
    assert float(offset_at(p, TimePoint.from_seconds(100.0))) == 5e-3


def test_step_push_jams_before_pushing():
    p = AttackProfile(kind="step_push", start=100.0, step_offset=5e-3, jam_lead=5.0)
    assert not jammed(p, 99.9) and jammed(p, 100.0) and jammed(p, 104.9) and not jammed(p, 105.0)
    assert float(offset_at(p, 104.0)) == 0.0
    assert float(offset_at(p, 105.0)) == 5e-3


def test_nine_metres_per_epoch_is_thirty_ns_per_second():
    seg = RampSegment.from_mps(1000.0, 9.0)
    assert seg.rate == pytest.approx(30.02e-9, rel=1e-3)
    p = AttackProfile(kind="ramp", start=0.0, ramp_segments=(seg,))
    assert float(offset_at(p, 1000.0)) == pytest.approx(30.02e-6, rel=1e-3)


def test_ramp_recovered_by_the_solver():
    p = AttackProfile(kind="ramp", start=0.0, ramp_segments=(RampSegment.from_mps(1000.0, 9.0),))
    rx = np.array([EARTH_RADIUS, 0.0, 0.0])
    geom = make_constellation(8, Rng(3), rx)
    pr = synthesize_pseudoranges(geom, rx, 0.0, Rng(4), 0.0, TimePoint.from_seconds(1000.0))
    spoofed = inject_spoof(pr, spoofed_pseudorange_delta(p, 1000.0, len(geom)))
    sol = solve_time_bias(spoofed, geom, rx)
    assert sol.fix_valid
    assert float(sol.clock_bias) == pytest.approx(float(offset_at(p, 1000.0)), abs=1e-12)
    assert float(TimePoint.from_seconds(1000.0) - sol.utc_time) == pytest.approx(30.02e-6, rel=1e-3)


def test_one_millisecond_is_299_km():
    p = AttackProfile(kind="step_push", step_offset=1e-3)
    np.testing.assert_allclose(spoofed_pseudorange_delta(p, 1.0, 4), np.full(4, 299792.458))


def test_pull_rate_limit():
    with pytest.raises(AttackConfigError):
        AttackProfile(kind="ramp", ramp_segments=(RampSegment.from_mps(10.0, 150.0),))
    AttackProfile(kind="ramp", ramp_segments=(RampSegment.from_mps(10.0, 150.0),), max_pull_mps=200.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="bogus"),
        dict(kind="ramp"),
        dict(kind="rollback"),
        dict(kind="step_push", start=-1.0),
        dict(kind="ramp", ramp_segments=(RampSegment(0.0, 1e-9),)),
    ],
)
def test_invalid_profiles(kwargs):
    with pytest.raises(AttackConfigError):
        AttackProfile(**kwargs)


def test_rollback_returns_exactly_to_zero():
    segs = (RampSegment(37.0, 3.3e-7), RampSegment(11.0, 1.1e-7), RampSegment(53.0, 2.9e-7))
    p = AttackProfile(kind="rollback", start=10.0, ramp_segments=segs, hold=17.0, max_pull_mps=1000.0)
    assert p.end == pytest.approx(10.0 + 2 * (37 + 11 + 53) + 17)
    assert float(offset_at(p, p.end)) == 0.0
    assert float(offset_at(p, p.end + 100.0)) == 0.0
    mid = 10.0 + 37 + 11 + 53 + 8
    assert float(offset_at(p, mid)) == pytest.approx(p.peak)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(st.floats(1.0, 100.0), st.floats(-3e-7, 3e-7)), min_size=1, max_size=4),
    st.floats(0.0, 50.0),
    st.floats(0.0, 50.0),
)
def test_trajectory_is_continuous_with_bounded_increments(segs, start, hold):
    p = AttackProfile(
        kind="rollback", start=start, hold=hold, ramp_segments=tuple(RampSegment(d, r) for d, r in segs)
    )
    max_rate = max(abs(r) for _, r in segs)
    ts = np.arange(0.0, p.end + 5.0, 0.5)
    xs = np.array([float(offset_at(p, t)) for t in ts])
    assert np.all(np.abs(np.diff(xs)) <= max_rate * 0.5 * (1 + 1e-9) + 1e-18)
    assert xs[0] == 0.0 and xs[-1] == 0.0


def test_clog_window():
    p = AttackProfile(clog=ClogWindow(50.0, 10.0, 20.0))
    assert p.active
    assert [clog_factor_at(p, t) for t in (49.9, 50.0, 59.9, 60.0)] == [1.0, 20.0, 20.0, 1.0]
    with pytest.raises(AttackConfigError):
        ClogWindow(0.0, 1.0, 0.5)


def _order(labels):
    return [PHASE_LABELS.index(x) for x in labels]


def test_phase_labels_in_canonical_order():
    p = canned_takeover(20e-9, 400.0, start=100.0)
    labels = [ph.label for ph in phases(p)]
    assert labels == list(PHASE_LABELS)
    times = [ph.t_begin for ph in phases(p)]
    assert times == sorted(times)
    assert phase_at(p, 50.0) == "init"
    assert phase_at(p, 120.0) == "ramp_start"
    assert phase_at(p, 1000.0) == "finalize"


def test_step_push_phase_labels():
    labels = [ph.label for ph in phases(AttackProfile(kind="step_push", start=10.0, jam_lead=2.0))]
    assert _order(labels) == sorted(_order(labels))
    assert labels[:2] == ["init", "transmit"]


def test_canned_takeover_accelerates():
    p = canned_takeover(20e-9, 400.0)
    rates = [s.rate for s in p.ramp_segments]
    assert rates == sorted(rates) and rates[-1] == 20e-9
    assert sum(s.duration for s in p.ramp_segments) == pytest.approx(400.0)
