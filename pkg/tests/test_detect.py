from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timeguard.allan import KalmanParams
from timeguard.detect import (
    AdaptiveConfig,
    DetectorConfig,
    Hypothesis,
    KalmanState,
    NumericalFailure,
    StaleSampleError,
    StepInputs,
    TrustState,
    adaptive_next_interval,
    consensus_test,
    kalman_gate_update,
    kalman_predict,
    nts_test,
    roughtime_test,
    step_state_machine,
    two_point_check,
    two_point_tolerance,
    windowed_innovation_test,
)
from timeguard.netsources import NtsSample, RoughtimeResponse, TrustLevel, UnauthenticatedInputError
from timeguard.timebase import Rng, TimeOffset, TimePoint

T0 = TimePoint.from_seconds(500.0)
AUTH = TrustLevel.AUTHENTICATED_REMOTE


def rt_resp(offset, radius=10e-3, authenticated=True, sid="rt"):
    return RoughtimeResponse(sid, T0 + TimeOffset(offset), radius, authenticated, b"n", b"n", 0.01)


def nts_sample(center_offset, rho=100e-6, sid="nts", kind="nts", authenticated=True, trust=AUTH, t_local=T0):
    theta = float((T0 + TimeOffset(center_offset)) - t_local)
    return NtsSample(sid, kind, t_local, theta, rho, 2 * rho, 1, authenticated, trust)


# remote-reference tests


def test_roughtime_examples():
    assert roughtime_test(T0, rt_resp(3e-3)) is Hypothesis.H0
    assert roughtime_test(T0 - 5e-3, rt_resp(0.0)) is Hypothesis.H0
    assert roughtime_test(T0 - 50e-3, rt_resp(0.0)) is Hypothesis.H1


def test_roughtime_boundary_is_strict():
    assert roughtime_test(T0, rt_resp(10e-3)) is Hypothesis.H1


def test_roughtime_refuses_unverified_reply():
    with pytest.raises(UnauthenticatedInputError):
        roughtime_test(T0, rt_resp(0.0, authenticated=False))


def test_roughtime_flags_exactly_when_attack_plus_delay_reaches_radius():
    delay = 3e-3
    for a in np.linspace(-30e-3, 30e-3, 601):
        t_gnss = T0 - TimeOffset(a)
        r = rt_resp(-delay)  # server reply signed one downlink delay earlier
        expected = Hypothesis.H1 if abs(round((-a + delay) * 1e9)) >= 10e-3 * 1e9 else Hypothesis.H0
        assert roughtime_test(t_gnss, r) is expected


def test_nts_examples():
    cfg = DetectorConfig(lambda_tr=100e-6)
    assert nts_test(T0 + 20e-6, nts_sample(0.0), cfg) is Hypothesis.H0
    assert nts_test(T0 + 150e-6, nts_sample(0.0), cfg) is Hypothesis.H1


def test_nts_auto_threshold_equals_explicit():
    auto = nts_test(T0 + 150e-6, nts_sample(0.0, rho=100e-6), DetectorConfig())
    explicit = nts_test(T0 + 150e-6, nts_sample(0.0, rho=100e-6), DetectorConfig(lambda_tr=100e-6))
    assert auto is explicit is Hypothesis.H1


def test_nts_stale_sample():
    with pytest.raises(StaleSampleError):
        nts_test(T0, nts_sample(0.0), DetectorConfig(), now_local=T0 + 3.0, poll_interval=1.0)
    assert nts_test(T0, nts_sample(0.0), DetectorConfig(), now_local=T0 + 1.5, poll_interval=1.0) is Hypothesis.H0


# consensus


def test_consensus_benign_accepts_with_high_assurance():
    v = consensus_test(T0, [nts_sample(1e-6 * i, sid=f"n{i}") for i in range(5)])
    assert (v.decision, v.assurance) == ("accept", "high")


def test_consensus_rejects_outside_every_interval():
    v = consensus_test(T0 - 150e-6, [nts_sample(0.0, sid=f"n{i}") for i in range(5)])
    assert v.decision == "reject"
    assert v.detection_metric == pytest.approx(1.5)


def test_consensus_colluding_minority():
    honest = [nts_sample(0.0, sid=f"h{i}") for i in range(3)]
    colluders = [nts_sample(-1e-3, sid=f"c{i}") for i in range(2)]
    assert consensus_test(T0 - 1e-3, honest + colluders).decision == "reject"


def _count_oracle(agree_flags, rule):
    n, k = len(agree_flags), sum(agree_flags)
    if k == n:
        return "accept"
    if k == 0:
        return "reject"
    return "accept" if (2 * k > n and k >= rule * n) else "reject"


@pytest.mark.parametrize("rule", [0.5, 0.6, 2 / 3, 1.0])
def test_consensus_matches_counting_oracle_over_all_subsets(rule):
    cfg = DetectorConfig(consensus_rule=rule)
    for n in range(1, 7):
        for flags in itertools.product([True, False], repeat=n):
            samples = [nts_sample(0.0 if ok else 1e-3, sid=f"s{i}") for i, ok in enumerate(flags)]
            assert consensus_test(T0, samples, cfg).decision == _count_oracle(flags, rule)


def test_consensus_empty_is_inconclusive():
    assert consensus_test(T0, []).decision == "inconclusive"


def test_consensus_ignores_sources_below_trust_floor():
    cfg = DetectorConfig(trust_floor=AUTH)
    samples = [nts_sample(0.0, sid="a")] + [
        nts_sample(1e-3, sid=f"u{i}", kind="ntp", authenticated=False, trust=TrustLevel.UNAUTHENTICATED_REMOTE)
        for i in range(4)
    ]
    v = consensus_test(T0, samples, cfg)
    assert v.decision == "accept"
    assert sum(c.counted for c in v.contributing) == 1


def test_assurance_mapping():
    ntp = dict(kind="ntp", authenticated=False, trust=TrustLevel.UNAUTHENTICATED_REMOTE)
    only_ntp = [nts_sample(0.0, sid=f"u{i}", **ntp) for i in range(2)]
    mixed = only_ntp + [nts_sample(0.0, sid="a")]
    assert consensus_test(T0, only_ntp).assurance == "low"
    assert consensus_test(T0, mixed).assurance == "medium"


def test_consensus_refuses_failed_verification():
    with pytest.raises(UnauthenticatedInputError):
        consensus_test(T0, [nts_sample(0.0, authenticated=False)])


def test_unreachable_sources_are_reported_not_counted():
    v = consensus_test(T0, [nts_sample(0.0)], unreachable=[("gone", AUTH)])
    assert v.decision == "accept"
    assert [(c.id, c.outcome) for c in v.contributing] == [("gone", "unreachable"), ("nts", "pass")]


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.tuples(st.integers(-300, 300), st.integers(50, 200)), min_size=1, max_size=7),
    st.integers(-300, 300),
    st.randoms(use_true_random=False),
    st.integers(0, 6),
)
def test_consensus_order_and_duplication_invariant(specs, gnss_us, rnd, dup):
    samples = [nts_sample(c * 1e-6, rho=r * 1e-6, sid=f"s{i}") for i, (c, r) in enumerate(specs)]
    t = T0 + gnss_us * 1e-6
    base = consensus_test(t, samples)
    shuffled = list(samples)
    rnd.shuffle(shuffled)
    shuffled.append(samples[dup % len(samples)])
    assert consensus_test(t, shuffled) == base


# Kalman


PARAMS = KalmanParams(q_bias=1e-18, q_drift=1e-22, r_meas=1e-16)


def test_predict_zero_dt_is_identity():
    s = KalmanState.initial(1e-6, PARAMS, T0, freq=1e-9)
    assert kalman_predict(s, T0) is s


def test_predict_linear_propagation():
    s = KalmanState.initial(0.0, PARAMS, T0, freq=1e-9)
    assert kalman_predict(s, T0 + 10.0).offset == pytest.approx(10e-9)


def test_predict_backwards_refused():
    with pytest.raises(ValueError):
        kalman_predict(KalmanState.initial(0.0, PARAMS, T0), T0 - 1.0)


def test_covariance_growth_matches_closed_form():
    s = KalmanState.initial(0.0, PARAMS, T0)
    P0 = s.P
    for k in range(1, 101):
        s = kalman_predict(s, T0 + float(k))
    # closed form over n unit steps: F^n P0 F^nT + sum_j F^j Q F^jT
    q11, q12, q22 = PARAMS.q_bias + PARAMS.q_drift / 3, PARAMS.q_drift / 2, PARAMS.q_drift
    Q = np.array([[q11, q12], [q12, q22]])
    Fn = np.array([[1.0, 100.0], [0.0, 1.0]])
    expected = Fn @ P0 @ Fn.T + sum(np.array([[1.0, j], [0.0, 1.0]]) @ Q @ np.array([[1.0, 0.0], [j, 1.0]]) for j in range(100))
    np.testing.assert_allclose(s.P, expected, rtol=1e-9)


def test_zero_innovation_accepted_and_offset_unchanged():
    s = kalman_predict(KalmanState.initial(2e-6, PARAMS, T0), T0 + 1.0)
    g = kalman_gate_update(s, s.offset, DetectorConfig())
    assert g.accepted and g.innovation == 0.0
    assert g.state.offset == s.offset
    assert g.state.p00 < s.p00


def test_gate_rejection_leaves_state_untouched():
    s = kalman_predict(KalmanState.initial(0.0, PARAMS, T0), T0 + 1.0)
    g = kalman_gate_update(s, 1e-3, 3.0)
    assert not g.accepted and g.state is s
    assert g.normalized > 3


def test_gate_boundary_is_inclusive():
    s = KalmanState.initial(0.0, PARAMS, T0)
    edge = 3 * math.sqrt(s.p00 + s.r)
    assert kalman_gate_update(s, edge * (1 - 1e-12), 3.0).accepted
    assert not kalman_gate_update(s, edge * (1 + 1e-9), 3.0).accepted


def test_non_finite_innovation_is_numerical_failure():
    with pytest.raises(NumericalFailure):
        kalman_gate_update(KalmanState.initial(0.0, PARAMS, T0), float("nan"))


def test_negative_variance_is_numerical_failure():
    bad = KalmanParams(q_bias=0.0, q_drift=0.0, r_meas=-1.0)
    with pytest.raises(NumericalFailure):
        kalman_gate_update(KalmanState.initial(0.0, bad, T0, p_offset=0.0), 0.0)


def test_benign_false_reject_rate_within_gaussian_tail():
    # random-walk offset and white measurement noise exactly as the filter assumes
    q, r = 1e-18, 1e-16
    params = KalmanParams(q, 0.0, r)
    rng = np.random.default_rng(5)
    truth = np.cumsum(rng.normal(scale=math.sqrt(q), size=10_000))
    z = truth + rng.normal(scale=math.sqrt(r), size=truth.size)
    s = KalmanState.initial(z[0], params, TimePoint(0), p_freq=1e-30)
    rejects = 0
    for k in range(1, len(z)):
        g = kalman_gate_update(kalman_predict(s, TimePoint.from_seconds(k)), z[k], 3.0)
        s = g.state
        rejects += not g.accepted
    assert rejects / (len(z) - 1) <= 0.01


def test_ramp_triggers_gate():
    params = KalmanParams(6e-17, 0.0, 2e-17)
    rng = np.random.default_rng(6)
    s = KalmanState.initial(0.0, params, TimePoint(0))
    first = None
    for k in range(1, 900):
        ramp = 30e-9 * max(0, k - 300)
        g = kalman_gate_update(kalman_predict(s, TimePoint.from_seconds(k)), -ramp + rng.normal(scale=4.5e-9), 3.0)
        s = g.state
        if not g.accepted and k >= 300 and first is None:
            first = k
    assert first is not None and first - 300 <= 300


def test_covariance_stays_positive_definite_over_a_million_cycles():
    params = KalmanParams(1e-20, 1e-26, 1e-18)
    s = KalmanState.initial(0.0, params, TimePoint(0))
    z = np.random.default_rng(7).normal(scale=1e-9, size=1_000_000)
    t = 0
    for k in range(1_000_000):
        t += 1_000_000_000
        s = kalman_gate_update(kalman_predict(s, TimePoint(t)), z[k], 1e9).state
        assert s.p00 > 0 and s.p00 * s.p11 - s.p01 * s.p01 > 0
    assert np.all(np.linalg.eigvalsh(s.P) > 0)


# windowed test


def test_window_zero_mean_passes():
    nu = np.random.default_rng(0).normal(size=32)
    assert windowed_innovation_test(nu - nu.mean(), np.ones(32), 32).passed


def test_window_threshold_arithmetic():
    # a constant bias b sigma gives a statistic of b sqrt(m)
    r = windowed_innovation_test(np.full(32, 0.5), np.ones(32), 32)
    assert r.statistic == pytest.approx(0.5 * math.sqrt(32))
    assert r.passed  # 2.83 stays below 3
    assert not windowed_innovation_test(np.full(64, 0.5), np.ones(64), 64).passed
    assert not windowed_innovation_test(np.full(32, 0.6), np.ones(32), 32).passed


def test_single_outlier_passes_window_but_not_gate():
    nu = np.zeros(32)
    nu[10] = 4.0
    assert windowed_innovation_test(nu, np.ones(32), 32).passed
    s = KalmanState.initial(0.0, KalmanParams(0.0, 0.0, 1.0), T0, p_offset=1e-30)
    assert not kalman_gate_update(s, 4.0, 3.0).accepted


def test_window_short_history_passes_with_flag():
    r = windowed_innovation_test([10.0] * 5, [1.0] * 5, 32)
    assert r.passed and r.insufficient


def test_window_minimum_size():
    with pytest.raises(ValueError):
        windowed_innovation_test([0.0] * 8, [1.0] * 8, 4)


# two-point check


def _pair(t, gnss_offset):
    return (t + TimeOffset(gnss_offset), t)


def test_two_point_benign_passes():
    assert two_point_check(_pair(T0, 1e-9), _pair(T0 + 100.0, -2e-9), 3e-10) == "pass"


def test_two_point_slow_ramp_over_long_baseline_fails():
    # adev(100 s) 100 s ~ 30 ns; the ramp builds 500 ns
    assert two_point_check(_pair(T0, 0.0), _pair(T0 + 100.0, -500e-9), 3e-10) == "fail"


def test_two_point_slow_ramp_over_short_baseline_passes():
    assert two_point_check(_pair(T0, 0.0), _pair(T0 + 1.0, -5e-9), 7.8e-9) == "pass"


def test_two_point_missing_endpoint_skips():
    assert two_point_check(None, _pair(T0, 0.0), 1e-9) is None


def test_two_point_unconfigured_baseline():
    with pytest.raises(ValueError):
        two_point_check(_pair(T0, 0.0), _pair(T0 + 7.0, 0.0), 1e-9)


def test_two_point_tolerance_formula():
    assert two_point_tolerance(100.0, 3e-10, 3.0) == pytest.approx(3 * math.sqrt(2) * 3e-8)


# adaptive polling


def test_adaptive_linear_recurrence():
    cfg = DetectorConfig()
    trust = TrustState()
    for _ in range(5):
        interval = adaptive_next_interval(trust, "pass", cfg)
        trust = TrustState(score=trust.score + 1)
    assert interval == 6.0


def test_adaptive_cap_and_reset():
    cfg = AdaptiveConfig()
    assert adaptive_next_interval(TrustState(score=500), "pass", cfg) == 64.0
    assert adaptive_next_interval(TrustState(score=500), "fail", cfg) == 1.0


# state machine


def test_cold_start_without_network_is_inconclusive():
    s = step_state_machine(TrustState(), StepInputs(fix=True, connectivity=False))
    assert s.phase == "holdover" and s.decision == "inconclusive" and not s.calibrated


def test_clock_failure_overrides_external_pass():
    s = step_state_machine(TrustState(), StepInputs(fix=True, external="pass", clock="fail"))
    assert s.phase == "rejected" and s.decision == "reject"


def test_reentry_after_attack():
    s = TrustState("rejected", True, "local", 0)
    s = step_state_machine(s, StepInputs(fix=True, external="pass", clock="pass"))
    assert s.phase == "validated" and s.serves_gnss


def test_validation_calibrates_local_clock():
    s = step_state_machine(TrustState(), StepInputs(fix=True, external="pass"))
    assert s.calibrated and s.score == 1


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.tuples(st.booleans(), st.sampled_from(["pass", "fail", None]), st.sampled_from(["pass", "fail", None]), st.booleans()),
        max_size=20,
    )
)
def test_never_serves_gnss_while_rejected(trace):
    s = TrustState()
    for fix, ext, clk, conn in trace:
        s = step_state_machine(s, StepInputs(fix, ext, clk, conn, best_remote="nts-1"))
        if s.phase == "rejected":
            assert not s.serves_gnss
            assert s.selected_reference in ("local", "nts-1")
        assert s.serves_gnss == (s.phase == "validated")
