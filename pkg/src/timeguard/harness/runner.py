"""Deterministic epoch loop binding the simulators to the detection stack.

Order of work inside one epoch, fixed:

1. advance true time, propagate the receiver and local clocks;
2. synthesize pseudoranges, add the spoofer's offset, solve;
3. poll the servers that are due (adaptive interval, 1 s floor);
4. run the remote-reference tests, then the local-clock tests;
5. step the trust state machine;
6. log the epoch.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import adversary as adv
from ..allan import AllanCurve, allan_curve, classify_noise, decade_taus, kalman_params_from_allan
from ..detect import (
    INCONCLUSIVE,
    DetectorConfig,
    Hypothesis,
    KalmanState,
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
    windowed_innovation_test,
)
from ..gnss_sim import C, inject_spoof, make_constellation, solve_pnt4, solve_time_bias, synthesize_pseudoranges
from ..netsources import (
    NetworkState,
    PollGuard,
    QueryTimeout,
    RoughtimeResponse,
    passes_auth_gate,
    query_nts,
    query_record,
    query_roughtime,
)
from ..oscillator import OscillatorSpec, PhaseSeries, discipline, propagate
from ..timebase import Rng, SimClock, TimeOffset, TimePoint, advance
from .config import EXTERNAL_DETECTORS, ConfigError, ScenarioConfig

STREAMS = ("geometry", "receiver_clock", "local_clock", "pseudorange", "network", "calibration")


def _streams(seed: int, spawn_key: tuple[int, ...]) -> dict[str, Rng]:
    root = Rng(seed, spawn_key=spawn_key)
    return {name: root.child(i) for i, name in enumerate(STREAMS)}


class _Receiver:
    """GNSS timing receiver: its own clock, a static constellation, a solver."""

    def __init__(self, cfg: ScenarioConfig, geom_rng: Rng, clock_rng: Rng, pr_rng: Rng) -> None:
        rc = cfg.receiver
        self.cfg = rc
        self.pos = np.asarray(rc.position, dtype=float)
        self.geom = make_constellation(rc.n_satellites, geom_rng, self.pos, elevation_mask_deg=rc.elevation_mask_deg)
        self.spec: OscillatorSpec = rc.oscillator
        self.state = self.spec.initial_state()
        self.clock_rng = clock_rng
        self.pr_rng = pr_rng

    def step(self, t: TimePoint, dt: float, attack_offset: float):
        self.state = propagate(self.state, self.spec, dt, self.clock_rng)
        reading = t + TimeOffset(self.state.bias)
        pr = synthesize_pseudoranges(self.geom, self.pos, self.state.bias, self.pr_rng, self.cfg.sigma_m, epoch=reading)
        if attack_offset:
            pr = inject_spoof(pr, C * attack_offset)
        if self.cfg.solver == "pnt4":
            sol = solve_pnt4(pr, self.geom, initial_pos=self.pos)
        else:
            sol = solve_time_bias(pr, self.geom, self.pos)
        if self.spec.disciplined and sol.fix_valid:
            self.state = discipline(self.state, sol.clock_bias)
        return sol


def calibrate(cfg: ScenarioConfig, rng: Rng):
    """Benign pre-run measuring the GNSS-minus-local offset series.

    Returns the Allan curve of that series, the derived Kalman parameters
    and the noise classification.
    """
    n = cfg.tuning.calibration_epochs
    dt = cfg.epoch_interval
    rx = _Receiver(cfg, rng.child(0), rng.child(1), rng.child(2))
    local_rng = rng.child(3)
    local = cfg.local_clock.initial_state()
    truth = SimClock()
    offsets = np.empty(n)
    for k in range(n):
        t = advance(truth, dt)
        sol = rx.step(t, dt, 0.0)
        local = propagate(local, cfg.local_clock, dt, local_rng)
        offsets[k] = float(sol.utc_time - t) - local.bias
    series = PhaseSeries(dt, offsets)
    top = int(math.floor(math.log10(dt * n / 3)))
    curve = allan_curve(series, decade_taus(dt, int(math.floor(math.log10(dt))), top))
    classification = classify_noise(curve)
    params = kalman_params_from_allan(classification, measurement=curve, poll_tau=dt)
    return curve, params, classification


@dataclass
class RunReport:
    """Headline outcome of one run. Times are seconds from scenario start."""

    name: str
    seed: int
    duration: float
    epochs: int
    attack_kind: str
    attack_start: float | None
    attack_end: float | None
    detection_latency: float | None
    false_positive_count: int
    missed: bool | None
    recovery_latency: float | None
    first_trigger: dict = field(default_factory=dict)
    false_triggers: dict = field(default_factory=dict)
    kalman: dict = field(default_factory=dict)
    tuning: dict = field(default_factory=dict)
    queries: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RunReport:
        return cls(**d)


@dataclass
class RunResult:
    report: RunReport
    timeseries: list[dict]
    verdicts: list[dict]
    queries: list[dict]
    events: list[dict]


def _combine(outcomes: list[str]) -> str | None:
    if "fail" in outcomes:
        return "fail"
    if "pass" in outcomes:
        return "pass"
    return None


class _Trigger:
    """First failure of one detector before and after the attack start."""

    def __init__(self, start: float | None) -> None:
        self.start = start
        self.first: dict | None = None
        self.false = 0
        self.evaluations = 0

    def record(self, t: float, outcome: str | None) -> None:
        if outcome is None:
            return
        attacked = self.start is not None and t >= self.start
        if attacked and self.first is None:
            self.evaluations += 1
            if outcome == "fail":
                self.first = {"t": t, "latency": t - self.start, "evaluations": self.evaluations}
        elif not attacked and outcome == "fail":
            self.false += 1


def run_scenario(cfg: ScenarioConfig, spawn_key: tuple[int, ...] = ()) -> RunResult:
    """Run ``cfg`` to completion. Same config and seed give identical results."""
    cfg.validate()
    rng = _streams(cfg.seed, tuple(spawn_key))
    dcfg: DetectorConfig = cfg.detector
    dt = cfg.epoch_interval
    enabled = set(cfg.detectors)
    attack = cfg.attack
    attack_start = None
    if attack.kind != "none":
        attack_start = attack.start
    elif attack.clog is not None:
        attack_start = attack.clog.start
    attack_end = None
    if attack.kind != "none":
        attack_end = attack.end
    elif attack.clog is not None:
        attack_end = attack.clog.start + attack.clog.duration

    # local-clock tuning
    params = None
    ref_adev: dict[float, float] = dict(cfg.tuning.ref_adev)
    tuning_info: dict = {"mode": cfg.tuning.mode}
    if cfg.local_clock is not None and enabled & {"kalman", "windowed", "two_point"}:
        if cfg.tuning.mode == "allan":
            curve, params, classification = calibrate(cfg, rng["calibration"])
            for b in dcfg.two_point_baselines:
                ref_adev.setdefault(b, _adev_or_edge(curve, b))
            tuning_info.update(
                regimes=[r for r in classification.regimes()],
                slopes=[f.slope for f in classification.fits],
                curve={"tau": curve.taus.tolist(), "adev": curve.adevs.tolist()},
            )
        else:
            params = cfg.tuning.params
        tuning_info.update(q_bias=params.q_bias, q_drift=params.q_drift, r_meas=params.r_meas, fallback=params.fallback)
        tuning_info["ref_adev"] = {str(k): v for k, v in sorted(ref_adev.items())}
        missing = [b for b in dcfg.two_point_baselines if b not in ref_adev]
        if "two_point" in enabled and missing:
            raise ConfigError(f"no reference Allan deviation for baseline(s) {missing}")

    rx = _Receiver(cfg, rng["geometry"], rng["receiver_clock"], rng["pseudorange"])
    local_rng = rng["local_clock"]
    local = cfg.local_clock.initial_state() if cfg.local_clock is not None else None
    net_rng = rng["network"]
    net = NetworkState(drop_threshold=cfg.network.drop_threshold)
    servers = sorted(cfg.servers, key=lambda s: s.id)
    guard = PollGuard()
    truth = SimClock()

    trust = TrustState()
    next_poll = 0.0
    poll_interval = dcfg.adaptive.base_interval
    last_external: str | None = None
    last_external_t = -math.inf
    last_verdict = INCONCLUSIVE
    connectivity = False
    best_remote = "none"

    kstate: KalmanState | None = None
    reject_streak = 0
    innovations: list[float] = []
    variances: list[float] = []
    pairs: dict[int, tuple[TimePoint, TimePoint]] = {}
    k_eval = k_single = k_benign_eval = k_benign_single = 0
    last_recal = 0.0

    triggers = {d: _Trigger(attack_start) for d in sorted(enabled)}
    timeseries: list[dict] = []
    verdicts: list[dict] = []
    queries: list[dict] = []
    events: list[dict] = [
        {"t": ph.t_begin, "event": "attack_phase", "label": ph.label} for ph in adv.phases(attack)
    ] if attack.kind != "none" else []
    n_timeouts = n_auth_fail = n_ok = 0
    server_cols = [f"off_{s.id}" for s in servers]
    prev_phase = trust.phase

    for k in range(1, cfg.n_epochs + 1):
        t = advance(truth, dt)
        ts = t.seconds
        a = float(adv.offset_at(attack, t))
        sol = rx.step(t, dt, a)
        if local is not None:
            local = propagate(local, cfg.local_clock, dt, local_rng)
        fix = sol.fix_valid and not adv.jammed(attack, t)
        t_gnss = sol.utc_time
        row = {
            "t": ts,
            "true_offset": -a if a else 0.0,
            "gnss_offset": float(t_gnss - t) if fix else None,
            "local_offset": local.bias if local is not None else None,
            "fix": int(fix),
            "clog_factor": adv.clog_factor_at(attack, t),
            "attack_phase": adv.phase_at(attack, t) if attack.kind != "none" else "none",
        }
        row.update({c: None for c in server_cols})

        # remote references
        polled = False
        if servers and ts + 1e-9 >= next_poll:
            polled = True
            net.clog_factor = adv.clog_factor_at(attack, t)
            t_local = t + TimeOffset(local.bias) if local is not None else t + TimeOffset(rx.state.bias)
            local_bias = local.bias if local is not None else rx.state.bias
            samples, unreachable = [], []
            for server in servers:
                guard.check(server.id, t)
                collude = -a if server.colluding else 0.0
                try:
                    if server.kind == "roughtime":
                        res = query_roughtime(server, net, t, net_rng, attack_offset=collude)
                    else:
                        res = query_nts(server, net, local_bias, t, net_rng, attack_offset=collude)
                except QueryTimeout as exc:
                    n_timeouts += 1
                    unreachable.append((server.id, server.trust))
                    queries.append(query_record(t_local, server, exc, "timeout"))
                    continue
                if not passes_auth_gate(res):
                    n_auth_fail += 1
                    queries.append(query_record(t_local, server, res, "auth_failure"))
                    events.append({"t": ts, "event": "auth_failure", "server_id": server.id})
                    continue
                n_ok += 1
                queries.append(query_record(t_local, server, res, "ok"))
                samples.append(res)
                row[f"off_{server.id}"] = float(res.center - t)
            connectivity = bool(samples)
            if samples:
                best = min(samples, key=lambda s: (-int(s.trust), float(s.half_width), s.server_id))
                best_remote = best.server_id
            outcome = None
            if fix and samples:
                results: list[str] = []
                if "consensus" in enabled:
                    last_verdict = consensus_test(t_gnss, samples, dcfg, unreachable)
                    c_out = {"accept": "pass", "reject": "fail"}.get(last_verdict.decision)
                    triggers["consensus"].record(ts, c_out)
                    results.append(c_out)
                rts = [s for s in samples if isinstance(s, RoughtimeResponse)]
                if "roughtime" in enabled and rts:
                    r_out = "fail" if any(roughtime_test(t_gnss, r) is Hypothesis.H1 for r in rts) else "pass"
                    triggers["roughtime"].record(ts, r_out)
                    results.append(r_out)
                nts = [s for s in samples if not isinstance(s, RoughtimeResponse)]
                if "nts" in enabled and nts:
                    n_out = "fail" if any(nts_test(t_gnss, s, dcfg) is Hypothesis.H1 for s in nts) else "pass"
                    triggers["nts"].record(ts, n_out)
                    results.append(n_out)
                outcome = _combine([r for r in results if r is not None])
                last_external, last_external_t = outcome, ts
            if cfg.adaptive_polling and outcome is not None:
                poll_interval = adaptive_next_interval(trust, outcome, dcfg)
            else:
                poll_interval = dcfg.adaptive.base_interval
            next_poll = ts + poll_interval
        external = None
        if fix and ts - last_external_t <= 2 * poll_interval + 1e-9:
            external = last_external

        # local clock
        clock_outcomes: list[str] = []
        if local is not None and fix and enabled & {"kalman", "windowed", "two_point"}:
            t_local = t + TimeOffset(local.bias)
            z = float(t_gnss - t_local)
            benign = attack_start is None or ts < attack_start
            if "kalman" in enabled or "windowed" in enabled:
                if kstate is None:
                    kstate = KalmanState.initial(z, params, t)
                    row.update(kalman_innovation=0.0, kalman_s=kstate.p00 + kstate.r, kalman_accepted=1)
                else:
                    g = kalman_gate_update(kalman_predict(kstate, t), z, dcfg.gate_k)
                    kstate = g.state
                    k_eval += 1
                    k_benign_eval += benign
                    innovations.append(g.innovation)
                    variances.append(g.s)
                    row.update(kalman_innovation=g.innovation, kalman_s=g.s, kalman_accepted=int(g.accepted))
                    if g.accepted:
                        reject_streak = 0
                        k_out = "pass"
                    else:
                        k_single += 1
                        k_benign_single += benign
                        reject_streak += 1
                        k_out = "fail" if reject_streak >= dcfg.gate_persistence else None
                    if "kalman" in enabled:
                        triggers["kalman"].record(ts, k_out)
                        if k_out:
                            clock_outcomes.append(k_out)
                    if "windowed" in enabled:
                        w = windowed_innovation_test(innovations[-dcfg.window_m :], variances[-dcfg.window_m :], dcfg.window_m, dcfg.gate_k)
                        w_out = None if w.insufficient else ("pass" if w.passed else "fail")
                        triggers["windowed"].record(ts, w_out)
                        if w_out:
                            clock_outcomes.append(w_out)
            if "two_point" in enabled:
                pairs[k] = (t_gnss, t_local)
                tp_results = []
                for b in dcfg.two_point_baselines:
                    nb = int(round(b / dt))
                    if nb < 1 or k % nb:
                        continue
                    res = two_point_check(pairs.get(k - nb), pairs[k], ref_adev[b], dcfg)
                    if res is not None:
                        tp_results.append(res)
                tp = _combine(tp_results)
                triggers["two_point"].record(ts, tp)
                if tp:
                    clock_outcomes.append(tp)
                horizon = int(round(max(dcfg.two_point_baselines) / dt))
                pairs.pop(k - horizon, None)
        clock = _combine(clock_outcomes)

        trust = step_state_machine(trust, StepInputs(fix, external, clock, connectivity, best_remote))
        if trust.phase != prev_phase:
            events.append({"t": ts, "event": "phase", "from": prev_phase, "to": trust.phase})
            prev_phase = trust.phase
        if (
            cfg.recalibration_interval is not None
            and trust.phase == "validated"
            and kstate is not None
            and ts - last_recal >= cfg.recalibration_interval
        ):
            kstate = KalmanState.initial(float(t_gnss - (t + TimeOffset(local.bias))), params, t)
            reject_streak = 0
            last_recal = ts
            events.append({"t": ts, "event": "recalibration"})

        metric = last_verdict.detection_metric if polled and "consensus" in enabled else row.get("kalman_innovation")
        if metric is not None and not math.isfinite(metric):
            metric = None
        verdicts.append(
            {
                "t": ts,
                "phase": trust.phase,
                "decision": trust.decision,
                "assurance": last_verdict.assurance,
                "metric": metric,
                "per_source": [c.to_dict() for c in last_verdict.contributing] if polled else [],
                "external": external,
                "clock": clock,
                "selected_reference": trust.selected_reference,
            }
        )
        row.update(external=external, clock=clock, phase=trust.phase, decision=trust.decision)
        timeseries.append(row)

    events.sort(key=lambda e: e["t"])
    report = _summarize(
        cfg, verdicts, triggers, attack_start, attack_end, tuning_info,
        {
            "evaluated": k_eval,
            "single_rejects": k_single,
            "benign_evaluated": k_benign_eval,
            "benign_single_rejects": k_benign_single,
            "false_reject_rate": (k_benign_single / k_benign_eval) if k_benign_eval else None,
        },
        {"ok": n_ok, "timeout": n_timeouts, "auth_failure": n_auth_fail},
    )
    return RunResult(report, timeseries, verdicts, queries, events)


def _adev_or_edge(curve: AllanCurve, tau: float) -> float:
    lo, hi = float(curve.taus[0]), float(curve.taus[-1])
    return curve.adev_at(min(max(tau, lo), hi))


def _summarize(cfg, verdicts, triggers, start, end, tuning, kalman, queries) -> RunReport:
    detection = None
    fp = 0
    for v in verdicts:
        if v["decision"] != "reject":
            continue
        if start is not None and v["t"] >= start:
            if detection is None:
                detection = v["t"] - start
        else:
            fp += 1
    recovery = None
    if detection is not None and end is not None:
        seen_reject = False
        for v in verdicts:
            if v["t"] < start:
                continue
            seen_reject |= v["decision"] == "reject"
            if seen_reject and v["t"] >= end and v["decision"] == "accept":
                recovery = v["t"] - end
                break
    return RunReport(
        name=cfg.name,
        seed=cfg.seed,
        duration=cfg.duration,
        epochs=cfg.n_epochs,
        attack_kind=cfg.attack.kind,
        attack_start=start,
        attack_end=end,
        detection_latency=detection,
        false_positive_count=fp,
        missed=None if start is None else detection is None,
        recovery_latency=recovery,
        first_trigger={d: tr.first for d, tr in sorted(triggers.items())},
        false_triggers={d: tr.false for d, tr in sorted(triggers.items())},
        kalman=kalman,
        tuning=tuning,
        queries=queries,
    )


__all__ = ["EXTERNAL_DETECTORS", "RunReport", "RunResult", "calibrate", "run_scenario"]
