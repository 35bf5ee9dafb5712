"""Two-point interval check, adaptive polling and the trust state machine."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from ..timebase import TimePoint
from .hypothesis import AdaptiveConfig, DetectorConfig

PHASES = ("startup", "validated", "rejected", "holdover")
VERDICTS = ("pass", "fail", None)


def two_point_tolerance(baseline: float, ref_adev: float, gate_k: float = 3.0) -> float:
    """gate_k sqrt(2) adev_ref(B) B: the k-sigma spread of a difference of
    two B-second phase increments of the reference."""
    return gate_k * math.sqrt(2.0) * ref_adev * baseline


def two_point_check(
    anchor: tuple[TimePoint, TimePoint] | None,
    current: tuple[TimePoint, TimePoint] | None,
    ref_adev: float,
    cfg: DetectorConfig | None = None,
) -> str | None:
    """Compare how far GNSS time and the reference advanced between two epochs.

    ``anchor`` and ``current`` are ``(t_gnss, t_ref)`` pairs B seconds apart,
    B being one of the configured baselines (measured on the reference).
    Returns ``"fail"`` iff |dt_gnss - dt_ref| exceeds the tolerance,
    ``"pass"`` otherwise and ``None`` when an endpoint is missing.
    """
    cfg = cfg or DetectorConfig()
    if anchor is None or current is None:
        return None
    g0, r0 = anchor
    g1, r1 = current
    baseline = float(r1 - r0)
    if not any(abs(baseline - b) <= 1e-6 * b for b in cfg.two_point_baselines):
        raise ValueError(f"baseline {baseline} s is not one of {cfg.two_point_baselines}")
    mismatch = abs(float(g1 - g0) - baseline)
    return "fail" if mismatch > two_point_tolerance(baseline, ref_adev, cfg.gate_k) else "pass"


@dataclass(frozen=True)
class TrustState:
    """Where the validation logic stands.

    ``calibrated`` records that the local clock has been anchored to a
    validated GNSS time at least once.
    """

    phase: str = "startup"
    calibrated: bool = False
    selected_reference: str = "none"
    score: int = 0

    def __post_init__(self) -> None:
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")

    @property
    def decision(self) -> str:
        return {"validated": "accept", "rejected": "reject"}.get(self.phase, "inconclusive")

    @property
    def serves_gnss(self) -> bool:
        return self.selected_reference == "gnss"


@dataclass(frozen=True)
class StepInputs:
    fix: bool
    external: str | None = None  # verdict of the remote-reference tests
    clock: str | None = None  # verdict of the local-clock tests
    connectivity: bool = True
    best_remote: str = "remote"

    def __post_init__(self) -> None:
        if self.external not in VERDICTS or self.clock not in VERDICTS:
            raise ValueError("verdicts are 'pass', 'fail' or None")


def adaptive_next_interval(trust: TrustState, outcome: str, cfg: AdaptiveConfig | DetectorConfig) -> float:
    """Polling interval after a validation with ``outcome``.

    A pass extends the interval by one increment per validation in the
    current streak, capped at the maximum; a fail drops back to the base.
    """
    cfg = getattr(cfg, "adaptive", cfg)
    if outcome == "pass":
        return min(cfg.base_interval + cfg.increment * (trust.score + 1), cfg.max_interval)
    if outcome == "fail":
        return cfg.base_interval
    raise ValueError("outcome is 'pass' or 'fail'")


def _select(phase: str, calibrated: bool, best_remote: str) -> str:
    if phase == "validated":
        return "gnss"
    return "local" if calibrated else best_remote


def step_state_machine(trust: TrustState, inputs: StepInputs) -> TrustState:
    """Advance the validation logic by one PNT epoch.

    * Without connectivity no external verdict is possible.
    * With a fix, any failing test rejects the GNSS time, and a local-clock
      failure overrides a passing external test. A pass with no failure
      validates it and a passing external test also (re)calibrates the local
      clock. With no verdict at all the phase holds while the network is up;
      without it validated or startup time drops to holdover.
    * Without a fix nothing is tested; validated time drops to holdover.

    Only a validated phase serves GNSS time. Otherwise time comes from the
    calibrated local clock, or failing that the best remote reference.
    """
    external = inputs.external if inputs.connectivity else None
    clock = inputs.clock
    phase, calibrated, score = trust.phase, trust.calibrated, trust.score
    if not inputs.fix:
        if phase == "validated":
            phase = "holdover"
    elif external == "fail" or clock == "fail":
        phase, score = "rejected", 0
    elif external == "pass" or clock == "pass":
        phase = "validated"
        score += 1
        if external == "pass":
            calibrated = True
    elif not inputs.connectivity and phase in ("validated", "startup"):
        phase = "holdover"
    return TrustState(phase, calibrated, _select(phase, calibrated, inputs.best_remote), score)


def recalibrate(trust: TrustState) -> TrustState:
    """Periodic re-anchoring of the local clock on validated GNSS time."""
    if trust.phase != "validated":
        return trust
    return replace(trust, calibrated=True)
