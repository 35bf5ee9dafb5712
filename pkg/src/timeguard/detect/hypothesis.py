"""Per-source hypothesis tests and interval consensus over remote references."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from ..netsources import NtsSample, RoughtimeResponse, TrustLevel, UnauthenticatedInputError, passes_auth_gate
from ..timebase import TimePoint


class Hypothesis(Enum):
    H0 = "H0"  # GNSS time consistent with the reference
    H1 = "H1"  # GNSS time inconsistent: attack suspected


class StaleSampleError(ValueError):
    pass


@dataclass(frozen=True)
class AdaptiveConfig:
    base_interval: float = 1.0
    increment: float = 1.0
    max_interval: float = 64.0

    def __post_init__(self) -> None:
        if not 0 < self.base_interval <= self.max_interval or self.increment < 0:
            raise ValueError("need 0 < base_interval <= max_interval and increment >= 0")


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholds and policies of the detection stack.

    ``lambda_tr=None`` binds the NTS threshold to each sample's root
    distance. ``gate_persistence`` is the number of consecutive Kalman gate
    rejections that make a confirmed clock failure.
    """

    lambda_tr: float | None = None
    gate_k: float = 3.0
    window_m: int = 32
    consensus_rule: float = 0.5
    trust_floor: TrustLevel = TrustLevel.UNAUTHENTICATED_REMOTE
    adaptive: AdaptiveConfig = field(default_factory=AdaptiveConfig)
    two_point_baselines: tuple[float, ...] = (1.0, 10.0, 100.0)
    gate_persistence: int = 1

    def __post_init__(self) -> None:
        if self.gate_k <= 0:
            raise ValueError("gate_k must be positive")
        if not 0.5 <= self.consensus_rule <= 1.0:
            raise ValueError("consensus_rule must lie in [0.5, 1]")
        if self.window_m < 8:
            raise ValueError("window_m must be at least 8")
        if self.lambda_tr is not None and self.lambda_tr <= 0:
            raise ValueError("lambda_tr must be positive")
        b = self.two_point_baselines
        if any(x <= 0 for x in b) or any(y <= x for x, y in zip(b, b[1:])):
            raise ValueError("two-point baselines must be positive and increasing")
        if self.gate_persistence < 1:
            raise ValueError("gate_persistence must be at least 1")
        object.__setattr__(self, "trust_floor", TrustLevel(self.trust_floor))
        object.__setattr__(self, "two_point_baselines", tuple(float(x) for x in b))


def _require_auth(sample) -> None:
    if not passes_auth_gate(sample):
        raise UnauthenticatedInputError(f"{sample.server_id}: response failed verification")


def roughtime_test(t_gnss: TimePoint, r: RoughtimeResponse) -> Hypothesis:
    """H0 iff |t_GNSS - midpoint| is strictly below the server radius."""
    _require_auth(r)
    return Hypothesis.H0 if abs(float(t_gnss - r.midpoint)) < r.radius else Hypothesis.H1


def nts_test(
    t_gnss: TimePoint,
    s: NtsSample,
    cfg: DetectorConfig,
    now_local: TimePoint | None = None,
    poll_interval: float | None = None,
) -> Hypothesis:
    """H0 iff |t_GNSS - t_NTS| < lambda, lambda from config or the sample's root distance.

    With ``now_local`` and ``poll_interval`` given, samples older than two
    poll intervals are refused.
    """
    _require_auth(s)
    if now_local is not None and poll_interval is not None:
        age = float(now_local - s.t_local)
        if age > 2.0 * poll_interval:
            raise StaleSampleError(f"{s.server_id}: sample is {age:.3f} s old")
    lam = cfg.lambda_tr if cfg.lambda_tr is not None else s.root_distance
    return Hypothesis.H0 if abs(float(t_gnss - s.center)) < lam else Hypothesis.H1


@dataclass(frozen=True)
class SourceResult:
    id: str
    trust: TrustLevel
    outcome: str  # pass | fail | unreachable
    counted: bool = True

    def to_dict(self) -> dict:
        return {"id": self.id, "trust": self.trust.name.lower(), "outcome": self.outcome, "counted": self.counted}


@dataclass(frozen=True)
class Verdict:
    decision: str  # accept | reject | inconclusive
    assurance: str  # high | medium | low
    contributing: tuple[SourceResult, ...] = ()
    detection_metric: float = 0.0

    def to_dict(self) -> dict:
        return {
            "decision": self.decision,
            "assurance": self.assurance,
            "metric": self.detection_metric,
            "per_source": [c.to_dict() for c in self.contributing],
        }


INCONCLUSIVE = Verdict("inconclusive", "low")


def _assurance(sources: list[SourceResult]) -> str:
    authed = [s.trust >= TrustLevel.AUTHENTICATED_REMOTE for s in sources]
    if authed and all(authed):
        return "high"
    if any(authed):
        return "medium"
    return "low"


def _dedupe(samples) -> list:
    # one sample per server; a total key keeps the choice order-independent
    best: dict[str, object] = {}
    for s in samples:
        key = (s.center.epoch_nanos, float(s.half_width), s.kind)
        cur = best.get(s.server_id)
        if cur is None or key < (cur.center.epoch_nanos, float(cur.half_width), cur.kind):
            best[s.server_id] = s
    return [best[k] for k in sorted(best)]


def consensus_test(
    t_gnss: TimePoint,
    samples,
    cfg: DetectorConfig | None = None,
    unreachable=(),
) -> Verdict:
    """Is the GNSS time inside the intervals the references declare?

    Each sample contributes [center - half_width, center + half_width]:
    the Roughtime midpoint and radius, or t_local + theta and the root
    distance. Only sources at or above the trust floor are counted. If all
    counted intervals contain the GNSS time the verdict is accept, if none
    do it is reject, and otherwise accept needs a strict majority and at
    least ``consensus_rule`` of the counted sources. ``unreachable`` lists
    ``(server_id, trust)`` pairs that timed out.
    """
    cfg = cfg or DetectorConfig()
    samples = list(samples)
    for s in samples:
        _require_auth(s)
    results: list[SourceResult] = []
    agree, disagree = [], []
    metric = float("inf")
    for s in _dedupe(samples):
        distance = abs(float(t_gnss - s.center)) / float(s.half_width)
        inside = distance <= 1.0
        counted = s.trust >= cfg.trust_floor
        res = SourceResult(s.server_id, s.trust, "pass" if inside else "fail", counted)
        results.append(res)
        if counted:
            (agree if inside else disagree).append(res)
            metric = min(metric, distance)
    for sid, trust in sorted(set((sid, TrustLevel(tr)) for sid, tr in unreachable)):
        results.append(SourceResult(sid, trust, "unreachable", False))
    contributing = tuple(sorted(results, key=lambda r: r.id))
    n = len(agree) + len(disagree)
    if n == 0:
        return Verdict("inconclusive", "low", contributing, 0.0)
    frac = len(agree) / n
    if not disagree or (frac > 0.5 and frac >= cfg.consensus_rule):
        return Verdict("accept", _assurance(agree), contributing, metric)
    return Verdict("reject", _assurance(disagree), contributing, metric)
