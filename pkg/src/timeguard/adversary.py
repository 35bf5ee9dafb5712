"""Attack trajectories on the GNSS timescale and the network path.

``offset_at`` returns the amount ``a`` by which the spoofer delays the
victim's time solution: every pseudorange grows by ``c a``, the solved
receiver bias grows by ``a`` and the reported GNSS time lags truth by ``a``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gnss_sim import C
from .timebase import TimeOffset, TimePoint

KINDS = ("none", "step_push", "ramp", "rollback")
PHASE_LABELS = ("init", "transmit", "ramp_start", "ramp_accelerate", "stabilize", "finalize")
DEFAULT_MAX_PULL_MPS = 100.0


class AttackConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RampSegment:
    """``duration`` seconds at a constant rate of ``rate`` s/s."""

    duration: float
    rate: float

    @classmethod
    def from_mps(cls, duration: float, rate_mps: float) -> RampSegment:
        """Rate given as pseudorange metres per second (metres per 1 s epoch)."""
        return cls(duration, rate_mps / C)

    @property
    def rate_mps(self) -> float:
        return self.rate * C


@dataclass(frozen=True)
class ClogWindow:
    start: float
    duration: float
    factor: float

    def __post_init__(self) -> None:
        if self.factor < 1 or self.duration < 0:
            raise AttackConfigError("clog factor must be >= 1 and duration >= 0")


@dataclass(frozen=True)
class AttackPhase:
    label: str
    t_begin: float


@dataclass(frozen=True)
class AttackProfile:
    """Adversary trajectory, times in seconds from scenario start.

    A ``step_push`` jams the receiver over ``[start, start + jam_lead)`` and
    then holds ``step_offset``. A ``ramp`` integrates its segments from
    ``start + jam_lead`` on. A ``rollback`` runs its segments out, waits
    ``hold`` seconds at the peak and mirrors them back to zero.
    """

    kind: str = "none"
    start: float = 0.0
    step_offset: float = 0.0
    ramp_segments: tuple[RampSegment, ...] = ()
    jam_lead: float = 0.0
    hold: float = 0.0
    clog: ClogWindow | None = None
    colluding_servers: tuple[str, ...] = ()
    max_pull_mps: float = DEFAULT_MAX_PULL_MPS
    _knots: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise AttackConfigError(f"unknown attack kind {self.kind!r}")
        if self.start < 0 or self.jam_lead < 0 or self.hold < 0:
            raise AttackConfigError("start, jam_lead and hold must be non-negative")
        segs = tuple(self.ramp_segments)
        object.__setattr__(self, "ramp_segments", segs)
        object.__setattr__(self, "colluding_servers", tuple(self.colluding_servers))
        if self.kind in ("ramp", "rollback") and not segs:
            raise AttackConfigError(f"{self.kind} needs at least one ramp segment")
        for seg in segs:
            if seg.duration <= 0:
                raise AttackConfigError("ramp segments need a positive duration")
            if abs(seg.rate_mps) > self.max_pull_mps:
                raise AttackConfigError(
                    f"ramp rate {seg.rate_mps:.3f} m/s exceeds max_pull_mps={self.max_pull_mps}"
                )
        object.__setattr__(self, "_knots", self._build_knots())

    def _build_knots(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind not in ("ramp", "rollback"):
            return (np.zeros(0), np.zeros(0))
        t0 = self.start + self.jam_lead
        ts, xs = [t0], [0.0]
        for seg in self.ramp_segments:
            ts.append(ts[-1] + seg.duration)
            xs.append(xs[-1] + seg.rate * seg.duration)
        if self.kind == "rollback":
            if self.hold > 0:
                ts.append(ts[-1] + self.hold)
                xs.append(xs[-1])
            for seg in reversed(self.ramp_segments):
                ts.append(ts[-1] + seg.duration)
                xs.append(xs[-1] - seg.rate * seg.duration)
            xs[-1] = 0.0  # exact return, whatever the rounding of the sums
        return (np.array(ts), np.array(xs))

    @property
    def end(self) -> float:
        """Instant after which the trajectory stays constant."""
        if self.kind == "none":
            return 0.0
        if self.kind == "step_push":
            return self.start + self.jam_lead
        return float(self._knots[0][-1])

    @property
    def peak(self) -> float:
        if self.kind == "step_push":
            return self.step_offset
        if self.kind == "none":
            return 0.0
        return float(np.max(np.abs(self._knots[1])))

    @property
    def active(self) -> bool:
        return self.kind != "none" or self.clog is not None


NO_ATTACK = AttackProfile()


def _seconds(t) -> float:
    return t.seconds if isinstance(t, TimePoint) else float(t)


def offset_at(profile: AttackProfile, t) -> TimeOffset:
    """Spoofed delay of the victim's time solution at ``t``."""
    ts = _seconds(t)
    if profile.kind == "none":
        return TimeOffset(0.0)
    if profile.kind == "step_push":
        return TimeOffset(profile.step_offset if ts >= profile.start + profile.jam_lead else 0.0)
    knots_t, knots_x = profile._knots
    if ts <= knots_t[0]:
        return TimeOffset(0.0)
    if ts >= knots_t[-1]:
        return TimeOffset(float(knots_x[-1]))
    return TimeOffset(float(np.interp(ts, knots_t, knots_x)))


def jammed(profile: AttackProfile, t) -> bool:
    """True while the attacker denies the receiver a fix ahead of the push."""
    ts = _seconds(t)
    return profile.jam_lead > 0 and profile.start <= ts < profile.start + profile.jam_lead


def spoofed_pseudorange_delta(profile: AttackProfile, t, n_sats: int) -> np.ndarray:
    """Uniform per-satellite range offset c a(t) in metres."""
    return np.full(n_sats, C * float(offset_at(profile, t)))


def clog_factor_at(profile: AttackProfile, t) -> float:
    ts = _seconds(t)
    w = profile.clog
    if w is None or not (w.start <= ts < w.start + w.duration):
        return 1.0
    return w.factor


def phases(profile: AttackProfile) -> list[AttackPhase]:
    """Annotation timeline for the attack.

    init at scenario start, transmit when the spoofer goes on air, then for
    ramps the pull start, the first change of rate, the end of the pull and
    the end of the trajectory. Labels keep their canonical order; a step push
    goes straight from transmit to stabilize and finalize.
    """
    if profile.kind == "none":
        return [AttackPhase("init", 0.0)]
    out = [AttackPhase("init", 0.0), AttackPhase("transmit", profile.start)]
    if profile.kind == "step_push":
        t = profile.start + profile.jam_lead
        return out + [AttackPhase("stabilize", t), AttackPhase("finalize", t)]
    t0 = profile.start + profile.jam_lead
    out.append(AttackPhase("ramp_start", t0))
    segs = profile.ramp_segments
    pull_end = t0 + sum(s.duration for s in segs)
    if len(segs) > 1:
        out.append(AttackPhase("ramp_accelerate", t0 + segs[0].duration))
    out.append(AttackPhase("stabilize", pull_end))
    out.append(AttackPhase("finalize", profile.end))
    return out


def phase_at(profile: AttackProfile, t) -> str:
    ts = _seconds(t)
    label = "init"
    for ph in phases(profile):
        if ts >= ph.t_begin:
            label = ph.label
    return label


def canned_takeover(rate: float, duration: float, start: float = 0.0, knees: int = 3) -> AttackProfile:
    """Slow start, acceleration to ``rate`` s/s, then plateau at that rate.

    The first ``knees - 1`` segments climb geometrically (rate / 4, rate / 2,
    ...) over equal shares of a quarter of ``duration``.
    """
    if knees < 1:
        raise AttackConfigError("need at least one knee")
    lead = duration / 4.0 if knees > 1 else 0.0
    segs = [RampSegment(lead / (knees - 1), rate / 2 ** (knees - 1 - i)) for i in range(knees - 1)]
    segs.append(RampSegment(duration - lead, rate))
    return AttackProfile(kind="ramp", start=start, ramp_segments=tuple(segs))
