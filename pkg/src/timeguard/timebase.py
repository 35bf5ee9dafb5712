"""Simulation time arithmetic and seeded randomness.

Instants are integer nanoseconds since the scenario epoch; offsets are real
seconds. Every stochastic component draws from an :class:`Rng` so that a
scenario seed fully determines a run.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

NANOS_PER_SECOND = 1_000_000_000
INT64_MAX = 2**63 - 1
INT64_MIN = -(2**63)


class ScenarioTooLongError(OverflowError):
    """Raised when an instant leaves the signed 64-bit nanosecond range."""


class TimeOffset(float):
    """Signed duration in seconds.

    A ``float`` subclass, so it drops into any numeric expression. Offsets
    made from integer nanoseconds (for instance the difference of two
    :class:`TimePoint`) also keep that integer, so long spans stay exact to
    the nanosecond through further offset arithmetic.
    """

    __slots__ = ("_ns",)

    def __new__(cls, seconds=0.0, _ns: int | None = None):
        obj = super().__new__(cls, seconds)
        obj._ns = _ns
        return obj

    @classmethod
    def from_nanos(cls, nanos: int) -> TimeOffset:
        nanos = int(nanos)
        return cls(nanos / NANOS_PER_SECOND, nanos)

    @property
    def nanos(self) -> int:
        if self._ns is not None:
            return self._ns
        return int(round(float(self) * NANOS_PER_SECOND))

    def __add__(self, other):
        if isinstance(other, TimePoint):
            return other + self
        if isinstance(other, TimeOffset) and self._ns is not None and other._ns is not None:
            return TimeOffset.from_nanos(self._ns + other._ns)
        if isinstance(other, float | int):
            return TimeOffset(float(self) + float(other))
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, TimeOffset) and self._ns is not None and other._ns is not None:
            return TimeOffset.from_nanos(self._ns - other._ns)
        if isinstance(other, float | int):
            return TimeOffset(float(self) - float(other))
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, float | int):
            return TimeOffset(float(other) - float(self))
        return NotImplemented

    def __neg__(self) -> TimeOffset:
        if self._ns is not None:
            return TimeOffset.from_nanos(-self._ns)
        return TimeOffset(-float(self))

    def __abs__(self) -> TimeOffset:
        return -self if self < 0 else self

    def __reduce__(self):
        return (TimeOffset, (float(self), self._ns))

    def __repr__(self) -> str:
        return f"TimeOffset({float(self)!r})"


def _checked(nanos: int) -> int:
    if not INT64_MIN <= nanos <= INT64_MAX:
        raise ScenarioTooLongError(f"instant {nanos} ns overflows int64")
    return nanos


@dataclass(frozen=True, order=True)
class TimePoint:
    """Instant on the simulation timescale, nanosecond exact."""

    epoch_nanos: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "epoch_nanos", _checked(int(self.epoch_nanos)))

    @classmethod
    def from_seconds(cls, seconds: float) -> TimePoint:
        return cls(int(round(seconds * NANOS_PER_SECOND)))

    @property
    def seconds(self) -> float:
        return self.epoch_nanos / NANOS_PER_SECOND

    def __add__(self, offset) -> TimePoint:
        if isinstance(offset, TimePoint):
            return NotImplemented
        return TimePoint(self.epoch_nanos + _offset_nanos(offset))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, TimePoint):
            return TimeOffset.from_nanos(self.epoch_nanos - other.epoch_nanos)
        return TimePoint(self.epoch_nanos - _offset_nanos(other))

    def isoformat(self, utc_anchor: datetime) -> str:
        """ISO-8601 rendering against a UTC anchor for the scenario epoch."""
        micros, rem = divmod(self.epoch_nanos, 1000)
        stamp = utc_anchor + timedelta(microseconds=micros)
        text = stamp.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f")
        return f"{text}{rem:03d}Z"


def _offset_nanos(offset) -> int:
    if isinstance(offset, TimeOffset):
        return offset.nanos
    return int(round(float(offset) * NANOS_PER_SECOND))


class SimClock:
    """Ground-truth clock of a scenario; single owner, monotone."""

    def __init__(self, start: TimePoint | None = None) -> None:
        self.now = start if start is not None else TimePoint(0)

    def __repr__(self) -> str:
        return f"SimClock(now={self.now.seconds!r} s)"


def advance(clock: SimClock, dt) -> TimePoint:
    """Move ``clock`` forward by ``dt`` seconds and return the new instant."""
    step = _offset_nanos(dt)
    if step <= 0:
        raise ValueError(f"clock can only advance by a positive step, got {dt!r}")
    nanos = clock.now.epoch_nanos + step
    if nanos > INT64_MAX:
        raise ScenarioTooLongError(f"advancing to {nanos} ns overflows int64")
    clock.now = TimePoint(nanos)
    return clock.now


class Rng:
    """Seeded random stream backed by numpy's PCG64 bit generator.

    PCG64 output is specified bit-for-bit by numpy, so equal seeds give equal
    streams across platforms.
    """

    def __init__(self, seed: int, *, spawn_key: tuple[int, ...] = ()) -> None:
        self.seed = int(seed)
        self.spawn_key = tuple(spawn_key)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, *key: int) -> Rng:
        """Independent stream identified by ``key`` (e.g. a sweep cell index)."""
        return Rng(self.seed, spawn_key=self.spawn_key + tuple(int(k) for k in key))

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def exponential(self, scale: float) -> float:
        return float(self.generator.exponential(scale)) if scale > 0 else 0.0

    def bytes(self, n: int) -> bytes:
        return self.generator.bytes(n)


def gauss(rng: Rng, sigma: float) -> float:
    """Zero-mean normal deviate with standard deviation ``sigma``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    z = float(rng.normal())
    return 0.0 if sigma == 0 else sigma * z


def named_streams(seed: int, names: list[str]) -> dict[str, Rng]:
    """One child stream per name, keyed by position so output is stable."""
    root = Rng(seed)
    return {name: root.child(i) for i, name in enumerate(names)}


EPOCH_ANCHOR = datetime(2024, 1, 1, tzinfo=timezone.utc)
