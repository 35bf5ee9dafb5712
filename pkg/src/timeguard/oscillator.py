"""Two-state (bias, drift) clock model and phase-series synthesis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .timebase import Rng, SimClock, TimeOffset, TimePoint


class StaleStateError(RuntimeError):
    """A clock state was read at an instant it has not been propagated to."""


@dataclass(frozen=True)
class ClockState:
    """Bias (s) and fractional frequency offset (s/s) at instant ``t``."""

    bias: float = 0.0
    drift: float = 0.0
    t: TimePoint = field(default_factory=TimePoint)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.bias) and math.isfinite(self.drift)):
            raise ValueError("clock state must be finite")


@dataclass(frozen=True)
class OscillatorSpec:
    """Noise intensities of a clock.

    ``q_bias`` (s^2/s) is white frequency noise, seen as a random walk in
    phase. ``q_drift`` (s^2/s^3) is random-walk frequency noise. ``flicker``
    is the approximate flat Allan deviation floor added by
    :func:`synthesize_phase` only.
    """

    q_bias: float = 0.0
    q_drift: float = 0.0
    aging: float = 0.0
    initial_bias: float = 0.0
    initial_drift: float = 0.0
    flicker: float = 0.0
    disciplined: bool = False
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.q_bias < 0 or self.q_drift < 0 or self.flicker < 0:
            raise ValueError("noise intensities must be non-negative")
        if abs(self.initial_drift) >= 1e-3:
            raise ValueError("initial drift must stay below 1e-3 s/s")

    def initial_state(self, t: TimePoint | None = None) -> ClockState:
        return ClockState(self.initial_bias, self.initial_drift, t or TimePoint(0))


TCXO = OscillatorSpec(q_bias=1e-21, q_drift=1e-29, initial_drift=2e-8, name="tcxo")
OCXO = OscillatorSpec(q_bias=1e-24, q_drift=1e-32, initial_drift=5e-11, name="ocxo")
# Receiver clock that steers its bias to the navigation solution after each fix.
GNSS_DISCIPLINED = OscillatorSpec(
    q_bias=1e-21, q_drift=1e-29, initial_drift=2e-8, disciplined=True, name="gnss_disciplined"
)

TIERS = {spec.name: spec for spec in (TCXO, OCXO, GNSS_DISCIPLINED)}


def process_covariance(q_bias: float, q_drift: float, dt: float) -> tuple[float, float, float]:
    """Exact discrete covariance (Q11, Q12, Q22) of the two-state model over ``dt``."""
    q11 = q_bias * dt + q_drift * dt**3 / 3.0
    q12 = q_drift * dt**2 / 2.0
    q22 = q_drift * dt
    return q11, q12, q22


def _cholesky2(q11: float, q12: float, q22: float) -> tuple[float, float, float]:
    l11 = math.sqrt(q11)
    l21 = q12 / l11 if l11 > 0 else 0.0
    l22 = math.sqrt(max(q22 - l21 * l21, 0.0))
    return l11, l21, l22


def propagate(state: ClockState, spec: OscillatorSpec, dt, rng: Rng) -> ClockState:
    """Advance ``state`` by ``dt`` seconds under ``spec``.

    Two standard normals are consumed per call whatever the intensities, so
    the random stream does not depend on the clock's parameters.
    """
    dt = float(dt)
    if dt <= 0:
        raise ValueError("dt must be positive")
    z1, z2 = rng.normal(2)
    l11, l21, l22 = _cholesky2(*process_covariance(spec.q_bias, spec.q_drift, dt))
    eta_b = l11 * z1
    eta_d = l21 * z1 + l22 * z2
    bias = state.bias + state.drift * dt + spec.aging * dt * dt / 2.0 + eta_b
    drift = state.drift + spec.aging * dt + eta_d
    return ClockState(bias, drift, state.t + TimeOffset(dt))


def read_phase_vs(truth: SimClock, state: ClockState) -> TimeOffset:
    """Offset of the clock's timescale from true time at ``truth.now``."""
    if state.t != truth.now:
        raise StaleStateError(
            f"clock state at {state.t.seconds} s read at {truth.now.seconds} s"
        )
    return TimeOffset(state.bias)


@dataclass(frozen=True)
class PhaseSeries:
    """Uniformly sampled phase offsets x_n in seconds."""

    sample_interval: float
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.sample_interval <= 0:
            raise ValueError("sample interval must be positive")

    def __len__(self) -> int:
        return len(self.values)


FLICKER_GAIN = 1.1


def _flicker_frequency(n: int, tau0: float, level: float, rng: Rng) -> np.ndarray:
    """Flicker-like fractional frequency: a bank of first-order Gauss-Markov
    processes with time constants two per decade, equal variance each.

    Equal-variance relaxation processes spaced evenly in log time sum to an
    approximately 1/f spectrum between the shortest and longest constants,
    which gives a flat Allan deviation there. ``level`` is that flat value,
    via a gain calibrated numerically for half-decade spacing.
    """
    span = max(n * tau0, 10 * tau0)
    taus = tau0 * 10 ** np.arange(-0.5, math.log10(span / tau0) + 0.5, 0.5)
    sigma_each = level / FLICKER_GAIN
    z = rng.normal((len(taus), n))
    y = np.zeros(n)
    for k, tc in enumerate(taus):
        a = math.exp(-tau0 / tc)
        drive = sigma_each * math.sqrt(1.0 - a * a)
        zi = np.array([a * sigma_each * z[k, 0]])
        y += lfilter([drive], [1.0, -a], z[k], zi=zi)[0]
    return y


def synthesize_phase(spec: OscillatorSpec, n: int, sample_interval: float, rng: Rng) -> PhaseSeries:
    """``n`` phase samples of a free-running clock, drawn in bulk.

    Uses the same exact discretisation and the same normal consumption order
    as repeated :func:`propagate` calls, so both paths agree on a given seed.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    dt = float(sample_interval)
    z = rng.normal((n - 1, 2)) if n > 1 else np.zeros((0, 2))
    l11, l21, l22 = _cholesky2(*process_covariance(spec.q_bias, spec.q_drift, dt))
    eta_b = l11 * z[:, 0]
    eta_d = l21 * z[:, 0] + l22 * z[:, 1]
    drift = np.empty(n)
    drift[0] = spec.initial_drift
    drift[1:] = spec.initial_drift + np.cumsum(spec.aging * dt + eta_d)
    steps = drift[:-1] * dt + spec.aging * dt * dt / 2.0 + eta_b
    bias = np.empty(n)
    bias[0] = spec.initial_bias
    bias[1:] = spec.initial_bias + np.cumsum(steps)
    if spec.flicker > 0:
        y = _flicker_frequency(n, dt, spec.flicker, rng)
        bias[1:] += np.cumsum(y[:-1] * dt)
    return PhaseSeries(dt, bias)


def discipline(state: ClockState, solved_bias: float) -> ClockState:
    """Steer a receiver clock onto its navigation solution."""
    return replace(state, bias=state.bias - float(solved_bias))
