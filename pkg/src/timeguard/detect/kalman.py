"""Two-state Kalman filter over the GNSS-vs-local inter-scale offset, with
innovation gating and a windowed mean-innovation test."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..allan import KalmanParams
from ..timebase import TimePoint


class NumericalFailure(ArithmeticError):
    """Covariance lost positive definiteness; Q or R is misconfigured."""


@dataclass(frozen=True, slots=True)
class KalmanState:
    """x = (offset, frequency difference); P stored as its three free entries."""

    offset: float
    freq: float
    p00: float
    p01: float
    p11: float
    q_bias: float
    q_drift: float
    r: float
    last_update: TimePoint

    @classmethod
    def initial(
        cls,
        offset: float,
        params: KalmanParams,
        t: TimePoint,
        freq: float = 0.0,
        p_offset: float | None = None,
        p_freq: float = 1e-18,
    ) -> KalmanState:
        p0 = params.r_meas if p_offset is None else p_offset
        return cls(offset, freq, p0, 0.0, p_freq, params.q_bias, params.q_drift, params.r_meas, t)

    @property
    def x(self) -> np.ndarray:
        return np.array([self.offset, self.freq])

    @property
    def P(self) -> np.ndarray:
        return np.array([[self.p00, self.p01], [self.p01, self.p11]])

    def check(self) -> None:
        det = self.p00 * self.p11 - self.p01 * self.p01
        if not (self.p00 > 0 and self.p11 >= 0 and det >= 0 and math.isfinite(det)):
            raise NumericalFailure(f"covariance not positive definite: {self.P.tolist()}")


@dataclass(frozen=True, slots=True)
class GateResult:
    state: KalmanState
    accepted: bool
    innovation: float
    s: float

    @property
    def normalized(self) -> float:
        return abs(self.innovation) / math.sqrt(self.s)


def kalman_predict(state: KalmanState, to: TimePoint) -> KalmanState:
    """x <- F x, P <- F P F^T + Q(dt) with F = [[1, dt], [0, 1]]."""
    if to < state.last_update:
        raise ValueError("cannot predict backwards")
    dt = float(to - state.last_update)
    if dt == 0:
        return state
    q11 = state.q_bias * dt + state.q_drift * dt**3 / 3.0
    q12 = state.q_drift * dt * dt / 2.0
    q22 = state.q_drift * dt
    p00 = state.p00 + 2 * dt * state.p01 + dt * dt * state.p11 + q11
    p01 = state.p01 + dt * state.p11 + q12
    p11 = state.p11 + q22
    return replace(
        state, offset=state.offset + dt * state.freq, p00=p00, p01=p01, p11=p11, last_update=to
    )


def kalman_gate_update(state: KalmanState, measured_offset: float, gate_k=3.0) -> GateResult:
    """Gate the offset measurement on its innovation and update if accepted.

    ``gate_k`` is a number or anything with a ``gate_k`` attribute.

    Accept iff |nu| <= gate_k sqrt(S). The update uses the Joseph form so the
    covariance stays symmetric; a rejected measurement leaves the state as
    it was.
    """
    gate_k = float(getattr(gate_k, "gate_k", gate_k))
    nu = float(measured_offset) - state.offset
    if not math.isfinite(nu):
        raise NumericalFailure("innovation is not finite")
    s = state.p00 + state.r
    if not s > 0:
        raise NumericalFailure("innovation variance is not positive")
    if abs(nu) > gate_k * math.sqrt(s):
        return GateResult(state, False, nu, s)
    k0 = state.p00 / s
    k1 = state.p01 / s
    # Joseph form (I - K H) P (I - K H)^T + K R K^T with H = [1, 0]
    a = 1.0 - k0
    p00 = a * a * state.p00 + k0 * k0 * state.r
    p01 = a * (state.p01 - k1 * state.p00) + k0 * k1 * state.r
    p11 = state.p11 - 2 * k1 * state.p01 + k1 * k1 * state.p00 + k1 * k1 * state.r
    new = replace(state, offset=state.offset + k0 * nu, freq=state.freq + k1 * nu, p00=p00, p01=p01, p11=p11)
    new.check()
    return GateResult(new, True, nu, s)


@dataclass(frozen=True)
class WindowResult:
    passed: bool
    statistic: float
    insufficient: bool = False


def windowed_innovation_test(innovations, variances, m: int = 32, gate_k: float = 3.0) -> WindowResult:
    """Mean-innovation test over the last ``m`` epochs.

    Fails iff |mean nu| > gate_k sqrt(mean S / m). With fewer than ``m``
    innovations it passes and says so.
    """
    if m < 8:
        raise ValueError("window must hold at least 8 innovations")
    nu = np.asarray(innovations, dtype=float)
    s = np.asarray(variances, dtype=float)
    if len(nu) != len(s):
        raise ValueError("one variance per innovation")
    if len(nu) < m:
        return WindowResult(True, 0.0, insufficient=True)
    nu, s = nu[-m:], s[-m:]
    stat = abs(float(nu.mean())) / math.sqrt(float(s.mean()) / m)
    return WindowResult(stat <= gate_k, stat)
