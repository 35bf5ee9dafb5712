"""Pseudorange synthesis, receiver time/position solutions and spoof injection.

Sign convention: a satellite clock bias ``dT`` shortens its pseudorange and
the receiver clock bias ``dt_r`` lengthens every pseudorange,
``P = |sat - rx| + c (dt_r - dT) + noise``. No atmospheric terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .timebase import Rng, TimeOffset, TimePoint

C = 299_792_458.0
EARTH_RADIUS = 6_371_000.0
GPS_ALTITUDE = 20_200_000.0
MIN_GATE_M = 1e-3


class DegenerateGeometryError(ValueError):
    pass


@dataclass(frozen=True)
class SatelliteGeometry:
    id: str
    position: np.ndarray
    clock_bias: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))


@dataclass(frozen=True)
class PseudorangeSet:
    epoch: TimePoint
    sat_ids: tuple[str, ...]
    ranges: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        ranges = np.asarray(self.ranges, dtype=float)
        if len(ranges) != len(self.sat_ids):
            raise ValueError("one range per satellite")
        if not np.all(np.isfinite(ranges)) or np.any(ranges <= 0):
            raise ValueError("pseudoranges must be positive and finite")
        object.__setattr__(self, "ranges", ranges)


@dataclass(frozen=True)
class PntSolution:
    position: np.ndarray
    clock_bias: TimeOffset
    utc_time: TimePoint
    fix_valid: bool
    residual_rms: float = 0.0
    iterations: int = 0


def make_constellation(
    n: int,
    rng: Rng,
    receiver_pos=(0.0, 0.0, 0.0),
    radius: float = EARTH_RADIUS + GPS_ALTITUDE,
    elevation_mask_deg: float = 10.0,
    clock_sigma: float = 0.0,
) -> list[SatelliteGeometry]:
    """Static satellites on a spherical shell, visible from ``receiver_pos``.

    A receiver at the origin sees the whole shell; otherwise candidate
    directions are drawn until ``n`` clear the elevation mask.
    """
    rx = np.asarray(receiver_pos, dtype=float)
    norm = np.linalg.norm(rx)
    up = rx / norm if norm > 0 else None
    sats: list[SatelliteGeometry] = []
    while len(sats) < n:
        u = rng.normal(3)
        u /= np.linalg.norm(u)
        pos = u * radius
        if up is not None:
            los = pos - rx
            sin_el = float(np.dot(los, up) / np.linalg.norm(los))
            if sin_el < math.sin(math.radians(elevation_mask_deg)):
                continue
        bias = float(rng.normal()) * clock_sigma
        sats.append(SatelliteGeometry(f"G{len(sats) + 1:02d}", pos, bias))
    return sats


def _lookup(pr: PseudorangeSet, geom: list[SatelliteGeometry]):
    by_id = {s.id: s for s in geom}
    try:
        sats = [by_id[i] for i in pr.sat_ids]
    except KeyError as exc:
        raise ValueError(f"no geometry for satellite {exc.args[0]}") from None
    pos = np.array([s.position for s in sats]).reshape(-1, 3)
    dT = np.array([s.clock_bias for s in sats])
    return pos, dT


def synthesize_pseudoranges(
    geom: list[SatelliteGeometry],
    receiver_pos,
    true_bias: float,
    rng: Rng,
    sigma: float,
    epoch: TimePoint | None = None,
) -> PseudorangeSet:
    """Code pseudoranges seen by a receiver with clock bias ``true_bias``."""
    if not geom:
        raise DegenerateGeometryError("no satellites")
    rx = np.asarray(receiver_pos, dtype=float)
    pos = np.array([s.position for s in geom])
    dT = np.array([s.clock_bias for s in geom])
    rho = np.linalg.norm(pos - rx, axis=1)
    if np.any(rho <= 0):
        raise DegenerateGeometryError("satellite coincides with the receiver")
    noise = rng.normal(len(geom)) * sigma if sigma > 0 else np.zeros(len(geom))
    ranges = rho + C * (float(true_bias) - dT) + noise
    return PseudorangeSet(epoch or TimePoint(0), tuple(s.id for s in geom), ranges, sigma)


def residual_gate(sigma: float, n: int, u: int) -> float:
    """RMS residual limit 5 sigma sqrt(n / (n - u)); infinite with no redundancy."""
    if n <= u:
        return math.inf
    return max(5.0 * sigma * math.sqrt(n / (n - u)), MIN_GATE_M)


def solve_time_bias(pr: PseudorangeSet, geom: list[SatelliteGeometry], known_pos) -> PntSolution:
    """Receiver clock bias with the antenna position held fixed.

    ``pr.epoch`` is the receiver's own clock reading, so the reported time is
    that reading corrected by the solved bias.
    """
    if len(pr.sat_ids) < 1:
        raise DegenerateGeometryError("need at least one satellite")
    rx = np.asarray(known_pos, dtype=float)
    pos, dT = _lookup(pr, geom)
    rho = np.linalg.norm(pos - rx, axis=1)
    per_sat = (pr.ranges - rho) / C + dT
    bias = float(np.mean(per_sat))
    resid = (per_sat - bias) * C
    rms = float(np.sqrt(np.mean(resid**2)))
    ok = rms <= residual_gate(pr.noise_sigma, len(resid), 1)
    return PntSolution(rx.copy(), TimeOffset(bias), pr.epoch - TimeOffset(bias), ok, rms, 1)


def solve_pnt4(
    pr: PseudorangeSet,
    geom: list[SatelliteGeometry],
    initial_pos=None,
    max_iter: int = 10,
    tol_m: float = 1e-6,
) -> PntSolution:
    """Position and clock bias by Gauss-Newton on ``p = Hx + v``."""
    n = len(pr.sat_ids)
    if n < 4:
        raise DegenerateGeometryError(f"{n} satellites cannot fix 4 states")
    pos, dT = _lookup(pr, geom)
    corrected = pr.ranges + C * dT
    x = np.zeros(3) if initial_pos is None else np.asarray(initial_pos, dtype=float).copy()
    cb = 0.0  # clock bias in metres
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        los = pos - x
        rho = np.linalg.norm(los, axis=1)
        H = np.hstack([-los / rho[:, None], np.ones((n, 1))])
        if np.linalg.matrix_rank(H) < 4:
            raise DegenerateGeometryError("observation matrix is rank deficient")
        dz = corrected - (rho + cb)
        step, *_ = np.linalg.lstsq(H, dz, rcond=None)
        x = x + step[:3]
        cb += step[3]
        if np.linalg.norm(step) < tol_m:
            converged = True
            break
    rho = np.linalg.norm(pos - x, axis=1)
    resid = corrected - (rho + cb)
    rms = float(np.sqrt(np.mean(resid**2)))
    bias = TimeOffset(cb / C)
    ok = converged and rms <= residual_gate(pr.noise_sigma, n, 4)
    return PntSolution(x, bias, pr.epoch - bias, ok, rms, it)


def inject_spoof(pr: PseudorangeSet, delta) -> PseudorangeSet:
    """Add the spoofer's per-satellite range offsets (metres, or one scalar)."""
    delta = np.broadcast_to(np.asarray(delta, dtype=float), pr.ranges.shape)
    return replace(pr, ranges=pr.ranges + delta)
