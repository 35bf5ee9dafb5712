"""Allan variance, noise-regime classification, clustering and Kalman tuning."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .oscillator import PhaseSeries

MIN_TERMS = 3

# Allan deviation log-log slope of each regime.
REGIME_SLOPES = {"white": -0.5, "flicker": 0.0, "random_walk": 0.5, "drift": 1.0}
FLICKER_BAND = 0.2
RESIDUAL_GATE = 0.15


class InsufficientDataError(ValueError):
    pass


class AllanTuningWarning(UserWarning):
    pass


def _factor(series: PhaseSeries, tau: float) -> int:
    m = tau / series.sample_interval
    mi = int(round(m))
    if mi < 1 or abs(m - mi) > 1e-9 * max(1.0, m):
        raise ValueError(f"tau={tau} is not a positive multiple of {series.sample_interval}")
    return mi


def allan_variance(series: PhaseSeries, tau: float) -> float:
    """Overlapping Allan variance at ``tau`` from phase samples.

    Averages every second difference x[n+2m] - 2x[n+m] + x[n] squared and
    divides by 2 tau^2.
    """
    m = _factor(series, tau)
    x = series.values
    terms = len(x) - 2 * m
    if terms < MIN_TERMS:
        raise InsufficientDataError(f"tau={tau} leaves {max(terms, 0)} terms, need {MIN_TERMS}")
    d = x[2 * m :] - 2.0 * x[m:-m] + x[: -2 * m]
    return float(np.mean(d * d) / (2.0 * tau * tau))


def decade_taus(tau0: float, lo_decade: int, hi_decade: int) -> list[float]:
    """1-2-5 grid from 10**lo_decade to 10**hi_decade inclusive, on multiples of tau0."""
    taus = []
    for k in range(lo_decade, hi_decade + 1):
        for mant in (1, 2, 5):
            tau = mant * 10.0**k
            if k == hi_decade and mant > 1:
                break
            if tau + 1e-12 >= tau0:
                taus.append(tau)
    return taus


@dataclass(frozen=True)
class AllanCurve:
    taus: np.ndarray
    adevs: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        for name in ("taus", "adevs", "counts"):
            object.__setattr__(self, name, np.asarray(getattr(self, name)))
        if np.any(np.diff(self.taus) <= 0):
            raise ValueError("taus must be strictly increasing")

    def __len__(self) -> int:
        return len(self.taus)

    def adev_at(self, tau: float) -> float:
        """Log-log interpolation; exact at sampled taus."""
        if len(self) == 0:
            raise InsufficientDataError("empty curve")
        lt = np.log10(self.taus)
        if not lt[0] - 1e-9 <= math.log10(tau) <= lt[-1] + 1e-9:
            raise ValueError(f"tau={tau} outside curve range")
        return float(10 ** np.interp(math.log10(tau), lt, np.log10(self.adevs)))


def allan_curve(series: PhaseSeries, taus=None) -> AllanCurve:
    """Allan deviation over ``taus`` (default: full 1-2-5 grid the data allows).

    Points with fewer than three second-difference terms, or zero deviation,
    are left out rather than extrapolated.
    """
    tau0 = series.sample_interval
    if taus is None:
        top = int(math.floor(math.log10(tau0 * len(series))))
        taus = decade_taus(tau0, int(math.floor(math.log10(tau0))), top)
    out_t, out_a, out_n = [], [], []
    for tau in taus:
        try:
            m = _factor(series, tau)
        except ValueError:
            continue
        if len(series) - 2 * m < MIN_TERMS:
            continue
        avar = allan_variance(series, tau)
        if avar <= 0:
            continue
        out_t.append(tau)
        out_a.append(math.sqrt(avar))
        out_n.append(len(series) - 2 * m)
    return AllanCurve(np.array(out_t), np.array(out_a), np.array(out_n, dtype=int))


@dataclass(frozen=True)
class DecadeFit:
    tau_lo: float
    tau_hi: float
    slope: float
    intercept: float  # log10 adev at tau = 1 s on the fitted line
    residual: float
    regime: str | None

    def adev_line(self, tau: float) -> float:
        return 10 ** (self.intercept + self.slope * math.log10(tau))


@dataclass(frozen=True)
class NoiseClassification:
    fits: list[DecadeFit]
    crossovers: list[tuple[str, str, float]] = field(default_factory=list)

    def regimes(self) -> list[str | None]:
        return [f.regime for f in self.fits]

    def first(self, regime: str) -> DecadeFit | None:
        return next((f for f in self.fits if f.regime == regime), None)

    def regime_at(self, tau: float) -> str | None:
        for f in self.fits:
            if f.tau_lo <= tau <= f.tau_hi:
                return f.regime
        return None


def _nearest_regime(slope: float) -> str:
    if abs(slope) < FLICKER_BAND:
        return "flicker"
    # ties go to the lower slope, i.e. the regime met at smaller tau
    return min(REGIME_SLOPES, key=lambda r: (abs(REGIME_SLOPES[r] - slope), REGIME_SLOPES[r]))


def classify_noise(curve: AllanCurve) -> NoiseClassification:
    """Fit a log-log line per decade and map each slope to a noise regime.

    Decades start at the smallest tau. A decade whose fit RMS residual
    reaches the gate keeps ``regime=None``. Crossovers are reported where two
    adjacent classified decades disagree, at the intersection of their lines.
    """
    if len(curve) < 2:
        raise InsufficientDataError("need at least two points")
    lt = np.log10(curve.taus)
    la = np.log10(curve.adevs)
    start = lt[0]
    n_dec = int(math.floor(lt[-1] - start + 1e-9))
    if n_dec < 2:
        raise InsufficientDataError("need at least two decades of tau")
    fits = []
    for k in range(n_dec):
        sel = (lt >= start + k - 1e-9) & (lt <= start + k + 1 + 1e-9)
        if sel.sum() < 2:
            raise InsufficientDataError(f"decade {k} has fewer than two points")
        slope, icpt = np.polyfit(lt[sel], la[sel], 1)
        resid = la[sel] - (icpt + slope * lt[sel])
        rms = float(np.sqrt(np.mean(resid**2)))
        regime = _nearest_regime(float(slope)) if rms < RESIDUAL_GATE else None
        fits.append(DecadeFit(10 ** (start + k), 10 ** (start + k + 1), float(slope), float(icpt), rms, regime))
    crossings = []
    classified = [f for f in fits if f.regime is not None]
    for a, b in zip(classified, classified[1:]):
        if a.regime != b.regime and a.slope != b.slope:
            ltx = (a.intercept - b.intercept) / (b.slope - a.slope)
            crossings.append((a.regime, b.regime, float(10**ltx)))
    return NoiseClassification(fits, crossings)


def cluster_sources(curves: dict[str, AllanCurve], tau: float, band: float = 3.0) -> list[list[str]]:
    """Group sources whose deviation at ``tau`` is within ``band`` of the
    group's best member. Groups and members come out best first."""
    if band < 1:
        raise ValueError("band is a ratio >= 1")
    ranked = sorted(((c.adev_at(tau), name) for name, c in curves.items()))
    groups: list[list[str]] = []
    anchor = None
    for value, name in ranked:
        if anchor is None or value > anchor * band:
            groups.append([name])
            anchor = value
        else:
            groups[-1].append(name)
    return groups


@dataclass(frozen=True)
class KalmanParams:
    q_bias: float
    q_drift: float
    r_meas: float
    fallback: bool = False


DEFAULT_PARAMS = KalmanParams(q_bias=1e-18, q_drift=1e-24, r_meas=1e-16)


def kalman_params_from_allan(
    classification: NoiseClassification,
    measurement: AllanCurve | None = None,
    poll_tau: float = 1.0,
    defaults: KalmanParams = DEFAULT_PARAMS,
) -> KalmanParams:
    """Two-state filter intensities read off the fitted regime lines.

    With q_bias and q_drift the Allan variance of the two-state model is
    q_bias / tau + q_drift * tau / 3, so

    * q_bias = adev_white(1 s)^2, from the first decade classed white;
    * q_drift = 3 * adev_rw(1 s)^2, from the first decade classed random
      walk, zero when no such decade exists;
    * r_meas = (adev_meas(poll_tau) * poll_tau)^2 / 3, reading the
      measurement curve as white phase noise.

    Without a white decade the defaults come back with ``fallback=True`` and
    an :class:`AllanTuningWarning`.
    """
    white = classification.first("white")
    if white is None:
        warnings.warn("no white-noise region found; using default Kalman tuning", AllanTuningWarning, stacklevel=2)
        return KalmanParams(defaults.q_bias, defaults.q_drift, defaults.r_meas, fallback=True)
    q_bias = white.adev_line(1.0) ** 2
    rw = classification.first("random_walk")
    q_drift = 3.0 * rw.adev_line(1.0) ** 2 if rw is not None else 0.0
    r_meas = defaults.r_meas
    if measurement is not None:
        r_meas = (measurement.adev_at(poll_tau) * poll_tau) ** 2 / 3.0
    return KalmanParams(q_bias, q_drift, r_meas)
