"""Scenario files: YAML with a versioned schema, strict keys, cross-checks."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from ..adversary import NO_ATTACK, AttackConfigError, AttackProfile, ClogWindow, RampSegment
from ..allan import KalmanParams
from ..detect import AdaptiveConfig, DetectorConfig
from ..gnss_sim import EARTH_RADIUS
from ..netsources import NetworkState, ServerSpec, TrustLevel, default_catalog
from ..oscillator import TIERS, OscillatorSpec

SCHEMA_VERSION = 1
DETECTORS = ("consensus", "roughtime", "nts", "kalman", "windowed", "two_point")
EXTERNAL_DETECTORS = ("consensus", "roughtime", "nts")


class ConfigError(ValueError):
    pass


def _take(raw, allowed: set[str], where: str) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return dict(raw)


def _oscillator(raw, where: str) -> OscillatorSpec:
    if isinstance(raw, str):
        if raw not in TIERS:
            raise ConfigError(f"{where}: unknown oscillator tier {raw!r}; known: {', '.join(TIERS)}")
        return TIERS[raw]
    fields = {"tier", "q_bias", "q_drift", "aging", "initial_bias", "initial_drift", "flicker", "disciplined"}
    d = _take(raw, fields, where)
    base = TIERS[d.pop("tier")] if "tier" in d else OscillatorSpec(name="custom")
    try:
        return replace(base, **{k: (bool(v) if k == "disciplined" else float(v)) for k, v in d.items()})
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class ReceiverConfig:
    oscillator: OscillatorSpec = TIERS["tcxo"]
    position: tuple[float, float, float] = (EARTH_RADIUS, 0.0, 0.0)
    n_satellites: int = 8
    sigma_m: float = 3.8
    solver: str = "time_only"
    elevation_mask_deg: float = 10.0


@dataclass(frozen=True)
class KalmanTuning:
    """``mode='allan'`` tunes from a benign calibration run of
    ``calibration_epochs``; ``'explicit'`` uses ``params`` and ``ref_adev``."""

    mode: str = "allan"
    calibration_epochs: int = 10_000
    params: KalmanParams | None = None
    ref_adev: dict[float, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    duration: float = 600.0
    epoch_interval: float = 1.0
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    local_clock: OscillatorSpec | None = None
    servers: tuple[ServerSpec, ...] = ()
    network: NetworkState = field(default_factory=NetworkState)
    detectors: tuple[str, ...] = ("consensus",)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    adaptive_polling: bool = True
    tuning: KalmanTuning = field(default_factory=KalmanTuning)
    recalibration_interval: float | None = None
    attack: AttackProfile = NO_ATTACK
    output_dir: str | None = None

    @property
    def n_epochs(self) -> int:
        return int(round(self.duration / self.epoch_interval))

    def validate(self) -> ScenarioConfig:
        if self.duration <= 0 or self.epoch_interval <= 0:
            raise ConfigError("duration and epoch_interval must be positive")
        if abs(self.n_epochs * self.epoch_interval - self.duration) > 1e-9 * self.duration:
            raise ConfigError("duration must be a whole number of epochs")
        unknown = sorted(set(self.detectors) - set(DETECTORS))
        if unknown:
            raise ConfigError(f"unknown detector(s) {', '.join(unknown)}")
        ids = [s.id for s in self.servers]
        if len(set(ids)) != len(ids):
            raise ConfigError("server ids must be unique")
        missing = sorted(set(self.attack.colluding_servers) - set(ids))
        if missing:
            raise ConfigError(f"colluding server(s) not in the catalog: {', '.join(missing)}")
        if "two_point" in self.detectors and max(self.detector.two_point_baselines) > self.duration:
            raise ConfigError("two-point baselines must not exceed the duration")
        local = {"kalman", "windowed", "two_point"} & set(self.detectors)
        if local and self.local_clock is None:
            raise ConfigError(f"detector(s) {', '.join(sorted(local))} need a local_clock")
        if self.tuning.mode == "explicit" and local and self.tuning.params is None:
            raise ConfigError("explicit Kalman tuning needs q_bias, q_drift and r_meas")
        if self.receiver.solver not in ("time_only", "pnt4"):
            raise ConfigError("receiver.solver is 'time_only' or 'pnt4'")
        if self.receiver.n_satellites < (4 if self.receiver.solver == "pnt4" else 1):
            raise ConfigError("too few satellites for the chosen solver")
        return self


def _servers(raw) -> tuple[ServerSpec, ...]:
    if raw is None:
        return ()
    if raw == "default":
        return tuple(default_catalog())
    if not isinstance(raw, list):
        raise ConfigError("servers: expected 'default' or a list")
    allowed = {
        "id", "kind", "base_latency", "jitter_sigma", "true_time_error", "asymmetry",
        "radius", "dispersion", "stratum", "trust", "colluding", "fault",
    }
    out = []
    for i, item in enumerate(raw):
        d = _take(item, allowed, f"servers[{i}]")
        if "trust" in d:
            try:
                d["trust"] = TrustLevel[str(d["trust"]).upper()]
            except KeyError:
                raise ConfigError(f"servers[{i}]: unknown trust level {d['trust']!r}") from None
        try:
            out.append(ServerSpec(**d))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"servers[{i}]: {exc}") from None
    return tuple(out)


def _attack(raw) -> AttackProfile:
    allowed = {
        "kind", "start", "step_offset", "jam_lead", "hold", "segments", "clog",
        "colluding_servers", "max_pull_mps",
    }
    d = _take(raw, allowed, "attack")
    if not d:
        return NO_ATTACK
    segs = []
    for i, seg in enumerate(d.pop("segments", None) or []):
        s = _take(seg, {"duration", "rate", "rate_mps"}, f"attack.segments[{i}]")
        if ("rate" in s) == ("rate_mps" in s):
            raise ConfigError(f"attack.segments[{i}]: give exactly one of rate, rate_mps")
        if "rate" in s:
            segs.append(RampSegment(float(s["duration"]), float(s["rate"])))
        else:
            segs.append(RampSegment.from_mps(float(s["duration"]), float(s["rate_mps"])))
    clog = d.pop("clog", None)
    try:
        if clog is not None:
            c = _take(clog, {"start", "duration", "factor"}, "attack.clog")
            clog = ClogWindow(float(c["start"]), float(c["duration"]), float(c["factor"]))
        return AttackProfile(
            ramp_segments=tuple(segs),
            clog=clog,
            colluding_servers=tuple(d.pop("colluding_servers", ()) or ()),
            **{k: (v if k == "kind" else float(v)) for k, v in d.items()},
        )
    except (AttackConfigError, KeyError, TypeError) as exc:
        raise ConfigError(f"attack: {exc}") from None


def _detectors(raw) -> tuple[tuple[str, ...], DetectorConfig, bool, KalmanTuning, float | None]:
    allowed = {
        "enabled", "lambda_tr", "gate_k", "window_m", "consensus_rule", "trust_floor", "adaptive",
        "two_point_baselines", "gate_persistence", "kalman_tuning", "calibration_epochs", "kalman",
        "ref_adev", "recalibration_interval",
    }
    d = _take(raw, allowed, "detectors")
    enabled = tuple(d.pop("enabled", ["consensus"]))
    adaptive_raw = d.pop("adaptive", True)
    adaptive_on = adaptive_raw is not False
    adaptive = AdaptiveConfig()
    if isinstance(adaptive_raw, dict):
        a = _take(adaptive_raw, {"base_interval", "increment", "max_interval"}, "detectors.adaptive")
        adaptive = AdaptiveConfig(**{k: float(v) for k, v in a.items()})
    mode = d.pop("kalman_tuning", "allan")
    if mode not in ("allan", "explicit"):
        raise ConfigError("detectors.kalman_tuning is 'allan' or 'explicit'")
    params = None
    if "kalman" in d:
        k = _take(d.pop("kalman"), {"q_bias", "q_drift", "r_meas"}, "detectors.kalman")
        try:
            params = KalmanParams(float(k["q_bias"]), float(k["q_drift"]), float(k["r_meas"]))
        except KeyError as exc:
            raise ConfigError(f"detectors.kalman: missing {exc.args[0]}") from None
    ref_adev = {float(b): float(v) for b, v in (d.pop("ref_adev", None) or {}).items()}
    tuning = KalmanTuning(mode, int(d.pop("calibration_epochs", 10_000)), params, ref_adev)
    recal = d.pop("recalibration_interval", None)
    if "trust_floor" in d:
        try:
            d["trust_floor"] = TrustLevel[str(d["trust_floor"]).upper()]
        except KeyError:
            raise ConfigError(f"detectors: unknown trust_floor {d['trust_floor']!r}") from None
    if "two_point_baselines" in d:
        d["two_point_baselines"] = tuple(float(b) for b in d["two_point_baselines"])
    try:
        cfg = DetectorConfig(adaptive=adaptive, **d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"detectors: {exc}") from None
    return enabled, cfg, adaptive_on, tuning, None if recal is None else float(recal)


def scenario_from_dict(raw: dict) -> ScenarioConfig:
    """Build and validate a scenario from its parsed mapping."""
    raw = copy.deepcopy(raw)
    top = {
        "schema", "name", "seed", "duration", "epoch_interval", "receiver", "local_clock",
        "servers", "network", "detectors", "attack", "output",
    }
    d = _take(raw, top, "scenario")
    version = d.pop("schema", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema must be {SCHEMA_VERSION}, got {version!r}")
    rx = _take(
        d.pop("receiver", None),
        {"oscillator", "position", "n_satellites", "sigma_m", "solver", "elevation_mask_deg"},
        "receiver",
    )
    receiver = ReceiverConfig(
        oscillator=_oscillator(rx.pop("oscillator", "tcxo"), "receiver.oscillator"),
        position=tuple(float(v) for v in rx.pop("position", (EARTH_RADIUS, 0.0, 0.0))),
        n_satellites=int(rx.pop("n_satellites", 8)),
        sigma_m=float(rx.pop("sigma_m", 3.8)),
        solver=str(rx.pop("solver", "time_only")),
        elevation_mask_deg=float(rx.pop("elevation_mask_deg", 10.0)),
    )
    local_raw = d.pop("local_clock", None)
    local = None
    if local_raw is not None:
        local = _oscillator(_take(local_raw, {"oscillator"}, "local_clock").get("oscillator", "ocxo"), "local_clock")
    net = _take(d.pop("network", None), {"drop_threshold"}, "network")
    enabled, det_cfg, adaptive_on, tuning, recal = _detectors(d.pop("detectors", None))
    out = _take(d.pop("output", None), {"dir"}, "output")
    try:
        cfg = ScenarioConfig(
            name=str(d.pop("name", "scenario")),
            seed=int(d.pop("seed", 0)),
            duration=float(d.pop("duration", 600.0)),
            epoch_interval=float(d.pop("epoch_interval", 1.0)),
            receiver=receiver,
            local_clock=local,
            servers=_servers(d.pop("servers", None)),
            network=NetworkState(drop_threshold=float(net.get("drop_threshold", 2.0))),
            detectors=enabled,
            detector=det_cfg,
            adaptive_polling=adaptive_on,
            tuning=tuning,
            recalibration_interval=recal,
            attack=_attack(d.pop("attack", None)),
            output_dir=out.get("dir"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def load_raw(path) -> dict:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return raw


def load_scenario(path) -> ScenarioConfig:
    return scenario_from_dict(load_raw(path))


def set_dotted(raw: dict, key: str, value) -> dict:
    """Return a copy of ``raw`` with ``a.b.0.c`` set to ``value``."""
    out = copy.deepcopy(raw)
    parts = key.split(".")
    node = out
    for i, part in enumerate(parts[:-1]):
        nxt = parts[i + 1]
        if isinstance(node, list):
            node = node[int(part)]
            continue
        if node.get(part) is None:
            node[part] = [] if nxt.isdigit() else {}
        node = node[part]
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
    return out
