"""Simulated Roughtime and NTS/NTP servers behind a clog-able network path.

Cryptography is reduced to a verification outcome per response. A server
flagged ``impersonated`` is an attacker without the signing key, so its
replies never verify; ``tampered_echo`` corrupts the nonce echo.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum

from .timebase import Rng, TimeOffset, TimePoint

MIN_POLL_INTERVAL = 1.0
KINDS = ("roughtime", "nts", "ntp")
FAULTS = (None, "impersonated", "tampered_echo")


class TrustLevel(IntEnum):
    UNAUTHENTICATED_REMOTE = 0
    AUTHENTICATED_REMOTE = 1
    TRUSTED_LOCAL = 2


class TimeSourceError(RuntimeError):
    pass


class QueryTimeout(TimeSourceError):
    def __init__(self, server_id: str, rtt: float) -> None:
        super().__init__(f"{server_id}: round trip {rtt:.6f} s exceeded the client timeout")
        self.server_id = server_id
        self.rtt = rtt


class BackoffError(TimeSourceError):
    """Query issued sooner than the per-server minimum poll interval."""


class BrokenChainError(TimeSourceError):
    def __init__(self, index: int, responses: list) -> None:
        super().__init__(f"roughtime chain broken at link {index}")
        self.index = index
        self.responses = responses


class UnauthenticatedInputError(ValueError):
    """A response that failed verification was handed to a detector."""


@dataclass(frozen=True)
class ServerSpec:
    """One remote time server.

    ``base_latency`` is the nominal one-way delay; ``asymmetry`` is the
    downlink minus uplink delay. ``radius`` is the Roughtime confidence
    radius; ``dispersion`` the NTP root dispersion.
    """

    id: str
    kind: str
    base_latency: float
    jitter_sigma: float = 0.0
    true_time_error: float = 0.0
    asymmetry: float = 0.0
    radius: float = 0.0
    dispersion: float = 0.0
    stratum: int = 1
    trust: TrustLevel | None = None
    colluding: bool = False
    fault: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown server kind {self.kind!r}")
        if self.fault not in FAULTS:
            raise ValueError(f"unknown fault {self.fault!r}")
        if self.kind == "roughtime" and self.radius <= 0:
            raise ValueError(f"{self.id}: roughtime radius must be positive")
        if self.kind != "roughtime" and self.dispersion <= 0:
            raise ValueError(f"{self.id}: root dispersion must be positive")
        if self.base_latency < 0 or self.jitter_sigma < 0:
            raise ValueError(f"{self.id}: latency and jitter must be non-negative")
        if abs(self.asymmetry) > 2 * self.base_latency:
            raise ValueError(f"{self.id}: asymmetry exceeds the round trip")
        if self.trust is None:
            default = TrustLevel.UNAUTHENTICATED_REMOTE if self.kind == "ntp" else TrustLevel.AUTHENTICATED_REMOTE
            object.__setattr__(self, "trust", default)
        else:
            object.__setattr__(self, "trust", TrustLevel(self.trust))


@dataclass
class NetworkState:
    clog_factor: float = 1.0
    drop_threshold: float = 2.0

    def __post_init__(self) -> None:
        if self.clog_factor < 1:
            raise ValueError("clog factor is at least 1")


@dataclass(frozen=True)
class RoughtimeResponse:
    server_id: str
    midpoint: TimePoint
    radius: float
    authenticated: bool
    nonce: bytes
    nonce_echo: bytes
    rtt: float
    trust: TrustLevel = TrustLevel.AUTHENTICATED_REMOTE
    kind: str = "roughtime"

    @property
    def center(self) -> TimePoint:
        return self.midpoint

    @property
    def half_width(self) -> float:
        return self.radius

    def digest(self) -> bytes:
        blob = b"|".join(
            [self.server_id.encode(), self.nonce_echo, str(self.midpoint.epoch_nanos).encode(), repr(self.radius).encode()]
        )
        return hashlib.sha512(blob).digest()


@dataclass(frozen=True)
class NtsSample:
    """One four-timestamp exchange. ``t_local`` is the client clock at receipt."""

    server_id: str
    kind: str
    t_local: TimePoint
    offset_theta: float
    root_distance: float
    round_trip_delay: float
    stratum: int
    authenticated: bool
    trust: TrustLevel

    @property
    def center(self) -> TimePoint:
        return self.t_local + TimeOffset(self.offset_theta)

    @property
    def half_width(self) -> float:
        return self.root_distance


def _delays(server: ServerSpec, net: NetworkState, rng: Rng) -> tuple[float, float]:
    # queueing jitter is exponential; clogging stretches both latency and jitter
    up = server.base_latency - server.asymmetry / 2.0 + rng.exponential(server.jitter_sigma)
    down = server.base_latency + server.asymmetry / 2.0 + rng.exponential(server.jitter_sigma)
    return up * net.clog_factor, down * net.clog_factor


def _verifies(server: ServerSpec) -> bool:
    return server.fault != "impersonated"


def query_roughtime(
    server: ServerSpec,
    net: NetworkState,
    now: TimePoint,
    rng: Rng,
    nonce: bytes | None = None,
    attack_offset: float = 0.0,
) -> RoughtimeResponse:
    """Signed coarse time from ``server``, received at true instant ``now``.

    The midpoint is the server's clock when it signed, one downlink delay
    earlier; nothing compensates for that delay. A colluding server adds
    ``attack_offset`` (the spoofed GNSS timescale error) to its clock.
    """
    if server.kind != "roughtime":
        raise ValueError(f"{server.id} is not a roughtime server")
    up, down = _delays(server, net, rng)
    rtt = up + down
    if rtt > net.drop_threshold:
        raise QueryTimeout(server.id, rtt)
    if nonce is None:
        nonce = rng.bytes(32)
    error = server.true_time_error + (attack_offset if server.colluding else 0.0)
    midpoint = now + TimeOffset(error - down)
    echo = nonce if server.fault != "tampered_echo" else hashlib.sha512(b"tamper" + nonce).digest()[:32]
    return RoughtimeResponse(
        server.id, midpoint, server.radius, _verifies(server), nonce, echo, rtt, server.trust
    )


def query_nts(
    server: ServerSpec,
    net: NetworkState,
    local_clock,
    now: TimePoint,
    rng: Rng,
    attack_offset: float = 0.0,
) -> NtsSample:
    """Four-timestamp NTP/NTS exchange completing at true instant ``now``.

    ``local_clock`` is the client's :class:`ClockState` or just its bias
    against true time in seconds.
    theta = ((t1 - t0) + (t2 - t3)) / 2 and root distance = dispersion + RTT / 2.
    """
    if server.kind not in ("nts", "ntp"):
        raise ValueError(f"{server.id} is not an NTP/NTS server")
    local_bias = float(getattr(local_clock, "bias", local_clock))
    up, down = _delays(server, net, rng)
    rtt = up + down
    if rtt > net.drop_threshold:
        raise QueryTimeout(server.id, rtt)
    error = server.true_time_error + (attack_offset if server.colluding else 0.0)
    # true send instant, relative to ``now``; the server turnaround is instantaneous
    t_send = -rtt
    t0 = t_send + local_bias
    t1 = t_send + up + error
    t2 = t1
    t3 = 0.0 + local_bias
    theta = ((t1 - t0) + (t2 - t3)) / 2.0
    delay = (t3 - t0) - (t2 - t1)
    authenticated = server.kind == "nts" and _verifies(server)
    return NtsSample(
        server.id,
        server.kind,
        now + TimeOffset(local_bias),
        theta,
        server.dispersion + delay / 2.0,
        delay,
        server.stratum,
        authenticated,
        server.trust,
    )


def passes_auth_gate(sample) -> bool:
    """Unauthenticated NTP is admissible at its own trust level; a Roughtime
    or NTS reply that failed verification never is."""
    if isinstance(sample, RoughtimeResponse):
        return sample.authenticated
    return sample.kind == "ntp" or sample.authenticated


def require_authenticated(samples):
    bad = [s.server_id for s in samples if not passes_auth_gate(s)]
    if bad:
        raise UnauthenticatedInputError(f"unverified responses from {', '.join(bad)}")
    return samples


def chain_nonce(previous: bytes, gnss_time: TimePoint) -> bytes:
    """Next request nonce: hash of the previous reply and the GNSS timestamp."""
    return hashlib.sha512(previous + str(gnss_time.epoch_nanos).encode()).digest()[:32]


def chain_roughtime(
    servers: list[ServerSpec],
    gnss_time: TimePoint,
    net: NetworkState,
    now: TimePoint,
    rng: Rng,
    attack_offset: float = 0.0,
) -> list[RoughtimeResponse]:
    """Query ``servers`` in order, each nonce bound to the previous reply.

    The first nonce is derived from the GNSS timestamp alone. A reply whose
    echo does not match, or whose signature does not verify, breaks the
    chain; the verified prefix travels on the error.
    """
    if len(servers) < 2:
        raise ValueError("a chain needs at least two roughtime servers")
    out: list[RoughtimeResponse] = []
    prev = b"roughtime-chain"
    for i, server in enumerate(servers):
        nonce = chain_nonce(prev, gnss_time)
        resp = query_roughtime(server, net, now, rng, nonce=nonce, attack_offset=attack_offset)
        if resp.nonce_echo != nonce or not resp.authenticated:
            raise BrokenChainError(i, out)
        out.append(resp)
        prev = resp.digest()
    return out


@dataclass
class PollGuard:
    """Enforces the per-server minimum re-synchronisation interval."""

    min_interval: float = MIN_POLL_INTERVAL
    last: dict[str, TimePoint] = field(default_factory=dict)

    def check(self, server_id: str, now: TimePoint) -> None:
        prev = self.last.get(server_id)
        if prev is not None and float(now - prev) < self.min_interval - 1e-9:
            raise BackoffError(f"{server_id}: polled {float(now - prev):.3f} s after the last query")
        self.last[server_id] = now


def query_record(t_local: TimePoint, server: ServerSpec, result=None, outcome: str = "ok") -> dict:
    """Per-query log record."""
    rec = {"t_local": t_local.seconds, "server_id": server.id, "kind": server.kind, "outcome": outcome}
    if isinstance(result, RoughtimeResponse):
        rec.update(midpoint=result.midpoint.seconds, radius=result.radius, rtt=result.rtt)
    elif isinstance(result, NtsSample):
        rec.update(theta=result.offset_theta, rho_d=result.root_distance, rtt=result.round_trip_delay)
    elif isinstance(result, QueryTimeout):
        rec.update(rtt=result.rtt)
    return rec


def default_catalog() -> list[ServerSpec]:
    """Two Roughtime and five NTS servers.

    NTS servers sit 1 to 20 ms away with 10 us dispersion and 1 us jitter;
    Roughtime replies carry about 0.5 ms of jitter, some three orders of
    magnitude worse short-term. Roughtime replies are not delay compensated,
    so their one-way latency (2 to 3 ms) is kept well under the 10 ms radius
    or an honest server would fail the radius test.
    """
    rt = [
        ServerSpec("rt-a", "roughtime", base_latency=2e-3, jitter_sigma=5e-4, radius=10e-3),
        ServerSpec("rt-b", "roughtime", base_latency=3e-3, jitter_sigma=5e-4, radius=10e-3),
    ]
    nts_lat = (1e-3, 2e-3, 5e-3, 10e-3, 20e-3)
    nts = [
        ServerSpec(f"nts-{i + 1}", "nts", base_latency=lat, jitter_sigma=1e-6, dispersion=10e-6, stratum=1)
        for i, lat in enumerate(nts_lat)
    ]
    return rt + nts


def with_latency(server: ServerSpec, base_latency: float, jitter_sigma: float | None = None) -> ServerSpec:
    return replace(server, base_latency=base_latency, jitter_sigma=server.jitter_sigma if jitter_sigma is None else jitter_sigma)


def root_distance_nominal(server: ServerSpec) -> float:
    """Root distance with mean jitter and no clogging."""
    if server.kind == "roughtime":
        return server.radius
    return server.dispersion + server.base_latency + server.jitter_sigma


def rtt_exceeds(server: ServerSpec, net: NetworkState) -> float:
    """Probability a query times out, from the exponential jitter model."""
    base = 2 * server.base_latency * net.clog_factor
    slack = net.drop_threshold - base
    if slack <= 0:
        return 1.0
    scale = server.jitter_sigma * net.clog_factor
    if scale == 0:
        return 0.0
    # sum of two exponentials with equal scale is Gamma(2, scale)
    x = slack / scale
    return math.exp(-x) * (1 + x)
