"""Per-role server profiles: signal processing delays, capacity, CPU curves.

The default numbers are the calibration set this testbed reproduces: an
IMS-style registrar/proxy that spends 9.00 ms of processing on one call
(3.92 ms of it on the INVITE/180 pair), a PBX-style gateway that spends
257.48 ms (254.5 ms on the INVITE alone), and an ENUM server answering a
query in 0.3454 ms.  Only the aggregates are published figures; the
per-signal split is configuration with the defaults below.

Capacities (30 call/s, 55 call/s, 8156.87 query/s) and the CPU utilization
calibration points come from the same measurement campaign; utilization is
interpolated, never sampled from the host OS.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping

ROLE_IMS = "ims"
ROLE_GATEWAY = "gateway"
ROLE_ENUM = "enum"


class ProfileError(ValueError):
    pass


def _ms(values: dict[str, float]) -> Mapping[str, float]:
    return MappingProxyType({k: v / 1000.0 for k, v in values.items()})


@dataclass(frozen=True)
class ServerProfile:
    """Delay/capacity calibration for one server role.

    ``per_signal_delay`` maps a signal kind (method name or status code
    string) to the latency, in seconds, the server adds before passing that
    signal on.  ``capacity`` is the sustainable call (or query) rate;
    ``cpu_curve`` holds (rate, percent) calibration points.
    """

    role: str
    per_signal_delay: Mapping[str, float]
    capacity: float
    cpu_curve: tuple[tuple[float, float], ...] = ()
    queue_seconds: float = 1.0  # backlog bound: capacity x 1 s of work
    hard_fail_at: float | None = None

    @property
    def total_call_processing(self) -> float:
        """Seconds of injected delay summed over one call's signal kinds."""
        return sum(self.per_signal_delay.values())

    def delay_for(self, kind: str) -> float:
        return self.per_signal_delay.get(kind, 0.0)

    def validate(self) -> None:
        if self.capacity <= 0:
            raise ProfileError(f"{self.role}: capacity must be positive")
        if any(d < 0 for d in self.per_signal_delay.values()):
            raise ProfileError(f"{self.role}: negative signal delay")
        rates = [r for r, _ in self.cpu_curve]
        if rates != sorted(set(rates)):
            raise ProfileError(f"{self.role}: cpu_curve rates must be strictly increasing")
        if any(not 0 <= p <= 100 for _, p in self.cpu_curve):
            raise ProfileError(f"{self.role}: cpu_curve percent outside [0, 100]")
        # Capacity must be the last sustainable calibration rate: when the
        # curve reaches 100% the capacity is the largest rate still below it.
        saturated = [r for r, p in self.cpu_curve if p >= 100.0]
        if saturated:
            sustainable = max(r for r, p in self.cpu_curve if p < 100.0)
            if self.capacity != sustainable:
                raise ProfileError(
                    f"{self.role}: capacity {self.capacity} != last sustainable rate {sustainable}"
                )

    def scaled(self, **overrides: object) -> "ServerProfile":
        """Copy with field overrides (capacity tweaks for experiments)."""
        return replace(self, **overrides)  # type: ignore[arg-type]


# IMS proxy: INVITE + 180 account for 3.92 ms of the 9.00 ms call total;
# the remaining 5.08 ms is spread uniformly over 100/200/ACK/BYE.
IMS_PROFILE = ServerProfile(
    role=ROLE_IMS,
    per_signal_delay=_ms({
        "INVITE": 3.0,
        "100": 1.27,
        "180": 0.92,
        "200": 1.27,
        "ACK": 1.27,
        "BYE": 1.27,
    }),
    capacity=30.0,
    cpu_curve=((5, 10), (10, 15), (15, 35), (20, 50), (25, 65), (30, 78), (35, 100)),
)

# Gateway B2BUA: 254.5 ms INVITE; the 2.98 ms remainder of the 257.48 ms
# call total is spread uniformly over 180/200/ACK/BYE.
GATEWAY_PROFILE = ServerProfile(
    role=ROLE_GATEWAY,
    per_signal_delay=_ms({
        "INVITE": 254.5,
        "180": 0.745,
        "200": 0.745,
        "ACK": 0.745,
        "BYE": 0.745,
    }),
    capacity=55.0,
    cpu_curve=((35, 51), (40, 60), (45, 69), (50, 79), (55, 92), (60, 100)),
)

# ENUM/DNS server: one signal kind; its CPU curve never saturates in the
# calibration table, so capacity comes from the measured query ceiling.
ENUM_PROFILE = ServerProfile(
    role=ROLE_ENUM,
    per_signal_delay=_ms({"QUERY": 0.3454}),
    capacity=8156.87,
    cpu_curve=((5, 0.3), (10, 0.3), (15, 0.3), (20, 0.3), (25, 0.7), (30, 0.7), (35, 0.7)),
)

DEFAULT_PROFILES: Mapping[str, ServerProfile] = MappingProxyType({
    ROLE_IMS: IMS_PROFILE,
    ROLE_GATEWAY: GATEWAY_PROFILE,
    ROLE_ENUM: ENUM_PROFILE,
})


@dataclass
class ServerStats:
    """Run counters every server exposes to the harness."""

    name: str
    received: int = 0
    admitted: int = 0
    shed_signals: int = 0
    shed_calls: set[str] = field(default_factory=set)
    malformed: int = 0
    peak_backlog: float = 0.0
    downed: bool = False

    def snapshot(self) -> dict[str, object]:
        return {
            "name": self.name,
            "received": self.received,
            "admitted": self.admitted,
            "shed_signals": self.shed_signals,
            "shed_calls": len(self.shed_calls),
            "malformed": self.malformed,
            "peak_backlog": round(self.peak_backlog, 6),
            "downed": self.downed,
        }
