"""Load harness: runs the interconnect scenarios at a configured call rate.

Three scenarios, all driven over loopback UDP against in-process servers:

  s1  caller -> registrar/proxy -> registered callee (no ENUM)
  s2  caller -> registrar/proxy -> ENUM lookup -> registered callee
  s3  caller -> registrar/proxy -> ENUM lookup -> gateway B2BUA -> FXS

Background traffic runs full INVITE/180/200/ACK/hold/BYE cycles at the
offered rate; a fixed number of probe calls replaces evenly spaced arrival
slots (so probes never inflate the offered load) and each probe yields one
CallRecord.  Also hosts the DNS throughput ramp (queryperf).
"""

from __future__ import annotations

import asyncio
import itertools
import math
import random
from dataclasses import dataclass, field

from voipbed.enumdns.naptr import apply_naptr_regexp, select_naptr
from voipbed.enumdns.resolver import EnumResolver
from voipbed.enumdns.server import EnumServer
from voipbed.enumdns.zone import EnumZone
from voipbed.enumdns import wire
from voipbed.gateway import DialplanEntry, FxsEndpoint, Gateway
from voipbed.metrics import ENUM_REFERENCE_QPS
from voipbed.profiles import (
    ENUM_PROFILE,
    GATEWAY_PROFILE,
    IMS_PROFILE,
    ServerProfile,
)
from voipbed.registrar import RegistrarProxy
from voipbed.udpnet import UdpService
from voipbed.useragent import (
    CallRecord,
    EndpointCounters,
    RegistrationFailed,
    Uac,
    Uas,
)

S1 = "s1"
S2 = "s2"
S3 = "s3"

CALLEE_UAS = "uas"
CALLEE_FXS = "fxs"


class HarnessError(Exception):
    pass


class TopologyUnreachable(HarnessError):
    pass


@dataclass(frozen=True)
class Scenario:
    """One interconnect path under test."""

    id: str
    enum_enabled: bool
    callee: str  # CALLEE_UAS | CALLEE_FXS

    def __post_init__(self) -> None:
        if self.id == S1 and self.enum_enabled:
            raise ValueError("s1 runs without ENUM")
        if self.id in (S2, S3) and not self.enum_enabled:
            raise ValueError(f"{self.id} requires ENUM")
        if self.id == S3 and self.callee != CALLEE_FXS:
            raise ValueError("s3 terminates on FXS numbers")


SCENARIOS = {
    S1: Scenario(S1, enum_enabled=False, callee=CALLEE_UAS),
    S2: Scenario(S2, enum_enabled=True, callee=CALLEE_UAS),
    S3: Scenario(S3, enum_enabled=True, callee=CALLEE_FXS),
}

ARRIVAL_UNIFORM = "uniform"
ARRIVAL_POISSON = "poisson"


@dataclass(frozen=True)
class LoadSpec:
    """Offered load for one measurement cell."""

    rate: float
    duration: float
    arrival: str = ARRIVAL_UNIFORM
    measured_calls: int = 30

    def __post_init__(self) -> None:
        if self.rate < 0:
            raise ValueError("rate must be >= 0")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.measured_calls < 1:
            raise ValueError("measured_calls must be >= 1")
        if self.arrival not in (ARRIVAL_UNIFORM, ARRIVAL_POISSON):
            raise ValueError(f"unknown arrival process {self.arrival!r}")


def generate_arrivals(load: LoadSpec, seed: int = 0) -> list[float]:
    """Send offsets in seconds; deterministic for a given seed."""
    if load.rate <= 0:
        return []
    if load.arrival == ARRIVAL_UNIFORM:
        count = round(load.rate * load.duration)
        return [i / load.rate for i in range(count)]
    rng = random.Random(seed)
    arrivals: list[float] = []
    t = rng.expovariate(load.rate)
    while t < load.duration:
        arrivals.append(t)
        t += rng.expovariate(load.rate)
    return arrivals


@dataclass
class TopologySettings:
    """Everything about the in-process testbed that is not the offered load."""

    host: str = "127.0.0.1"
    ims_port: int = 0
    gateway_port: int = 0
    enum_port: int = 0
    ims_profile: ServerProfile = IMS_PROFILE
    gateway_profile: ServerProfile = GATEWAY_PROFILE
    enum_profile: ServerProfile = ENUM_PROFILE
    apex: str = "e164.test"
    # client-side processing between the dial decision and the wire send;
    # the non-server share of the idle call-setup budget
    endpoint_overhead: float = 0.10395
    hold_time: float = 1.0
    uas_answer_delay: float = 0.5
    fxs_ring_delay: float = 0.0
    fxs_answer_delay: float = 2.0
    callee_pool: int = 30
    fxs_bank: int | None = None  # None: sized from the offered rate
    warmup: float = 2.0
    probe_gap: float = 0.15  # pacing for zero-rate cells
    drain_timeout: float = 10.0
    seed: int = 1
    static_zone: EnumZone | None = None  # extra records (e.g. from a zone file)


@dataclass
class RunCounters:
    retrans: int = 0
    timeout: int = 0
    unexpected_msg: int = 0
    shed_observed: int = 0


@dataclass
class RunResult:
    scenario_id: str
    rate: float
    records: list[CallRecord] = field(default_factory=list)
    counters: RunCounters = field(default_factory=RunCounters)
    server_stats: dict[str, dict] = field(default_factory=dict)
    enum_latencies: list[float] = field(default_factory=list)
    aborted: bool = False

    def probe_records(self) -> list[CallRecord]:
        return self.records

    def server_roles(self) -> list[str]:
        return list(self.server_stats)

    def shed_call_rate(self, offered_calls: int) -> float:
        """Distinct shed calls across servers relative to calls offered."""
        if offered_calls <= 0:
            return 0.0
        shed = sum(s.get("shed_calls", 0) for s in self.server_stats.values())
        return shed / offered_calls


async def register_pool(count: int, server_addr: tuple[str, int],
                        *, host: str = "127.0.0.1", domain: str = "ims.test",
                        answer_delay: float = 0.5,
                        name_prefix: str = "u") -> list[Uas]:
    """Start ``count`` auto-answering UAS endpoints and register them."""
    pool: list[Uas] = []
    try:
        for i in range(count):
            uas = Uas(f"sip:{name_prefix}{i}@{domain}", host=host,
                      answer_delay=answer_delay)
            await uas.start()
            pool.append(uas)
            await uas.register(server_addr)
    except RegistrationFailed:
        for uas in pool:
            await uas.stop()
        raise
    return pool


class Topology:
    """In-process servers wired together for one scenario."""

    def __init__(self, scenario: Scenario, settings: TopologySettings,
                 rate_hint: float = 0.0) -> None:
        self.scenario = scenario
        self.settings = settings
        self.rate_hint = rate_hint
        self.ims: RegistrarProxy | None = None
        self.gateway: Gateway | None = None
        self.enum_server: EnumServer | None = None
        self.resolver: EnumResolver | None = None
        self.uac: Uac | None = None
        self.pool: list[Uas] = []
        self.targets: list[str] = []

    async def start(self) -> None:
        s = self.settings
        self.ims = RegistrarProxy(
            host=s.host, port=s.ims_port, profile=s.ims_profile,
            resolver=None, enum_enabled=self.scenario.enum_enabled,
        )
        await self.ims.start()
        ims_host, ims_port = self.ims.address

        zone = EnumZone(apex=s.apex)
        if s.static_zone is not None:
            for digits, records in s.static_zone.entries.items():
                for record in records:
                    zone.add(digits, record)

        if self.scenario.callee == CALLEE_FXS:
            bank = s.fxs_bank or max(16, math.ceil(max(self.rate_hint, 1) * 5))
            endpoints = [
                FxsEndpoint(id=f"fxs{i}", number=str(2003 + i),
                            ring_delay=s.fxs_ring_delay,
                            answer_delay=s.fxs_answer_delay)
                for i in range(bank)
            ]
            dialplan = [DialplanEntry(pattern=ep.number, action="fxs",
                                      endpoint=ep.id) for ep in endpoints]
            self.gateway = Gateway(endpoints, dialplan, host=s.host,
                                   port=s.gateway_port, profile=s.gateway_profile)
            await self.gateway.start()
            gw_host, gw_port = self.gateway.address
            for ep in endpoints:
                zone.add_uri(ep.number, f"sip:{ep.number}@{gw_host}:{gw_port}")
            self.targets = [f"sip:{ep.number}@ims.test" for ep in endpoints]
        else:
            self.pool = await register_pool(
                s.callee_pool, (ims_host, ims_port), host=s.host,
                answer_delay=s.uas_answer_delay)
            if self.scenario.id == S2:
                # number-addressed callees: ENUM maps each number straight
                # to the registered endpoint's transport contact
                self.targets = []
                for i, uas in enumerate(self.pool):
                    number = str(7100000 + i)
                    uas_host, uas_port = uas.address
                    zone.add_uri(number, f"sip:u{i}@{uas_host}:{uas_port}")
                    self.targets.append(f"sip:{number}@ims.test")
            else:
                self.targets = [uas.aor for uas in self.pool]

        if self.scenario.enum_enabled:
            self.enum_server = EnumServer(zone, host=s.host, port=s.enum_port,
                                          profile=s.enum_profile)
            await self.enum_server.start()
            self.resolver = EnumResolver(self.enum_server.address, apex=s.apex)
            await self.resolver.start()
            self.ims.resolver = self.resolver

        self.uac = Uac(host=s.host)
        await self.uac.start()

    async def health_check(self, timeout: float = 2.0) -> None:
        """A REGISTER probe must come back before traffic starts."""
        assert self.ims is not None
        probe = Uas("sip:healthcheck@ims.test", host=self.settings.host)
        await probe.start()
        try:
            await probe.register(self.ims.address, timeout=timeout)
        except RegistrationFailed as exc:
            raise TopologyUnreachable(str(exc)) from exc
        finally:
            await probe.stop()

    def reset_counters(self) -> None:
        """Zero every counter touched during setup and health checks."""
        for endpoint in [self.uac, *self.pool]:
            if endpoint is not None:
                endpoint.counters = EndpointCounters()

    async def stop(self) -> None:
        for closer in (self.uac, *self.pool):
            if closer is not None:
                await closer.stop()
        if self.resolver is not None:
            await self.resolver.close()
        for server in (self.enum_server, self.gateway, self.ims):
            if server is not None:
                await server.stop()

    def stats_snapshot(self) -> dict[str, dict]:
        stats: dict[str, dict] = {}
        if self.ims is not None:
            snap = self.ims.stats.snapshot()
            snap["enum_routes"] = self.ims.enum_routes
            stats["ims"] = snap
        if self.gateway is not None:
            stats["gateway"] = self.gateway.stats.snapshot()
        if self.enum_server is not None:
            snap = self.enum_server.stats.snapshot()
            snap["served_queries"] = self.enum_server.served_queries
            stats["enum"] = snap
        return stats


def _probe_indices(arrivals: list[float], warmup: float, measured: int) -> set[int]:
    eligible = [i for i, t in enumerate(arrivals) if t >= warmup]
    if not eligible:
        eligible = list(range(len(arrivals)))
    if not eligible:
        return set()
    if len(eligible) <= measured:
        return set(eligible)
    step = (len(eligible) - 1) / (measured - 1) if measured > 1 else 0
    return {eligible[round(j * step)] for j in range(measured)}


async def run_scenario_async(
    scenario: Scenario | str,
    load: LoadSpec,
    settings: TopologySettings | None = None,
) -> RunResult:
    """Boot the scenario topology, offer the load, gather one RunResult."""
    if isinstance(scenario, str):
        scenario = SCENARIOS[scenario]
    settings = settings or TopologySettings()
    loop = asyncio.get_running_loop()

    topo = Topology(scenario, settings, rate_hint=load.rate)
    result = RunResult(scenario_id=scenario.id, rate=load.rate)
    try:
        await topo.start()
        await topo.health_check()
        topo.reset_counters()
        uac = topo.uac
        assert uac is not None and topo.ims is not None
        next_hop = topo.ims.address

        if load.rate > 0:
            arrivals = generate_arrivals(load, settings.seed)
            probes = _probe_indices(arrivals, settings.warmup, load.measured_calls)
        else:
            arrivals = [j * settings.probe_gap for j in range(load.measured_calls)]
            probes = set(range(len(arrivals)))

        done_calls = 0
        ok_calls = 0
        abort = asyncio.Event()

        def _watch(task: asyncio.Task) -> None:
            nonlocal done_calls, ok_calls
            done_calls += 1
            if not task.cancelled() and task.exception() is None:
                rec = task.result()
                if rec is not None and rec.outcome == "ringing_ok":
                    ok_calls += 1
            # a run where literally nothing succeeds aborts cleanly
            if done_calls >= 20 and ok_calls == 0:
                abort.set()

        tasks: list[asyncio.Task] = []
        target_cycle = itertools.cycle(range(len(topo.targets)))
        start = loop.time()
        for i, offset in enumerate(arrivals):
            delay = start + offset - loop.time()
            if delay > 0:
                try:
                    await asyncio.wait_for(abort.wait(), timeout=delay)
                    break
                except asyncio.TimeoutError:
                    pass
            elif abort.is_set():
                break
            target = topo.targets[next(target_cycle)]
            record: CallRecord | None = None
            if i in probes:
                record = CallRecord(call_id="")
                result.records.append(record)
            task = loop.create_task(uac.place_call(
                target, next_hop, overhead=settings.endpoint_overhead,
                hold=settings.hold_time, record=record))
            task.add_done_callback(_watch)
            tasks.append(task)

        if tasks:
            _, pending = await asyncio.wait(tasks, timeout=settings.drain_timeout)
            for task in pending:
                task.cancel()
            if pending:
                await asyncio.wait(pending, timeout=2.0)
        result.aborted = abort.is_set()

        for rec in result.records:
            if rec.outcome is None:
                rec.outcome = "timeout"
                uac.counters.timeout += 1

        counters = RunCounters()
        for endpoint in [uac, *topo.pool]:
            counters.retrans += endpoint.counters.retrans
            counters.timeout += endpoint.counters.timeout
            counters.unexpected_msg += endpoint.counters.unexpected
        result.server_stats = topo.stats_snapshot()
        counters.shed_observed = sum(
            s.get("shed_signals", 0) for s in result.server_stats.values())
        result.counters = counters
        if topo.resolver is not None:
            result.enum_latencies = topo.resolver.latencies.samples()
        return result
    finally:
        await topo.stop()


def run_scenario(scenario: Scenario | str, load: LoadSpec,
                 settings: TopologySettings | None = None) -> RunResult:
    return asyncio.run(run_scenario_async(scenario, load, settings))


# -- DNS throughput ramp -------------------------------------------------------


@dataclass(frozen=True)
class QueryperfSpec:
    start_rate: float = 500.0
    max_rate: float = 20000.0
    stage_seconds: float = 1.0
    fail_fraction: float = 0.01
    query_timeout: float = 1.0
    refine_steps: int = 3

    def __post_init__(self) -> None:
        if self.start_rate <= 0 or self.max_rate < self.start_rate:
            raise ValueError("need 0 < start_rate <= max_rate")


@dataclass
class QueryperfStage:
    rate: float
    sent: int
    answered: int
    wrong: int
    timeouts: int

    @property
    def failure_fraction(self) -> float:
        # answered counts only verified-correct answers, so the remainder
        # is exactly the wrong + timed-out share
        return (self.sent - self.answered) / self.sent if self.sent else 1.0


@dataclass
class QueryperfResult:
    ceiling_qps: float
    stages: list[QueryperfStage]
    latencies: list[float]
    wrong_total: int
    reference_qps: float = ENUM_REFERENCE_QPS

    def percentile_ms(self, q: float) -> float:
        if not self.latencies:
            return float("nan")
        values = sorted(self.latencies)
        rank = max(1, math.ceil(q / 100.0 * len(values)))
        return values[rank - 1] * 1000.0


class _QueryperfClient:
    """High-rate NAPTR query source verifying every answer against the zone."""

    def __init__(self, server_addr: tuple[str, int], zone: EnumZone) -> None:
        self.server_addr = server_addr
        self.zone = zone
        self.numbers = zone.numbers()
        if not self.numbers:
            raise HarnessError("queryperf needs a populated zone")
        self.expected = {
            n: apply_naptr_regexp(select_naptr(zone.entries[n])[0], n)
            for n in self.numbers
        }
        self.latencies: list[float] = []
        self.answered = 0
        self.wrong = 0
        self._pending: dict[int, tuple[float, str]] = {}
        self._txid = itertools.count(1)
        self._service = UdpService("127.0.0.1", 0, self._on_datagram)

    async def start(self) -> None:
        await self._service.start()

    async def stop(self) -> None:
        await self._service.stop()

    def _on_datagram(self, data: bytes, addr: tuple[str, int]) -> None:
        try:
            msg = wire.decode_response(data)
        except wire.DnsWireError:
            self.wrong += 1
            return
        pending = self._pending.pop(msg.txid, None)
        if pending is None:
            return
        sent_at, number = pending
        loop = asyncio.get_running_loop()
        if msg.rcode != wire.RCODE_NOERROR:
            self.wrong += 1
            return
        try:
            records = select_naptr(msg.answers)
            uri = apply_naptr_regexp(records[0], number) if records else None
        except Exception:
            uri = None
        if uri != self.expected[number]:
            self.wrong += 1
            return
        self.answered += 1
        self.latencies.append(loop.time() - sent_at)

    async def run_stage(self, rate: float, spec: QueryperfSpec) -> QueryperfStage:
        loop = asyncio.get_running_loop()
        self._pending.clear()
        answered_before = self.answered
        wrong_before = self.wrong

        total = max(1, int(rate * spec.stage_seconds))
        tick = 0.005
        sent = 0
        start = loop.time()
        number_cycle = itertools.cycle(self.numbers)
        while sent < total:
            now = loop.time()
            due = min(total, int((now - start + tick) * rate))
            while sent < due:
                number = next(number_cycle)
                txid = next(self._txid) & 0xFFFF
                domain = self.zone.domain_of(number)
                self._pending[txid] = (loop.time(), number)
                self._service.send(wire.encode_query(domain, txid), self.server_addr)
                sent += 1
            await asyncio.sleep(tick)

        grace_end = loop.time() + spec.query_timeout
        while self._pending and loop.time() < grace_end:
            await asyncio.sleep(0.01)

        timeouts = len(self._pending)
        self._pending.clear()
        return QueryperfStage(
            rate=rate,
            sent=sent,
            answered=self.answered - answered_before,
            wrong=self.wrong - wrong_before,
            timeouts=timeouts,
        )


async def queryperf_async(
    server_addr: tuple[str, int],
    zone: EnumZone,
    spec: QueryperfSpec | None = None,
) -> QueryperfResult:
    """Ramp the offered query rate and report the last sustainable one.

    Doubles from ``start_rate`` until a stage exceeds the failure bound
    (then binary-refines), or until ``max_rate`` holds.  Backs off below a
    failing start.  Every answer is verified against the zone.
    """
    spec = spec or QueryperfSpec()
    client = _QueryperfClient(server_addr, zone)
    await client.start()
    stages: list[QueryperfStage] = []
    try:
        rate = spec.start_rate
        last_good = 0.0
        first_bad: float | None = None
        while True:
            stage = await client.run_stage(rate, spec)
            stages.append(stage)
            if stage.failure_fraction <= spec.fail_fraction:
                last_good = rate
                if rate >= spec.max_rate:
                    break
                rate = min(rate * 2, spec.max_rate)
            else:
                first_bad = rate
                if last_good > 0:
                    break
                rate = rate / 2
                if rate < 10:
                    break
        if last_good > 0 and first_bad is not None:
            low, high = last_good, first_bad
            for _ in range(spec.refine_steps):
                if high - low <= max(50.0, low * 0.05):
                    break
                mid = (low + high) / 2
                stage = await client.run_stage(mid, spec)
                stages.append(stage)
                if stage.failure_fraction <= spec.fail_fraction:
                    low = mid
                else:
                    high = mid
            last_good = low
        return QueryperfResult(
            ceiling_qps=last_good,
            stages=stages,
            latencies=client.latencies,
            wrong_total=client.wrong,
        )
    finally:
        await client.stop()


def queryperf(server_addr: tuple[str, int], zone: EnumZone,
              spec: QueryperfSpec | None = None) -> QueryperfResult:
    return asyncio.run(queryperf_async(server_addr, zone, spec))
