"""IMS-style SIP server: registrar, location service and stateful INVITE proxy.

Call routing order: a registered address-of-record wins, then an all-digit
user part goes through the ENUM resolver, otherwise 404.  Every relayed
signal is delayed by the profile's per-signal processing time plus the
queueing wait the bounded work queue imposes; overload sheds signals
instead of answering, which the clients turn into retransmissions and
timeouts.
"""

from __future__ import annotations

import asyncio
import time
from dataclasses import dataclass, field

from voipbed.enumdns.resolver import (
    EnumResolver,
    NoViableRecord,
    Nxdomain,
    ResolveError,
    ResolveTimeout,
)
from voipbed.profiles import IMS_PROFILE, ServerProfile, ServerStats
from voipbed.queueing import WorkQueue
from voipbed.sip.message import (
    SipMessage,
    SipParseError,
    generate_branch,
    make_response,
    parse_message,
    serialize_message,
    uri_host_port,
    uri_user,
    via_params,
    via_sent_by,
)
from voipbed.udpnet import RateWindow, UdpService

DEFAULT_EXPIRES = 3600
CONTEXT_TTL = 120.0  # forwarding state lingers this long after creation


@dataclass
class LocationBinding:
    """One address-of-record -> transport contact registration."""

    aor: str
    user: str
    contact_host: str
    contact_port: int
    expires: int
    registered_at: float


class LocationStore:
    """In-memory location service; last REGISTER per AOR wins."""

    def __init__(self) -> None:
        self._by_user: dict[str, LocationBinding] = {}

    def __len__(self) -> int:
        return len(self._by_user)

    def upsert(self, binding: LocationBinding) -> None:
        self._by_user[binding.user] = binding

    def remove(self, user: str) -> None:
        self._by_user.pop(user, None)

    def lookup(self, user: str, now: float | None = None) -> LocationBinding | None:
        binding = self._by_user.get(user)
        if binding is None:
            return None
        if now is not None and now - binding.registered_at > binding.expires:
            del self._by_user[user]
            return None
        return binding

    def snapshot(self) -> list[LocationBinding]:
        return list(self._by_user.values())

    def dump(self, path: str) -> None:
        """Debug snapshot, one 'aor contact expires' line per binding."""
        with open(path, "w", encoding="utf-8") as handle:
            for b in sorted(self._by_user.values(), key=lambda b: b.user):
                handle.write(
                    f"{b.aor} {b.contact_host}:{b.contact_port} {b.expires}\n"
                )


def _contact_uri(value: str) -> str:
    if "<" in value and ">" in value:
        return value[value.index("<") + 1 : value.index(">")]
    return value.split(";", 1)[0].strip()


def handle_register(msg: SipMessage, db: LocationStore,
                    now: float | None = None) -> SipMessage:
    """Upsert the binding carried by a REGISTER; 200 echoes it, 400 rejects."""
    if msg.method != "REGISTER":
        raise ValueError(f"not a REGISTER: {msg.method}")
    if now is None:
        now = time.monotonic()
    contact_value = msg.header("Contact")
    if contact_value is None:
        return make_response(msg, 400)

    contact_uri = _contact_uri(contact_value)
    host, port = uri_host_port(contact_uri)
    expires = DEFAULT_EXPIRES
    header_expires = msg.header("Expires")
    if header_expires is not None and header_expires.strip().isdigit():
        expires = int(header_expires.strip())
    aor = _contact_uri(msg.header("To") or "")
    user = uri_user(aor)

    if expires <= 0:
        db.remove(user)
    else:
        db.upsert(LocationBinding(aor=aor, user=user, contact_host=host,
                                  contact_port=port, expires=expires,
                                  registered_at=now))
    return make_response(
        msg, 200,
        extra_headers=[("Contact", f"<{contact_uri}>;expires={expires}"),
                       ("Expires", str(expires))],
    )


@dataclass(frozen=True)
class RoutingDecision:
    """Outcome of route_invite: forward somewhere or answer locally."""

    kind: str  # "forward" | "respond"
    target: tuple[str, int] | None = None
    target_uri: str | None = None
    status: int | None = None
    enum_consulted: bool = False


def _decide(user: str, binding: LocationBinding | None,
            enum_attempted: bool, enum_answer: str | Exception | None) -> RoutingDecision:
    if binding is not None:
        return RoutingDecision(
            kind="forward",
            target=(binding.contact_host, binding.contact_port),
            target_uri=f"sip:{binding.user}@{binding.contact_host}:{binding.contact_port}",
        )
    if enum_attempted:
        if isinstance(enum_answer, (Nxdomain, NoViableRecord)):
            return RoutingDecision(kind="respond", status=404, enum_consulted=True)
        if isinstance(enum_answer, ResolveError):
            return RoutingDecision(kind="respond", status=500, enum_consulted=True)
        if isinstance(enum_answer, str):
            return RoutingDecision(kind="forward", target=uri_host_port(enum_answer),
                                   target_uri=enum_answer, enum_consulted=True)
    return RoutingDecision(kind="respond", status=404)


def route_invite(msg: SipMessage, db: LocationStore, enum_client=None,
                 now: float | None = None) -> RoutingDecision:
    """Pure routing decision for an INVITE.

    ``enum_client`` needs a synchronous ``resolve(number) -> uri`` raising
    the resolver error family; the decision notes whether ENUM was consulted.
    """
    if msg.method != "INVITE":
        raise ValueError(f"not an INVITE: {msg.method}")
    user = uri_user(msg.request_uri or "")
    binding = db.lookup(user, now)
    enum_attempted = binding is None and bool(user) and user.isdigit() and enum_client is not None
    answer: str | Exception | None = None
    if enum_attempted:
        try:
            answer = enum_client.resolve(user)
        except ResolveError as exc:
            answer = exc
    return _decide(user, binding, enum_attempted, answer)


@dataclass
class _InviteContext:
    created_at: float
    last_response: bytes | None = None
    out_branch: str | None = None


@dataclass
class _CallRoute:
    created_at: float
    caller: tuple[str, int]
    callee: tuple[str, int]
    target_uri: str


class RegistrarProxy:
    """The registrar + stateful proxy bound to one UDP socket."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        profile: ServerProfile = IMS_PROFILE,
        resolver: EnumResolver | None = None,
        enum_enabled: bool = True,
    ) -> None:
        self.profile = profile
        self.resolver = resolver
        self.enum_enabled = enum_enabled
        self.store = LocationStore()
        self.stats = ServerStats(name="ims")
        self.queue = WorkQueue(capacity=profile.capacity, max_backlog=profile.queue_seconds)
        self.enum_routes = 0  # INVITEs routed through ENUM (scenario marker)
        self._service = UdpService(host, port, self._on_datagram)
        self._rate = RateWindow()
        self._invites: dict[str, _InviteContext] = {}
        self._out_branches: dict[str, str] = {}  # out branch -> in branch
        self._calls: dict[str, _CallRoute] = {}
        self._tasks: set[asyncio.Task] = set()
        self._sweeper: asyncio.Task | None = None

    async def start(self) -> None:
        await self._service.start()
        self._sweeper = asyncio.get_running_loop().create_task(self._sweep())

    async def stop(self) -> None:
        if self._sweeper is not None:
            self._sweeper.cancel()
            self._sweeper = None
        for task in list(self._tasks):
            task.cancel()
        await self._service.stop()

    @property
    def address(self) -> tuple[str, int]:
        return self._service.address

    # -- datagram path ----------------------------------------------------

    def _on_datagram(self, data: bytes, addr: tuple[str, int]) -> None:
        self.stats.received += 1
        if self.stats.downed:
            return
        try:
            msg = parse_message(data)
        except SipParseError:
            self.stats.malformed += 1
            return

        loop = asyncio.get_running_loop()
        now = loop.time()
        kind = msg.signal_kind()

        work = 0.0
        branch = msg.branch()
        if msg.is_request and msg.method == "INVITE":
            if self.profile.hard_fail_at is not None:
                if self._rate.tick(now) >= self.profile.hard_fail_at:
                    self.stats.downed = True
                    return
            if branch is not None and branch in self._invites:
                # retransmitted INVITE: replay the last response, no new work
                ctx = self._invites[branch]
                if ctx.last_response is not None:
                    self._service.send(ctx.last_response, addr)
                return
            work = self.queue.work_per_unit

        wait = self.queue.admit(now, work)
        if wait is None:
            self.stats.shed_signals += 1
            if msg.is_request and msg.method == "INVITE" and branch:
                self.stats.shed_calls.add(branch)
            return
        self.stats.admitted += 1
        self.stats.peak_backlog = self.queue.peak_backlog

        delay = wait + self.profile.delay_for(kind)
        self._spawn(self._process_later(msg, addr, delay))

    def _spawn(self, coro) -> None:
        task = asyncio.get_running_loop().create_task(coro)
        self._tasks.add(task)
        task.add_done_callback(self._tasks.discard)

    async def _process_later(self, msg: SipMessage, addr: tuple[str, int],
                             delay: float) -> None:
        if delay > 0:
            await asyncio.sleep(delay)
        if msg.is_request:
            await self._process_request(msg, addr)
        else:
            self._relay_response(msg)

    # -- requests ----------------------------------------------------------

    async def _process_request(self, msg: SipMessage, addr: tuple[str, int]) -> None:
        if msg.method == "REGISTER":
            response = handle_register(msg, self.store,
                                       asyncio.get_running_loop().time())
            self._service.send(serialize_message(response), addr)
            return
        if msg.method == "INVITE":
            await self._process_invite(msg, addr)
            return
        # ACK / BYE / CANCEL: relay along the recorded call route
        self._relay_in_dialog(msg, addr)

    async def _process_invite(self, msg: SipMessage, addr: tuple[str, int]) -> None:
        loop = asyncio.get_running_loop()
        branch = msg.branch() or generate_branch()
        ctx = _InviteContext(created_at=loop.time())
        self._invites[branch] = ctx

        trying = serialize_message(make_response(msg, 100))
        ctx.last_response = trying
        self._service.send(trying, addr)

        user = uri_user(msg.request_uri or "")
        binding = self.store.lookup(user, loop.time())
        enum_attempted = (binding is None and bool(user) and user.isdigit()
                          and self.enum_enabled and self.resolver is not None)
        answer: str | Exception | None = None
        if enum_attempted:
            try:
                answer = await self.resolver.resolve(user)
            except ResolveError as exc:
                answer = exc
        decision = _decide(user, binding, enum_attempted, answer)
        if decision.enum_consulted:
            self.enum_routes += 1

        if decision.kind == "respond":
            final = serialize_message(make_response(msg, decision.status or 404))
            ctx.last_response = final
            self._service.send(final, addr)
            return

        forwarded = SipMessage(kind="request", method=msg.method,
                               request_uri=decision.target_uri,
                               headers=list(msg.headers), body=msg.body)
        max_forwards = msg.header("Max-Forwards")
        if max_forwards is not None and max_forwards.strip().isdigit():
            hops = int(max_forwards) - 1
            if hops < 0:
                self._service.send(serialize_message(make_response(msg, 500)), addr)
                return
            forwarded.set_header("Max-Forwards", str(hops))
        host, port = self.address
        out_branch = generate_branch()
        forwarded.push_via(f"SIP/2.0/UDP {host}:{port};branch={out_branch}")
        ctx.out_branch = out_branch
        self._out_branches[out_branch] = branch

        call_id = msg.call_id()
        if call_id and decision.target:
            self._calls[call_id] = _CallRoute(
                created_at=loop.time(), caller=addr,
                callee=decision.target, target_uri=decision.target_uri or "")
        self._service.send(serialize_message(forwarded), decision.target)

    def _relay_in_dialog(self, msg: SipMessage, addr: tuple[str, int]) -> None:
        call_id = msg.call_id()
        route = self._calls.get(call_id or "")
        if route is None:
            self.stats.malformed += 1
            return
        dest = route.callee if addr == route.caller else route.caller
        forwarded = SipMessage(kind="request", method=msg.method,
                               request_uri=route.target_uri or msg.request_uri,
                               headers=list(msg.headers), body=msg.body)
        host, port = self.address
        forwarded.push_via(f"SIP/2.0/UDP {host}:{port};branch={generate_branch()}")
        self._service.send(serialize_message(forwarded), dest)

    # -- responses ---------------------------------------------------------

    def _relay_response(self, msg: SipMessage) -> None:
        own_via = msg.pop_via()
        next_via = msg.top_via()
        if own_via is None or next_via is None:
            self.stats.malformed += 1
            return
        dest = via_sent_by(next_via)
        if dest is None:
            self.stats.malformed += 1
            return
        payload = serialize_message(msg)
        # keep the latest upstream answer for INVITE retransmission replay
        out_branch = via_params(own_via).get("branch")
        in_branch = self._out_branches.get(out_branch or "")
        if in_branch is not None and in_branch in self._invites:
            cseq = msg.cseq()
            if cseq is not None and cseq[1] == "INVITE":
                self._invites[in_branch].last_response = payload
        self._service.send(payload, dest)

    # -- housekeeping -------------------------------------------------------

    async def _sweep(self) -> None:
        while True:
            await asyncio.sleep(30.0)
            now = asyncio.get_running_loop().time()
            for branch, ctx in list(self._invites.items()):
                if now - ctx.created_at > CONTEXT_TTL:
                    del self._invites[branch]
                    if ctx.out_branch:
                        self._out_branches.pop(ctx.out_branch, None)
            for call_id, route in list(self._calls.items()):
                if now - route.created_at > CONTEXT_TTL:
                    del self._calls[call_id]
