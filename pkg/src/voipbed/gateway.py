"""PBX-style B2BUA gateway with a virtual FXS bank.

Inbound INVITEs are matched against a dialplan; a matched call gets a
second, purely virtual leg to an FXS endpoint that rings (180) and answers
(200) on timers.  Both legs live and die together.  The gateway applies its
profile's per-signal delays - the INVITE delay dominates, which is what
makes this hop the call-setup bottleneck.
"""

from __future__ import annotations

import asyncio
from dataclasses import dataclass, field

from voipbed.profiles import GATEWAY_PROFILE, ServerProfile, ServerStats
from voipbed.queueing import WorkQueue
from voipbed.sip.message import (
    SipMessage,
    SipParseError,
    generate_branch,
    generate_tag,
    make_request,
    make_response,
    parse_message,
    serialize_message,
    uri_user,
)
from voipbed.udpnet import RateWindow, UdpService

SETUP = "setup"
RINGING = "ringing"
ANSWERED = "answered"
TORN_DOWN = "torn_down"

_STATE_ORDER = (SETUP, RINGING, ANSWERED, TORN_DOWN)

MAX_CALL_SECONDS = 60.0  # stuck-call guard so an endpoint cannot leak busy


class DialplanError(ValueError):
    pass


class DialplanSyntaxError(DialplanError):
    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnknownEndpoint(DialplanError):
    def __init__(self, line_no: int, endpoint: str) -> None:
        super().__init__(f"line {line_no}: unknown endpoint {endpoint!r}")
        self.line_no = line_no
        self.endpoint = endpoint


ACTION_FXS = "fxs"
ACTION_REJECT = "reject"


@dataclass(frozen=True)
class DialplanEntry:
    """Exact digits, or '_' + per-position pattern where X matches any digit."""

    pattern: str
    action: str  # ACTION_FXS | ACTION_REJECT
    endpoint: str | None = None

    def __post_init__(self) -> None:
        if not self.pattern:
            raise DialplanError("empty dialplan pattern")
        if self.action == ACTION_FXS and not self.endpoint:
            raise DialplanError("fxs action needs an endpoint id")

    @property
    def is_wildcard(self) -> bool:
        return self.pattern.startswith("_")


def _wildcard_matches(pattern: str, number: str) -> bool:
    body = pattern[1:]
    if len(body) != len(number):
        return False
    for want, got in zip(body, number):
        if want == "X":
            if not got.isdigit():
                return False
        elif want != got:
            return False
    return True


def match_dialplan(number: str, plan: list[DialplanEntry]) -> DialplanEntry | None:
    """First exact match wins; wildcards only run when no exact entry matches."""
    for entry in plan:
        if not entry.is_wildcard and entry.pattern == number:
            return entry
    for entry in plan:
        if entry.is_wildcard and _wildcard_matches(entry.pattern, number):
            return entry
    return None


def parse_dialplan_text(text: str, endpoints: set[str]) -> list[DialplanEntry]:
    plan: list[DialplanEntry] = []
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        left, sep, right = line.partition("=>")
        if not sep:
            raise DialplanSyntaxError(line_no, f"expected '<pattern> => <action>': {line!r}")
        pattern, action = left.strip(), right.strip()
        if not pattern:
            raise DialplanSyntaxError(line_no, "empty pattern")
        if action == ACTION_REJECT:
            plan.append(DialplanEntry(pattern=pattern, action=ACTION_REJECT))
        elif action.startswith("fxs:"):
            endpoint = action[len("fxs:"):].strip()
            if endpoint not in endpoints:
                raise UnknownEndpoint(line_no, endpoint)
            plan.append(DialplanEntry(pattern=pattern, action=ACTION_FXS, endpoint=endpoint))
        else:
            raise DialplanSyntaxError(line_no, f"unknown action {action!r}")
    return plan


def load_dialplan(path: str, endpoints: set[str]) -> list[DialplanEntry]:
    with open(path, encoding="utf-8") as handle:
        return parse_dialplan_text(handle.read(), endpoints)


@dataclass
class FxsEndpoint:
    """Virtual analog port: rings after ring_delay, answers after answer_delay."""

    id: str
    number: str
    ring_delay: float = 0.0
    answer_delay: float = 2.0

    def __post_init__(self) -> None:
        if self.ring_delay < 0 or self.answer_delay < 0:
            raise ValueError(f"negative delay on endpoint {self.id}")


@dataclass
class BridgedCall:
    """Paired legs: leg A is the inbound SIP transaction, leg B the FXS."""

    call_id: str
    branch: str
    caller: tuple[str, int]
    endpoint_id: str | None
    invite: SipMessage
    to_tag: str
    created_at: float
    state: str = SETUP
    last_response: bytes | None = None
    fsm: asyncio.Task | None = field(default=None, repr=False)

    def advance(self, new_state: str) -> None:
        if _STATE_ORDER.index(new_state) < _STATE_ORDER.index(self.state):
            raise RuntimeError(f"state may not move {self.state} -> {new_state}")
        self.state = new_state


class Gateway:
    """B2BUA bound to one UDP socket, owning its dialplan and FXS bank."""

    def __init__(
        self,
        endpoints: list[FxsEndpoint],
        dialplan: list[DialplanEntry],
        host: str = "127.0.0.1",
        port: int = 0,
        profile: ServerProfile = GATEWAY_PROFILE,
    ) -> None:
        self.profile = profile
        self.endpoints = {ep.id: ep for ep in endpoints}
        for entry in dialplan:
            if entry.action == ACTION_FXS and entry.endpoint not in self.endpoints:
                raise UnknownEndpoint(0, entry.endpoint or "")
        self.dialplan = dialplan
        self.stats = ServerStats(name="gateway")
        self.queue = WorkQueue(capacity=profile.capacity, max_backlog=profile.queue_seconds)
        self.calls: dict[str, BridgedCall] = {}
        self._busy: set[str] = set()
        self._by_branch: dict[str, BridgedCall] = {}
        self._service = UdpService(host, port, self._on_datagram)
        self._rate = RateWindow()
        self._tasks: set[asyncio.Task] = set()
        self._sweeper: asyncio.Task | None = None
        self._cseq = 0

    async def start(self) -> None:
        await self._service.start()
        self._sweeper = asyncio.get_running_loop().create_task(self._sweep())

    async def stop(self) -> None:
        if self._sweeper is not None:
            self._sweeper.cancel()
            self._sweeper = None
        for call in list(self.calls.values()):
            if call.fsm is not None:
                call.fsm.cancel()
        for task in list(self._tasks):
            task.cancel()
        await self._service.stop()

    async def _sweep(self) -> None:
        # retransmission-replay state must outlive the call briefly, not forever
        while True:
            await asyncio.sleep(30.0)
            now = asyncio.get_running_loop().time()
            for branch, call in list(self._by_branch.items()):
                if call.state == TORN_DOWN and now - call.created_at > 120.0:
                    del self._by_branch[branch]

    @property
    def address(self) -> tuple[str, int]:
        return self._service.address

    def endpoint_busy(self, endpoint_id: str) -> bool:
        return endpoint_id in self._busy

    # -- datagram path ------------------------------------------------------

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
        branch = msg.branch()

        work = 0.0
        if msg.is_request and msg.method == "INVITE":
            if self.profile.hard_fail_at is not None:
                if self._rate.tick(now) >= self.profile.hard_fail_at:
                    self.stats.downed = True
                    return
            existing = self._by_branch.get(branch or "")
            if existing is not None:
                if existing.last_response is not None:
                    self._service.send(existing.last_response, addr)
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

        delay = wait + self.profile.delay_for(msg.signal_kind())
        self._spawn(self._process_later(msg, addr, delay))

    def _spawn(self, coro) -> None:
        task = asyncio.get_running_loop().create_task(coro)
        self._tasks.add(task)
        task.add_done_callback(self._tasks.discard)

    async def _process_later(self, msg: SipMessage, addr: tuple[str, int],
                             delay: float) -> None:
        if delay > 0:
            await asyncio.sleep(delay)
        if not msg.is_request:
            return  # response to a gateway-issued BYE; absorbed
        if msg.method == "INVITE":
            self._handle_inbound_invite(msg, addr)
        elif msg.method == "ACK":
            pass  # leg A confirmation, nothing left to do
        elif msg.method in ("BYE", "CANCEL"):
            self._handle_bye(msg, addr)

    # -- call handling -------------------------------------------------------

    def _handle_inbound_invite(self, msg: SipMessage, addr: tuple[str, int]) -> None:
        loop = asyncio.get_running_loop()
        branch = msg.branch() or generate_branch()
        number = uri_user(msg.request_uri or "")
        entry = match_dialplan(number, self.dialplan)

        call = BridgedCall(call_id=msg.call_id() or "", branch=branch, caller=addr,
                           endpoint_id=None, invite=msg, to_tag=generate_tag(),
                           created_at=loop.time())
        self._by_branch[branch] = call

        if entry is None or entry.action == ACTION_REJECT:
            self._respond(call, 404)
            call.advance(TORN_DOWN)
            return

        endpoint = self.endpoints[entry.endpoint or ""]
        if endpoint.id in self._busy:
            self._respond(call, 486)
            call.advance(TORN_DOWN)
            return

        self._busy.add(endpoint.id)
        call.endpoint_id = endpoint.id
        self.calls[call.call_id] = call
        call.fsm = loop.create_task(self._fxs_leg(call, endpoint))
        self._tasks.add(call.fsm)
        call.fsm.add_done_callback(self._tasks.discard)

    async def _fxs_leg(self, call: BridgedCall, endpoint: FxsEndpoint) -> None:
        """Leg B: the virtual FXS rings, answers, then waits for teardown."""
        try:
            if endpoint.ring_delay > 0:
                await asyncio.sleep(endpoint.ring_delay)
            await asyncio.sleep(self.profile.delay_for("180"))
            if call.state == TORN_DOWN:
                return
            call.advance(RINGING)
            self._respond(call, 180)

            await asyncio.sleep(endpoint.answer_delay)
            await asyncio.sleep(self.profile.delay_for("200"))
            if call.state == TORN_DOWN:
                return
            call.advance(ANSWERED)
            self._respond(call, 200)

            await asyncio.sleep(MAX_CALL_SECONDS)
            self._teardown(call)
        except asyncio.CancelledError:
            raise

    def _respond(self, call: BridgedCall, status: int) -> None:
        response = make_response(call.invite, status, to_tag=call.to_tag)
        payload = serialize_message(response)
        call.last_response = payload
        self._service.send(payload, call.caller)

    def _handle_bye(self, msg: SipMessage, addr: tuple[str, int]) -> None:
        call = self.calls.get(msg.call_id() or "")
        self._service.send(serialize_message(make_response(msg, 200)), addr)
        if call is not None:
            self._teardown(call)

    def _teardown(self, call: BridgedCall) -> None:
        if call.state == TORN_DOWN:
            return
        call.advance(TORN_DOWN)
        if call.endpoint_id is not None:
            self._busy.discard(call.endpoint_id)
        self.calls.pop(call.call_id, None)
        if call.fsm is not None and not call.fsm.done():
            call.fsm.cancel()

    async def hangup(self, call_id: str) -> None:
        """FXS-side hangup: BYE upstream, then tear both legs down."""
        call = self.calls.get(call_id)
        if call is None:
            raise KeyError(f"no active call {call_id!r}")
        host, port = self.address
        self._cseq += 1
        from_uri = f"sip:{self.endpoints[call.endpoint_id or ''].number}@{host}:{port}"
        caller_uri = f"sip:{call.caller[0]}:{call.caller[1]}"
        bye = make_request(
            "BYE", caller_uri, from_uri=from_uri, to_uri=caller_uri,
            call_id=call.call_id, cseq=self._cseq,
            via_host=host, via_port=port, branch=generate_branch(),
        )
        self._service.send(serialize_message(bye), call.caller)
        self._teardown(call)
