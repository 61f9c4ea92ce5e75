"""UAC/UAS endpoints used by the load harness.

One ``SipEndpoint`` owns one UDP socket and multiplexes any number of
client transactions over it, driving each with the transaction state
machine: retransmission on timer, timeout emission, and attribution of
stray responses to the unexpected counter.  ``Uas`` auto-answers calls
(180, then 200 after its answer delay); ``Uac.place_call`` runs one full
INVITE/180/200/ACK/hold/BYE cycle and fills in a CallRecord.
"""

from __future__ import annotations

import asyncio
import itertools
import random
from dataclasses import dataclass, field

from voipbed.sip.message import (
    SipMessage,
    SipParseError,
    generate_branch,
    generate_tag,
    make_request,
    make_response,
    parse_message,
    serialize_message,
)
from voipbed.sip.transaction import (
    Action,
    DEFAULT_TIMERS,
    Event,
    SipTimers,
    TransactionState,
    new_client_transaction,
    new_server_transaction,
    next_retransmit_interval,
    transaction_event,
)
from voipbed.udpnet import UdpService

COMPLETED_LINGER = 5.0  # absorb duplicate finals for this long
FINAL_GUARD_FACTOR = 64  # guard timer = 64 * T1 once a provisional arrived


class TransactionTimeout(Exception):
    pass


class RegistrationFailed(Exception):
    pass


@dataclass
class EndpointCounters:
    retrans: int = 0
    timeout: int = 0
    unexpected: int = 0


@dataclass
class _ClientTx:
    state: TransactionState
    payload: bytes
    dest: tuple[str, int]
    final: asyncio.Future
    on_provisional: object = None
    timer: asyncio.TimerHandle | None = None

    def cancel_timer(self) -> None:
        if self.timer is not None:
            self.timer.cancel()
            self.timer = None


@dataclass
class _ServerTx:
    state: TransactionState
    last_response: bytes | None = None


class SipEndpoint:
    """One UDP socket multiplexing SIP transactions."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        timers: SipTimers = DEFAULT_TIMERS,
        rng: random.Random | None = None,
    ) -> None:
        self.timers = timers
        self.counters = EndpointCounters()
        self.rng = rng or random.Random()
        self._client_txs: dict[str, _ClientTx] = {}
        self._server_txs: dict[str, _ServerTx] = {}
        self._service = UdpService(host, port, self._on_datagram)
        self._tasks: set[asyncio.Task] = set()
        self._seq = itertools.count(1)

    async def start(self) -> None:
        await self._service.start()

    async def stop(self) -> None:
        for tx in self._client_txs.values():
            tx.cancel_timer()
            if not tx.final.done():
                tx.final.cancel()
        self._client_txs.clear()
        for task in list(self._tasks):
            task.cancel()
        await self._service.stop()

    @property
    def address(self) -> tuple[str, int]:
        return self._service.address

    def _spawn(self, coro) -> asyncio.Task:
        task = asyncio.get_running_loop().create_task(coro)
        self._tasks.add(task)
        task.add_done_callback(self._tasks.discard)
        return task

    # -- client side ---------------------------------------------------------

    def send_request(self, msg: SipMessage, dest: tuple[str, int],
                     on_provisional=None) -> asyncio.Future:
        """Transmit a request as a client transaction; resolves on the final.

        The future raises TransactionTimeout when retransmissions exhaust.
        ACK is fire-and-forget and never builds a transaction.
        """
        loop = asyncio.get_running_loop()
        payload = serialize_message(msg)
        if msg.method == "ACK":
            self._service.send(payload, dest)
            future = loop.create_future()
            future.set_result(None)
            return future

        branch = msg.branch() or generate_branch(self.rng)
        state = new_client_transaction(branch)
        future = loop.create_future()
        tx = _ClientTx(state=state, payload=payload, dest=dest, final=future,
                       on_provisional=on_provisional)
        self._client_txs[branch] = tx

        tx.state, _ = transaction_event(tx.state, Event.SEND, timers=self.timers)
        self._service.send(payload, dest)
        self._arm_retransmit(tx)
        return future

    def _arm_retransmit(self, tx: _ClientTx) -> None:
        loop = asyncio.get_running_loop()
        interval = next_retransmit_interval(tx.state.retransmit_attempt, self.timers)
        tx.timer = loop.call_later(interval, self._on_timer, tx.state.branch_id)

    def _on_timer(self, branch: str) -> None:
        tx = self._client_txs.get(branch)
        if tx is None:
            return
        tx.timer = None
        tx.state, actions = transaction_event(tx.state, Event.TIMER_FIRED,
                                              timers=self.timers)
        if Action.RETRANSMIT in actions:
            self.counters.retrans += 1
            self._service.send(tx.payload, tx.dest)
            self._arm_retransmit(tx)
        if Action.EMIT_TIMEOUT in actions:
            self.counters.timeout += 1
            if not tx.final.done():
                tx.final.set_exception(TransactionTimeout(branch))
        if tx.state.machine_state == "terminated":
            # linger so the retransmission count stays readable and late
            # responses are attributed to the unexpected counter
            loop = asyncio.get_running_loop()
            loop.call_later(COMPLETED_LINGER, self._client_txs.pop, branch, None)

    def _on_response(self, msg: SipMessage) -> None:
        branch = msg.branch()
        tx = self._client_txs.get(branch or "")
        if tx is None or tx.state.machine_state == "terminated":
            self.counters.unexpected += 1
            return
        code = msg.status_code or 0
        tx.state, actions = transaction_event(tx.state, Event.RESPONSE_RECEIVED,
                                              code=code, timers=self.timers)
        if Action.DELIVER_TO_APPLICATION not in actions:
            return
        tx.cancel_timer()
        if 100 <= code < 200:
            # provisional: retransmission stops, a final-response guard starts
            loop = asyncio.get_running_loop()
            tx.timer = loop.call_later(self.timers.t1 * FINAL_GUARD_FACTOR,
                                       self._on_timer, tx.state.branch_id)
            if code != 100 and tx.on_provisional is not None:
                tx.on_provisional(msg)
            return
        if not tx.final.done():
            tx.final.set_result(msg)
        loop = asyncio.get_running_loop()
        loop.call_later(COMPLETED_LINGER, self._client_txs.pop, tx.state.branch_id, None)

    # -- server side -----------------------------------------------------------

    def _on_request(self, msg: SipMessage, addr: tuple[str, int]) -> None:
        branch = msg.branch() or ""
        stx = self._server_txs.get(branch)
        if stx is not None:
            stx.state, actions = transaction_event(stx.state,
                                                   Event.REQUEST_RETRANSMISSION)
            if Action.RETRANSMIT in actions and stx.last_response is not None:
                self._service.send(stx.last_response, addr)
            return
        if msg.method != "ACK":
            self._server_txs[branch] = _ServerTx(state=new_server_transaction(branch))
            loop = asyncio.get_running_loop()
            loop.call_later(COMPLETED_LINGER * 2, self._server_txs.pop, branch, None)
        self.handle_request(msg, addr)

    def respond(self, request: SipMessage, status: int, addr: tuple[str, int],
                **kwargs) -> None:
        response = make_response(request, status, **kwargs)
        payload = serialize_message(response)
        stx = self._server_txs.get(request.branch() or "")
        if stx is not None:
            stx.last_response = payload
            if status >= 200:
                stx.state, _ = transaction_event(stx.state, Event.SEND)
        self._service.send(payload, addr)

    def handle_request(self, msg: SipMessage, addr: tuple[str, int]) -> None:
        """Default UA behavior: acknowledge teardown, ignore the rest."""
        if msg.method in ("BYE", "CANCEL"):
            self.respond(msg, 200, addr)

    # -- datagram dispatch -------------------------------------------------------

    def _on_datagram(self, data: bytes, addr: tuple[str, int]) -> None:
        try:
            msg = parse_message(data)
        except SipParseError:
            return
        if msg.is_request:
            self._on_request(msg, addr)
        else:
            self._on_response(msg)

    # -- helpers -------------------------------------------------------------

    def next_call_id(self, host: str = "uac.test") -> str:
        return f"c{next(self._seq)}-{generate_tag(self.rng)}@{host}"


@dataclass
class CallRecord:
    """Signaling timestamps of one probe call; PDD derives from the first two."""

    call_id: str
    t_invite_sent: float | None = None
    t_180_received: float | None = None
    t_200_received: float | None = None
    retransmissions: int = 0
    outcome: str | None = None  # ringing_ok | timeout | rejected | unexpected


class Uac(SipEndpoint):
    """Caller endpoint; one socket carries any number of concurrent calls."""

    def __init__(self, domain: str = "caller.test", **kwargs) -> None:
        super().__init__(**kwargs)
        self.domain = domain

    async def place_call(
        self,
        target_uri: str,
        next_hop: tuple[str, int],
        *,
        overhead: float = 0.0,
        hold: float = 1.0,
        record: CallRecord | None = None,
    ) -> CallRecord:
        """Run one call cycle; ``overhead`` models client-side processing
        between the dial decision (the PDD clock start) and the wire send."""
        loop = asyncio.get_running_loop()
        host, port = self.address
        call_id = self.next_call_id(self.domain)
        rec = record if record is not None else CallRecord(call_id=call_id)
        rec.call_id = call_id
        from_uri = f"sip:uac@{host}:{port}"

        rec.t_invite_sent = loop.time()
        if overhead > 0:
            await asyncio.sleep(overhead)

        invite = make_request(
            "INVITE", target_uri, from_uri=from_uri, to_uri=target_uri,
            call_id=call_id, cseq=1, via_host=host, via_port=port,
            branch=generate_branch(self.rng), contact=from_uri,
        )

        def on_provisional(resp: SipMessage) -> None:
            if resp.status_code == 180 and rec.t_180_received is None:
                rec.t_180_received = loop.time()

        branch = invite.branch() or ""
        future = self.send_request(invite, next_hop, on_provisional=on_provisional)
        try:
            final = await future
        except TransactionTimeout:
            rec.outcome = "ringing_ok" if rec.t_180_received is not None else "timeout"
            rec.retransmissions = self._retransmissions(branch)
            return rec
        except asyncio.CancelledError:
            if rec.outcome is None:
                rec.outcome = "timeout"
                self.counters.timeout += 1
            raise

        rec.retransmissions = self._retransmissions(branch)
        code = final.status_code or 0
        if code == 200:
            rec.t_200_received = loop.time()
            rec.outcome = "ringing_ok" if rec.t_180_received is not None else "unexpected"
            ack = make_request(
                "ACK", target_uri, from_uri=from_uri, to_uri=target_uri,
                call_id=call_id, cseq=1, via_host=host, via_port=port,
                branch=generate_branch(self.rng),
            )
            self.send_request(ack, next_hop)
            await asyncio.sleep(hold)
            bye = make_request(
                "BYE", target_uri, from_uri=from_uri, to_uri=target_uri,
                call_id=call_id, cseq=2, via_host=host, via_port=port,
                branch=generate_branch(self.rng),
            )
            try:
                await self.send_request(bye, next_hop)
            except TransactionTimeout:
                pass  # teardown loss does not change the call outcome
        else:
            rec.outcome = "ringing_ok" if rec.t_180_received is not None else "rejected"
        return rec

    def _retransmissions(self, branch: str) -> int:
        tx = self._client_txs.get(branch)
        return tx.state.retransmit_attempt if tx is not None else 0


class Uas(SipEndpoint):
    """Callee endpoint: registers an AOR and auto-answers inbound calls."""

    def __init__(
        self,
        aor: str,
        *,
        ring_delay: float = 0.0,
        answer_delay: float = 0.5,
        **kwargs,
    ) -> None:
        super().__init__(**kwargs)
        self.aor = aor
        self.ring_delay = ring_delay
        self.answer_delay = answer_delay
        self._pending_answers: dict[str, asyncio.Task] = {}
        self.calls_answered = 0

    async def register(self, registrar: tuple[str, int], expires: int = 3600,
                       timeout: float = 5.0) -> None:
        host, port = self.address
        contact = f"sip:{self.aor.split(':', 1)[1].split('@')[0]}@{host}:{port}"
        msg = make_request(
            "REGISTER", f"sip:{registrar[0]}:{registrar[1]}",
            from_uri=self.aor, to_uri=self.aor,
            call_id=self.next_call_id("uas.test"), cseq=1,
            via_host=host, via_port=port, branch=generate_branch(self.rng),
            contact=contact, expires=expires,
        )
        try:
            final = await asyncio.wait_for(self.send_request(msg, registrar), timeout)
        except (TransactionTimeout, asyncio.TimeoutError) as exc:
            raise RegistrationFailed(f"{self.aor}: no answer") from exc
        if final.status_code != 200:
            raise RegistrationFailed(f"{self.aor}: got {final.status_code}")

    def handle_request(self, msg: SipMessage, addr: tuple[str, int]) -> None:
        if msg.method == "INVITE":
            call_id = msg.call_id() or ""
            task = self._spawn(self._answer(msg, addr))
            self._pending_answers[call_id] = task
            task.add_done_callback(lambda _t: self._pending_answers.pop(call_id, None))
        elif msg.method in ("BYE", "CANCEL"):
            pending = self._pending_answers.pop(msg.call_id() or "", None)
            if pending is not None:
                pending.cancel()
            self.respond(msg, 200, addr)
        # ACK is absorbed

    async def _answer(self, invite: SipMessage, addr: tuple[str, int]) -> None:
        to_tag = generate_tag(self.rng)
        if self.ring_delay > 0:
            await asyncio.sleep(self.ring_delay)
        self.respond(invite, 180, addr, to_tag=to_tag)
        await asyncio.sleep(self.answer_delay)
        host, port = self.address
        self.respond(invite, 200, addr, to_tag=to_tag,
                     contact=f"sip:{host}:{port}")
        self.calls_answered += 1
