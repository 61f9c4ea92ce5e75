"""Client/server transaction state machines and retransmission timers.

A deliberately small transaction layer over unreliable UDP: enough to drive
request retransmission, detect timeouts, and attribute every incoming
response either to a live transaction or to the unexpected-message counter.
States follow the RFC 3261 shape (calling, proceeding, completed,
terminated) but both roles share one event vocabulary.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

CLIENT = "client"
SERVER = "server"

CALLING = "calling"
PROCEEDING = "proceeding"
COMPLETED = "completed"
TERMINATED = "terminated"

STATES = (CALLING, PROCEEDING, COMPLETED, TERMINATED)


class Event(enum.Enum):
    SEND = "send"
    TIMER_FIRED = "timer_fired"
    RESPONSE_RECEIVED = "response_received"
    REQUEST_RETRANSMISSION = "request_retransmission"


class Action(enum.Enum):
    RETRANSMIT = "retransmit"
    DELIVER_TO_APPLICATION = "deliver_to_application"
    EMIT_TIMEOUT = "emit_timeout"
    COUNT_UNEXPECTED = "count_unexpected"


class EventAfterTermination(RuntimeError):
    """Caller bug: an event was fed to a terminated transaction."""


@dataclass(frozen=True)
class SipTimers:
    """Retransmission timer knobs (RFC 3261 T1/T2 defaults)."""

    t1: float = 0.5
    t2: float = 4.0
    max_attempts: int = 7

    def validate(self) -> None:
        if self.t1 <= 0 or self.t2 < self.t1 or self.max_attempts < 1:
            raise ValueError(f"bad timer configuration: {self}")


DEFAULT_TIMERS = SipTimers()


def next_retransmit_interval(attempt: int, timers: SipTimers = DEFAULT_TIMERS) -> float:
    """Seconds until retransmission ``attempt`` (0-based): T1 * 2^n capped at T2."""
    if attempt < 0:
        raise ValueError("attempt must be >= 0")
    return min(timers.t1 * (2 ** attempt), timers.t2)


@dataclass(frozen=True)
class TransactionState:
    """Immutable transaction snapshot; transitions replace the value."""

    role: str  # CLIENT | SERVER
    machine_state: str = CALLING
    retransmit_attempt: int = 0
    branch_id: str = ""


def new_client_transaction(branch_id: str) -> TransactionState:
    return TransactionState(role=CLIENT, machine_state=CALLING, branch_id=branch_id)


def new_server_transaction(branch_id: str) -> TransactionState:
    # A server transaction exists only once a request arrived, hence proceeding.
    return TransactionState(role=SERVER, machine_state=PROCEEDING, branch_id=branch_id)


def transaction_event(
    state: TransactionState,
    event: Event,
    code: int | None = None,
    timers: SipTimers = DEFAULT_TIMERS,
) -> tuple[TransactionState, list[Action]]:
    """Deterministic transition; returns the next state and side-effect actions.

    Every (state, event) pair is defined; unexpected traffic maps to
    COUNT_UNEXPECTED rather than an error so no datagram can crash a server.
    """
    if state.machine_state == TERMINATED:
        raise EventAfterTermination(f"event {event.value} on terminated transaction")
    if state.role == CLIENT:
        return _client_event(state, event, code, timers)
    return _server_event(state, event)


def _client_event(
    state: TransactionState, event: Event, code: int | None, timers: SipTimers
) -> tuple[TransactionState, list[Action]]:
    s = state.machine_state

    if event is Event.SEND:
        return state, []

    if event is Event.TIMER_FIRED:
        if s == CALLING:
            if state.retransmit_attempt < timers.max_attempts:
                bumped = replace(state, retransmit_attempt=state.retransmit_attempt + 1)
                return bumped, [Action.RETRANSMIT]
            return replace(state, machine_state=TERMINATED), [Action.EMIT_TIMEOUT]
        if s == PROCEEDING:
            # Retransmission stops on a provisional; a timer here is the
            # final-response guard expiring.
            return replace(state, machine_state=TERMINATED), [Action.EMIT_TIMEOUT]
        # completed: linger timer expiry, clean termination
        return replace(state, machine_state=TERMINATED), []

    if event is Event.RESPONSE_RECEIVED:
        if code is None:
            raise ValueError("response_received requires a status code")
        if s in (CALLING, PROCEEDING):
            if 100 <= code < 200:
                return replace(state, machine_state=PROCEEDING), [Action.DELIVER_TO_APPLICATION]
            return replace(state, machine_state=COMPLETED), [Action.DELIVER_TO_APPLICATION]
        # completed: absorb retransmitted finals without re-delivering
        return state, []

    # REQUEST_RETRANSMISSION: a request reached a client transaction
    return state, [Action.COUNT_UNEXPECTED]


def _server_event(
    state: TransactionState, event: Event
) -> tuple[TransactionState, list[Action]]:
    s = state.machine_state

    if event is Event.SEND:
        # The application sent its final response; provisionals are relayed
        # without a machine transition.
        if s == PROCEEDING:
            return replace(state, machine_state=COMPLETED), []
        return state, []

    if event is Event.TIMER_FIRED:
        if s == COMPLETED:
            return replace(state, machine_state=TERMINATED), []
        return state, []

    if event is Event.REQUEST_RETRANSMISSION:
        bumped = replace(state, retransmit_attempt=state.retransmit_attempt + 1)
        return bumped, [Action.RETRANSMIT]

    # RESPONSE_RECEIVED on a server transaction: not ours
    return state, [Action.COUNT_UNEXPECTED]


class TransactionTable:
    """Branch-keyed transaction registry with an unexpected-message counter.

    Guarantees the attribution invariant: every response maps to exactly one
    live transaction or increments ``unexpected``.
    """

    def __init__(self) -> None:
        self._by_branch: dict[str, TransactionState] = {}
        self.unexpected = 0

    def __len__(self) -> int:
        return len(self._by_branch)

    def add(self, state: TransactionState) -> None:
        self._by_branch[state.branch_id] = state

    def get(self, branch: str | None) -> TransactionState | None:
        if branch is None:
            return None
        return self._by_branch.get(branch)

    def replace(self, state: TransactionState) -> None:
        if state.machine_state == TERMINATED:
            self._by_branch.pop(state.branch_id, None)
        else:
            self._by_branch[state.branch_id] = state

    def attribute_response(self, branch: str | None) -> TransactionState | None:
        """Transaction owning ``branch``, else bump the unexpected counter."""
        state = self.get(branch)
        if state is None:
            self.unexpected += 1
        return state
