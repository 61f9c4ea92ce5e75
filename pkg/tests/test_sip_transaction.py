"""Retransmission timers and the exhaustive transaction machine check."""

import pytest

from voipbed.sip.transaction import (
    CALLING,
    CLIENT,
    COMPLETED,
    PROCEEDING,
    SERVER,
    TERMINATED,
    Action,
    Event,
    EventAfterTermination,
    SipTimers,
    TransactionState,
    TransactionTable,
    new_client_transaction,
    new_server_transaction,
    next_retransmit_interval,
    transaction_event,
)


def test_retransmit_interval_base_and_doubling():
    assert next_retransmit_interval(0) == 0.5
    assert next_retransmit_interval(1) == 1.0
    # min(500 * 2^6, 4000) ms = 4000 ms, worked by hand
    assert next_retransmit_interval(6) == 4.0


def test_retransmit_schedule_is_500_1000_2000_4000_capped():
    schedule = [next_retransmit_interval(n) for n in range(8)]
    assert schedule == [0.5, 1.0, 2.0, 4.0, 4.0, 4.0, 4.0, 4.0]


def test_retransmit_interval_rejects_negative():
    with pytest.raises(ValueError):
        next_retransmit_interval(-1)


def test_custom_timers_are_configuration():
    timers = SipTimers(t1=0.1, t2=0.4, max_attempts=3)
    assert [next_retransmit_interval(n, timers) for n in range(4)] == [
        0.1, 0.2, 0.4, 0.4]
    with pytest.raises(ValueError):
        SipTimers(t1=0.0).validate()


TIMERS = SipTimers(max_attempts=7)


def _client(state, attempt=0):
    return TransactionState(role=CLIENT, machine_state=state,
                            retransmit_attempt=attempt, branch_id="b")


def _server(state, attempt=0):
    return TransactionState(role=SERVER, machine_state=state,
                            retransmit_attempt=attempt, branch_id="b")


# Hand-enumerated edge list: (role, state, event, code/attempt variant)
# -> (next state, actions).  This is the oracle the machine must match.
CLIENT_EDGES = [
    (CALLING, Event.SEND, None, 0, CALLING, []),
    (CALLING, Event.TIMER_FIRED, None, 0, CALLING, [Action.RETRANSMIT]),
    (CALLING, Event.TIMER_FIRED, None, 7, TERMINATED, [Action.EMIT_TIMEOUT]),
    (CALLING, Event.RESPONSE_RECEIVED, 100, 0, PROCEEDING, [Action.DELIVER_TO_APPLICATION]),
    (CALLING, Event.RESPONSE_RECEIVED, 180, 0, PROCEEDING, [Action.DELIVER_TO_APPLICATION]),
    (CALLING, Event.RESPONSE_RECEIVED, 200, 0, COMPLETED, [Action.DELIVER_TO_APPLICATION]),
    (CALLING, Event.RESPONSE_RECEIVED, 486, 0, COMPLETED, [Action.DELIVER_TO_APPLICATION]),
    (CALLING, Event.REQUEST_RETRANSMISSION, None, 0, CALLING, [Action.COUNT_UNEXPECTED]),
    (PROCEEDING, Event.SEND, None, 0, PROCEEDING, []),
    (PROCEEDING, Event.TIMER_FIRED, None, 0, TERMINATED, [Action.EMIT_TIMEOUT]),
    (PROCEEDING, Event.RESPONSE_RECEIVED, 180, 0, PROCEEDING, [Action.DELIVER_TO_APPLICATION]),
    (PROCEEDING, Event.RESPONSE_RECEIVED, 200, 0, COMPLETED, [Action.DELIVER_TO_APPLICATION]),
    (PROCEEDING, Event.REQUEST_RETRANSMISSION, None, 0, PROCEEDING, [Action.COUNT_UNEXPECTED]),
    (COMPLETED, Event.SEND, None, 0, COMPLETED, []),
    (COMPLETED, Event.TIMER_FIRED, None, 0, TERMINATED, []),
    (COMPLETED, Event.RESPONSE_RECEIVED, 200, 0, COMPLETED, []),
    (COMPLETED, Event.REQUEST_RETRANSMISSION, None, 0, COMPLETED, [Action.COUNT_UNEXPECTED]),
]

SERVER_EDGES = [
    (PROCEEDING, Event.SEND, None, 0, COMPLETED, []),
    (PROCEEDING, Event.TIMER_FIRED, None, 0, PROCEEDING, []),
    (PROCEEDING, Event.RESPONSE_RECEIVED, 200, 0, PROCEEDING, [Action.COUNT_UNEXPECTED]),
    (PROCEEDING, Event.REQUEST_RETRANSMISSION, None, 0, PROCEEDING, [Action.RETRANSMIT]),
    (COMPLETED, Event.SEND, None, 0, COMPLETED, []),
    (COMPLETED, Event.TIMER_FIRED, None, 0, TERMINATED, []),
    (COMPLETED, Event.RESPONSE_RECEIVED, 180, 0, COMPLETED, [Action.COUNT_UNEXPECTED]),
    (COMPLETED, Event.REQUEST_RETRANSMISSION, None, 0, COMPLETED, [Action.RETRANSMIT]),
]


@pytest.mark.parametrize("state,event,code,attempt,want_state,want_actions",
                         CLIENT_EDGES)
def test_client_machine_matches_edge_list(state, event, code, attempt,
                                          want_state, want_actions):
    nxt, actions = transaction_event(_client(state, attempt), event, code, TIMERS)
    assert nxt.machine_state == want_state
    assert actions == want_actions


@pytest.mark.parametrize("state,event,code,attempt,want_state,want_actions",
                         SERVER_EDGES)
def test_server_machine_matches_edge_list(state, event, code, attempt,
                                          want_state, want_actions):
    nxt, actions = transaction_event(_server(state, attempt), event, code, TIMERS)
    assert nxt.machine_state == want_state
    assert actions == want_actions


def test_every_state_event_pair_is_defined():
    """No (live state, event) combination may crash either role."""
    for role_ctor in (_client, _server):
        for state in (CALLING, PROCEEDING, COMPLETED):
            for event in Event:
                code = 200 if event is Event.RESPONSE_RECEIVED else None
                nxt, actions = transaction_event(role_ctor(state), event, code, TIMERS)
                assert nxt.machine_state in (CALLING, PROCEEDING, COMPLETED, TERMINATED)
                assert all(isinstance(a, Action) for a in actions)


def test_retransmit_attempt_never_decreases():
    state = new_client_transaction("b1")
    seen = [state.retransmit_attempt]
    for _ in range(9):
        state, _actions = transaction_event(state, Event.TIMER_FIRED, timers=TIMERS)
        seen.append(state.retransmit_attempt)
        if state.machine_state == TERMINATED:
            break
    assert seen == sorted(seen)
    assert state.machine_state == TERMINATED
    assert seen[-1] == TIMERS.max_attempts


def test_event_after_termination_raises():
    state, _ = transaction_event(_client(PROCEEDING), Event.TIMER_FIRED, timers=TIMERS)
    assert state.machine_state == TERMINATED
    with pytest.raises(EventAfterTermination):
        transaction_event(state, Event.SEND)


def test_timeout_after_exhausting_retransmissions():
    state = new_client_transaction("b2")
    actions_log = []
    for _ in range(TIMERS.max_attempts + 1):
        state, actions = transaction_event(state, Event.TIMER_FIRED, timers=TIMERS)
        actions_log.extend(actions)
    assert actions_log.count(Action.RETRANSMIT) == TIMERS.max_attempts
    assert actions_log.count(Action.EMIT_TIMEOUT) == 1
    assert state.machine_state == TERMINATED


def test_response_attribution_matching_or_unexpected():
    table = TransactionTable()
    tx = new_client_transaction("known")
    table.add(tx)
    assert table.attribute_response("known") is tx
    assert table.unexpected == 0
    assert table.attribute_response("stranger") is None
    assert table.attribute_response(None) is None
    assert table.unexpected == 2


def test_table_drops_terminated_transactions():
    table = TransactionTable()
    tx = new_server_transaction("s1")
    table.add(tx)
    tx2, _ = transaction_event(tx, Event.SEND)
    tx3, _ = transaction_event(tx2, Event.TIMER_FIRED)
    assert tx3.machine_state == TERMINATED
    table.replace(tx3)
    assert len(table) == 0
