"""SIP message model, codec and transaction layer."""

from voipbed.sip.message import (
    BadContentLength,
    MalformedStartLine,
    MissingMandatoryHeader,
    SipMessage,
    SipParseError,
    make_request,
    make_response,
    parse_message,
    serialize_message,
)
from voipbed.sip.transaction import (
    Action,
    DEFAULT_TIMERS,
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

__all__ = [
    "Action",
    "BadContentLength",
    "DEFAULT_TIMERS",
    "Event",
    "EventAfterTermination",
    "MalformedStartLine",
    "MissingMandatoryHeader",
    "SipMessage",
    "SipParseError",
    "SipTimers",
    "TransactionState",
    "TransactionTable",
    "make_request",
    "make_response",
    "new_client_transaction",
    "new_server_transaction",
    "next_retransmit_interval",
    "parse_message",
    "serialize_message",
    "transaction_event",
]
