"""SIP message model, text parser and serializer.

Covers the request/response subset a registrar/proxy/B2BUA testbed needs:
REGISTER, INVITE, ACK, BYE, CANCEL and the status codes seen in a basic
call setup.  Transport is UDP, one datagram per message, CRLF line endings
(RFC 3261 section 7).  Header emission order is insertion order and header
names are kept byte-exact, so ``serialize(parse(m)) == m`` for any datagram
this module produced.
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass, field

METHODS = ("REGISTER", "INVITE", "ACK", "BYE", "CANCEL")

# Status codes the testbed routes on; anything else still parses but is
# handed to the unexpected-message counter by the transaction layer.
KNOWN_STATUS_CODES = (100, 180, 200, 404, 486, 500)

REASON_PHRASES = {
    100: "Trying",
    180: "Ringing",
    200: "OK",
    404: "Not Found",
    486: "Busy Here",
    500: "Server Internal Error",
}

MANDATORY_HEADERS = ("Via", "From", "To", "Call-ID", "CSeq")

# RFC 3261 section 8.1.1.7: branch values must start with the magic cookie.
BRANCH_COOKIE = "z9hG4bK"

_ID_CHARS = string.ascii_lowercase + string.digits


class SipParseError(ValueError):
    """Base class for datagram rejections; the server drops the packet."""


class MalformedStartLine(SipParseError):
    pass


class MissingMandatoryHeader(SipParseError):
    pass


class BadContentLength(SipParseError):
    pass


@dataclass
class SipMessage:
    """One parsed SIP request or response.

    ``headers`` is an ordered list of ``(name, value)`` pairs; names compare
    case-insensitively but are emitted verbatim.
    """

    kind: str  # "request" | "response"
    method: str | None = None
    status_code: int | None = None
    request_uri: str | None = None
    headers: list[tuple[str, str]] = field(default_factory=list)
    body: bytes = b""

    @property
    def is_request(self) -> bool:
        return self.kind == "request"

    def header(self, name: str) -> str | None:
        """First value of ``name``, case-insensitive; None if absent."""
        lower = name.lower()
        for key, value in self.headers:
            if key.lower() == lower:
                return value
        return None

    def header_values(self, name: str) -> list[str]:
        lower = name.lower()
        return [v for k, v in self.headers if k.lower() == lower]

    def set_header(self, name: str, value: str) -> None:
        """Replace the first occurrence of ``name`` or append it."""
        lower = name.lower()
        for i, (key, _) in enumerate(self.headers):
            if key.lower() == lower:
                self.headers[i] = (key, value)
                return
        self.headers.append((name, value))

    def remove_header(self, name: str) -> None:
        lower = name.lower()
        self.headers = [(k, v) for k, v in self.headers if k.lower() != lower]

    def top_via(self) -> str | None:
        return self.header("Via")

    def pop_via(self) -> str | None:
        """Remove and return the topmost Via value."""
        for i, (key, value) in enumerate(self.headers):
            if key.lower() == "via":
                del self.headers[i]
                return value
        return None

    def push_via(self, value: str) -> None:
        """Insert a Via above any existing ones (proxy forwarding)."""
        for i, (key, _) in enumerate(self.headers):
            if key.lower() == "via":
                self.headers.insert(i, ("Via", value))
                return
        self.headers.append(("Via", value))

    def branch(self) -> str | None:
        """Branch parameter of the topmost Via (transaction key)."""
        via = self.top_via()
        if via is None:
            return None
        return via_params(via).get("branch")

    def cseq(self) -> tuple[int, str] | None:
        value = self.header("CSeq")
        if value is None:
            return None
        parts = value.split()
        if len(parts) != 2:
            return None
        try:
            return int(parts[0]), parts[1]
        except ValueError:
            return None

    def call_id(self) -> str | None:
        return self.header("Call-ID")

    def signal_kind(self) -> str:
        """Key used for per-signal delay profiles: method or status code."""
        if self.is_request:
            return self.method or ""
        return str(self.status_code)


def via_params(via: str) -> dict[str, str]:
    """Semicolon parameters of a Via value (branch, received, ...)."""
    params: dict[str, str] = {}
    for part in via.split(";")[1:]:
        part = part.strip()
        if "=" in part:
            key, _, value = part.partition("=")
            params[key.strip()] = value.strip()
        elif part:
            params[part] = ""
    return params


def via_sent_by(via: str) -> tuple[str, int] | None:
    """``(host, port)`` from a Via sent-by field, e.g. 'SIP/2.0/UDP h:p;...'."""
    head = via.split(";", 1)[0].strip()
    fields = head.split()
    if len(fields) != 2:
        return None
    host, _, port = fields[1].partition(":")
    if not host:
        return None
    try:
        return host, int(port) if port else 5060
    except ValueError:
        return None


def uri_user(uri: str) -> str:
    """User part of a sip: URI ('sip:2003@host' -> '2003')."""
    body = uri.split(":", 1)[1] if ":" in uri else uri
    return body.split("@", 1)[0] if "@" in body else ""


def uri_host_port(uri: str, default_port: int = 5060) -> tuple[str, int]:
    """``(host, port)`` from a sip: URI; parameters after ';' are ignored."""
    body = uri.split(":", 1)[1] if uri.lower().startswith("sip:") else uri
    body = body.split(";", 1)[0]
    hostpart = body.split("@", 1)[1] if "@" in body else body
    host, _, port = hostpart.partition(":")
    try:
        return host, int(port) if port else default_port
    except ValueError:
        return host, default_port


def generate_branch(rng: random.Random | None = None) -> str:
    pick = (rng or random).choices
    return BRANCH_COOKIE + "".join(pick(_ID_CHARS, k=10))


def generate_call_id(host: str = "testbed", rng: random.Random | None = None) -> str:
    pick = (rng or random).choices
    return "".join(pick(_ID_CHARS, k=12)) + "@" + host


def generate_tag(rng: random.Random | None = None) -> str:
    pick = (rng or random).choices
    return "".join(pick(_ID_CHARS, k=8))


def parse_message(raw: bytes) -> SipMessage:
    """Parse one UDP datagram into a SipMessage.

    Raises MalformedStartLine, MissingMandatoryHeader or BadContentLength;
    callers drop the datagram on any of these.  Unknown headers are kept
    verbatim.  Folded (continuation) header lines are not supported and are
    rejected, since the testbed generates its own traffic.
    """
    # latin-1 is byte-transparent, so serialize(parse(x)) stays bit-exact.
    text = raw.decode("latin-1")
    head, sep, body_text = text.partition("\r\n\r\n")
    if not sep:
        raise MalformedStartLine("no CRLFCRLF header terminator")
    body = body_text.encode("latin-1")

    lines = head.split("\r\n")
    start = lines[0]
    msg = _parse_start_line(start)

    for line in lines[1:]:
        if not line:
            raise MalformedStartLine("empty header line before terminator")
        if line[0] in " \t":
            raise MalformedStartLine("folded header lines are not supported")
        name, colon, value = line.partition(":")
        if not colon or not name.strip() or name != name.strip():
            raise MalformedStartLine(f"bad header line: {line!r}")
        msg.headers.append((name, value.strip()))

    for required in MANDATORY_HEADERS:
        if msg.header(required) is None:
            raise MissingMandatoryHeader(required)

    declared = msg.header("Content-Length")
    if declared is not None:
        try:
            length = int(declared)
        except ValueError:
            raise BadContentLength(f"not an integer: {declared!r}") from None
        if length < 0 or length != len(body):
            raise BadContentLength(f"declared {length}, got {len(body)} bytes")
    msg.body = body
    return msg


def _parse_start_line(line: str) -> SipMessage:
    if line.startswith("SIP/2.0 "):
        parts = line.split(" ", 2)
        if len(parts) < 3 or len(parts[1]) != 3 or not parts[1].isdigit():
            raise MalformedStartLine(f"bad status line: {line!r}")
        return SipMessage(kind="response", status_code=int(parts[1]))
    parts = line.split(" ")
    if len(parts) != 3 or parts[2] != "SIP/2.0":
        raise MalformedStartLine(f"bad request line: {line!r}")
    method, uri = parts[0], parts[1]
    if not method or not method.isupper() or not method.isalpha():
        raise MalformedStartLine(f"bad method token: {method!r}")
    return SipMessage(kind="request", method=method, request_uri=uri)


def serialize_message(msg: SipMessage) -> bytes:
    """Emit the CRLF-delimited wire form; Content-Length is recomputed.

    An existing Content-Length header is rewritten in place so that header
    order survives a parse/serialize round trip.
    """
    if msg.is_request:
        start = f"{msg.method} {msg.request_uri} SIP/2.0"
    else:
        reason = REASON_PHRASES.get(msg.status_code or 0, "Unknown")
        start = f"SIP/2.0 {msg.status_code} {reason}"

    msg.set_header("Content-Length", str(len(msg.body)))
    lines = [start]
    lines.extend(f"{name}: {value}" for name, value in msg.headers)
    lines.append("")
    lines.append("")
    return "\r\n".join(lines).encode("latin-1") + msg.body


def make_request(
    method: str,
    uri: str,
    *,
    from_uri: str,
    to_uri: str,
    call_id: str,
    cseq: int,
    via_host: str,
    via_port: int,
    branch: str,
    contact: str | None = None,
    expires: int | None = None,
    max_forwards: int = 70,
    body: bytes = b"",
) -> SipMessage:
    """Build a request carrying the mandatory header set."""
    headers: list[tuple[str, str]] = [
        ("Via", f"SIP/2.0/UDP {via_host}:{via_port};branch={branch}"),
        ("Max-Forwards", str(max_forwards)),
        ("From", f"<{from_uri}>;tag={generate_tag()}"),
        ("To", f"<{to_uri}>"),
        ("Call-ID", call_id),
        ("CSeq", f"{cseq} {method}"),
    ]
    if contact is not None:
        headers.append(("Contact", f"<{contact}>"))
    if expires is not None:
        headers.append(("Expires", str(expires)))
    headers.append(("Content-Length", str(len(body))))
    return SipMessage(kind="request", method=method, request_uri=uri,
                      headers=headers, body=body)


def make_response(
    request: SipMessage,
    status_code: int,
    *,
    to_tag: str | None = None,
    contact: str | None = None,
    extra_headers: list[tuple[str, str]] | None = None,
    body: bytes = b"",
) -> SipMessage:
    """Build a response echoing the request's Via stack, From/To/Call-ID/CSeq.

    RFC 3261 section 8.2.6.2: Via values are copied in order; a To tag is
    added for non-100 responses when the request had none.
    """
    headers: list[tuple[str, str]] = [("Via", v) for v in request.header_values("Via")]
    from_value = request.header("From")
    if from_value is not None:
        headers.append(("From", from_value))
    to_value = request.header("To")
    if to_value is not None:
        if status_code != 100 and to_tag and ";tag=" not in to_value:
            to_value = f"{to_value};tag={to_tag}"
        headers.append(("To", to_value))
    for name in ("Call-ID", "CSeq"):
        value = request.header(name)
        if value is not None:
            headers.append((name, value))
    if contact is not None:
        headers.append(("Contact", f"<{contact}>"))
    if extra_headers:
        headers.extend(extra_headers)
    headers.append(("Content-Length", str(len(body))))
    return SipMessage(kind="response", status_code=status_code,
                      headers=headers, body=body)
