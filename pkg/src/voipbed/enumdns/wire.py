"""DNS wire codec for NAPTR queries and responses.

RFC 1035 message framing over UDP with RFC 3403 NAPTR RDATA: order and
preference as u16, then length-prefixed character-strings for flags,
services and regexp, then an uncompressed replacement domain.  Name
compression is accepted on decode and never emitted on encode.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from voipbed.enumdns.naptr import NaptrRecord

QTYPE_NAPTR = 35
QCLASS_IN = 1

RCODE_NOERROR = 0
RCODE_FORMERR = 1
RCODE_SERVFAIL = 2
RCODE_NXDOMAIN = 3
RCODE_REFUSED = 5

MAX_UDP_PAYLOAD = 512  # classic DNS/UDP bound; TC is set beyond it

_HEADER = struct.Struct("!HHHHHH")


class DnsWireError(ValueError):
    pass


class TruncatedPacket(DnsWireError):
    pass


class FormatError(DnsWireError):
    pass


@dataclass
class DnsMessage:
    """Decoded message view: header fields, question and NAPTR answers."""

    txid: int
    is_response: bool
    rcode: int = RCODE_NOERROR
    authoritative: bool = False
    truncated: bool = False
    qname: str = ""
    qtype: int = QTYPE_NAPTR
    answers: list[NaptrRecord] = field(default_factory=list)


def encode_name(name: str) -> bytes:
    """Uncompressed wire form of a domain name."""
    name = name.strip(".")
    out = bytearray()
    if name:
        for label in name.split("."):
            raw = label.encode("ascii")
            if not 1 <= len(raw) <= 63:
                raise FormatError(f"bad label length in {name!r}")
            out.append(len(raw))
            out += raw
    out.append(0)
    if len(out) > 255:
        raise FormatError(f"name too long: {name!r}")
    return bytes(out)


def decode_name(raw: bytes, offset: int) -> tuple[str, int]:
    """Decode a possibly-compressed name; returns (name, next offset)."""
    labels: list[str] = []
    jumps = 0
    next_offset: int | None = None
    pos = offset
    while True:
        if pos >= len(raw):
            raise TruncatedPacket("name runs past end of packet")
        length = raw[pos]
        if length & 0xC0 == 0xC0:  # compression pointer
            if pos + 1 >= len(raw):
                raise TruncatedPacket("dangling compression pointer")
            target = ((length & 0x3F) << 8) | raw[pos + 1]
            if next_offset is None:
                next_offset = pos + 2
            jumps += 1
            if jumps > 32:
                raise FormatError("compression pointer loop")
            if target >= pos:
                raise FormatError("forward compression pointer")
            pos = target
            continue
        if length & 0xC0:
            raise FormatError(f"reserved label type 0x{length:02x}")
        pos += 1
        if length == 0:
            break
        if pos + length > len(raw):
            raise TruncatedPacket("label runs past end of packet")
        labels.append(raw[pos : pos + length].decode("ascii", errors="replace"))
        pos += length
    return ".".join(labels), next_offset if next_offset is not None else pos


def _encode_char_string(text: str) -> bytes:
    raw = text.encode("ascii")
    if len(raw) > 255:
        raise FormatError("character-string longer than 255 bytes")
    return bytes([len(raw)]) + raw


def _decode_char_string(raw: bytes, offset: int) -> tuple[str, int]:
    if offset >= len(raw):
        raise TruncatedPacket("character-string length byte missing")
    length = raw[offset]
    end = offset + 1 + length
    if end > len(raw):
        raise TruncatedPacket("character-string runs past end of packet")
    return raw[offset + 1 : end].decode("ascii", errors="replace"), end


def encode_naptr_rdata(record: NaptrRecord) -> bytes:
    out = struct.pack("!HH", record.order, record.preference)
    out += _encode_char_string(record.flags)
    out += _encode_char_string(record.service)
    out += _encode_char_string(record.regexp)
    out += encode_name(record.replacement if record.replacement != "." else "")
    return out


def decode_naptr_rdata(raw: bytes, offset: int, ttl: int) -> tuple[NaptrRecord, int]:
    if offset + 4 > len(raw):
        raise TruncatedPacket("NAPTR fixed fields missing")
    order, preference = struct.unpack_from("!HH", raw, offset)
    pos = offset + 4
    flags, pos = _decode_char_string(raw, pos)
    service, pos = _decode_char_string(raw, pos)
    regexp, pos = _decode_char_string(raw, pos)
    replacement, pos = decode_name(raw, pos)
    record = NaptrRecord(order=order, preference=preference, flags=flags,
                         service=service, regexp=regexp,
                         replacement=replacement or ".", ttl=ttl)
    return record, pos


def encode_query(domain: str, txid: int, qtype: int = QTYPE_NAPTR) -> bytes:
    """One-question query datagram; flags all clear (authoritative lookup)."""
    header = _HEADER.pack(txid, 0x0000, 1, 0, 0, 0)
    return header + encode_name(domain) + struct.pack("!HH", qtype, QCLASS_IN)


def encode_response(
    query: DnsMessage,
    rcode: int,
    answers: list[tuple[str, NaptrRecord]] | None = None,
    max_size: int = MAX_UDP_PAYLOAD,
) -> bytes:
    """Authoritative response to ``query``; answers dropped + TC when oversized."""
    answers = answers or []
    question = encode_name(query.qname) + struct.pack("!HH", query.qtype, QCLASS_IN)

    truncated = False
    while True:
        body = bytearray()
        for owner, record in answers:
            rdata = encode_naptr_rdata(record)
            body += encode_name(owner)
            body += struct.pack("!HHIH", QTYPE_NAPTR, QCLASS_IN, record.ttl, len(rdata))
            body += rdata
        if _HEADER.size + len(question) + len(body) > max_size and answers:
            answers = answers[:-1]
            truncated = True
            continue
        flags = 0x8000 | 0x0400 | (rcode & 0x0F)  # QR | AA | RCODE
        if truncated:
            flags |= 0x0200  # TC
        header = _HEADER.pack(query.txid, flags, 1, len(answers), 0, 0)
        return bytes(header + question + body)


def decode_message(raw: bytes) -> DnsMessage:
    """Decode a datagram (query or response) down to its NAPTR answers."""
    if len(raw) < _HEADER.size:
        raise TruncatedPacket(f"datagram of {len(raw)} bytes has no full header")
    txid, flags, qdcount, ancount, _, _ = _HEADER.unpack_from(raw, 0)
    msg = DnsMessage(
        txid=txid,
        is_response=bool(flags & 0x8000),
        rcode=flags & 0x0F,
        authoritative=bool(flags & 0x0400),
        truncated=bool(flags & 0x0200),
    )
    if qdcount > 1:
        raise FormatError(f"multi-question message ({qdcount})")
    pos = _HEADER.size
    if qdcount == 1:
        msg.qname, pos = decode_name(raw, pos)
        if pos + 4 > len(raw):
            raise TruncatedPacket("question fixed fields missing")
        msg.qtype, qclass = struct.unpack_from("!HH", raw, pos)
        pos += 4
        if qclass != QCLASS_IN:
            raise FormatError(f"unsupported query class {qclass}")
    for _ in range(ancount):
        _, pos = decode_name(raw, pos)
        if pos + 10 > len(raw):
            raise TruncatedPacket("answer fixed fields missing")
        rtype, rclass, ttl, rdlength = struct.unpack_from("!HHIH", raw, pos)
        pos += 10
        if pos + rdlength > len(raw):
            raise TruncatedPacket("RDATA runs past end of packet")
        if rtype == QTYPE_NAPTR:
            record, _ = decode_naptr_rdata(raw, pos, ttl)
            msg.answers.append(record)
        pos += rdlength
    return msg


def decode_response(raw: bytes) -> DnsMessage:
    """Decode and require a response (QR bit set)."""
    msg = decode_message(raw)
    if not msg.is_response:
        raise FormatError("expected a response, got a query")
    return msg
