"""DNS wire codec: golden query vector, round trips, truncation, rcodes."""

import random
import struct

import pytest

from voipbed.enumdns import wire
from voipbed.enumdns.naptr import NaptrRecord

# Hand-encoded NAPTR query for "1.e164.arpa", txid 0x1234, all flags clear:
#   header: id=0x1234 flags=0x0000 qd=1 an=0 ns=0 ar=0
#   qname:  01 '1'  04 'e164'  04 'arpa'  00
#   qtype=35 (NAPTR), qclass=1 (IN)
GOLDEN_QUERY = bytes.fromhex(
    "12340000000100000000000001310465313634046172706100" "0023" "0001"
)


def test_encode_query_matches_golden_vector():
    raw = wire.encode_query("1.e164.arpa", txid=0x1234)
    assert raw == GOLDEN_QUERY
    assert len(raw) == 29
    assert raw[-4:] == b"\x00\x23\x00\x01"  # QTYPE=0x0023, QCLASS=0x0001


def test_query_decode_recovers_question():
    raw = wire.encode_query("3.0.0.2.e164.test", txid=7)
    msg = wire.decode_message(raw)
    assert not msg.is_response
    assert msg.txid == 7
    assert msg.qname == "3.0.0.2.e164.test"
    assert msg.qtype == wire.QTYPE_NAPTR


def test_query_roundtrip_random_domains():
    rng = random.Random(5150)
    for _ in range(200):
        labels = [
            "".join(rng.choice("abcdefghijklmnopqrstuvwxyz0123456789")
                    for _ in range(rng.randint(1, 20)))
            for _ in range(rng.randint(1, 8))
        ]
        domain = ".".join(labels)
        if len(domain) > 253:
            continue
        txid = rng.randint(0, 0xFFFF)
        msg = wire.decode_message(wire.encode_query(domain, txid))
        assert msg.qname == domain
        assert msg.txid == txid


def _naptr(regexp="!^.*$!sip:2003@gw.example!", order=10, pref=100, ttl=60):
    return NaptrRecord(order=order, preference=pref, flags="u",
                       service="E2U+sip", regexp=regexp, ttl=ttl)


def test_response_roundtrip_with_naptr_answers():
    query = wire.decode_message(wire.encode_query("3.0.0.2.e164.test", txid=42))
    records = [_naptr(), _naptr(regexp="!^.*$!sip:alt@gw!", order=20, pref=5)]
    raw = wire.encode_response(query, wire.RCODE_NOERROR,
                               [("3.0.0.2.e164.test", r) for r in records])
    msg = wire.decode_response(raw)
    assert msg.is_response and msg.authoritative and not msg.truncated
    assert msg.txid == 42
    assert msg.rcode == wire.RCODE_NOERROR
    assert msg.answers == records


def test_response_rcode_mapping():
    query = wire.decode_message(wire.encode_query("9.e164.test", txid=1))
    raw = wire.encode_response(query, wire.RCODE_NXDOMAIN, [])
    msg = wire.decode_response(raw)
    assert msg.rcode == wire.RCODE_NXDOMAIN
    assert msg.answers == []


def test_oversized_response_truncates_with_tc_bit():
    query = wire.decode_message(wire.encode_query("1.e164.test", txid=2))
    big = [("1.e164.test", _naptr(regexp="!^.*$!sip:%s@gw.example!" % ("u" * 120),
                                  pref=i))
           for i in range(8)]
    raw = wire.encode_response(query, wire.RCODE_NOERROR, big)
    assert len(raw) <= wire.MAX_UDP_PAYLOAD
    msg = wire.decode_response(raw)
    assert msg.truncated
    assert len(msg.answers) < 8


def test_decode_name_compression_pointer():
    # compressed answer: owner name is a pointer back to the question name
    query = wire.encode_query("1.e164.test", txid=3)
    rdata = wire.encode_naptr_rdata(_naptr())
    answer = (struct.pack("!H", 0xC000 | 12)  # pointer to offset 12 (qname)
              + struct.pack("!HHIH", wire.QTYPE_NAPTR, wire.QCLASS_IN, 60, len(rdata))
              + rdata)
    header = struct.pack("!HHHHHH", 3, 0x8400, 1, 1, 0, 0)
    raw = header + query[12:] + answer
    msg = wire.decode_response(raw)
    assert msg.answers == [_naptr()]


def test_truncated_packet_errors():
    raw = wire.encode_query("1.e164.test", txid=9)
    with pytest.raises(wire.TruncatedPacket):
        wire.decode_message(raw[:8])
    with pytest.raises(wire.TruncatedPacket):
        wire.decode_message(raw[:-3])


def test_pointer_loop_rejected():
    # name at offset 12 points at itself
    header = struct.pack("!HHHHHH", 1, 0x0000, 1, 0, 0, 0)
    raw = header + struct.pack("!H", 0xC00C) + struct.pack("!HH", 35, 1)
    with pytest.raises(wire.FormatError):
        wire.decode_message(raw)


def test_decode_response_requires_qr_bit():
    raw = wire.encode_query("1.e164.test", txid=4)
    with pytest.raises(wire.FormatError):
        wire.decode_response(raw)


def test_label_length_limits():
    with pytest.raises(wire.FormatError):
        wire.encode_name("x" * 64 + ".test")
    with pytest.raises(wire.FormatError):
        wire.encode_name(".".join(["abcdefgh"] * 32))
