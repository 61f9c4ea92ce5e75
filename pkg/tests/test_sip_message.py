"""SIP parser/serializer: field extraction, round trips, rejection cases."""

import pytest

from voipbed.sip.message import (
    BadContentLength,
    MalformedStartLine,
    MissingMandatoryHeader,
    SipMessage,
    make_request,
    make_response,
    parse_message,
    serialize_message,
    uri_host_port,
    uri_user,
    via_params,
    via_sent_by,
)

BASE_HEADERS = (
    b"Via: SIP/2.0/UDP 10.0.0.5:5062;branch=z9hG4bKabc123\r\n"
    b"From: <sip:alice@ims.test>;tag=77\r\n"
    b"To: <sip:2003@gw.example>\r\n"
    b"Call-ID: deadbeef@10.0.0.5\r\n"
    b"CSeq: 1 INVITE\r\n"
)


def test_parse_invite_request():
    raw = b"INVITE sip:2003@gw.example SIP/2.0\r\n" + BASE_HEADERS + b"\r\n"
    msg = parse_message(raw)
    assert msg.is_request
    assert msg.method == "INVITE"
    assert msg.request_uri == "sip:2003@gw.example"
    assert msg.call_id() == "deadbeef@10.0.0.5"
    assert msg.branch() == "z9hG4bKabc123"
    assert msg.cseq() == (1, "INVITE")


def test_parse_180_response():
    raw = b"SIP/2.0 180 Ringing\r\n" + BASE_HEADERS + b"\r\n"
    msg = parse_message(raw)
    assert not msg.is_request
    assert msg.status_code == 180
    assert msg.signal_kind() == "180"


def test_parse_garbage_start_line():
    with pytest.raises(MalformedStartLine):
        parse_message(b"GARBAGE\r\n" + BASE_HEADERS + b"\r\n")


def test_parse_rejects_folded_headers():
    raw = (b"INVITE sip:x@y SIP/2.0\r\n" + BASE_HEADERS
           + b"Subject: one\r\n two\r\n\r\n")
    with pytest.raises(MalformedStartLine):
        parse_message(raw)


@pytest.mark.parametrize("missing", ["Via", "From", "To", "Call-ID", "CSeq"])
def test_parse_missing_mandatory_header(missing):
    lines = [l for l in BASE_HEADERS.split(b"\r\n")
             if l and not l.lower().startswith(missing.lower().encode())]
    raw = b"INVITE sip:x@y SIP/2.0\r\n" + b"\r\n".join(lines) + b"\r\n\r\n"
    with pytest.raises(MissingMandatoryHeader):
        parse_message(raw)


def test_parse_bad_content_length():
    raw = (b"INVITE sip:x@y SIP/2.0\r\n" + BASE_HEADERS
           + b"Content-Length: 99\r\n\r\nhi")
    with pytest.raises(BadContentLength):
        parse_message(raw)
    raw = (b"INVITE sip:x@y SIP/2.0\r\n" + BASE_HEADERS
           + b"Content-Length: nope\r\n\r\n")
    with pytest.raises(BadContentLength):
        parse_message(raw)


def test_parse_without_terminator():
    with pytest.raises(MalformedStartLine):
        parse_message(b"INVITE sip:x@y SIP/2.0\r\nVia: v")


def test_serialize_status_line_and_content_length():
    msg = SipMessage(kind="response", status_code=180, headers=[
        ("Via", "SIP/2.0/UDP h:1;branch=z9hG4bKx"), ("From", "<sip:a@b>"),
        ("To", "<sip:c@d>"), ("Call-ID", "x@y"), ("CSeq", "1 INVITE"),
    ])
    raw = serialize_message(msg)
    assert raw.startswith(b"SIP/2.0 180 Ringing\r\n")

    req = SipMessage(kind="request", method="INVITE", request_uri="sip:x@y",
                     headers=[("Via", "SIP/2.0/UDP h:1;branch=z9hG4bKy"),
                              ("From", "f"), ("To", "t"), ("Call-ID", "i"),
                              ("CSeq", "1 INVITE")],
                     body=b"abcd")
    raw = serialize_message(req)
    assert b"Content-Length: 4\r\n" in raw
    assert raw.endswith(b"\r\n\r\nabcd")


def _message_corpus():
    """50+ structurally distinct messages built from the type constructors."""
    corpus = []
    bodies = [b"", b"x", b"v=0\r\no=- 1 1 IN IP4 10.0.0.1\r\n"]
    for i, method in enumerate(["REGISTER", "INVITE", "ACK", "BYE", "CANCEL"]):
        for j, body in enumerate(bodies):
            msg = make_request(
                method, f"sip:user{i}@ims.test",
                from_uri=f"sip:caller{i}@ims.test", to_uri=f"sip:user{i}@ims.test",
                call_id=f"call-{i}-{j}@test", cseq=i + 1,
                via_host="127.0.0.1", via_port=5060 + i,
                branch=f"z9hG4bKcorpus{i}{j}", body=body,
                contact=f"sip:caller{i}@127.0.0.1:5070" if method == "REGISTER" else None,
                expires=3600 if method == "REGISTER" else None,
            )
            corpus.append(msg)
    invite = corpus[3]
    for code in (100, 180, 200, 404, 486, 500):
        for j, body in enumerate(bodies):
            corpus.append(make_response(invite, code, to_tag=f"t{code}{j}",
                                        body=body))
    register = corpus[0]
    for code in (200, 404, 500):
        corpus.append(make_response(register, code,
                                    contact="sip:caller0@127.0.0.1:5070"))
    proxied = make_request(
        "INVITE", "sip:fxs@gw.test", from_uri="sip:a@ims.test",
        to_uri="sip:fxs@gw.test", call_id="proxied@test", cseq=9,
        via_host="10.0.0.1", via_port=5060, branch="z9hG4bKleg1",
    )
    proxied.push_via("SIP/2.0/UDP 10.0.0.2:5060;branch=z9hG4bKleg2")
    proxied.push_via("SIP/2.0/UDP 10.0.0.3:5060;branch=z9hG4bKleg3")
    corpus.append(proxied)
    for code in (100, 180, 200, 404, 486, 500):
        corpus.append(make_response(proxied, code, to_tag=f"p{code}"))
    for code in (180, 200):
        resp = make_response(proxied, code, to_tag=f"q{code}")
        resp.headers.append(("X-Queue-Depth", str(code)))
        corpus.append(resp)
    for k in range(5):
        msg = make_request(
            "INVITE", f"sip:{2000 + k}@ims.test",
            from_uri="sip:load@ims.test", to_uri=f"sip:{2000 + k}@ims.test",
            call_id=f"extra-{k}@test", cseq=k + 1,
            via_host="10.0.0.9", via_port=6000 + k, branch=f"z9hG4bKextra{k}",
        )
        msg.headers.append(("X-Custom", f"value {k}"))
        msg.headers.append(("Subject", "load test"))
        corpus.append(msg)
    return corpus


def test_corpus_is_large_enough():
    assert len(_message_corpus()) >= 50


def test_round_trip_parse_serialize_corpus():
    for msg in _message_corpus():
        raw = serialize_message(msg)
        parsed = parse_message(raw)
        assert parsed.kind == msg.kind
        assert parsed.method == msg.method
        assert parsed.status_code == msg.status_code
        assert parsed.request_uri == msg.request_uri
        assert parsed.headers == msg.headers
        assert parsed.body == msg.body
        # byte-level stability: serialize(parse(x)) == x
        assert serialize_message(parsed) == raw


def test_unknown_headers_preserved_verbatim():
    raw = (b"INVITE sip:x@y SIP/2.0\r\n" + BASE_HEADERS
           + b"X-Weird-Header: keep me; intact=1\r\n\r\n")
    msg = parse_message(raw)
    assert ("X-Weird-Header", "keep me; intact=1") in msg.headers


def test_response_echoes_via_stack_in_order():
    req = parse_message(
        b"INVITE sip:x@y SIP/2.0\r\n"
        b"Via: SIP/2.0/UDP proxy:5060;branch=z9hG4bKp\r\n"
        + BASE_HEADERS + b"\r\n")
    resp = make_response(req, 180, to_tag="beef")
    vias = resp.header_values("Via")
    assert vias == ["SIP/2.0/UDP proxy:5060;branch=z9hG4bKp",
                    "SIP/2.0/UDP 10.0.0.5:5062;branch=z9hG4bKabc123"]
    assert ";tag=beef" in (resp.header("To") or "")


def test_uri_helpers():
    assert uri_user("sip:2003@gw.example") == "2003"
    assert uri_host_port("sip:2003@gw.example:5080") == ("gw.example", 5080)
    assert uri_host_port("sip:gw.example") == ("gw.example", 5060)
    assert uri_host_port("sip:a@b;transport=udp") == ("b", 5060)
    assert via_sent_by("SIP/2.0/UDP 1.2.3.4:5061;branch=z9hG4bKq") == ("1.2.3.4", 5061)
    assert via_params("SIP/2.0/UDP h;branch=z9hG4bKq;rport") == {
        "branch": "z9hG4bKq", "rport": ""}
