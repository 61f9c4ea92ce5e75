"""ENUM server + resolver over loopback UDP."""

import asyncio
import copy

import pytest

from voipbed.enumdns.e164 import E164Number
from voipbed.enumdns.naptr import NaptrRecord
from voipbed.enumdns.resolver import (
    EnumResolver,
    IdMismatch,
    NoViableRecord,
    Nxdomain,
    ResolveTimeout,
    match_response,
)
from voipbed.enumdns.server import EnumServer
from voipbed.enumdns.wire import encode_query, encode_response, decode_message
from voipbed.enumdns.zone import EnumZone, parse_zone_text
from voipbed.profiles import ENUM_PROFILE

APEX = "e164.test"


def make_zone():
    zone = EnumZone(apex=APEX)
    zone.add_uri("2003", "sip:2003@gw.example")
    zone.add_uri("111", "sip:111@ims.test")
    return zone


async def _with_service(zone, coro, profile=ENUM_PROFILE):
    server = EnumServer(zone, profile=profile)
    await server.start()
    resolver = EnumResolver(server.address, apex=APEX)
    try:
        return await coro(server, resolver)
    finally:
        await resolver.close()
        await server.stop()


def test_resolve_known_number():
    async def check(server, resolver):
        uri = await resolver.resolve("2003")
        assert uri == "sip:2003@gw.example"
        assert server.served_queries == 1
        assert len(resolver.latencies) == 1

    asyncio.run(_with_service(make_zone(), check))


def test_resolve_unknown_number_nxdomain():
    async def check(server, resolver):
        with pytest.raises(Nxdomain):
            await resolver.resolve("999")

    asyncio.run(_with_service(make_zone(), check))


def test_resolve_no_viable_record():
    zone = EnumZone(apex=APEX)
    zone.add("42", NaptrRecord(order=1, preference=1, service="E2U+h323",
                               regexp="!^.*$!h323:x!"))

    async def check(server, resolver):
        with pytest.raises(NoViableRecord):
            await resolver.resolve("42")

    asyncio.run(_with_service(zone, check))


def test_resolver_timeout_after_three_attempts():
    async def check():
        # no server listening on this address
        resolver = EnumResolver(("127.0.0.1", 1), apex=APEX,
                                timeout=0.05, retries=2)
        loop = asyncio.get_running_loop()
        start = loop.time()
        with pytest.raises(ResolveTimeout):
            await resolver.resolve("2003")
        elapsed = loop.time() - start
        assert elapsed >= 3 * 0.05 - 0.01  # three attempts before giving up
        await resolver.close()

    asyncio.run(check())


def test_server_injects_processing_delay():
    """An idle loopback lookup takes at least the profile's 0.3454 ms."""

    async def check(server, resolver):
        for _ in range(5):
            await resolver.resolve("2003")
        samples = resolver.latencies.samples()
        assert min(samples) >= 0.3454 / 1000.0

    asyncio.run(_with_service(make_zone(), check))


def test_zone_contents_unchanged_by_query_load():
    zone = make_zone()
    before = copy.deepcopy(zone.entries)

    async def check(server, resolver):
        for _ in range(50):
            await resolver.resolve("2003")
            with pytest.raises(Nxdomain):
                await resolver.resolve("404404")

    asyncio.run(_with_service(zone, check))
    assert zone.entries == before


def test_id_mismatch_detection():
    query = decode_message(encode_query("1.e164.test", txid=5))
    raw = encode_response(query, 0, [])
    assert match_response(raw, 5).txid == 5
    with pytest.raises(IdMismatch):
        match_response(raw, 6)


def test_mismatched_response_ignored_not_fatal():
    async def check(server, resolver):
        await resolver.start()
        # forge an unsolicited response at the resolver's socket
        query = decode_message(encode_query("1.e164.test", txid=0x7777))
        resolver._service.send(encode_response(query, 0, []),
                               resolver._service.address)
        await asyncio.sleep(0.05)
        assert resolver.id_mismatches == 1
        assert await resolver.resolve("111") == "sip:111@ims.test"

    asyncio.run(_with_service(make_zone(), check))


def test_end_to_end_from_zone_file(tmp_path):
    text = '3.0.0.2.e164.test NAPTR 10 10 "u" "E2U+sip" "!^.*$!sip:2003@gw.example!" .'
    zone = parse_zone_text(text, apex=APEX)

    async def check(server, resolver):
        assert await resolver.resolve(E164Number("2003")) == "sip:2003@gw.example"

    asyncio.run(_with_service(zone, check))


def test_non_naptr_query_gets_empty_noerror():
    async def check(server, resolver):
        loop = asyncio.get_running_loop()
        received = loop.create_future()

        class Probe(asyncio.DatagramProtocol):
            def connection_made(self, transport):
                self.transport = transport

            def datagram_received(self, data, addr):
                if not received.done():
                    received.set_result(data)

        transport, probe = await loop.create_datagram_endpoint(
            Probe, local_addr=("127.0.0.1", 0))
        try:
            transport.sendto(encode_query("3.0.0.2.e164.test", txid=1, qtype=1),
                             server.address)
            raw = await asyncio.wait_for(received, 2.0)
            msg = decode_message(raw)
            assert msg.rcode == 0 and msg.answers == []
        finally:
            transport.close()

    asyncio.run(_with_service(make_zone(), check))
