"""Authoritative, non-recursive ENUM/DNS server over UDP.

Serves NAPTR lookups from an immutable zone, injecting the profile's
per-query processing delay before each response and shedding queries once
the modeled backlog bound is exceeded.  No caching, no recursion, no TCP.
"""

from __future__ import annotations

import asyncio

from voipbed.enumdns import wire
from voipbed.enumdns.zone import EnumZone
from voipbed.profiles import ENUM_PROFILE, ServerProfile, ServerStats
from voipbed.queueing import WorkQueue
from voipbed.udpnet import RateWindow, UdpService

QUERY_KIND = "QUERY"


class EnumServer:
    """serve_zone: answer NAPTR queries for one zone until stopped."""

    def __init__(
        self,
        zone: EnumZone,
        host: str = "127.0.0.1",
        port: int = 0,
        profile: ServerProfile = ENUM_PROFILE,
    ) -> None:
        self.zone = zone
        self.profile = profile
        self.stats = ServerStats(name="enum")
        self.served_queries = 0
        self.queue = WorkQueue(capacity=profile.capacity, max_backlog=profile.queue_seconds)
        self._service = UdpService(host, port, self._on_datagram)
        self._rate = RateWindow()

    async def start(self) -> None:
        await self._service.start()

    async def stop(self) -> None:
        await self._service.stop()

    @property
    def address(self) -> tuple[str, int]:
        return self._service.address

    def _on_datagram(self, data: bytes, addr: tuple[str, int]) -> None:
        self.stats.received += 1
        if self.stats.downed:
            return
        try:
            query = wire.decode_message(data)
        except wire.DnsWireError:
            self.stats.malformed += 1
            return
        if query.is_response:
            self.stats.malformed += 1
            return

        loop = asyncio.get_running_loop()
        now = loop.time()
        if self.profile.hard_fail_at is not None:
            if self._rate.tick(now) >= self.profile.hard_fail_at:
                self.stats.downed = True
                return

        wait = self.queue.admit(now, self.queue.work_per_unit)
        if wait is None:
            self.stats.shed_signals += 1
            return
        self.stats.admitted += 1
        self.stats.peak_backlog = self.queue.peak_backlog

        response = self._answer(query)
        delay = wait + self.profile.delay_for(QUERY_KIND)
        loop.call_later(delay, self._respond, response, addr)

    def _respond(self, payload: bytes, addr: tuple[str, int]) -> None:
        self.served_queries += 1
        self._service.send(payload, addr)

    def _answer(self, query: wire.DnsMessage) -> bytes:
        if query.qtype != wire.QTYPE_NAPTR:
            return wire.encode_response(query, wire.RCODE_NOERROR, [])
        qname = query.qname.lower().strip(".")
        if not qname.endswith(self.zone.apex.lower().strip(".")):
            return wire.encode_response(query, wire.RCODE_REFUSED, [])
        records = self.zone.lookup_domain(qname)
        if records is None:
            return wire.encode_response(query, wire.RCODE_NXDOMAIN, [])
        answers = [(qname, record) for record in records]
        return wire.encode_response(query, wire.RCODE_NOERROR, answers)
