"""ENUM resolver client: E.164 number in, SIP URI out.

Pipeline: number -> ENUM domain -> NAPTR/UDP query (with retries) ->
record selection -> regexp rewrite.  Every successful query appends a
latency sample to a thread-safe collector.
"""

from __future__ import annotations

import asyncio
import itertools
import threading

from voipbed.enumdns import wire
from voipbed.enumdns.e164 import DEFAULT_APEX, E164Number, e164_to_domain
from voipbed.enumdns.naptr import PatternMismatch, apply_naptr_regexp, select_naptr
from voipbed.udpnet import UdpService


class ResolveError(Exception):
    pass


class Nxdomain(ResolveError):
    pass


class NoViableRecord(ResolveError):
    pass


class ServFail(ResolveError):
    pass


class ResolveTimeout(ResolveError):
    pass


class IdMismatch(ResolveError):
    """Response transaction id does not echo the query's."""


def match_response(raw: bytes, expected_txid: int) -> wire.DnsMessage:
    """Decode ``raw`` and require the echoed transaction id."""
    msg = wire.decode_response(raw)
    if msg.txid != expected_txid:
        raise IdMismatch(f"expected 0x{expected_txid:04x}, got 0x{msg.txid:04x}")
    return msg


class LatencyCollector:
    """Append-only sample sink shared across execution contexts."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._samples: list[float] = []

    def add(self, seconds: float) -> None:
        with self._lock:
            self._samples.append(seconds)

    def samples(self) -> list[float]:
        with self._lock:
            return list(self._samples)

    def __len__(self) -> int:
        with self._lock:
            return len(self._samples)


class EnumResolver:
    """Reentrant NAPTR resolver against one authoritative server."""

    def __init__(
        self,
        server_addr: tuple[str, int],
        apex: str = DEFAULT_APEX,
        timeout: float = 2.0,
        retries: int = 2,
    ) -> None:
        self.server_addr = server_addr
        self.apex = apex
        self.timeout = timeout
        self.retries = retries
        self.latencies = LatencyCollector()
        self.id_mismatches = 0
        self._txid_iter = itertools.count(1)
        self._pending: dict[int, asyncio.Future[wire.DnsMessage]] = {}
        self._service = UdpService("127.0.0.1", 0, self._on_datagram)
        self._started = False

    async def start(self) -> None:
        if not self._started:
            await self._service.start()
            self._started = True

    async def close(self) -> None:
        if self._started:
            await self._service.stop()
            self._started = False

    def _on_datagram(self, data: bytes, addr: tuple[str, int]) -> None:
        try:
            msg = wire.decode_response(data)
        except wire.DnsWireError:
            return
        future = self._pending.pop(msg.txid, None)
        if future is None:
            # stale or forged id; a mismatch is ignored, not fatal
            self.id_mismatches += 1
            return
        if not future.done():
            future.set_result(msg)

    async def query(self, domain: str) -> wire.DnsMessage:
        """NAPTR query with per-attempt timeout and ``retries`` retries."""
        await self.start()
        loop = asyncio.get_running_loop()
        last_exc: ResolveError | None = None
        for _ in range(self.retries + 1):
            txid = next(self._txid_iter) & 0xFFFF
            future: asyncio.Future[wire.DnsMessage] = loop.create_future()
            self._pending[txid] = future
            sent_at = loop.time()
            self._service.send(wire.encode_query(domain, txid), self.server_addr)
            try:
                msg = await asyncio.wait_for(future, self.timeout)
            except asyncio.TimeoutError:
                self._pending.pop(txid, None)
                last_exc = ResolveTimeout(f"no answer for {domain!r} within {self.timeout}s")
                continue
            self.latencies.add(loop.time() - sent_at)
            if msg.rcode == wire.RCODE_NOERROR:
                return msg
            if msg.rcode == wire.RCODE_NXDOMAIN:
                raise Nxdomain(domain)
            raise ServFail(f"rcode {msg.rcode} for {domain!r}")
        raise last_exc or ResolveTimeout(domain)

    async def resolve(self, number: E164Number | str) -> str:
        """Full lookup: first viable E2U+sip record rewritten to a URI."""
        if isinstance(number, str):
            number = E164Number(number)
        domain = e164_to_domain(number, self.apex)
        msg = await self.query(domain)
        for record in select_naptr(msg.answers):
            try:
                return apply_naptr_regexp(record, number)
            except PatternMismatch:
                continue
        raise NoViableRecord(f"no usable NAPTR record for +{number.digits}")
