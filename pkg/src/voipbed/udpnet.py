"""Small asyncio UDP building blocks shared by the testbed servers."""

from __future__ import annotations

import asyncio
from collections import deque
from typing import Callable


class BindFailure(OSError):
    pass


class _Protocol(asyncio.DatagramProtocol):
    def __init__(self, on_datagram: Callable[[bytes, tuple[str, int]], None]) -> None:
        self._on_datagram = on_datagram

    def datagram_received(self, data: bytes, addr: tuple[str, int]) -> None:
        self._on_datagram(data, addr)


class UdpService:
    """One bound UDP socket dispatching datagrams to a callback.

    Port 0 binds an ephemeral port; ``address`` reports the real one.
    """

    def __init__(self, host: str, port: int,
                 on_datagram: Callable[[bytes, tuple[str, int]], None]) -> None:
        self._host = host
        self._port = port
        self._on_datagram = on_datagram
        self._transport: asyncio.DatagramTransport | None = None

    async def start(self) -> None:
        loop = asyncio.get_running_loop()
        try:
            transport, _ = await loop.create_datagram_endpoint(
                lambda: _Protocol(self._on_datagram),
                local_addr=(self._host, self._port),
            )
        except OSError as exc:
            raise BindFailure(f"cannot bind UDP {self._host}:{self._port}: {exc}") from exc
        self._transport = transport

    @property
    def address(self) -> tuple[str, int]:
        if self._transport is None:
            raise RuntimeError("service not started")
        host, port = self._transport.get_extra_info("sockname")[:2]
        return host, port

    def send(self, data: bytes, addr: tuple[str, int]) -> None:
        if self._transport is not None:
            self._transport.sendto(data, addr)

    async def stop(self) -> None:
        if self._transport is not None:
            self._transport.close()
            self._transport = None
            # let the close propagate through the loop
            await asyncio.sleep(0)


class RateWindow:
    """Sliding-window arrival rate estimate, for the hard-fail switch."""

    def __init__(self, window: float = 2.0) -> None:
        self._window = window
        self._times: deque[float] = deque()

    def tick(self, now: float) -> float:
        self._times.append(now)
        cutoff = now - self._window
        while self._times and self._times[0] < cutoff:
            self._times.popleft()
        return len(self._times) / self._window
