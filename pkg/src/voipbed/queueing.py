"""Bounded work queue modeling single-server capacity and load shedding.

The queue is kept in virtual time: each admitted signal adds its work (in
seconds of server busy time) to a backlog horizon that drains in real time.
A signal arriving when its work no longer fits inside the backlog bound is
shed, which is how a server past its sustainable rate becomes visible to
clients (silence, then retransmissions and timeouts).

The caller decides how much work a signal carries.  Call-stateful servers
put the whole call's share (1/capacity) on the INVITE, because the setup
request dominates processing while later signals ride on state that is
already established; that keeps the sustainable call rate equal to the
configured capacity without serializing the (much larger) pipeline delays.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class WorkQueue:
    """FIFO work accounting with a backlog bound in seconds.

    ``max_backlog`` of 1.0 holds one second of work at capacity, i.e. a
    queue depth of ``capacity`` call-equivalents.
    """

    capacity: float  # sustainable work units (calls or queries) per second
    max_backlog: float = 1.0

    _busy_until: float = field(default=0.0, repr=False)
    admitted: int = 0
    shed: int = 0
    peak_backlog: float = 0.0

    def __post_init__(self) -> None:
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if self.max_backlog <= 0:
            raise ValueError("max_backlog must be positive")

    @property
    def work_per_unit(self) -> float:
        return 1.0 / self.capacity

    def backlog(self, now: float) -> float:
        return max(0.0, self._busy_until - now)

    def admit(self, now: float, work: float = 0.0) -> float | None:
        """Try to enqueue ``work`` seconds at time ``now``.

        Returns the queueing wait in seconds, or None when the signal must
        be shed because the backlog bound would be exceeded.
        """
        wait = self.backlog(now)
        if wait + work > self.max_backlog:
            self.shed += 1
            return None
        self._busy_until = max(self._busy_until, now) + work
        self.admitted += 1
        if wait > self.peak_backlog:
            self.peak_backlog = wait
        return wait
