"""Logical time and the deterministic event scheduler.

One tick is one millisecond of simulated time.  The deterministic engine
drives every component from a single :class:`EventLoop`; the free-running
engine swaps in a :class:`WallClock` and real threads instead.
"""

from __future__ import annotations

import heapq
import time
from typing import Any, Callable


class SimClock:
    """Manually advanced millisecond clock; never moves backwards."""

    def __init__(self, start: int = 0) -> None:
        self._now = start

    def now(self) -> int:
        return self._now

    def advance_to(self, tick: int) -> None:
        if tick < self._now:
            raise ValueError(f"clock cannot move backwards ({tick} < {self._now})")
        self._now = tick


class WallClock:
    """Milliseconds since construction, for the free-running engine."""

    def __init__(self) -> None:
        self._t0 = time.monotonic()

    def now(self) -> int:
        return int((time.monotonic() - self._t0) * 1000)


class EventLoop:
    """Deterministic scheduler: callbacks fire in (tick, scheduling order)."""

    def __init__(self, clock: SimClock | None = None) -> None:
        self.clock = clock if clock is not None else SimClock()
        self._heap: list[tuple[int, int, Callable[..., Any], tuple]] = []
        self._seq = 0

    def schedule(self, tick: int, fn: Callable[..., Any], *args: Any) -> None:
        if tick < self.clock.now():
            raise ValueError("cannot schedule in the past")
        heapq.heappush(self._heap, (tick, self._seq, fn, args))
        self._seq += 1

    def run_until(self, end: int) -> None:
        """Run every event with tick <= end, then settle the clock at end."""
        while self._heap and self._heap[0][0] <= end:
            tick, _, fn, args = heapq.heappop(self._heap)
            self.clock.advance_to(tick)
            fn(*args)
        self.clock.advance_to(end)

    def pending(self) -> int:
        return len(self._heap)
