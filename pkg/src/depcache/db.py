"""Single-node serializable key-value backend with dependency tracking.

Update transactions run under per-key two-phase locking with locks taken in
sorted key order (the workloads read everything they write, so this never
deadlocks and never aborts).  A short global commit section assigns the
commit version, installs the new records, reports the commit to the history
sink, and enqueues one invalidation per written key, so observers receive
commits in version order.

Reads of committed state never block: records are immutable snapshots and a
read returns whatever record reference is currently installed.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

from .deps import (
    AccessTuple,
    DepEntry,
    VersionClock,
    access_recency,
    merge_full_deps,
    prune_lru,
)
from .monitor import HistoryEvent
from .sim import SimClock


class UnknownKeyError(KeyError):
    """An object id outside the configured universe: a misconfigured workload."""


class Invalidation(NamedTuple):
    key: int
    ver: int


@dataclass(frozen=True)
class ObjectRecord:
    """Committed state of one object; immutable, shared freely."""

    key: int
    value: object
    ver: int
    deps: tuple[DepEntry, ...]


class CommitReport(NamedTuple):
    version: int
    records: dict[int, ObjectRecord]


class LossyChannel:
    """Best-effort FIFO invalidation pipe from the backend to the cache.

    Each message is independently dropped with probability `drop_prob`;
    survivors become deliverable after a random delay drawn uniformly from
    `delay_ms`.  A message's effective ready time is clamped to the running
    maximum so delivery never overtakes enqueue order, unless `allow_reorder`
    is set.  `on_ready` (when given) is called with each survivor's ready
    tick so a scheduler can plan a drain.
    """

    def __init__(
        self,
        drop_prob: float,
        rng,
        clock,
        delay_ms: tuple[int, int] = (1, 10),
        allow_reorder: bool = False,
        on_ready: Callable[[int], None] | None = None,
    ) -> None:
        if not 0.0 <= drop_prob <= 1.0:
            raise ValueError("drop_prob must be in [0, 1]")
        lo, hi = delay_ms
        if lo < 0 or hi < lo:
            raise ValueError("delay_ms must satisfy 0 <= lo <= hi")
        self._drop_prob = drop_prob
        self._rng = rng
        self._clock = clock
        self._delay = (lo, hi)
        self._allow_reorder = allow_reorder
        self._on_ready = on_ready
        self._lock = threading.Lock()
        self._queue: deque[tuple[int, int, Invalidation]] = deque()
        self._seq = 0
        self._last_ready = 0
        self.enqueued = 0
        self.dropped = 0
        self.delivered = 0

    def send(self, inv: Invalidation) -> bool:
        """Enqueue one invalidation; returns False if it was dropped."""
        with self._lock:
            self.enqueued += 1
            if self._rng.random() < self._drop_prob:
                self.dropped += 1
                return False
            lo, hi = self._delay
            ready = self._clock.now() + self._rng.randint(lo, hi)
            if not self._allow_reorder and ready < self._last_ready:
                ready = self._last_ready
            self._last_ready = max(self._last_ready, ready)
            self._queue.append((ready, self._seq, inv))
            self._seq += 1
        if self._on_ready is not None:
            self._on_ready(ready)
        return True

    def drain(self, now: int) -> list[Invalidation]:
        """Messages whose ready time has passed, in delivery order."""
        out: list[Invalidation] = []
        with self._lock:
            if self._allow_reorder:
                keep: deque[tuple[int, int, Invalidation]] = deque()
                ready_now = []
                for item in self._queue:
                    if item[0] <= now:
                        ready_now.append(item)
                    else:
                        keep.append(item)
                self._queue = keep
                ready_now.sort(key=lambda item: (item[0], item[1]))
                out = [item[2] for item in ready_now]
            else:
                while self._queue and self._queue[0][0] <= now:
                    out.append(self._queue.popleft()[2])
            self.delivered += len(out)
        return out

    def pending(self) -> int:
        with self._lock:
            return len(self._queue)

    def stats(self) -> dict:
        with self._lock:
            return {
                "enqueued": self.enqueued,
                "dropped": self.dropped,
                "delivered": self.delivered,
                "pending": len(self._queue),
            }


def _dedupe(keys: Iterable[int]) -> list[int]:
    seen: set[int] = set()
    out: list[int] = []
    for key in keys:
        if key not in seen:
            seen.add(key)
            out.append(key)
    return out


class Database:
    """Versioned transactional store over a fixed object universe.

    Every object starts at version 0 with an empty dependency list.  On
    commit, each written object gets the fresh transaction version and a
    dependency list built from the full merge of the transaction's accesses,
    pruned to `dep_bound` by recency (``None`` means unbounded); an object's
    own pair is excluded from its own list since the record's version field
    already carries it.
    """

    def __init__(
        self,
        universe: int,
        dep_bound: int | None = 5,
        channel: LossyChannel | None = None,
        history_sink=None,
        clock=None,
        initial_value: object = 0,
    ) -> None:
        if universe <= 0:
            raise ValueError("universe must be positive")
        self.universe = universe
        self.dep_bound = dep_bound
        self.channel = channel
        self.history_sink = history_sink
        self.clock = clock if clock is not None else SimClock()
        self._records: dict[int, ObjectRecord] = {
            key: ObjectRecord(key, initial_value, 0, ()) for key in range(universe)
        }
        self._key_locks = [threading.Lock() for _ in range(universe)]
        self._commit_lock = threading.Lock()
        self._versions = VersionClock()
        self.commits = 0
        self.reads_served = 0

    @property
    def last_version(self) -> int:
        return self._versions.last

    def _check_key(self, key: int) -> None:
        if not 0 <= key < self.universe:
            raise UnknownKeyError(key)

    def read_entry(self, key: int) -> ObjectRecord:
        """Latest committed record for `key`; never blocks on writers."""
        self._check_key(key)
        self.reads_served += 1
        return self._records[key]

    def execute_update(
        self,
        txn_id: str,
        read_keys: Sequence[int],
        write_keys: Sequence[int],
        new_values: Mapping[int, object] | None = None,
    ) -> CommitReport:
        """Atomically read `read_keys` and rewrite `write_keys`.

        Values default to the assigned commit version when `new_values` does
        not name a key.  The commit is serial with respect to every other
        update (two-phase locking plus the commit section), and one
        invalidation per written key is enqueued in write order.
        """
        reads = _dedupe(read_keys)
        writes = _dedupe(write_keys)
        for key in (*reads, *writes):
            self._check_key(key)
        lock_order = sorted(set(reads) | set(writes))
        for key in lock_order:
            self._key_locks[key].acquire()
        try:
            read_tuples = [
                AccessTuple(key, self._records[key].ver, self._records[key].deps)
                for key in reads
            ]
            with self._commit_lock:
                accessed = [t.ver for t in read_tuples] + [
                    self._records[key].ver for key in writes
                ]
                version = self._versions.next(accessed)
                write_tuples = [
                    AccessTuple(key, version, self._records[key].deps)
                    for key in writes
                ]
                full = merge_full_deps(read_tuples, write_tuples)
                recency = access_recency(read_tuples, write_tuples)
                new_records: dict[int, ObjectRecord] = {}
                for key in writes:
                    value = version
                    if new_values is not None and key in new_values:
                        value = new_values[key]
                    deps = prune_lru(full, recency, self.dep_bound, exclude=key)
                    record = ObjectRecord(key, value, version, deps)
                    self._records[key] = record
                    new_records[key] = record
                self.commits += 1
                if self.history_sink is not None:
                    self.history_sink.record_event(
                        HistoryEvent(
                            txn_id=txn_id,
                            kind="update",
                            status="committed",
                            read_set=tuple((t.key, t.ver) for t in read_tuples),
                            write_set=tuple((key, version) for key in writes),
                            timestamp=self.clock.now(),
                        )
                    )
                if self.channel is not None:
                    for key in writes:
                        self.channel.send(Invalidation(key, version))
            return CommitReport(version, new_records)
        finally:
            for key in reversed(lock_order):
                self._key_locks[key].release()
