"""Read-only transactional cache with local inconsistency detection.

The cache serves hits without contacting the backend and fills misses with a
single backend read.  In checked mode it keeps, per open transaction, every
answered read together with the dependency list that arrived with it; each
incoming read is cross-checked against that record in both directions before
it is answered:

* stale_current: the incoming read's version is older than a version some
  earlier read's dependency list demands for that key;
* stale_prior: an earlier answered read is older than a version the incoming
  read's dependency list demands.

On a violation the configured strategy decides between aborting, aborting
plus evicting the too-old entry, or (for a repairable stale_current) retrying
the read through the backend once.

TTL mode and unaware mode skip all checking; TTL mode additionally treats
entries past their lifetime as misses.  Every mode reports completed
transactions to the history sink so the monitor can grade them.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .db import Database, Invalidation, ObjectRecord
from .deps import AccessTuple
from .monitor import HistoryEvent
from .sim import SimClock


class Strategy(enum.Enum):
    ABORT = "abort"
    EVICT = "evict"
    RETRY = "retry"


class CacheMode(enum.Enum):
    TCACHE = "tcache"  # dependency-checked transactional mode
    TTL = "ttl"  # expiry-only baseline, no checks
    UNAWARE = "unaware"  # plain invalidation-driven cache, no checks


class ViolationKind(enum.Enum):
    STALE_CURRENT = "stale_current"
    STALE_PRIOR = "stale_prior"


class Violation(NamedTuple):
    kind: ViolationKind
    key: int
    required_ver: int
    seen_ver: int


def check_consistency(
    prior_reads: Sequence[AccessTuple], curr: AccessTuple
) -> Violation | None:
    """Cross-check an incoming read against every answered read.

    stale_current is checked first: it is the locally repairable case (a
    fresh backend read can satisfy it), so strategies that retry get to keep
    the transaction alive.  Pairwise scan, O(k^2) in the dependency bound and
    independent of the store size.
    """
    required: int | None = None
    for prior in prior_reads:
        for dep in prior.deps:
            if dep.key == curr.key and dep.ver > curr.ver:
                if required is None or dep.ver > required:
                    required = dep.ver
    if required is not None:
        return Violation(ViolationKind.STALE_CURRENT, curr.key, required, curr.ver)
    for dep in curr.deps:
        for prior in prior_reads:
            if prior.key == dep.key and dep.ver > prior.ver:
                return Violation(ViolationKind.STALE_PRIOR, dep.key, dep.ver, prior.ver)
    return None


@dataclass(frozen=True)
class CacheEntry:
    record: ObjectRecord
    inserted_at: int


@dataclass(frozen=True)
class ReadResult:
    ok: bool
    value: object = None
    version: int | None = None
    served_from: str | None = None  # "hit" | "miss" | "retry_read_through"
    abort_reason: str | None = None


@dataclass
class _TxnState:
    reads: list[AccessTuple] = field(default_factory=list)
    values: dict[int, object] = field(default_factory=dict)
    aborted: bool = False


class TransactionalCache:
    """Single cache server in front of one backend database.

    There is no capacity eviction: the cache is sized to hold the whole
    universe, and entries leave only for a direct reason (invalidation,
    violation, expiry).  Linearizable per key and per transaction record; the
    deterministic engine calls it from one thread, the free-running engine
    from many.
    """

    def __init__(
        self,
        db: Database,
        mode: CacheMode = CacheMode.TCACHE,
        strategy: Strategy = Strategy.ABORT,
        ttl_ms: int | None = None,
        history_sink=None,
        clock=None,
    ) -> None:
        if mode is CacheMode.TTL and ttl_ms is None:
            raise ValueError("ttl mode needs a ttl_ms value")
        self.db = db
        self.mode = mode
        self.strategy = strategy
        self.ttl_ms = ttl_ms
        self.history_sink = history_sink
        self.clock = clock if clock is not None else db.clock
        self._lock = threading.RLock()
        self._entries: dict[int, CacheEntry] = {}
        self._txns: dict[str, _TxnState] = {}
        # largest invalidated version seen per key; fills below it are stale
        # by the time they land and are not installed
        self._inval_floor: dict[int, int] = {}
        self.hits = 0
        self.misses = 0
        self.aborts = 0
        self.db_reads = 0
        self.evictions = {"invalidation": 0, "violation": 0, "expired": 0}

    # ----------------------------------------------------------- bookkeeping

    def cached_version(self, key: int) -> int | None:
        with self._lock:
            entry = self._entries.get(key)
            return entry.record.ver if entry is not None else None

    def open_txns(self) -> int:
        with self._lock:
            return len(self._txns)

    def stats(self) -> dict:
        with self._lock:
            lookups = self.hits + self.misses
            return {
                "hits": self.hits,
                "misses": self.misses,
                "miss_count": self.misses,
                "hit_ratio": self.hits / lookups if lookups else 0.0,
                "abort_count": self.aborts,
                "evictions": dict(self.evictions),
                "evictions_total": sum(self.evictions.values()),
                "db_reads": self.db_reads,
            }

    def _evict(self, key: int, cause: str) -> None:
        if self._entries.pop(key, None) is not None:
            self.evictions[cause] += 1

    def _evict_if_stale(self, key: int, required_ver: int) -> None:
        entry = self._entries.get(key)
        if entry is not None and entry.record.ver < required_ver:
            self._evict(key, "violation")

    def _fetch(self, key: int) -> ObjectRecord:
        record = self.db.read_entry(key)
        self.db_reads += 1
        if record.ver >= self._inval_floor.get(key, 0):
            self._entries[key] = CacheEntry(record, self.clock.now())
        return record

    def _expired(self, entry: CacheEntry) -> bool:
        if self.mode is not CacheMode.TTL or self.ttl_ms is None:
            return False
        return self.clock.now() - entry.inserted_at >= self.ttl_ms

    # -------------------------------------------------------------- protocol

    def handle_invalidation(self, inv: Invalidation) -> None:
        """Evict the entry if it is older than the announced version.

        Reads already answered stand; open transaction records are not
        re-checked.  An entry at or above the announced version is kept (a
        read-through can land the new version before its invalidation).
        """
        with self._lock:
            if inv.ver > self._inval_floor.get(inv.key, 0):
                self._inval_floor[inv.key] = inv.ver
            entry = self._entries.get(inv.key)
            if entry is not None and entry.record.ver < inv.ver:
                self._evict(inv.key, "invalidation")

    def read(self, txn_id: str, key: int, last_op: bool = False) -> ReadResult:
        """Serve one transactional read; the client API of the cache.

        After a read with last_op the transaction record is dropped and the
        same id starts a fresh transaction.  After an abort, every further
        read with the same id aborts until its last_op read arrives.
        """
        with self._lock:
            state = self._txns.get(txn_id)
            if state is None:
                state = self._txns[txn_id] = _TxnState()

            if state.aborted:
                if last_op:
                    del self._txns[txn_id]
                return ReadResult(ok=False, abort_reason="already_aborted")

            # repeat read inside one transaction: return the recorded version
            # rather than re-fetching, which could itself go stale
            if key in state.values:
                result = ReadResult(
                    ok=True,
                    value=state.values[key],
                    version=next(t.ver for t in state.reads if t.key == key),
                    served_from="hit",
                )
                self._finish_read(txn_id, state, last_op)
                return result

            entry = self._entries.get(key)
            if entry is not None and self._expired(entry):
                self._evict(key, "expired")
                entry = None
            if entry is None:
                record = self._fetch(key)
                self.misses += 1
                served = "miss"
            else:
                record = entry.record
                self.hits += 1
                served = "hit"

            if self.mode is not CacheMode.TCACHE:
                state.reads.append(AccessTuple(key, record.ver, record.deps))
                state.values[key] = record.value
                self._finish_read(txn_id, state, last_op)
                return ReadResult(True, record.value, record.ver, served)

            curr = AccessTuple(key, record.ver, record.deps)
            violation = check_consistency(state.reads, curr)
            if violation is not None:
                if (
                    self.strategy is Strategy.RETRY
                    and violation.kind is ViolationKind.STALE_CURRENT
                    and served == "hit"
                ):
                    # treat the access as a miss: drop the stale entry and
                    # read through; one retry per read operation
                    self._evict(key, "violation")
                    record = self._fetch(key)
                    curr = AccessTuple(key, record.ver, record.deps)
                    violation = check_consistency(state.reads, curr)
                    served = "retry_read_through"
                if violation is not None:
                    if self.strategy in (Strategy.EVICT, Strategy.RETRY):
                        self._evict_if_stale(violation.key, violation.required_ver)
                    return self._abort(txn_id, state, violation, last_op)

            state.reads.append(curr)
            state.values[key] = record.value
            self._finish_read(txn_id, state, last_op)
            return ReadResult(True, record.value, record.ver, served)

    # -------------------------------------------------------------- internal

    def _abort(
        self, txn_id: str, state: _TxnState, violation: Violation, last_op: bool
    ) -> ReadResult:
        state.aborted = True
        self.aborts += 1
        if self.history_sink is not None:
            self.history_sink.record_event(
                HistoryEvent(
                    txn_id=txn_id,
                    kind="read_only",
                    status="aborted",
                    read_set=tuple((t.key, t.ver) for t in state.reads),
                    write_set=(),
                    timestamp=self.clock.now(),
                )
            )
        if last_op:
            del self._txns[txn_id]
        return ReadResult(ok=False, abort_reason=violation.kind.value)

    def _finish_read(self, txn_id: str, state: _TxnState, last_op: bool) -> None:
        if not last_op:
            return
        if self.history_sink is not None:
            self.history_sink.record_event(
                HistoryEvent(
                    txn_id=txn_id,
                    kind="read_only",
                    status="committed",
                    read_set=tuple((t.key, t.ver) for t in state.reads),
                    write_set=(),
                    timestamp=self.clock.now(),
                )
            )
        del self._txns[txn_id]
