"""Experiment-side consistency observer.

The monitor records every completed transaction reported by the backend and
the cache, maintains the per-key version history plus the transaction
dependency graph (write->read, read->next-writer, writer->next-writer edges
per key), and classifies each read-only transaction: could it be placed
somewhere in a serial order of the update transactions so that every one of
its reads sees the latest preceding write?

Updates arrive in commit order with globally increasing versions, so every
graph edge points from a lower-version transaction to a higher-version one.
Classification is a depth-first search from the candidate's read->next-writer
successors looking for any transaction the candidate read from; the search
prunes nodes whose version is at or above the largest version the candidate
read, which is exact under version-forward edges and makes the common
consistent case cheap.  Verdicts are stable: any update recorded later has a
version above everything the candidate read and cannot create a new path.

`serializable_by_enumeration` is the independent brute-force oracle used to
validate classification on tiny histories; it shares no code with the graph
path.
"""

from __future__ import annotations

import csv
import threading
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

CONSISTENT = "consistent"
INCONSISTENT = "inconsistent"
WOULD_BE_CONSISTENT = "would_be_consistent"
WOULD_BE_INCONSISTENT = "would_be_inconsistent"


class MalformedEventError(Exception):
    """An event contradicts the recorded per-key version history.

    This signals a bug in the backend or the cache, never a workload issue.
    """


class HistoryTooLargeError(Exception):
    """The enumeration oracle refuses histories beyond its size guard."""


@dataclass(frozen=True)
class HistoryEvent:
    """One completed (committed or aborted) transaction, as reported."""

    txn_id: str
    kind: str  # "update" | "read_only"
    status: str  # "committed" | "aborted"
    read_set: tuple[tuple[int, int], ...]
    write_set: tuple[tuple[int, int], ...]
    timestamp: int

    def to_dict(self) -> dict:
        return {
            "txn_id": self.txn_id,
            "kind": self.kind,
            "status": self.status,
            "read_set": [list(p) for p in self.read_set],
            "write_set": [list(p) for p in self.write_set],
            "timestamp": self.timestamp,
        }


@dataclass
class BucketRow:
    """Counts for one report window; percentages are of read-only txns."""

    start_ms: int
    total: int
    committed_consistent: int
    committed_inconsistent: int
    aborted: int

    def pct(self, count: int) -> float:
        return 100.0 * count / self.total if self.total else 0.0


@dataclass
class MonitorReport:
    committed_consistent: int
    committed_inconsistent: int
    aborted_would_be_consistent: int
    aborted_would_be_inconsistent: int
    bucket_ms: int
    rows: list[BucketRow] = field(default_factory=list)

    @property
    def committed_total(self) -> int:
        return self.committed_consistent + self.committed_inconsistent

    @property
    def aborted_total(self) -> int:
        return self.aborted_would_be_consistent + self.aborted_would_be_inconsistent

    @property
    def read_only_total(self) -> int:
        return self.committed_total + self.aborted_total

    @property
    def detection_ratio(self) -> float | None:
        """Aborts over all inconsistencies (aborted plus committed-undetected).

        Every check-triggered abort stops a read set that could not have been
        serialized with the versions it was about to accept, so aborts count
        as detected inconsistencies for the figure-style sweep metrics.
        """
        denom = self.aborted_total + self.committed_inconsistent
        if denom == 0:
            return None
        return self.aborted_total / denom

    def fraction_inconsistent(self) -> float:
        """Committed-inconsistent share of all observed read-only txns."""
        if self.read_only_total == 0:
            return 0.0
        return self.committed_inconsistent / self.read_only_total

    def window_counts(self, start_ms: int, end_ms: int) -> BucketRow:
        """Aggregate rows whose bucket start lies in [start_ms, end_ms)."""
        agg = BucketRow(start_ms, 0, 0, 0, 0)
        for row in self.rows:
            if start_ms <= row.start_ms < end_ms:
                agg.total += row.total
                agg.committed_consistent += row.committed_consistent
                agg.committed_inconsistent += row.committed_inconsistent
                agg.aborted += row.aborted
        return agg

    def to_summary(self) -> dict:
        return {
            "committed_consistent": self.committed_consistent,
            "committed_inconsistent": self.committed_inconsistent,
            "aborted_would_be_consistent": self.aborted_would_be_consistent,
            "aborted_would_be_inconsistent": self.aborted_would_be_inconsistent,
            "read_only_total": self.read_only_total,
            "fraction_inconsistent": self.fraction_inconsistent(),
            "detection_ratio": self.detection_ratio,
        }

    def write_csv(self, path) -> None:
        """One row per time bucket: t, consistent%, inconsistent%, abort%."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "consistent_pct", "inconsistent_pct", "abort_pct"])
            for row in self.rows:
                writer.writerow(
                    [
                        f"{row.start_ms / 1000.0:.3f}",
                        f"{row.pct(row.committed_consistent):.6f}",
                        f"{row.pct(row.committed_inconsistent):.6f}",
                        f"{row.pct(row.aborted):.6f}",
                    ]
                )


class ConsistencyMonitor:
    """Single consumer of a totally ordered stream of history events.

    Producers may emit concurrently (the free-running engine does); recording
    is serialized internally.  Classification may be called at any time and
    is cached per transaction id.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.events: list[HistoryEvent] = []
        # per key: ascending committed versions and their writers
        self._chain_vers: dict[int, list[int]] = {}
        self._chain_writers: dict[int, list[str]] = {}
        # update-graph adjacency; every edge targets a newer transaction
        self._adj: dict[str, list[str]] = {}
        self._readers: dict[tuple[int, int], list[str]] = {}
        self._txn_version: dict[str, int] = {}
        self._ro_events: dict[str, HistoryEvent] = {}
        self._max_version = 0
        self._verdicts: dict[str, str] = {}

    # ------------------------------------------------------------- recording

    def record_event(self, event: HistoryEvent) -> None:
        with self._lock:
            if event.kind == "update":
                if event.status == "committed":
                    self._index_update(event)
            elif event.kind == "read_only":
                self._check_read_only(event)
            else:
                raise MalformedEventError(f"unknown event kind {event.kind!r}")
            self.events.append(event)

    def _index_update(self, event: HistoryEvent) -> None:
        if not event.write_set:
            raise MalformedEventError(f"update {event.txn_id} committed without writes")
        versions = {ver for _, ver in event.write_set}
        if len(versions) != 1:
            raise MalformedEventError(
                f"update {event.txn_id} carries mixed commit versions {sorted(versions)}"
            )
        version = versions.pop()
        if version <= self._max_version:
            raise MalformedEventError(
                f"update {event.txn_id} version {version} not above {self._max_version}"
            )
        tid = event.txn_id
        if tid in self._txn_version:
            raise MalformedEventError(f"duplicate update id {tid}")

        # reads must match the current committed state (the backend holds the
        # locks from read to commit), which is what keeps edges version-forward
        for key, ver in event.read_set:
            cur = self._current_version(key)
            if ver != cur:
                raise MalformedEventError(
                    f"update {tid} read {key}@{ver} but committed state is {key}@{cur}"
                )

        self._txn_version[tid] = version
        self._adj[tid] = []
        for key, ver in event.read_set:
            if ver > 0:
                writer = self._writer_of(key, ver)
                self._adj[writer].append(tid)  # write -> read
        for key, _ in event.write_set:
            vers = self._chain_vers.setdefault(key, [])
            writers = self._chain_writers.setdefault(key, [])
            if vers:
                prev_ver, prev_writer = vers[-1], writers[-1]
                if prev_writer != tid:
                    self._adj[prev_writer].append(tid)  # writer -> next writer
                for reader in self._readers.get((key, prev_ver), ()):
                    if reader != tid:
                        self._adj[reader].append(tid)  # read -> next writer
            else:
                for reader in self._readers.get((key, 0), ()):
                    if reader != tid:
                        self._adj[reader].append(tid)
            vers.append(version)
            writers.append(tid)
        # register this update's reads for future read -> next-writer edges
        for key, ver in event.read_set:
            self._readers.setdefault((key, ver), []).append(tid)
        self._max_version = version

    def _check_read_only(self, event: HistoryEvent) -> None:
        if event.write_set:
            raise MalformedEventError(f"read-only {event.txn_id} carries writes")
        if event.txn_id in self._ro_events:
            raise MalformedEventError(f"duplicate read-only id {event.txn_id}")
        for key, ver in event.read_set:
            if ver == 0:
                continue
            vers = self._chain_vers.get(key, [])
            idx = bisect_left(vers, ver)
            if idx == len(vers) or vers[idx] != ver:
                raise MalformedEventError(
                    f"read-only {event.txn_id} read {key}@{ver}, never committed"
                )
        self._ro_events[event.txn_id] = event

    # --------------------------------------------------------------- queries

    def _current_version(self, key: int) -> int:
        vers = self._chain_vers.get(key)
        return vers[-1] if vers else 0

    def _writer_of(self, key: int, ver: int) -> str:
        vers = self._chain_vers.get(key, [])
        idx = bisect_left(vers, ver)
        if idx == len(vers) or vers[idx] != ver:
            raise MalformedEventError(f"no committed write of {key}@{ver}")
        return self._chain_writers[key][idx]

    def _next_writer(self, key: int, ver: int) -> str | None:
        vers = self._chain_vers.get(key, [])
        idx = bisect_right(vers, ver)
        if idx == len(vers):
            return None
        return self._chain_writers[key][idx]

    def reads_consistent(self, reads: Iterable[tuple[int, int]]) -> bool:
        """Cycle test: can these reads join a serial order of the updates?

        Inconsistent iff some transaction this read set must precede (the
        next writer of a key it read) reaches, in the update graph, some
        transaction it must follow (a writer it read from).
        """
        sources: set[str] = set()
        targets: set[str] = set()
        max_src_ver = 0
        for key, ver in reads:
            if ver > 0:
                writer = self._writer_of(key, ver)
                sources.add(writer)
                wver = self._txn_version[writer]
                if wver > max_src_ver:
                    max_src_ver = wver
            nxt = self._next_writer(key, ver)
            if nxt is not None:
                targets.add(nxt)
        if not sources or not targets:
            return True
        stack = list(targets)
        seen: set[str] = set()
        while stack:
            node = stack.pop()
            if node in sources:
                return False
            if node in seen:
                continue
            seen.add(node)
            # edges only increase versions; nothing at or above the largest
            # source version can lead back to a source
            if self._txn_version[node] >= max_src_ver:
                continue
            stack.extend(self._adj.get(node, ()))
        return True

    def classify_read_only(self, txn_id: str) -> str:
        """Verdict for a committed read-only transaction."""
        cached = self._verdicts.get(txn_id)
        if cached is not None:
            return cached
        event = self._find_read_only(txn_id, "committed")
        verdict = CONSISTENT if self.reads_consistent(event.read_set) else INCONSISTENT
        self._verdicts[txn_id] = verdict
        return verdict

    def classify_abort(self, txn_id: str) -> str:
        """Verdict for an aborted transaction's answered (partial) read set.

        would_be_consistent counts as an unnecessary abort.
        """
        cached = self._verdicts.get(txn_id)
        if cached is not None:
            return cached
        event = self._find_read_only(txn_id, "aborted")
        verdict = (
            WOULD_BE_CONSISTENT
            if self.reads_consistent(event.read_set)
            else WOULD_BE_INCONSISTENT
        )
        self._verdicts[txn_id] = verdict
        return verdict

    def _find_read_only(self, txn_id: str, status: str) -> HistoryEvent:
        event = self._ro_events.get(txn_id)
        if event is None:
            raise KeyError(f"no recorded read-only transaction {txn_id}")
        if event.status != status:
            raise MalformedEventError(f"{txn_id} is {event.status}, expected {status}")
        return event

    def update_graph_acyclic(self) -> bool:
        """Full acyclicity check of the update-only graph (test support).

        Structurally guaranteed by version-forward edges; verified here by
        checking that every recorded edge increases the commit version.
        """
        for src, dsts in self._adj.items():
            for dst in dsts:
                if self._txn_version[src] >= self._txn_version[dst]:
                    return False
        return True

    # ---------------------------------------------------------------- report

    def report(self, bucket_ms: int = 1000) -> MonitorReport:
        """Aggregate verdicts into totals and a bucketed time series."""
        if bucket_ms <= 0:
            raise ValueError("bucket_ms must be positive")
        totals = {
            CONSISTENT: 0,
            INCONSISTENT: 0,
            WOULD_BE_CONSISTENT: 0,
            WOULD_BE_INCONSISTENT: 0,
        }
        buckets: dict[int, BucketRow] = {}
        for event in self.events:
            if event.kind != "read_only":
                continue
            if event.status == "committed":
                verdict = self.classify_read_only(event.txn_id)
            else:
                verdict = self.classify_abort(event.txn_id)
            totals[verdict] += 1
            start = (event.timestamp // bucket_ms) * bucket_ms
            row = buckets.get(start)
            if row is None:
                row = buckets[start] = BucketRow(start, 0, 0, 0, 0)
            row.total += 1
            if verdict == CONSISTENT:
                row.committed_consistent += 1
            elif verdict == INCONSISTENT:
                row.committed_inconsistent += 1
            else:
                row.aborted += 1
        return MonitorReport(
            committed_consistent=totals[CONSISTENT],
            committed_inconsistent=totals[INCONSISTENT],
            aborted_would_be_consistent=totals[WOULD_BE_CONSISTENT],
            aborted_would_be_inconsistent=totals[WOULD_BE_INCONSISTENT],
            bucket_ms=bucket_ms,
            rows=[buckets[k] for k in sorted(buckets)],
        )


def serializable_by_enumeration(
    updates: Sequence[HistoryEvent],
    candidates: Sequence[HistoryEvent],
    limit: int = 10,
) -> bool:
    """Exhaustive oracle: does some total order respect every read?

    Explores placements of the committed updates plus the candidate read-only
    transactions; a transaction is placeable when each of its reads matches
    the current per-key version (keys start at version 0).  Read-only
    candidates change no state, so they are placed greedily the moment they
    fit, which is a pure win.  Failed (updates-placed, candidates-left)
    states are memoized, bounding the search well under the factorial bound.

    Desk-scale only: refuses histories above `limit` transactions.
    """
    if len(updates) + len(candidates) > limit:
        raise HistoryTooLargeError(
            f"{len(updates) + len(candidates)} transactions exceed the {limit}-txn guard"
        )
    for ev in updates:
        if ev.kind != "update" or ev.status != "committed":
            raise ValueError("updates must be committed update events")

    upd_reads = [tuple(ev.read_set) for ev in updates]
    upd_writes = [tuple(ev.write_set) for ev in updates]
    cand_reads = [tuple(ev.read_set) for ev in candidates]
    all_updates_mask = (1 << len(updates)) - 1
    failed: set[tuple[int, frozenset[int]]] = set()

    def fits(reads: tuple[tuple[int, int], ...], state: dict[int, int]) -> bool:
        return all(state.get(key, 0) == ver for key, ver in reads)

    def search(state: dict[int, int], placed: int, left: frozenset[int]) -> bool:
        while True:
            placeable = [i for i in left if fits(cand_reads[i], state)]
            if not placeable:
                break
            left = left - set(placeable)
        if placed == all_updates_mask and not left:
            return True
        key = (placed, left)
        if key in failed:
            return False
        for i in range(len(updates)):
            bit = 1 << i
            if placed & bit or not fits(upd_reads[i], state):
                continue
            nxt = dict(state)
            for wkey, wver in upd_writes[i]:
                nxt[wkey] = wver
            if search(nxt, placed | bit, left):
                return True
        failed.add(key)
        return False

    return search({}, 0, frozenset(range(len(candidates))))
