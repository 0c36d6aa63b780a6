"""Shared value/version vocabulary and the dependency-list algebra.

Objects are integers in ``[0, N)``.  Versions are integers handed out by the
backend at commit time; version 0 is reserved for the initial, never-written
state.  A dependency entry ``(key, ver)`` attached to a record means: anyone
who observes the owning record's current version must not observe ``key`` at
a version older than ``ver``.

Everything here is a pure value or a pure function; mutation happens only by
building new values, so instances are safe to share across threads.
"""

from __future__ import annotations

from typing import Iterable, Mapping, NamedTuple, Sequence


class DepEntry(NamedTuple):
    """One recorded requirement: readers must see `key` at version >= `ver`."""

    key: int
    ver: int


class AccessTuple(NamedTuple):
    """A (key, observed-or-produced version, dependency list) access record."""

    key: int
    ver: int
    deps: tuple[DepEntry, ...]


def merge_full_deps(
    read_set: Iterable[AccessTuple],
    write_set: Iterable[AccessTuple],
) -> dict[int, int]:
    """Aggregate accessed pairs and inherited entries into one full list.

    Returns the union over every tuple of {(key, ver)} plus its dependency
    list, as a key -> version mapping where duplicate keys keep only the
    largest version (an entry is superseded by a newer entry for the same
    object).  Total function, no size bound applied here.
    """
    full: dict[int, int] = {}
    for tup in (*read_set, *write_set):
        if full.get(tup.key, -1) < tup.ver:
            full[tup.key] = tup.ver
        for dep in tup.deps:
            if full.get(dep.key, -1) < dep.ver:
                full[dep.key] = dep.ver
    return full


def access_recency(
    read_set: Sequence[AccessTuple],
    write_set: Sequence[AccessTuple],
) -> list[int]:
    """Most-recent-first key ordering used for LRU pruning at commit.

    Keys touched directly by the committing transaction come first, in
    read-set-then-write-set access order; inherited entries follow, merged by
    their rank in the source lists (rank 0 entries of every source list, then
    rank 1, ...).  A key occurring several times keeps its earliest slot.
    """
    order: list[int] = []
    seen: set[int] = set()
    tuples = (*read_set, *write_set)
    for tup in tuples:
        if tup.key not in seen:
            seen.add(tup.key)
            order.append(tup.key)
    rank = 0
    live = True
    while live:
        live = False
        for tup in tuples:
            if rank < len(tup.deps):
                live = True
                key = tup.deps[rank].key
                if key not in seen:
                    seen.add(key)
                    order.append(key)
        rank += 1
    return order


def prune_lru(
    full: Mapping[int, int],
    recency: Sequence[int],
    bound: int | None,
    exclude: int | None = None,
) -> tuple[DepEntry, ...]:
    """Keep the `bound` most recently touched keys of a full dependency map.

    `recency` must cover every key in `full` (as produced by
    :func:`access_recency`).  Each retained key carries its superseded (max)
    version.  ``bound=None`` means unbounded and keeps everything; `exclude`
    drops a record's own key so it does not spend one of its own slots.
    """
    if bound is not None and bound < 0:
        raise ValueError("dependency bound must be >= 0")
    out: list[DepEntry] = []
    for key in recency:
        if bound is not None and len(out) >= bound:
            break
        if key == exclude:
            continue
        ver = full.get(key)
        if ver is None:
            continue
        out.append(DepEntry(key, ver))
    return tuple(out)


def required_version(deps: Iterable[DepEntry], key: int) -> int | None:
    """Largest version `deps` demands for `key`, or None if unconstrained."""
    best: int | None = None
    for dep in deps:
        if dep.key == key and (best is None or dep.ver > best):
            best = dep.ver
    return best


class VersionClock:
    """Monotone commit-version allocator.

    Issued versions strictly dominate both every previously issued version
    and every version the committing transaction observed.  Not synchronized;
    the backend calls it inside its commit section.
    """

    def __init__(self, start: int = 0) -> None:
        self._last = start

    @property
    def last(self) -> int:
        return self._last

    def next(self, accessed: Iterable[int] = ()) -> int:
        floor = self._last
        for ver in accessed:
            if ver > floor:
                floor = ver
        self._last = floor + 1
        return self._last
