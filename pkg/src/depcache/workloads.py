"""Workload generation: synthetic cluster access patterns, graph-derived
access patterns, and the client drivers that feed them to the system.

Synthetic universes split ``[0, N)`` into aligned blocks of `cluster_size`.
Perfect mode keeps every transaction inside one block; pareto mode starts at
a block head and spreads out with a bounded Pareto tail (wrapping modulo N);
uniform mode ignores blocks entirely.  Blocks can drift by a fixed shift per
period and the whole mode can switch at a configured formation time.

Graph workloads load a SNAP-style edge list, down-sample it with a
restarting random walk, and draw each transaction's keys from a short random
walk, so accesses concentrate on topologically close objects.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

import networkx as nx

from .cache import TransactionalCache
from .db import Database
from .sim import EventLoop


class EdgeListFormatError(ValueError):
    """Unparsable or empty edge-list input."""


@dataclass(frozen=True)
class DriftSpec:
    period_ms: int
    shift: int


@dataclass(frozen=True)
class FormationSpec:
    switch_ms: int
    before: str
    after: str


@dataclass(frozen=True)
class SyntheticSpec:
    universe: int
    cluster_size: int = 5
    mode: str = "perfect"  # "perfect" | "pareto" | "uniform"
    alpha: float | None = None
    txn_size: int = 5
    drift: DriftSpec | None = None
    formation: FormationSpec | None = None

    def __post_init__(self) -> None:
        if self.universe <= 0:
            raise ValueError("universe must be positive")
        if self.cluster_size <= 0 or self.cluster_size > self.universe:
            raise ValueError("cluster_size must be in [1, universe]")
        for mode in self._modes():
            if mode not in ("perfect", "pareto", "uniform"):
                raise ValueError(f"unknown mode {mode!r}")
            if mode == "pareto" and (self.alpha is None or self.alpha <= 0):
                raise ValueError("pareto mode needs alpha > 0")

    def _modes(self) -> list[str]:
        modes = [self.mode]
        if self.formation is not None:
            modes += [self.formation.before, self.formation.after]
        return modes


@dataclass(frozen=True)
class GraphSpec:
    path: str  # edge-list file; "builtin" selects the shipped graph
    target_nodes: int = 1000
    restart_prob: float = 0.15
    walk_len: int = 4

    def __post_init__(self) -> None:
        if self.walk_len < 1:
            raise ValueError("walk_len must be >= 1")
        if not 0.0 <= self.restart_prob < 1.0:
            raise ValueError("restart_prob must be in [0, 1)")
        if self.target_nodes <= 0:
            raise ValueError("target_nodes must be positive")


@dataclass(frozen=True)
class TxnRequest:
    kind: str  # "update" | "read_only"
    keys: tuple[int, ...]
    issue_time: int


# ------------------------------------------------------------ synthetic side


def bounded_pareto_sample(rng: random.Random, alpha: float, high: int) -> float:
    """Inverse-CDF draw from a Pareto law truncated to [1, high]."""
    u = rng.random()
    tail = (1.0 / high) ** alpha
    return (1.0 - u * (1.0 - tail)) ** (-1.0 / alpha)


def drift_offset(spec: SyntheticSpec, now: int) -> int:
    """Additive block offset at `now`: floor(now / period) * shift mod N."""
    if spec.drift is None:
        return 0
    return (now // spec.drift.period_ms) * spec.drift.shift % spec.universe


def effective_mode(spec: SyntheticSpec, now: int) -> str:
    if spec.formation is None:
        return spec.mode
    return spec.formation.before if now < spec.formation.switch_ms else spec.formation.after


def gen_synthetic_txn(
    spec: SyntheticSpec,
    rng: random.Random,
    now: int = 0,
    kind: str = "read_only",
) -> TxnRequest:
    """Draw one transaction's key multiset (duplicates allowed)."""
    n = spec.universe
    c = spec.cluster_size
    mode = effective_mode(spec, now)
    keys: list[int]
    if mode == "uniform":
        keys = [rng.randrange(n) for _ in range(spec.txn_size)]
    else:
        offset = drift_offset(spec, now)
        n_clusters = (n + c - 1) // c
        head = (rng.randrange(n_clusters) * c + offset) % n
        if mode == "perfect":
            keys = [(head + rng.randrange(c)) % n for _ in range(spec.txn_size)]
        else:
            keys = [
                (head + int(bounded_pareto_sample(rng, spec.alpha, n)) - 1) % n
                for _ in range(spec.txn_size)
            ]
    return TxnRequest(kind=kind, keys=tuple(keys), issue_time=now)


# ---------------------------------------------------------------- graph side


def load_edge_list(path) -> nx.Graph:
    """Read a whitespace-separated "u v" edge list (SNAP text convention).

    Lines starting with '#' are comments.  Self-loops are dropped, duplicate
    and reverse-duplicate edges collapse, directed inputs are symmetrized.
    """
    g = nx.Graph()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise EdgeListFormatError(f"{path}:{lineno}: expected 'u v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise EdgeListFormatError(
                    f"{path}:{lineno}: non-integer node id in {line!r}"
                ) from None
            if u == v:
                continue
            g.add_edge(u, v)
    if g.number_of_nodes() == 0:
        raise EdgeListFormatError(f"{path}: no edges found")
    return g


def _sorted_adjacency(g: nx.Graph) -> dict[int, tuple[int, ...]]:
    return {node: tuple(sorted(g.neighbors(node))) for node in g.nodes}


def random_walk_downsample(
    g: nx.Graph,
    target: int,
    restart_prob: float,
    rng: random.Random,
    stall_factor: int = 100,
) -> tuple[nx.Graph, dict[int, int]]:
    """Induced subgraph on the first `target` distinct nodes of a restart walk.

    The walk starts at a uniformly chosen node and jumps back to its anchor
    with probability `restart_prob` per step.  A fresh uniform anchor is
    chosen when no new node turns up within stall_factor * target steps, or
    immediately once the anchor's connected component is exhausted (at which
    point discovery is impossible and spinning down the stall budget would
    only burn the rng).  Nodes are relabeled 0..target-1 in first-visit
    order; the original->new map is returned for audit.
    """
    nodes = sorted(g.nodes)
    if target > len(nodes):
        raise ValueError(f"target {target} exceeds graph size {len(nodes)}")
    adj = _sorted_adjacency(g)
    component_of: dict[int, int] = {}
    unvisited_in: list[int] = []
    for comp_id, members in enumerate(nx.connected_components(g)):
        unvisited_in.append(len(members))
        for node in members:
            component_of[node] = comp_id

    def visit(node: int) -> None:
        visited[node] = len(visited)
        unvisited_in[component_of[node]] -= 1

    def fresh_anchor() -> int:
        while True:
            cand = nodes[rng.randrange(len(nodes))]
            if unvisited_in[component_of[cand]] > 0:
                return cand

    anchor = nodes[rng.randrange(len(nodes))]
    visited: dict[int, int] = {}
    visit(anchor)
    current = anchor
    stall_budget = stall_factor * target
    idle = 0
    while len(visited) < target:
        if idle >= stall_budget or unvisited_in[component_of[anchor]] == 0:
            anchor = fresh_anchor()
            current = anchor
            idle = 0
        elif rng.random() < restart_prob:
            current = anchor
        else:
            nbrs = adj[current]
            current = nbrs[rng.randrange(len(nbrs))] if nbrs else anchor
        if current not in visited:
            visit(current)
            idle = 0
        else:
            idle += 1
    relabel = visited
    sampled = nx.Graph()
    sampled.add_nodes_from(range(target))
    for u, v in g.subgraph(relabel.keys()).edges:
        sampled.add_edge(relabel[u], relabel[v])
    return sampled, dict(relabel)


def gen_graph_txn(
    adj: dict[int, tuple[int, ...]],
    walk_len: int,
    rng: random.Random,
    now: int = 0,
    kind: str = "read_only",
) -> TxnRequest:
    """Keys visited by a uniform-start random walk: start plus walk_len steps.

    Steps go to a uniform neighbor; an isolated node keeps all accesses on
    itself.  Duplicates are kept (revisits are real accesses).
    """
    nodes = len(adj)
    current = rng.randrange(nodes)
    keys = [current]
    for _ in range(walk_len):
        nbrs = adj[current]
        if nbrs:
            current = nbrs[rng.randrange(len(nbrs))]
        keys.append(current)
    return TxnRequest(kind=kind, keys=tuple(keys), issue_time=now)


class GraphTxnSource:
    """Pre-indexed adjacency so per-transaction walks stay cheap."""

    def __init__(self, g: nx.Graph, walk_len: int, rng: random.Random) -> None:
        self.adj = _sorted_adjacency(g)
        self.walk_len = walk_len
        self.rng = rng

    def __call__(self, now: int, kind: str = "read_only") -> TxnRequest:
        return gen_graph_txn(self.adj, self.walk_len, self.rng, now, kind)


class SyntheticTxnSource:
    def __init__(self, spec: SyntheticSpec, rng: random.Random) -> None:
        self.spec = spec
        self.rng = rng

    def __call__(self, now: int, kind: str = "read_only") -> TxnRequest:
        return gen_synthetic_txn(self.spec, self.rng, now, kind)


# -------------------------------------------------------------- client side


@dataclass
class ClientCounts:
    updates_issued: int = 0
    read_txns_issued: int = 0


def arrival_ticks(rate_per_s: float, duration_ms: int) -> list[int]:
    """Exact deterministic arrival schedule for one client stream."""
    if rate_per_s <= 0:
        return []
    count = math.ceil(duration_ms * rate_per_s / 1000.0)
    ticks = []
    for i in range(count + 1):
        t = round(i * 1000.0 / rate_per_s)
        if t < duration_ms:
            ticks.append(t)
    return ticks


def run_clients(
    loop: EventLoop,
    db: Database,
    cache: TransactionalCache,
    txn_source: Callable[[int, str], TxnRequest],
    update_rate: float,
    read_rate: float,
    duration_ms: int,
    read_spacing_ms: int = 0,
) -> ClientCounts:
    """Drive update transactions into the backend and read-only transactions
    into the cache at fixed rates on the logical clock.

    Update transactions read all their keys and then rewrite all of them.
    Read-only transactions issue one cache read per key with the final read
    flagged last_op; after an abort the remaining reads are still issued (as
    cheap sticky aborts) so the record is always garbage-collected.
    """
    counts = ClientCounts()
    tail = duration_ms

    def do_update(idx: int) -> None:
        req = txn_source(loop.clock.now(), "update")
        db.execute_update(f"u{idx}", req.keys, req.keys)
        counts.updates_issued += 1

    def do_read_txn(idx: int) -> None:
        nonlocal tail
        req = txn_source(loop.clock.now(), "read_only")
        tid = f"r{idx}"
        last = len(req.keys) - 1
        if read_spacing_ms <= 0:
            for pos, key in enumerate(req.keys):
                cache.read(tid, key, last_op=(pos == last))
        else:
            now = loop.clock.now()
            tail = max(tail, now + last * read_spacing_ms)
            for pos, key in enumerate(req.keys):
                loop.schedule(
                    now + pos * read_spacing_ms,
                    cache.read,
                    tid,
                    key,
                    pos == last,
                )
        counts.read_txns_issued += 1

    for i, t in enumerate(arrival_ticks(update_rate, duration_ms)):
        loop.schedule(t, do_update, i)
    for i, t in enumerate(arrival_ticks(read_rate, duration_ms)):
        loop.schedule(t, do_read_txn, i)
    loop.run_until(duration_ms)
    # spaced reads scheduled near the end spill past the deadline; flush them
    # so every issued transaction reaches its last_op read
    while tail > loop.clock.now():
        loop.run_until(tail)
    return counts
