"""Dependency-tracked transactional read-only caching, end to end: a
versioned key-value backend, a lossy invalidation channel, the checking
cache, a serializability monitor, workload generators, and a deterministic
experiment harness."""

__version__ = "0.1.0"

from .cache import (
    CacheMode,
    ReadResult,
    Strategy,
    TransactionalCache,
    Violation,
    ViolationKind,
    check_consistency,
)
from .config import ConfigError, ExperimentConfig
from .db import CommitReport, Database, Invalidation, LossyChannel, ObjectRecord, UnknownKeyError
from .deps import AccessTuple, DepEntry, VersionClock, access_recency, merge_full_deps, prune_lru
from .monitor import (
    ConsistencyMonitor,
    HistoryEvent,
    HistoryTooLargeError,
    MalformedEventError,
    MonitorReport,
    serializable_by_enumeration,
)
from .sim import EventLoop, SimClock, WallClock
from .workloads import (
    DriftSpec,
    EdgeListFormatError,
    FormationSpec,
    GraphSpec,
    SyntheticSpec,
    TxnRequest,
    gen_graph_txn,
    gen_synthetic_txn,
    load_edge_list,
    random_walk_downsample,
    run_clients,
)

__all__ = [
    "AccessTuple",
    "CacheMode",
    "CommitReport",
    "ConfigError",
    "ConsistencyMonitor",
    "Database",
    "DepEntry",
    "DriftSpec",
    "EdgeListFormatError",
    "EventLoop",
    "ExperimentConfig",
    "FormationSpec",
    "GraphSpec",
    "HistoryEvent",
    "HistoryTooLargeError",
    "Invalidation",
    "LossyChannel",
    "MalformedEventError",
    "MonitorReport",
    "ObjectRecord",
    "ReadResult",
    "SimClock",
    "Strategy",
    "SyntheticSpec",
    "TransactionalCache",
    "TxnRequest",
    "UnknownKeyError",
    "VersionClock",
    "Violation",
    "ViolationKind",
    "WallClock",
    "access_recency",
    "check_consistency",
    "gen_graph_txn",
    "gen_synthetic_txn",
    "load_edge_list",
    "merge_full_deps",
    "prune_lru",
    "random_walk_downsample",
    "run_clients",
    "serializable_by_enumeration",
]
