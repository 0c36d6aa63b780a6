"""Experiment orchestration: wire a configuration into components, run it on
the deterministic engine (or free-running threads), and write reports.

Also home of the named presets (one per figure-style sweep) and of the
small-history validation harness that drives randomized tiny pipelines
through the real components and checks them against the enumeration oracle.
"""

from __future__ import annotations

import csv
import json
import random
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable

from . import __version__
from .cache import CacheMode, Strategy, TransactionalCache
from .config import ConfigError, ExperimentConfig, apply_overrides
from .db import Database, LossyChannel
from .monitor import (
    INCONSISTENT,
    WOULD_BE_INCONSISTENT,
    ConsistencyMonitor,
    HistoryEvent,
    MonitorReport,
    serializable_by_enumeration,
)
from .sim import EventLoop, SimClock, WallClock
from .workloads import (
    GraphSpec,
    GraphTxnSource,
    SyntheticSpec,
    SyntheticTxnSource,
    load_edge_list,
    random_walk_downsample,
    run_clients,
)

BUILTIN_GRAPH = "builtin"


def builtin_graph_path() -> Path:
    """Shipped synthetic clustered edge list (stands in for retail-style data)."""
    return Path(resources.files("depcache.data") / "clustered_graph.txt")


@dataclass
class ExperimentResult:
    config: dict[str, Any]
    seed: int
    report: MonitorReport
    cache_stats: dict[str, Any]
    channel_stats: dict[str, Any]
    db_stats: dict[str, Any]
    counts: dict[str, int]
    universe: int
    relabel_map: dict[int, int] | None = None

    @property
    def db_reads_per_s(self) -> float:
        return self.cache_stats["db_reads"] / self.config["duration_s"]

    def summary(self) -> dict[str, Any]:
        return {
            "version": __version__,
            "seed": self.seed,
            "config": self.config,
            "universe": self.universe,
            "counts": self.counts,
            "monitor": self.report.to_summary(),
            "cache": self.cache_stats,
            "channel": self.channel_stats,
            "db": self.db_stats,
            "db_reads_per_s": self.db_reads_per_s,
        }

    def write(self, out_dir, name: str = "run") -> Path:
        """Write buckets CSV, JSON summary and config sidecar; returns the dir."""
        target = Path(out_dir) / name
        target.mkdir(parents=True, exist_ok=True)
        self.report.write_csv(target / "buckets.csv")
        with open(target / "summary.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        ExperimentConfig.from_dict(self.config).to_yaml(target / "config.echo.yaml")
        if self.relabel_map is not None:
            with open(target / "relabel_map.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["original_node", "object_id"])
                for orig in sorted(self.relabel_map):
                    writer.writerow([orig, self.relabel_map[orig]])
        return target


# down-sampling is deterministic in (file, parameters, seed), so repeated
# runs of a sweep share one sample instead of re-walking the input graph
_SAMPLE_CACHE: dict[tuple, tuple] = {}


def _sampled_graph(spec: GraphSpec, seed: int):
    path = builtin_graph_path() if spec.path == BUILTIN_GRAPH else Path(spec.path)
    key = (str(path), spec.target_nodes, spec.restart_prob, seed)
    hit = _SAMPLE_CACHE.get(key)
    if hit is None:
        g = load_edge_list(path)
        hit = random_walk_downsample(
            g, spec.target_nodes, spec.restart_prob, random.Random(f"{seed}/downsample")
        )
        _SAMPLE_CACHE[key] = hit
    return hit


def _build_txn_source(cfg: ExperimentConfig, seed: int):
    """Returns (txn_source, universe, relabel_map|None)."""
    spec = cfg.workload_spec()
    if isinstance(spec, SyntheticSpec):
        rng = random.Random(f"{seed}/workload")
        return SyntheticTxnSource(spec, rng), spec.universe, None
    assert isinstance(spec, GraphSpec)
    sampled, relabel = _sampled_graph(spec, seed)
    source = GraphTxnSource(sampled, spec.walk_len, random.Random(f"{seed}/workload"))
    return source, spec.target_nodes, relabel


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run one configured experiment end to end and collect all reports."""
    if cfg.engine == "threads":
        return _run_threads(cfg)
    return _run_sim(cfg)


def _run_sim(cfg: ExperimentConfig) -> ExperimentResult:
    seed = cfg.seed
    clock = SimClock()
    loop = EventLoop(clock)
    monitor = ConsistencyMonitor()
    txn_source, universe, relabel = _build_txn_source(cfg, seed)

    cache_holder: list[TransactionalCache] = []

    def pump() -> None:
        for inv in channel.drain(clock.now()):
            cache_holder[0].handle_invalidation(inv)

    channel = LossyChannel(
        drop_prob=cfg.drop_prob,
        rng=random.Random(f"{seed}/channel"),
        clock=clock,
        delay_ms=cfg.inval_delay_ms,
        allow_reorder=cfg.reorder_invalidations,
        on_ready=lambda t: loop.schedule(max(t, clock.now()), pump),
    )
    db = Database(universe, cfg.dep_bound, channel, monitor, clock)
    cache = TransactionalCache(
        db,
        mode=CacheMode(cfg.cache_mode),
        strategy=Strategy(cfg.strategy),
        ttl_ms=cfg.ttl_ms,
        history_sink=monitor,
        clock=clock,
    )
    cache_holder.append(cache)

    counts = run_clients(
        loop,
        db,
        cache,
        txn_source,
        cfg.update_rate,
        cfg.read_rate,
        cfg.duration_ms,
        cfg.read_spacing_ms,
    )

    return ExperimentResult(
        config=cfg.to_dict(),
        seed=seed,
        report=monitor.report(cfg.bucket_ms),
        cache_stats=cache.stats(),
        channel_stats=channel.stats(),
        db_stats={"commits": db.commits, "last_version": db.last_version},
        counts={
            "updates_issued": counts.updates_issued,
            "read_txns_issued": counts.read_txns_issued,
        },
        universe=universe,
        relabel_map=relabel,
    )


def _run_threads(cfg: ExperimentConfig) -> ExperimentResult:
    """Free-running engine: real threads against the same components.

    Statistical only; used to exercise the concurrency contracts.  Rates are
    interpreted per wall-clock second.
    """
    seed = cfg.seed
    clock = WallClock()
    monitor = ConsistencyMonitor()
    txn_source, universe, relabel = _build_txn_source(cfg, seed)
    channel = LossyChannel(
        drop_prob=cfg.drop_prob,
        rng=random.Random(f"{seed}/channel"),
        clock=clock,
        delay_ms=cfg.inval_delay_ms,
        allow_reorder=cfg.reorder_invalidations,
    )
    db = Database(universe, cfg.dep_bound, channel, monitor, clock)
    cache = TransactionalCache(
        db,
        mode=CacheMode(cfg.cache_mode),
        strategy=Strategy(cfg.strategy),
        ttl_ms=cfg.ttl_ms,
        history_sink=monitor,
        clock=clock,
    )

    deadline = clock.now() + cfg.duration_ms
    stop = threading.Event()
    counts_lock = threading.Lock()
    counts = {"updates_issued": 0, "read_txns_issued": 0}
    source_lock = threading.Lock()

    def update_client() -> None:
        idx = 0
        interval = 1.0 / cfg.update_rate if cfg.update_rate > 0 else None
        if interval is None:
            return
        while not stop.is_set() and clock.now() < deadline:
            with source_lock:
                req = txn_source(clock.now(), "update")
            db.execute_update(f"u{idx}", req.keys, req.keys)
            with counts_lock:
                counts["updates_issued"] += 1
            idx += 1
            time.sleep(interval)

    def read_client() -> None:
        idx = 0
        interval = 1.0 / cfg.read_rate if cfg.read_rate > 0 else None
        if interval is None:
            return
        while not stop.is_set() and clock.now() < deadline:
            with source_lock:
                req = txn_source(clock.now(), "read_only")
            tid = f"r{idx}"
            last = len(req.keys) - 1
            for pos, key in enumerate(req.keys):
                cache.read(tid, key, last_op=(pos == last))
            with counts_lock:
                counts["read_txns_issued"] += 1
            idx += 1
            time.sleep(interval)

    def pump_client() -> None:
        while not stop.is_set():
            for inv in channel.drain(clock.now()):
                cache.handle_invalidation(inv)
            time.sleep(0.001)

    threads = [
        threading.Thread(target=update_client, name="updates"),
        threading.Thread(target=read_client, name="reads"),
        threading.Thread(target=pump_client, name="invalidations"),
    ]
    for t in threads:
        t.start()
    while clock.now() < deadline:
        time.sleep(0.005)
    stop.set()
    for t in threads:
        t.join()

    return ExperimentResult(
        config=cfg.to_dict(),
        seed=seed,
        report=monitor.report(cfg.bucket_ms),
        cache_stats=cache.stats(),
        channel_stats=channel.stats(),
        db_stats={"commits": db.commits, "last_version": db.last_version},
        counts=counts,
        universe=universe,
        relabel_map=relabel,
    )


# ------------------------------------------------------------------- presets


@dataclass(frozen=True)
class PresetRun:
    label: str
    sweep_value: float | str
    config: dict[str, Any]


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    axis: str
    runs: tuple[PresetRun, ...]


_ALPHAS = [1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0, 2.0, 4.0]


def _synthetic_cfg(mode: str, **kw) -> dict[str, Any]:
    workload = {
        "kind": "synthetic",
        "universe": kw.pop("universe", 2000),
        "cluster_size": kw.pop("cluster_size", 5),
        "mode": mode,
    }
    for key in ("alpha", "drift", "formation"):
        if key in kw:
            workload[key] = kw.pop(key)
    base = {
        "seed": 0,
        "dep_bound": 5,
        "cache_mode": "tcache",
        "strategy": "abort",
        "drop_prob": 0.2,
        "duration_s": 60.0,
        "workload": workload,
    }
    base.update(kw)
    return base


def _graph_cfg(**kw) -> dict[str, Any]:
    workload = {
        "kind": "graph",
        "path": kw.pop("path", BUILTIN_GRAPH),
        "target_nodes": kw.pop("target_nodes", 1000),
        "restart_prob": kw.pop("restart_prob", 0.15),
        "walk_len": kw.pop("walk_len", 4),
    }
    base = {
        "seed": 0,
        "dep_bound": 3,
        "cache_mode": "tcache",
        "strategy": "abort",
        "drop_prob": 0.2,
        "duration_s": 60.0,
        "workload": workload,
    }
    base.update(kw)
    return base


def _build_presets() -> dict[str, Preset]:
    presets: dict[str, Preset] = {}

    presets["alpha-sweep"] = Preset(
        name="alpha-sweep",
        description="Detection ratio as cluster spread widens (pareto alpha sweep)",
        axis="alpha",
        runs=tuple(
            PresetRun(f"alpha-{a:g}", a, _synthetic_cfg("pareto", alpha=a))
            for a in _ALPHAS
        ),
    )
    presets["unclustered"] = Preset(
        name="unclustered",
        description="Uniform access baseline: inconsistency rate with useless lists",
        axis="run",
        runs=(PresetRun("uniform", "uniform", _synthetic_cfg("uniform")),),
    )
    presets["convergence"] = Preset(
        name="convergence",
        description="Sudden cluster formation: uniform accesses become perfectly clustered",
        axis="run",
        runs=(
            PresetRun(
                "formation",
                "formation",
                _synthetic_cfg(
                    "uniform",
                    universe=1000,
                    duration_s=90.0,
                    formation={"switch_s": 58.0, "before": "uniform", "after": "perfect"},
                ),
            ),
        ),
    )
    presets["drift"] = Preset(
        name="drift",
        description="Perfect clusters whose boundaries shift by one each period",
        axis="run",
        runs=(
            PresetRun(
                "drift",
                "drift",
                _synthetic_cfg(
                    "perfect",
                    duration_s=95.0,
                    time_compression=6.0,
                    drift={"period_s": 180.0, "shift": 1},
                ),
            ),
        ),
    )
    presets["strategy-synthetic"] = Preset(
        name="strategy-synthetic",
        description="Violation-handling strategies on the approximate-cluster workload",
        axis="strategy",
        runs=tuple(
            PresetRun(s, s, _synthetic_cfg("pareto", alpha=1.0, strategy=s))
            for s in ("abort", "evict", "retry")
        ),
    )
    presets["dep-sweep"] = Preset(
        name="dep-sweep",
        description="Dependency bound sweep on the shipped clustered graph",
        axis="dep_bound",
        runs=tuple(
            PresetRun(f"k{k}", k, _graph_cfg(dep_bound=k)) for k in (0, 1, 2, 3, 4, 5)
        )
        + (PresetRun("unaware", "unaware", _graph_cfg(cache_mode="unaware")),),
    )
    presets["strategy-graph"] = Preset(
        name="strategy-graph",
        description="Violation-handling strategies on the shipped clustered graph",
        axis="strategy",
        runs=tuple(
            PresetRun(s, s, _graph_cfg(strategy=s)) for s in ("abort", "evict", "retry")
        ),
    )
    ttl_values = [10.0, 5.0, 2.0, 1.0, 0.5, 0.25, 0.1]
    presets["ttl-sweep"] = Preset(
        name="ttl-sweep",
        description="Expiry-only baseline swept until backend load doubles",
        axis="ttl_s",
        runs=(PresetRun("tcache-k3", "tcache", _graph_cfg()),)
        + (PresetRun("unaware", "inf", _graph_cfg(cache_mode="unaware")),)
        + tuple(
            PresetRun(f"ttl-{t:g}", t, _graph_cfg(cache_mode="ttl", ttl_s=t))
            for t in ttl_values
        ),
    )
    return presets


PRESETS = _build_presets()


def preset_names() -> list[str]:
    return sorted(PRESETS)


def run_preset(
    name: str,
    seed: int | None = None,
    overrides: Iterable[str] = (),
    out_dir=None,
    progress: Callable[[str], None] | None = None,
) -> list[tuple[PresetRun, ExperimentResult]]:
    """Run every point of a named preset; optionally write per-run reports
    plus one combined CSV over the sweep axis."""
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {name!r} (have {preset_names()})")
    preset = PRESETS[name]
    results: list[tuple[PresetRun, ExperimentResult]] = []
    for run in preset.runs:
        raw = apply_overrides(run.config, list(overrides))
        if seed is not None:
            raw["seed"] = seed
        cfg = ExperimentConfig.from_dict(raw)
        if progress is not None:
            progress(f"{preset.name}/{run.label}")
        results.append((run, run_experiment(cfg)))
    if out_dir is not None:
        base = Path(out_dir) / preset.name
        for run, result in results:
            result.write(base, run.label)
        write_combined_csv(base / "combined.csv", preset.axis, results)
    return results


def write_combined_csv(path, axis: str, results) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [axis, "consistent_pct", "inconsistent_pct", "abort_pct", "hit_ratio", "db_reads_per_s"]
        )
        for run, result in results:
            rep = result.report
            total = rep.read_only_total
            pct = lambda n: 100.0 * n / total if total else 0.0  # noqa: E731
            writer.writerow(
                [
                    run.sweep_value,
                    f"{pct(rep.committed_consistent):.6f}",
                    f"{pct(rep.committed_inconsistent):.6f}",
                    f"{pct(rep.aborted_total):.6f}",
                    f"{result.cache_stats['hit_ratio']:.6f}",
                    f"{result.db_reads_per_s:.6f}",
                ]
            )


# ----------------------------------------------------- small-history checker


@dataclass
class SmallTrialFailure:
    trial: int
    reason: str
    config: dict[str, Any]
    events: list[dict]


@dataclass
class SmallValidationResult:
    trials: int
    read_only_committed: int
    committed_inconsistent: int
    classifier_disagreements: int
    failures: list[SmallTrialFailure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict[str, Any]:
        return {
            "trials": self.trials,
            "read_only_committed": self.read_only_committed,
            "committed_inconsistent": self.committed_inconsistent,
            "classifier_disagreements": self.classifier_disagreements,
            "failures": [
                {
                    "trial": f.trial,
                    "reason": f.reason,
                    "config": f.config,
                    "events": f.events,
                }
                for f in self.failures
            ],
        }


def run_small_trial(
    trial_seed: str,
    drop_prob: float = 0.2,
    dep_bound: int | None = None,
    max_objects: int = 12,
    max_txns: int = 10,
) -> tuple[dict[str, Any], ConsistencyMonitor]:
    """One randomized tiny pipeline through the real components.

    Update transactions read and rewrite the same key set (the workload
    discipline every experiment uses); read-only transactions spread their
    reads over a few ticks so they interleave with commits and invalidation
    deliveries.
    """
    rng = random.Random(trial_seed)
    universe = rng.randint(2, max_objects)
    n_updates = rng.randint(1, min(6, max_txns - 1))
    n_read_only = rng.randint(1, max_txns - n_updates)
    strategy = rng.choice(list(Strategy))

    clock = SimClock()
    loop = EventLoop(clock)
    monitor = ConsistencyMonitor()
    cache_holder: list[TransactionalCache] = []

    def pump() -> None:
        for inv in channel.drain(clock.now()):
            cache_holder[0].handle_invalidation(inv)

    channel = LossyChannel(
        drop_prob=drop_prob,
        rng=random.Random(f"{trial_seed}/channel"),
        clock=clock,
        delay_ms=(1, 3),
        on_ready=lambda t: loop.schedule(max(t, clock.now()), pump),
    )
    db = Database(universe, dep_bound, channel, monitor, clock)
    cache = TransactionalCache(
        db, strategy=strategy, history_sink=monitor, clock=clock
    )
    cache_holder.append(cache)

    horizon = 120

    def do_update(tid: str, keys: tuple[int, ...]) -> None:
        db.execute_update(tid, keys, keys)

    for i in range(n_updates):
        size = rng.randint(1, min(4, universe))
        keys = tuple(rng.randrange(universe) for _ in range(size))
        loop.schedule(rng.randrange(horizon), do_update, f"u{i}", keys)
    for i in range(n_read_only):
        size = rng.randint(1, min(4, universe))
        keys = [rng.randrange(universe) for _ in range(size)]
        tick = rng.randrange(horizon)
        for pos, key in enumerate(keys):
            loop.schedule(tick, cache.read, f"r{i}", key, pos == len(keys) - 1)
            tick += rng.randint(1, 3)
    loop.run_until(horizon + 16)

    config = {
        "trial_seed": trial_seed,
        "universe": universe,
        "n_updates": n_updates,
        "n_read_only": n_read_only,
        "strategy": strategy.value,
        "drop_prob": drop_prob,
        "dep_bound": dep_bound,
    }
    return config, monitor


def validate_small(
    trials: int,
    seed: int = 0,
    drop_prob: float = 0.2,
    dep_bound: int | None = None,
    max_objects: int = 12,
    max_txns: int = 10,
    stop_after_failures: int = 5,
) -> SmallValidationResult:
    """Randomized tiny histories through the real pipeline, checked two ways:

    (a) with unbounded dependency lists, no committed read-only transaction
        may be inconsistent per the enumeration oracle (checked per
        transaction and jointly over all committed ones);
    (b) the monitor's graph classification must agree with the oracle on
        every read-only transaction, committed or aborted.

    Failures carry a replayable config plus the full event log.
    """
    result = SmallValidationResult(trials, 0, 0, 0)
    for trial in range(trials):
        config, monitor = run_small_trial(
            f"{seed}/trial/{trial}", drop_prob, dep_bound, max_objects, max_txns
        )
        updates = [
            e for e in monitor.events if e.kind == "update" and e.status == "committed"
        ]
        committed = [
            e for e in monitor.events if e.kind == "read_only" and e.status == "committed"
        ]
        aborted = [
            e for e in monitor.events if e.kind == "read_only" and e.status == "aborted"
        ]
        result.read_only_committed += len(committed)

        def fail(reason: str) -> None:
            result.failures.append(
                SmallTrialFailure(
                    trial, reason, config, [e.to_dict() for e in monitor.events]
                )
            )

        trial_inconsistent = 0
        for event in committed:
            oracle_ok = serializable_by_enumeration(updates, [event], max_txns)
            graph_verdict = monitor.classify_read_only(event.txn_id)
            if not oracle_ok:
                trial_inconsistent += 1
            if oracle_ok != (graph_verdict != INCONSISTENT):
                result.classifier_disagreements += 1
                fail(f"classifier disagreement on committed {event.txn_id}")
        for event in aborted:
            oracle_ok = serializable_by_enumeration(updates, [event], max_txns)
            graph_verdict = monitor.classify_abort(event.txn_id)
            if oracle_ok != (graph_verdict != WOULD_BE_INCONSISTENT):
                result.classifier_disagreements += 1
                fail(f"classifier disagreement on aborted {event.txn_id}")
        result.committed_inconsistent += trial_inconsistent
        if dep_bound is None:
            if trial_inconsistent:
                fail("committed read-only transaction not serializable (oracle)")
            elif committed and not serializable_by_enumeration(
                updates, committed, max_txns
            ):
                fail("committed read-only transactions not jointly serializable")
        if len(result.failures) >= stop_after_failures:
            break
    return result


def write_validation_report(result: SmallValidationResult, out_dir) -> Path:
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    path = target / "validate_small.json"
    with open(path, "w") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
