"""Experiment configuration: a typed view over a YAML mapping.

The file format is plain YAML, one mapping per experiment (see README for
the full key table).  Every run echoes its normalized configuration into the
JSON summary and a config.echo.yaml sidecar, so results are replayable.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any

import yaml

from .cache import CacheMode, Strategy
from .workloads import DriftSpec, FormationSpec, GraphSpec, SyntheticSpec


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field."""


_MODES = {m.value for m in CacheMode}
_STRATEGIES = {s.value for s in Strategy}
_ENGINES = {"sim", "threads"}


def _require(cond: bool, field_name: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{field_name}: {msg}")


def _as_ms(seconds: float) -> int:
    return int(round(seconds * 1000))


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one run; immutable once parsed."""

    seed: int = 0
    engine: str = "sim"
    dep_bound: int | None = 5
    cache_mode: str = "tcache"
    strategy: str = "abort"
    ttl_s: float | None = None
    drop_prob: float = 0.2
    inval_delay_ms: tuple[int, int] = (1, 10)
    reorder_invalidations: bool = False
    update_rate: float = 100.0
    read_rate: float = 500.0
    duration_s: float = 60.0
    time_compression: float = 1.0
    report_bucket_s: float = 1.0
    read_spacing_ms: int = 0
    workload: dict[str, Any] = field(default_factory=lambda: {"kind": "synthetic"})

    # ------------------------------------------------------------- parse/emit

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "ExperimentConfig":
        known = {
            "seed", "engine", "dep_bound", "cache_mode", "strategy", "ttl_s",
            "drop_prob", "inval_delay_ms", "reorder_invalidations",
            "update_rate", "read_rate", "duration_s", "time_compression",
            "report_bucket_s", "read_spacing_ms", "workload",
        }
        unknown = set(raw) - known
        _require(not unknown, sorted(unknown)[0] if unknown else "", "unknown field")
        kwargs = dict(raw)
        if "dep_bound" in kwargs and kwargs["dep_bound"] in ("unbounded", "inf"):
            kwargs["dep_bound"] = None
        if "inval_delay_ms" in kwargs:
            pair = kwargs["inval_delay_ms"]
            _require(
                isinstance(pair, (list, tuple)) and len(pair) == 2,
                "inval_delay_ms",
                "expected [lo, hi]",
            )
            kwargs["inval_delay_ms"] = (int(pair[0]), int(pair[1]))
        if "workload" in kwargs:
            kwargs["workload"] = dict(kwargs["workload"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            raw = yaml.safe_load(fh)
        _require(isinstance(raw, dict), "<root>", "config file must be a mapping")
        return cls.from_dict(raw)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "engine": self.engine,
            "dep_bound": self.dep_bound,
            "cache_mode": self.cache_mode,
            "strategy": self.strategy,
            "ttl_s": self.ttl_s,
            "drop_prob": self.drop_prob,
            "inval_delay_ms": list(self.inval_delay_ms),
            "reorder_invalidations": self.reorder_invalidations,
            "update_rate": self.update_rate,
            "read_rate": self.read_rate,
            "duration_s": self.duration_s,
            "time_compression": self.time_compression,
            "report_bucket_s": self.report_bucket_s,
            "read_spacing_ms": self.read_spacing_ms,
            "workload": copy.deepcopy(self.workload),
        }

    def to_yaml(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)

    # -------------------------------------------------------------- validate

    def validate(self) -> None:
        _require(self.engine in _ENGINES, "engine", f"one of {sorted(_ENGINES)}")
        _require(
            self.dep_bound is None or self.dep_bound >= 0,
            "dep_bound",
            "must be >= 0 or null for unbounded",
        )
        _require(self.cache_mode in _MODES, "cache_mode", f"one of {sorted(_MODES)}")
        _require(self.strategy in _STRATEGIES, "strategy", f"one of {sorted(_STRATEGIES)}")
        if self.cache_mode == "ttl":
            _require(
                self.ttl_s is None or self.ttl_s >= 0,
                "ttl_s",
                "must be >= 0 (null means no expiry)",
            )
        _require(0.0 <= self.drop_prob <= 1.0, "drop_prob", "must be in [0, 1]")
        lo, hi = self.inval_delay_ms
        _require(0 <= lo <= hi, "inval_delay_ms", "must satisfy 0 <= lo <= hi")
        _require(self.update_rate >= 0, "update_rate", "must be >= 0")
        _require(self.read_rate >= 0, "read_rate", "must be >= 0")
        _require(self.duration_s > 0, "duration_s", "must be positive")
        _require(self.time_compression > 0, "time_compression", "must be positive")
        _require(self.report_bucket_s > 0, "report_bucket_s", "must be positive")
        _require(self.read_spacing_ms >= 0, "read_spacing_ms", "must be >= 0")
        self.workload_spec()  # raises ConfigError on bad workload blocks

    # ----------------------------------------------------- derived quantities

    @property
    def duration_ms(self) -> int:
        return _as_ms(self.duration_s)

    @property
    def bucket_ms(self) -> int:
        return max(1, _as_ms(self.report_bucket_s))

    @property
    def ttl_ms(self) -> int | None:
        return None if self.ttl_s is None else _as_ms(self.ttl_s)

    def workload_spec(self) -> SyntheticSpec | GraphSpec:
        """Parse the workload block; long horizons shrink by time_compression."""
        w = dict(self.workload)
        kind = w.pop("kind", "synthetic")
        comp = self.time_compression
        try:
            if kind == "synthetic":
                drift = w.pop("drift", None)
                if drift is not None:
                    drift = DriftSpec(
                        period_ms=_as_ms(float(drift["period_s"]) / comp),
                        shift=int(drift["shift"]),
                    )
                formation = w.pop("formation", None)
                if formation is not None:
                    formation = FormationSpec(
                        switch_ms=_as_ms(float(formation["switch_s"]) / comp),
                        before=str(formation["before"]),
                        after=str(formation["after"]),
                    )
                alpha = w.pop("alpha", None)
                spec = SyntheticSpec(
                    universe=int(w.pop("universe", 2000)),
                    cluster_size=int(w.pop("cluster_size", 5)),
                    mode=str(w.pop("mode", "perfect")),
                    alpha=None if alpha is None else float(alpha),
                    txn_size=int(w.pop("txn_size", 5)),
                    drift=drift,
                    formation=formation,
                )
            elif kind == "graph":
                spec = GraphSpec(
                    path=str(w.pop("path", "builtin")),
                    target_nodes=int(w.pop("target_nodes", 1000)),
                    restart_prob=float(w.pop("restart_prob", 0.15)),
                    walk_len=int(w.pop("walk_len", 4)),
                )
            else:
                raise ConfigError(f"workload.kind: unknown kind {kind!r}")
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"workload: {exc}") from exc
        if w:
            raise ConfigError(f"workload.{sorted(w)[0]}: unknown field")
        return spec


def apply_overrides(raw: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply dotted key=value overrides to a raw config mapping.

    Values parse as YAML scalars, so `dep_bound=null` and `alpha=0.5` do what
    they look like.
    """
    out = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        dotted, _, text = item.partition("=")
        value = yaml.safe_load(text) if text != "" else None
        node = out
        parts = dotted.split(".")
        for part in parts[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                nxt = node[part] = {}
            node = nxt
        node[parts[-1]] = value
    return out
