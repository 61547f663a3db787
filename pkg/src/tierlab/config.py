"""INI-style run configuration.

Sections and keys (all optional unless noted)::

    [run]        seed, scale, out, bucket_accesses, warmup_accesses, invariant_every_ticks
    [workload]   trace (path, relative to the config file) or archetype + WorkloadSpec fields;
                 contexts = name:size:object_share:access_share:skew; ...
    [allocation] strategy (time|size|context|oracle), depth, regions
    [policy]     kind (required), plus PolicySpec fields
    [tiers]      fast_pages or fast_fraction (of touched pages), capacity_pages
    [sampling]   rate, jitter
    [cost]       fast_latency_ns, capacity_latency_ns, migration_cost_ns
    [migration]  tick_interval, max_migrations_per_tick

Component seeds come from the run seed through named substreams, so the
workload and the sampler never share random state.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .allocator import GroupingStrategy, Strategy
from .hotness import DecayShape, Trigger
from .metrics import CostModel
from .migration import MigrationConfig
from .policies import PolicyKind, PolicySpec
from .workload import Archetype, ContextSpec, SamplingModel, WorkloadSpec


class ConfigError(ValueError):
    pass


def substream_seed(seed: int, name: str) -> int:
    """Independent 63-bit seed for component ``name`` derived from the run seed."""
    h = hashlib.blake2b(f"{seed}:{name}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") >> 1


@dataclass
class RunConfig:
    policy: PolicySpec
    workload: Optional[WorkloadSpec] = None
    trace_path: Optional[Path] = None
    strategy: GroupingStrategy = field(default_factory=lambda: GroupingStrategy(Strategy.TIME))
    fast_pages: Optional[int] = None
    fast_fraction: Optional[float] = None
    capacity_pages: Optional[int] = None
    sampling_rate: int = 1
    sampling_jitter: float = 0.0
    cost: CostModel = field(default_factory=CostModel)
    migration: MigrationConfig = field(default_factory=MigrationConfig)
    seed: int = 0
    scale: float = 1.0
    out: Optional[Path] = None
    bucket_accesses: int = 10_000
    warmup_accesses: Optional[int] = None
    invariant_every_ticks: int = 0

    def __post_init__(self):
        if (self.workload is None) == (self.trace_path is None):
            raise ConfigError("exactly one of a workload spec or a trace path is required")
        if self.trace_path is not None and not Path(self.trace_path).exists():
            raise ConfigError(f"trace file {self.trace_path} does not exist")
        if self.fast_pages is not None and self.fast_fraction is not None:
            raise ConfigError("give fast_pages or fast_fraction, not both")
        if self.fast_pages is not None and self.fast_pages < 0:
            raise ConfigError("fast_pages must be >= 0")
        if self.fast_fraction is not None and not 0.0 <= self.fast_fraction:
            raise ConfigError("fast_fraction must be >= 0")
        if self.capacity_pages is not None and self.capacity_pages < 0:
            raise ConfigError("capacity_pages must be >= 0")

    def with_overrides(self, seed=None, scale=None, out=None) -> "RunConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if scale is not None:
            changes["scale"] = scale
        if out is not None:
            changes["out"] = Path(out)
        return dataclasses.replace(self, **changes) if changes else self

    def workload_spec(self) -> WorkloadSpec:
        """The generator spec with its seed drawn from the run seed."""
        return dataclasses.replace(self.workload, seed=substream_seed(self.seed, "workload"))

    def sampling(self) -> SamplingModel:
        return SamplingModel(self.sampling_rate, substream_seed(self.seed, "sampling"),
                             self.sampling_jitter)

    def resolve_fast_pages(self, touched_pages: int) -> int:
        if self.fast_pages is not None:
            return self.fast_pages
        frac = 1.0 if self.fast_fraction is None else self.fast_fraction
        return int(round(frac * touched_pages))

    def echo(self) -> dict:
        """Plain-data view of every effective setting, for report provenance."""
        d = {
            "seed": self.seed,
            "scale": self.scale,
            "strategy": {"kind": self.strategy.kind.value, "depth": self.strategy.depth,
                         "regions": self.strategy.regions},
            "fast_pages": self.fast_pages,
            "fast_fraction": self.fast_fraction,
            "capacity_pages": self.capacity_pages,
            "sampling": {"rate": self.sampling_rate, "jitter": self.sampling_jitter},
            "cost": dataclasses.asdict(self.cost),
            "migration": dataclasses.asdict(self.migration),
            "bucket_accesses": self.bucket_accesses,
            "warmup_accesses": self.warmup_accesses,
        }
        if self.trace_path is not None:
            d["trace"] = str(self.trace_path)
        else:
            w = dataclasses.asdict(self.workload_spec())
            w["archetype"] = self.workload.archetype.value
            w["contexts"] = [dataclasses.asdict(c) for c in self.workload.contexts]
            d["workload"] = w
        return d


# -- parsing --------------------------------------------------------------------


def _conv(section: str, key: str, raw: str, typ):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(float(raw)) if "e" in raw.lower() else int(raw.replace("_", ""))
        return typ(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None


def parse_contexts(raw: str) -> tuple:
    raw = raw.strip()
    if raw.lower() in ("", "btree", "default"):
        return WorkloadSpec().contexts
    out = []
    for part in raw.split(";"):
        part = part.strip()
        if not part:
            continue
        f = part.split(":")
        if len(f) not in (4, 5):
            raise ConfigError(f"context {part!r}: expected name:size:object_share:access_share[:skew]")
        try:
            out.append(ContextSpec(f[0], int(f[1]), float(f[2]), float(f[3]),
                                   float(f[4]) if len(f) == 5 else 0.0))
        except ValueError:
            raise ConfigError(f"context {part!r}: bad number") from None
    return tuple(out)


_WORKLOAD_TYPES = {
    f.name: f.type for f in dataclasses.fields(WorkloadSpec)
}


def parse_workload(sec) -> WorkloadSpec:
    kw = {}
    for key, raw in sec.items():
        if key == "archetype":
            try:
                kw[key] = Archetype(raw.strip())
            except ValueError:
                raise ConfigError(f"[workload] unknown archetype {raw!r}") from None
        elif key == "contexts":
            kw[key] = parse_contexts(raw)
        elif key == "trace":
            continue
        elif key == "seed":
            raise ConfigError("[workload] seed: the workload seed derives from the run seed")
        elif key in _WORKLOAD_TYPES:
            t = _WORKLOAD_TYPES[key]
            typ = float if "float" in str(t) else int
            kw[key] = _conv("workload", key, raw, typ)
        else:
            raise ConfigError(f"[workload] unknown key {key!r}")
    return WorkloadSpec(**kw)


_POLICY_KEYS = {
    "cooling_interval": int, "adapt_interval": int, "decay_factor": float,
    "max_counter": int, "per_epoch_decay": bool, "warm_disable_fraction": float,
    "momentum_interval": int, "frequency_interval": int, "momentum_hot_threshold": int,
    "scan_interval": int, "scan_window_pages": int,
}


def parse_policy(sec) -> PolicySpec:
    if "kind" not in sec:
        raise ConfigError("[policy] kind is required")
    try:
        kind = PolicyKind(sec["kind"].strip())
    except ValueError:
        names = ", ".join(k.value for k in PolicyKind)
        raise ConfigError(f"[policy] unknown kind {sec['kind']!r} (one of {names})") from None
    kw = {}
    for key, raw in sec.items():
        if key == "kind":
            continue
        if key == "decay_shape":
            try:
                kw[key] = DecayShape(raw.strip())
            except ValueError:
                raise ConfigError(f"[policy] unknown decay_shape {raw!r}") from None
        elif key == "trigger":
            try:
                kw[key] = Trigger(raw.strip())
            except ValueError:
                raise ConfigError(f"[policy] unknown trigger {raw!r}") from None
        elif key in _POLICY_KEYS:
            kw[key] = _conv("policy", key, raw, _POLICY_KEYS[key])
        else:
            raise ConfigError(f"[policy] unknown key {key!r}")
    try:
        return PolicySpec(kind, **kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[policy] {e}") from None


def parse_strategy(sec) -> GroupingStrategy:
    try:
        kind = Strategy(sec.get("strategy", "time").strip())
    except ValueError:
        raise ConfigError(f"[allocation] unknown strategy {sec.get('strategy')!r}") from None
    depth = _conv("allocation", "depth", sec.get("depth", "10"), int)
    regions = _conv("allocation", "regions", sec.get("regions", "32"), int)
    try:
        return GroupingStrategy(kind, depth, regions)
    except ValueError as e:
        raise ConfigError(f"[allocation] {e}") from None


_KNOWN = {
    "run": {"seed", "scale", "out", "bucket_accesses", "warmup_accesses", "invariant_every_ticks"},
    "tiers": {"fast_pages", "fast_fraction", "capacity_pages"},
    "sampling": {"rate", "jitter"},
    "cost": {"fast_latency_ns", "capacity_latency_ns", "migration_cost_ns"},
    "migration": {"tick_interval", "max_migrations_per_tick"},
    "allocation": {"strategy", "depth", "regions"},
}


def config_from_parser(cp: configparser.ConfigParser, base_dir: Path) -> RunConfig:
    for name, keys in _KNOWN.items():
        if cp.has_section(name):
            extra = set(cp[name]) - keys
            if extra:
                raise ConfigError(f"[{name}] unknown key(s): {', '.join(sorted(extra))}")
    if not cp.has_section("policy"):
        raise ConfigError("missing [policy] section")
    if not cp.has_section("workload"):
        raise ConfigError("missing [workload] section")

    def get(sec, key, typ, default=None):
        if cp.has_section(sec) and key in cp[sec]:
            return _conv(sec, key, cp[sec][key], typ)
        return default

    wsec = cp["workload"]
    trace_path = None
    workload = None
    if "trace" in wsec:
        if len(wsec) > 1:
            raise ConfigError("[workload] trace excludes generator keys")
        trace_path = (base_dir / wsec["trace"]).resolve()
    else:
        try:
            workload = parse_workload(wsec)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None
    out = get("run", "out", str)
    try:
        cost = CostModel(
            get("cost", "fast_latency_ns", float, 100.0),
            get("cost", "capacity_latency_ns", float, 300.0),
            get("cost", "migration_cost_ns", float, 50_000.0),
        )
        migration = MigrationConfig(get("migration", "tick_interval", int, 1000),
                                    get("migration", "max_migrations_per_tick", int))
        return RunConfig(
            policy=parse_policy(cp["policy"]),
            workload=workload,
            trace_path=trace_path,
            strategy=parse_strategy(cp["allocation"]) if cp.has_section("allocation")
            else GroupingStrategy(Strategy.TIME),
            fast_pages=get("tiers", "fast_pages", int),
            fast_fraction=get("tiers", "fast_fraction", float),
            capacity_pages=get("tiers", "capacity_pages", int),
            sampling_rate=get("sampling", "rate", int, 1),
            sampling_jitter=get("sampling", "jitter", float, 0.0),
            cost=cost,
            migration=migration,
            seed=get("run", "seed", int, 0),
            scale=get("run", "scale", float, 1.0),
            out=(base_dir / out) if out else None,
            bucket_accesses=get("run", "bucket_accesses", int, 10_000),
            warmup_accesses=get("run", "warmup_accesses", int),
            invariant_every_ticks=get("run", "invariant_every_ticks", int, 0),
        )
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))


def load_config(path) -> RunConfig:
    path = Path(path)
    cp = _parser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    return config_from_parser(cp, path.parent)


def load_workload_spec(path) -> tuple:
    """``(spec, run_seed)`` from a file with a ``[workload]`` and optional ``[run]`` section."""
    path = Path(path)
    cp = _parser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    if not cp.has_section("workload"):
        raise ConfigError(f"{path}: missing [workload] section")
    seed = _conv("run", "seed", cp["run"]["seed"], int) if cp.has_option("run", "seed") else 0
    try:
        return parse_workload(cp["workload"]), seed
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def load_matrix(path) -> list:
    """Rows of a comparison matrix: ``[row NAME]`` sections override the base sections.

    Keys in a row section are written ``section.key`` (e.g. ``policy.kind``).
    """
    path = Path(path)
    cp = _parser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    rows = [s for s in cp.sections() if s.startswith("row ")]
    if not rows:
        raise ConfigError(f"{path}: no [row NAME] sections")
    out = []
    for r in rows:
        sub = _parser()
        for s in cp.sections():
            if not s.startswith("row "):
                sub[s] = dict(cp[s])
        items = sorted(cp[r].items(), key=lambda kv: kv[0] != "policy.kind")
        for key, raw in items:
            if "." not in key:
                raise ConfigError(f"[{r}] {key}: expected section.key")
            sec, k = key.split(".", 1)
            if not sub.has_section(sec):
                sub.add_section(sec)
            if sec == "policy" and k == "kind":
                # a different policy kind starts from a clean policy section
                sub.remove_section("policy")
                sub.add_section("policy")
            sub[sec][k] = raw
        out.append((r[4:].strip(), config_from_parser(sub, path.parent)))
    return out
