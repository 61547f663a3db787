"""Run accounting, the latency cost model, and report/CSV emission."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .allocator import ResolvedTrace
from .core import TierKind


@dataclass(frozen=True)
class CostModel:
    fast_latency_ns: float = 100.0
    capacity_latency_ns: float = 300.0
    migration_cost_ns: float = 50_000.0

    def __post_init__(self):
        if not self.capacity_latency_ns >= self.fast_latency_ns > 0:
            raise ValueError("need capacity_latency_ns >= fast_latency_ns > 0")
        if self.migration_cost_ns < 0:
            raise ValueError("migration cost must be non-negative")

    @classmethod
    def cxl(cls) -> "CostModel":
        return cls(capacity_latency_ns=400.0)


@dataclass
class TimelineBucket:
    accesses: int = 0
    fast_hits: int = 0
    promotions: int = 0
    demotions: int = 0

    @property
    def hit_rate(self) -> float:
        return self.fast_hits / self.accesses if self.accesses else 0.0


@dataclass
class RunReport:
    total_accesses: int = 0
    fast_hits: int = 0
    promotions: int = 0
    demotions: int = 0
    revalidation_drops: int = 0
    blocked_promotions: int = 0
    thrash_page_count: int = 0
    warmup_accesses: int = 0
    migrations_after_warmup: int = 0
    bucket_accesses: int = 10_000
    timeline: list = field(default_factory=list)
    cost: CostModel = field(default_factory=CostModel)
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def hit_rate(self) -> float:
        return self.fast_hits / self.total_accesses if self.total_accesses else 0.0

    @property
    def migrations(self) -> int:
        return self.promotions + self.demotions

    @property
    def estimated_runtime_ns(self) -> float:
        return estimated_runtime(self, self.cost)

    def bucket(self, access_index: int) -> TimelineBucket:
        i = access_index // self.bucket_accesses
        while len(self.timeline) <= i:
            self.timeline.append(TimelineBucket())
        return self.timeline[i]

    def timeline_rows(self) -> list:
        cm = self.cost
        rows = []
        for i, b in enumerate(self.timeline):
            misses = b.accesses - b.fast_hits
            ns = (b.fast_hits * cm.fast_latency_ns + misses * cm.capacity_latency_ns
                  + (b.promotions + b.demotions) * cm.migration_cost_ns)
            rows.append({
                "bucket": i,
                "start_access": i * self.bucket_accesses,
                "accesses": b.accesses,
                "fast_hits": b.fast_hits,
                "hit_rate": b.hit_rate,
                "promotions": b.promotions,
                "demotions": b.demotions,
                # accesses per microsecond of modelled time
                "estimated_throughput": b.accesses * 1000.0 / ns if ns else 0.0,
            })
        return rows

    def check(self) -> None:
        """Timeline buckets must add up to the run totals."""
        sums = [sum(getattr(b, k) for b in self.timeline)
                for k in ("accesses", "fast_hits", "promotions", "demotions")]
        if sums != [self.total_accesses, self.fast_hits, self.promotions, self.demotions]:
            raise AssertionError(f"timeline sums {sums} disagree with totals")

    def to_dict(self) -> dict:
        return {
            "total_accesses": self.total_accesses,
            "fast_hits": self.fast_hits,
            "hit_rate": self.hit_rate,
            "promotions": self.promotions,
            "demotions": self.demotions,
            "migrations": self.migrations,
            "revalidation_drops": self.revalidation_drops,
            "blocked_promotions": self.blocked_promotions,
            "thrash_page_count": self.thrash_page_count,
            "warmup_accesses": self.warmup_accesses,
            "migrations_after_warmup": self.migrations_after_warmup,
            "estimated_runtime_ns": self.estimated_runtime_ns,
            "cost_model": asdict(self.cost),
            "config": self.config,
            "extra": self.extra,
            "bucket_accesses": self.bucket_accesses,
            "timeline": self.timeline_rows(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def record_access(report: RunReport, tier: TierKind) -> RunReport:
    """Count one access served from ``tier``."""
    b = report.bucket(report.total_accesses)
    report.total_accesses += 1
    b.accesses += 1
    if tier is TierKind.FAST:
        report.fast_hits += 1
        b.fast_hits += 1
    return report


def estimated_runtime(report: RunReport, cm: CostModel) -> float:
    misses = report.total_accesses - report.fast_hits
    return (report.fast_hits * cm.fast_latency_ns + misses * cm.capacity_latency_ns
            + report.migrations * cm.migration_cost_ns)


def heatmap(resolved: ResolvedTrace, address_buckets: int, time_buckets: int) -> np.ndarray:
    """Access counts per (page-address bucket, time bucket); rows are addresses."""
    if address_buckets < 1 or time_buckets < 1:
        raise ValueError("bucket counts must be >= 1")
    pages = resolved.access_pages()
    n = len(pages)
    out = np.zeros((address_buckets, time_buckets), dtype=np.int64)
    if n == 0:
        return out
    span = max(1, resolved.num_pages)
    rows = np.minimum(pages * address_buckets // span, address_buckets - 1)
    cols = np.minimum(np.arange(n, dtype=np.int64) * time_buckets // n, time_buckets - 1)
    np.add.at(out, (rows, cols), 1)
    return out


def access_cdf(resolved: ResolvedTrace) -> np.ndarray:
    """Cumulative access fraction over pages sorted hottest first (touched pages only)."""
    counts = resolved.page_access_counts()
    counts = np.sort(counts[counts > 0])[::-1]
    if len(counts) == 0:
        return np.zeros(0)
    return np.cumsum(counts) / counts.sum()


def working_set_size(resolved: ResolvedTrace, interval_accesses: int) -> float:
    """Mean distinct pages touched per interval of accesses, in bytes."""
    if interval_accesses < 1:
        raise ValueError("interval must be >= 1 access")
    pages = resolved.access_pages()
    if len(pages) == 0:
        return 0.0
    bucket = np.arange(len(pages), dtype=np.int64) // interval_accesses
    key = bucket * (int(pages.max()) + 1) + pages
    distinct = np.bincount(bucket[np.unique(key, return_index=True)[1]])
    return float(distinct.mean()) * resolved.page_size


# -- writers ------------------------------------------------------------------

TIMELINE_COLUMNS = ["bucket", "start_access", "accesses", "fast_hits", "hit_rate",
                    "promotions", "demotions", "estimated_throughput"]


def write_report(report: RunReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    with open(out / "timeline.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TIMELINE_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(report.timeline_rows())


def write_heatmap(matrix: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["address_bucket"] + [f"t{j}" for j in range(matrix.shape[1])])
        for i, row in enumerate(matrix.tolist()):
            w.writerow([i] + row)


def write_cdf(cdf: np.ndarray, path) -> None:
    n = len(cdf)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "page_fraction", "access_fraction"])
        for i, v in enumerate(cdf.tolist()):
            w.writerow([i + 1, (i + 1) / n, repr(v)])
