"""Trace-driven simulation loop tying placement, policy, migration and metrics together."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .allocator import CLOSE, OP_ACCESS, OPEN, ResolvedTrace
from .core import InvariantError, Page, QueueKind, Tier, TierKind
from .metrics import CostModel, RunReport
from .migration import MigrationConfig, MigrationQueues, MigrationStats, enqueue, migrate_tick
from .policies import PolicySpec, make_policy
from .workload import SamplingModel, sample_mask


class CapacityError(ValueError):
    """Both tiers are full when a new page has to be placed."""


@dataclass
class SimConfig:
    policy: PolicySpec
    fast_pages: int
    capacity_pages: Optional[int] = None  # None: large enough for every page
    sampling: SamplingModel = field(default_factory=SamplingModel)
    migration: MigrationConfig = field(default_factory=MigrationConfig)
    cost: CostModel = field(default_factory=CostModel)
    scale: float = 1.0
    bucket_accesses: int = 10_000
    warmup_accesses: Optional[int] = None  # None: a tenth of the run
    invariant_every_ticks: int = 0  # 0: check only at the end

    def __post_init__(self):
        if self.fast_pages < 0 or (self.capacity_pages is not None and self.capacity_pages < 0):
            raise ValueError("tier capacities must be >= 0")
        if self.bucket_accesses < 1:
            raise ValueError("bucket size must be >= 1 access")
        if self.scale <= 0:
            raise ValueError("scale must be positive")


class Simulation:
    def __init__(self, resolved: ResolvedTrace, cfg: SimConfig):
        self.resolved = resolved
        self.cfg = cfg
        cap = cfg.capacity_pages if cfg.capacity_pages is not None else max(1, resolved.num_pages)
        self.fast = Tier(TierKind.FAST, cfg.fast_pages)
        self.capacity = Tier(TierKind.CAPACITY, cap)
        self.pages: list = [None] * resolved.num_pages
        self.queues = MigrationQueues()
        self.policy = make_policy(cfg.policy, self.pages, self.fast, self.capacity, self.queues,
                                  cfg.scale, resolved.page_size)
        self.in_fast = np.zeros(max(1, resolved.num_pages), dtype=bool)
        self.t = 0
        self.ticks = 0
        self.closed_thrash = 0
        self.stats = MigrationStats()
        n = resolved.num_accesses
        warm = cfg.warmup_accesses if cfg.warmup_accesses is not None else n // 10
        self.report = RunReport(bucket_accesses=cfg.bucket_accesses, warmup_accesses=warm,
                                cost=cfg.cost)

    def _on_move(self, page: Page) -> None:
        self.in_fast[page.id] = page.tier is TierKind.FAST

    def _open(self, pid: int, clock: int) -> None:
        if self.fast.resident_pages < self.fast.capacity_pages:
            tier = self.fast
        elif self.capacity.resident_pages < self.capacity.capacity_pages:
            tier = self.capacity
        else:
            raise CapacityError(f"no room for page {pid}: both tiers are full")
        tier.resident_pages += 1
        page = Page(id=pid, tier=tier.kind, counter=self.policy.new_counter(self.t),
                    last_access=clock)
        self.pages[pid] = page
        self.in_fast[pid] = tier.kind is TierKind.FAST
        self.policy.register(page, self.t)

    def _close(self, pid: int) -> None:
        page = self.pages[pid]
        if page is None or not page.live:
            raise InvariantError(f"closing page {pid} which is not open")
        self.policy.unregister(page)
        page.live = False
        if page.direction_changes >= 2:
            self.closed_thrash += 1
        (self.fast if page.tier is TierKind.FAST else self.capacity).resident_pages -= 1
        self.in_fast[pid] = False
        self.pages[pid] = None

    def _tick(self, access_index: int) -> None:
        for kind, pid in self.policy.on_tick(self.t):
            page = self.pages[pid]
            if page is not None:
                enqueue(self.queues, page, kind)
        s = migrate_tick(self.queues, self.pages, self.fast, self.capacity, self.policy, self.t,
                         self.cfg.migration.max_migrations_per_tick, self._on_move)
        self.stats += s
        moved = s.promotions + s.demotions
        if moved:
            b = self.report.bucket(access_index)
            b.promotions += s.promotions
            b.demotions += s.demotions
            if access_index >= self.report.warmup_accesses:
                self.report.migrations_after_warmup += moved
        self.ticks += 1
        every = self.cfg.invariant_every_ticks
        if every and self.ticks % every == 0:
            self.check_invariants()

    def _access_run(self, pages: np.ndarray, clock: int) -> None:
        """Replay a run of page accesses starting at global access index ``clock``."""
        tick = self.cfg.migration.tick_interval
        bsize = self.cfg.bucket_accesses
        report = self.report
        policy = self.policy
        queues = self.queues
        page_objs = self.pages
        mask = sample_mask(self.cfg.sampling, len(pages), clock)
        i = 0
        n = len(pages)
        while i < n:
            # chunk ends at the next tick or bucket boundary
            g = clock + i
            end = min(n, i + tick - g % tick, i + bsize - g % bsize)
            chunk = pages[i:end]
            hits = int(np.count_nonzero(self.in_fast[chunk]))
            b = report.bucket(g)
            b.accesses += len(chunk)
            b.fast_hits += hits
            report.total_accesses += len(chunk)
            report.fast_hits += hits
            rev = chunk[::-1]
            uniq, first = np.unique(rev, return_index=True)
            for pid, last in zip(uniq.tolist(), (g + len(chunk) - 1 - first).tolist()):
                page_objs[pid].last_access = last
            for j in np.flatnonzero(mask[i:end]).tolist():
                self.t += 1
                page = page_objs[int(chunk[j])]
                for kind, pid in policy.on_sample(page, self.t):
                    enqueue(queues, page_objs[pid], kind)
            i = end
            if (clock + i) % tick == 0:
                self._tick(clock + i - 1)

    def run(self) -> RunReport:
        r = self.resolved
        op, pg = r.op, r.page
        boundaries = np.flatnonzero(op != OP_ACCESS)
        clock = 0
        prev = 0
        for k in boundaries.tolist() + [len(op)]:
            if k > prev:
                self._access_run(pg[prev:k], clock)
                clock += k - prev
            if k < len(op):
                if op[k] == OPEN:
                    self._open(int(pg[k]), clock)
                elif op[k] == CLOSE:
                    self._close(int(pg[k]))
            prev = k + 1
        self.check_invariants()
        return self._finish()

    def check_invariants(self) -> None:
        live = [p for p in self.pages if p is not None and p.live]
        nf = sum(1 for p in live if p.tier is TierKind.FAST)
        if nf != self.fast.resident_pages or len(live) - nf != self.capacity.resident_pages:
            raise InvariantError("tier occupancy disagrees with page residency")
        if self.fast.resident_pages > self.fast.capacity_pages:
            raise InvariantError("fast tier over capacity")
        if self.capacity.resident_pages > self.capacity.capacity_pages:
            raise InvariantError("capacity tier over capacity")
        for p in live:
            if p.queued is QueueKind.PROMOTION and p.tier is not TierKind.CAPACITY or (
                p.queued is QueueKind.DEMOTION and p.tier is not TierKind.FAST
            ):
                raise InvariantError(f"page {p.id} queued in the wrong direction")
        self.policy.check_invariants()

    def _finish(self) -> RunReport:
        rep = self.report
        rep.promotions = self.stats.promotions
        rep.demotions = self.stats.demotions
        rep.revalidation_drops = self.stats.drops
        rep.blocked_promotions = self.stats.blocked
        rep.thrash_page_count = self.closed_thrash + sum(
            1 for p in self.pages if p is not None and p.direction_changes >= 2
        )
        rep.check()
        return rep


def simulate(resolved: ResolvedTrace, cfg: SimConfig) -> RunReport:
    return Simulation(resolved, cfg).run()
