"""Promotion/demotion queues and the periodic migration tick."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .core import InvariantError, LogicalTime, Page, QueueKind, Tier, TierKind


@dataclass
class MigrationConfig:
    # wall-clock analogue of the background migration period, in trace accesses
    tick_interval: int = 1000
    max_migrations_per_tick: Optional[int] = None

    def __post_init__(self):
        if self.tick_interval < 1:
            raise ValueError("tick interval must be >= 1")


@dataclass
class MigrationQueues:
    promotion: deque = field(default_factory=deque)
    demotion: deque = field(default_factory=deque)

    def __len__(self):
        return len(self.promotion) + len(self.demotion)


@dataclass
class MigrationStats:
    promotions: int = 0
    demotions: int = 0
    drops: int = 0
    blocked: int = 0

    def __iadd__(self, other: "MigrationStats"):
        self.promotions += other.promotions
        self.demotions += other.demotions
        self.drops += other.drops
        self.blocked += other.blocked
        return self


def enqueue(q: MigrationQueues, page: Page, kind: QueueKind) -> bool:
    """Queue a page; returns False when the intent is stale or a duplicate."""
    if page.queued is not None or not page.live:
        return False
    if kind is QueueKind.PROMOTION:
        if page.tier is not TierKind.CAPACITY:
            return False
        q.promotion.append(page.id)
    else:
        if page.tier is not TierKind.FAST:
            return False
        q.demotion.append(page.id)
    page.queued = kind
    return True


def move_page(page: Page, dest: TierKind, fast: Tier, capacity: Tier, policy, on_move=None) -> None:
    src_tier, dst_tier = (capacity, fast) if dest is TierKind.FAST else (fast, capacity)
    if dst_tier.resident_pages >= dst_tier.capacity_pages:
        raise InvariantError(f"moving page {page.id} into a full {dest.name} tier")
    src_tier.resident_pages -= 1
    dst_tier.resident_pages += 1
    page.tier = dest
    policy.on_tier_change(page)
    direction = QueueKind.PROMOTION if dest is TierKind.FAST else QueueKind.DEMOTION
    if page.last_move is not None and page.last_move is not direction:
        page.direction_changes += 1
    page.last_move = direction
    if on_move is not None:
        on_move(page)


def migrate_tick(
    q: MigrationQueues,
    pages: list,
    fast: Tier,
    capacity: Tier,
    policy,
    t: LogicalTime,
    max_moves: Optional[int] = None,
    on_move=None,
) -> MigrationStats:
    """Drain both queues, re-validating every page against current thresholds.

    Promotions into a full fast tier first evict the coldest still-valid
    demotion candidate; without one, the promotion waits for a later tick.
    Remaining valid demotion candidates are demoted afterwards.
    """
    stats = MigrationStats()
    budget = max_moves if max_moves is not None else float("inf")

    victims = []
    while q.demotion:
        page = pages[q.demotion.popleft()]
        if page is None or not page.live:
            continue
        page.queued = None
        if page.tier is TierKind.FAST and policy.revalidate(page, QueueKind.DEMOTION, t):
            victims.append(page)
        else:
            stats.drops += 1
    victims.sort(key=lambda p: policy.coldness(p, t))
    vi = 0

    while q.promotion and budget > 0:
        pid = q.promotion.popleft()
        page = pages[pid]
        if page is None or not page.live:
            continue
        page.queued = None
        if page.tier is not TierKind.CAPACITY or not policy.revalidate(page, QueueKind.PROMOTION, t):
            stats.drops += 1
            continue
        if fast.resident_pages >= fast.capacity_pages:
            if vi < len(victims) and budget >= 2 and fast.capacity_pages > 0:
                move_page(victims[vi], TierKind.CAPACITY, fast, capacity, policy, on_move)
                vi += 1
                stats.demotions += 1
                budget -= 1
            else:
                page.queued = QueueKind.PROMOTION
                q.promotion.appendleft(pid)
                stats.blocked += 1
                break
        move_page(page, TierKind.FAST, fast, capacity, policy, on_move)
        stats.promotions += 1
        budget -= 1

    for v in victims[vi:]:
        if budget > 0 and capacity.resident_pages < capacity.capacity_pages:
            move_page(v, TierKind.CAPACITY, fast, capacity, policy, on_move)
            stats.demotions += 1
            budget -= 1
        else:
            v.queued = QueueKind.DEMOTION
            q.demotion.append(v.id)

    if fast.resident_pages > fast.capacity_pages or capacity.resident_pages > capacity.capacity_pages:
        raise InvariantError("tier occupancy exceeds capacity after migration tick")
    return stats
