"""Shared domain types: tiers, pages, the hotness histogram and bin arithmetic."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from .hotness import CounterState

NUM_BINS = 16
MAX_BIN = NUM_BINS - 1

# Logical time is a plain int: count of observed samples since start.
LogicalTime = int
PageId = int


class InvariantError(RuntimeError):
    """Internal bookkeeping went inconsistent; the run cannot continue."""


class TierKind(enum.IntEnum):
    FAST = 0
    CAPACITY = 1


class QueueKind(enum.IntEnum):
    PROMOTION = 0
    DEMOTION = 1


@dataclass
class Tier:
    kind: TierKind
    capacity_pages: int
    resident_pages: int = 0

    def __post_init__(self):
        if self.capacity_pages < 0:
            raise ValueError("tier capacity must be >= 0")

    @property
    def free_pages(self) -> int:
        return self.capacity_pages - self.resident_pages

    @property
    def full(self) -> bool:
        return self.resident_pages >= self.capacity_pages


@dataclass(slots=True)
class Page:
    id: PageId
    tier: TierKind
    counter: "CounterState"
    bin: int = 0
    queued: Optional[QueueKind] = None
    last_access: int = 0
    live: bool = True
    # migration bookkeeping for the thrash metric
    last_move: Optional[QueueKind] = None
    direction_changes: int = 0


def bin_index(value: float) -> int:
    """Histogram bin for a counter value: floor(log2(value)) clamped to [0, 15]."""
    if value < 1:
        return 0
    b = int(value).bit_length() - 1
    return b if b < MAX_BIN else MAX_BIN


@dataclass
class HotnessHistogram:
    """System-wide page counts per log2 bin, plus the current thresholds.

    ``fast_bins`` mirrors ``bins`` restricted to fast-tier residents; the
    warm-disable rule needs it at every threshold adaptation.
    """

    bins: list = field(default_factory=lambda: [0] * NUM_BINS)
    fast_bins: list = field(default_factory=lambda: [0] * NUM_BINS)
    t_hot: int = 0
    t_warm: Optional[int] = None

    @property
    def total(self) -> int:
        return sum(self.bins)

    def add(self, b: int, fast: bool = False) -> None:
        self.bins[b] += 1
        if fast:
            self.fast_bins[b] += 1

    def remove(self, b: int, fast: bool = False) -> None:
        if self.bins[b] < 1 or (fast and self.fast_bins[b] < 1):
            raise InvariantError(f"histogram underflow removing page from bin {b}: {self.bins}")
        self.bins[b] -= 1
        if fast:
            self.fast_bins[b] -= 1

    def move(self, old_bin: int, new_bin: int, fast: bool = False) -> None:
        """Move one page between bins; total is unchanged."""
        if old_bin == new_bin:
            return
        self.remove(old_bin, fast)
        self.add(new_bin, fast)

    def set_tier(self, b: int, fast: bool) -> None:
        """Track a tier change for a page sitting in bin ``b``."""
        if fast:
            self.fast_bins[b] += 1
        else:
            if self.fast_bins[b] < 1:
                raise InvariantError(f"fast histogram underflow at bin {b}")
            self.fast_bins[b] -= 1


def histogram_move(h: HotnessHistogram, old_bin: int, new_bin: int) -> HotnessHistogram:
    h.move(old_bin, new_bin)
    return h
