"""Object-to-page placement under time, size, context and popularity grouping.

``PlacementMap`` is a small page-granular heap model: it hands out
(page, offset) slots and reports which pages open and close.  ``resolve``
replays a trace through it and turns object accesses into page accesses.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .workload import ACCESS, ALLOC, FREE, Trace, TraceError

OPEN, CLOSE = 1, 2  # op codes next to ACCESS (=2 in traces, remapped to 0 here)
OP_ACCESS = 0

TIME_ALIGN = 16
ORACLE_ALIGN = 8


class AllocationError(ValueError):
    pass


def _event_error(index: int, msg: str) -> TraceError:
    err = TraceError(f"event {index}: {msg}")
    err.event = index
    return err


class Strategy(enum.Enum):
    TIME = "time"
    SIZE = "size"
    CONTEXT = "context"
    ORACLE = "oracle"


@dataclass(frozen=True)
class GroupingStrategy:
    kind: Strategy
    depth: int = 10
    regions: int = 32

    def __post_init__(self):
        if self.depth < 1 or self.regions < 1:
            raise ValueError("context depth and region count must be >= 1")

    @property
    def label(self) -> str:
        if self.kind is Strategy.CONTEXT:
            return f"context(d={self.depth},r={self.regions})"
        return self.kind.value


def size_classes(page_size: int = 4096, smallest: int = 8) -> list:
    """Four geometric sub-classes per power of two, from ``smallest`` up to the page size."""
    out = []
    p = smallest
    while p < page_size:
        for q in range(4):
            c = p + q * p // 4
            if c <= page_size and (not out or c > out[-1]):
                out.append(c)
        p *= 2
    if not out or out[-1] != page_size:
        out.append(page_size)
    return out


def context_region(frames: Sequence[int], depth: int, regions: int) -> int:
    """Region for an allocation site: keyed hash of the innermost ``depth`` frames."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    head = tuple(frames[:depth])
    digest = hashlib.blake2b(struct.pack(f"<{len(head)}Q", *head), digest_size=8).digest()
    return int.from_bytes(digest, "little") % regions


class PlacementMap:
    """Live-object placement plus page bookkeeping.

    ``pending`` collects ``(op, page)`` tuples for pages opened and closed
    since the last drain, in order.
    """

    def __init__(
        self,
        strategy: GroupingStrategy,
        page_size: int = 4096,
        arena_pages: int = 1 << 22,
        classes: Optional[list] = None,
        ranking: Optional[Sequence[int]] = None,
        sizes: Optional[dict] = None,
    ):
        self.strategy = strategy
        self.page_size = page_size
        self.arena_pages = arena_pages
        self.classes = classes or size_classes(page_size)
        self._class_arr = np.asarray(self.classes)
        self.objects: dict = {}  # id -> (page, offset, size, bin key or None, npages)
        self.page_live: dict = {}
        self.page_gen: dict = {}
        self.page_bytes: dict = {}
        self._free_pages: list = []
        self._next_page = 0
        self._bins: dict = {}
        self._bump_page: Optional[int] = None
        self._bump_fill = 0
        self.pending: list = []
        self.errors = 0
        self._region_cache: dict = {}
        self._layout: dict = {}
        self._layout_pages: dict = {}
        if strategy.kind is Strategy.ORACLE:
            if ranking is None or sizes is None:
                raise AllocationError("popularity placement needs a ranking and object sizes")
            self._plan_layout(ranking, sizes)

    # -- pages -----------------------------------------------------------
    def _open_page(self) -> int:
        if self._free_pages:
            p = self._free_pages.pop()
        elif self._next_page < self.arena_pages:
            p = self._next_page
            self._next_page += 1
        else:
            raise AllocationError("simulation arena exhausted")
        self.page_live[p] = 0
        self.page_bytes[p] = 0
        self.pending.append((OPEN, p))
        return p

    def _open_run(self, n: int) -> int:
        if self._next_page + n > self.arena_pages:
            raise AllocationError("simulation arena exhausted")
        first = self._next_page
        self._next_page += n
        for p in range(first, first + n):
            self.page_live[p] = 0
            self.page_bytes[p] = 0
            self.pending.append((OPEN, p))
        return first

    def _close_page(self, p: int) -> None:
        del self.page_live[p]
        del self.page_bytes[p]
        self.page_gen[p] = self.page_gen.get(p, 0) + 1
        self._free_pages.append(p)
        self.pending.append((CLOSE, p))
        if p == self._bump_page:
            self._bump_page = None

    @property
    def occupied_pages(self) -> int:
        return len(self.page_live)

    def fragmentation(self) -> float:
        """Live bytes over bytes of occupied pages (1.0 means perfectly packed)."""
        if not self.page_live:
            return 1.0
        return sum(self.page_bytes.values()) / (len(self.page_live) * self.page_size)

    def drain(self) -> list:
        out, self.pending = self.pending, []
        return out

    # -- strategies ------------------------------------------------------
    def size_class(self, size: int) -> int:
        i = int(np.searchsorted(self._class_arr, size, side="left"))
        return self.classes[i]

    def region_of(self, frames: tuple) -> int:
        s = self.strategy
        if s.kind is not Strategy.CONTEXT:
            return 0
        r = self._region_cache.get(frames)
        if r is None:
            r = self._region_cache[frames] = context_region(frames, s.depth, s.regions)
        return r

    def _slot_from_bin(self, key, slot_size: int) -> tuple:
        stack = self._bins.setdefault(key, [])
        gen = self.page_gen
        while stack:
            p, off, g = stack.pop()
            if gen.get(p, 0) == g and p in self.page_live:
                return p, off
        p = self._open_page()
        g = gen.get(p, 0)
        slots = self.page_size // slot_size
        stack.extend((p, i * slot_size, g) for i in range(slots - 1, 0, -1))
        return p, 0

    def alloc(self, obj: int, size: int, frames: tuple = ()) -> tuple:
        """Place object ``obj``; returns ``(page, offset)``."""
        if size <= 0:
            raise AllocationError(f"object {obj}: size must be positive")
        if obj in self.objects:
            raise AllocationError(f"object {obj} is already live")
        ps = self.page_size
        kind = self.strategy.kind
        if kind is Strategy.ORACLE:
            return self._alloc_oracle(obj, size)
        if size > ps:
            n = -(-size // ps)
            first = self._open_run(n)
            for p in range(first, first + n):
                self.page_live[p] = 1
                self.page_bytes[p] = min(ps, size - (p - first) * ps)
            self.objects[obj] = (first, 0, size, None, n)
            return first, 0
        if kind is Strategy.TIME:
            slot = -(-size // TIME_ALIGN) * TIME_ALIGN
            key = ("t", slot)
            p = off = None
            stack = self._bins.get(key)
            while stack:
                q, o, g = stack.pop()
                if self.page_gen.get(q, 0) == g and q in self.page_live:
                    p, off = q, o
                    break
            if p is None:
                if self._bump_page is None or self._bump_fill + slot > ps:
                    self._bump_page = self._open_page()
                    self._bump_fill = 0
                p, off = self._bump_page, self._bump_fill
                self._bump_fill += slot
        else:
            slot = self.size_class(size)
            key = (self.region_of(tuple(frames)), slot)
            p, off = self._slot_from_bin(key, slot)
        self.page_live[p] += 1
        self.page_bytes[p] += size
        self.objects[obj] = (p, off, size, key, 1)
        return p, off

    def free(self, obj: int) -> bool:
        """Release ``obj``; unknown ids are counted as errors and ignored."""
        rec = self.objects.pop(obj, None)
        if rec is None:
            self.errors += 1
            return False
        p, off, size, key, n = rec
        if self.strategy.kind is Strategy.ORACLE:
            self._free_oracle(obj, p, size)
            return True
        if n > 1 or key is None:
            for q in range(p, p + n):
                self._close_page(q)
            return True
        self.page_live[p] -= 1
        self.page_bytes[p] -= size
        if self.page_live[p] == 0:
            self._close_page(p)
        else:
            self._bins.setdefault(key, []).append((p, off, self.page_gen.get(p, 0)))
        return True

    # -- popularity oracle -------------------------------------------------
    def _plan_layout(self, ranking: Sequence[int], sizes: dict) -> None:
        """Pack objects in rank order into consecutive layout pages."""
        ps = self.page_size
        lp = 0
        fill = 0
        for obj in ranking:
            size = int(sizes[obj])
            if size > ps:
                if fill:
                    lp += 1
                    fill = 0
                n = -(-size // ps)
                self._layout[obj] = (lp, 0, n)
                lp += n
                continue
            slot = -(-size // ORACLE_ALIGN) * ORACLE_ALIGN
            if fill + slot > ps:
                lp += 1
                fill = 0
            self._layout[obj] = (lp, fill, 1)
            fill += slot

    def _alloc_oracle(self, obj: int, size: int) -> tuple:
        if obj not in self._layout:
            raise AllocationError(f"object {obj} missing from the popularity ranking")
        lp, off, n = self._layout[obj]
        pages = []
        for k in range(n):
            real = self._layout_pages.get(lp + k)
            if real is None:
                real = self._layout_pages[lp + k] = self._open_page()
            pages.append(real)
            self.page_live[real] += 1
            self.page_bytes[real] += min(self.page_size, size - k * self.page_size) if n > 1 else size
        self.objects[obj] = (pages[0], off, size, tuple(lp + k for k in range(n)), n)
        return pages[0], off

    def _free_oracle(self, obj: int, first: int, size: int) -> None:
        lp, _, n = self._layout[obj]
        for k in range(n):
            real = self._layout_pages[lp + k]
            self.page_live[real] -= 1
            self.page_bytes[real] -= min(self.page_size, size - k * self.page_size) if n > 1 else size
            if self.page_live[real] == 0:
                self._close_page(real)
                del self._layout_pages[lp + k]

    def object_pages(self, obj: int) -> list:
        """Pages currently backing ``obj`` (in order)."""
        p, _, _, key, n = self.objects[obj]
        if self.strategy.kind is Strategy.ORACLE and n > 1:
            return [self._layout_pages[lp] for lp in key]
        return list(range(p, p + n))


def oracle_ranking(trace: Trace) -> list:
    """Allocated objects by descending access count, ties broken by id."""
    alloc_ids = np.unique(trace.ids[trace.kinds == ALLOC])
    acc = trace.ids[trace.kinds == ACCESS]
    if len(alloc_ids) == 0:
        return []
    counts = np.zeros(int(alloc_ids.max()) + 1, dtype=np.int64)
    if len(acc):
        valid = acc[acc < len(counts)]
        counts += np.bincount(valid, minlength=len(counts))
    c = counts[alloc_ids]
    order = np.lexsort((alloc_ids, -c))
    return alloc_ids[order].tolist()


@dataclass
class ResolvedTrace:
    """Page-level replay stream: ``op`` is OP_ACCESS, OPEN or CLOSE for ``page``."""

    op: np.ndarray
    page: np.ndarray
    num_pages: int
    page_size: int
    strategy: GroupingStrategy
    fingerprint: str
    peak_pages: int
    fragmentation: float
    alloc_errors: int

    @property
    def num_accesses(self) -> int:
        return int(np.count_nonzero(self.op == OP_ACCESS))

    def access_pages(self) -> np.ndarray:
        return self.page[self.op == OP_ACCESS]

    def page_access_counts(self) -> np.ndarray:
        return np.bincount(self.access_pages(), minlength=self.num_pages)


def resolve(
    trace: Trace,
    strategy: GroupingStrategy,
    arena_pages: int = 1 << 22,
    classes: Optional[list] = None,
) -> ResolvedTrace:
    """Replay ``trace`` through a placement map; validate liveness on the way."""
    ps = trace.page_size
    kinds = trace.kinds
    ids = trace.ids
    args = trace.args
    n_ids = int(ids.max()) + 1 if len(ids) else 0
    ranking = sizes = None
    if strategy.kind is Strategy.ORACLE:
        ranking = oracle_ranking(trace)
        amask = kinds == ALLOC
        sizes = dict(zip(ids[amask].tolist(), args[amask].tolist()))
    pm = PlacementMap(strategy, ps, arena_pages, classes, ranking, sizes)

    base = np.full(n_ids, -1, dtype=np.int64)  # page byte address of offset 0, or -1 if dead
    size_of = np.zeros(n_ids, dtype=np.int64)
    contig = np.ones(n_ids, dtype=bool)
    split_pages: dict = {}

    ops, pgs = [], []
    peak = 0
    events = np.flatnonzero(kinds != ACCESS)
    prev = 0

    def flush(lo: int, hi: int) -> None:
        if hi <= lo:
            return
        o = ids[lo:hi]
        if (o >= n_ids).any() or (base[o] < 0).any():
            bad = lo + int(np.flatnonzero((o >= n_ids) | (base[np.minimum(o, n_ids - 1)] < 0))[0])
            raise _event_error(bad, f"access to object {int(ids[bad])} which is not live")
        off = args[lo:hi]
        if (off >= size_of[o]).any():
            bad = lo + int(np.flatnonzero(off >= size_of[o])[0])
            raise _event_error(bad, f"offset {int(args[bad])} beyond object {int(ids[bad])}")
        addr = base[o] + off
        page = addr // ps
        nc = ~contig[o]
        if nc.any():
            for j in np.flatnonzero(nc).tolist():
                page[j] = split_pages[int(o[j])][int(off[j]) // ps]
        ops.append(np.zeros(hi - lo, dtype=np.uint8))
        pgs.append(page)

    def emit_pending() -> None:
        pend = pm.drain()
        if pend:
            ops.append(np.fromiter((k for k, _ in pend), dtype=np.uint8, count=len(pend)))
            pgs.append(np.fromiter((p for _, p in pend), dtype=np.int64, count=len(pend)))

    for i in events.tolist():
        flush(prev, i)
        prev = i + 1
        o = int(ids[i])
        if kinds[i] == ALLOC:
            if base[o] >= 0:
                raise _event_error(i, f"object {o} allocated twice")
            p, off = pm.alloc(o, int(args[i]), trace.contexts[int(trace.ctx[i])])
            base[o] = p * ps + off
            size_of[o] = args[i]
            if pm.objects[o][4] > 1:
                pages = pm.object_pages(o)
                if pages != list(range(pages[0], pages[0] + len(pages))):
                    contig[o] = False
                    split_pages[o] = pages
            emit_pending()
            if pm.occupied_pages > peak:
                peak = pm.occupied_pages
        elif kinds[i] == FREE:
            if o >= n_ids or base[o] < 0:
                pm.errors += 1
                raise _event_error(i, f"free of object {o} which is not live")
            pm.free(o)
            base[o] = -1
            contig[o] = True
            split_pages.pop(o, None)
            emit_pending()
        else:
            raise _event_error(i, f"unknown record kind {int(kinds[i])}")
    flush(prev, len(kinds))

    op = np.concatenate(ops) if ops else np.zeros(0, dtype=np.uint8)
    page = np.concatenate(pgs).astype(np.int64) if pgs else np.zeros(0, dtype=np.int64)
    return ResolvedTrace(
        op=op,
        page=page,
        num_pages=pm._next_page,
        page_size=ps,
        strategy=strategy,
        fingerprint=trace.fingerprint(),
        peak_pages=peak,
        fragmentation=pm.fragmentation(),
        alloc_errors=pm.errors,
    )


def pages_for_access_fraction(resolved: ResolvedTrace, fraction: float) -> int:
    """Fewest pages (hottest first) that together receive ``fraction`` of all accesses."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    counts = np.sort(resolved.page_access_counts())[::-1]
    total = int(counts.sum())
    if total == 0:
        return 0
    cum = np.cumsum(counts)
    need = fraction * total
    # integer cumulative counts: tolerate float error in fraction * total
    return int(np.searchsorted(cum, need - 1e-9 * total, side="left")) + 1
