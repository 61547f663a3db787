"""Page classification policies.

A policy sees sampled accesses (``on_sample``) and periodic ticks
(``on_tick``) and answers with migration intents: ``(QueueKind, page_id)``
pairs.  The migration engine calls back into ``revalidate`` and
``coldness`` when it drains the queues.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .core import (
    HotnessHistogram,
    LogicalTime,
    Page,
    QueueKind,
    Tier,
    TierKind,
    bin_index,
)
from .hotness import (
    CoolingConfig,
    CounterState,
    DecayShape,
    Temperature,
    ThresholdConfig,
    Trigger,
    fold_periods,
    adapt_thresholds,
    classify,
    record_access_sawtooth,
    record_access_smooth,
    refresh_smooth,
)

Intent = tuple  # (QueueKind, PageId)

# Sample-denominated defaults before interval scaling.
ADAPT_INTERVAL = 100_000
COOLING_DEFAULT = 2_000_000
COOLING_QUICK = 120_000
MOMENTUM_INTERVAL = 500_000
FREQUENCY_INTERVAL = 80_000_000
NUMA_SCAN_INTERVAL = 500_000
NUMA_SCAN_BYTES = 256 * 1024 * 1024


class PolicyKind(enum.Enum):
    SAWTOOTH_DEFAULT = "sawtooth-default"
    SAWTOOTH_QC = "sawtooth-qc"
    SMOOTH = "smooth"
    TWO_INTERVAL = "two-interval"
    NUMA_HINT_ONCE = "numa-once"
    NUMA_HINT_TWICE = "numa-twice"
    NUMA_HINT_NO_DEMOTION = "numa-nodemotion"


class Demotion(enum.Enum):
    LRU_WATERMARK = "lru"
    NONE = "none"


@dataclass
class NumaHintConfig:
    scan_window_pages: int
    scan_interval_samples: int
    hot_fault_threshold: int = 1
    demotion: Demotion = Demotion.LRU_WATERMARK
    high_watermark: float = 0.95
    low_watermark: float = 0.90

    def __post_init__(self):
        if self.hot_fault_threshold not in (1, 2):
            raise ValueError("hot_fault_threshold must be 1 or 2")
        if self.scan_window_pages < 1 or self.scan_interval_samples < 1:
            raise ValueError("scan window and interval must be >= 1")


@dataclass
class TwoIntervalConfig:
    momentum_interval_samples: int
    frequency_interval_samples: int
    momentum_hot_threshold: int = 3

    def __post_init__(self):
        if self.momentum_interval_samples >= self.frequency_interval_samples:
            raise ValueError("momentum interval must be shorter than the frequency interval")


def scaled(samples: int, scale: float) -> int:
    return max(1, int(round(samples * scale)))


@dataclass
class PolicySpec:
    """Everything needed to build a policy; unset intervals take scaled defaults."""

    kind: PolicyKind
    cooling_interval: Optional[int] = None
    adapt_interval: Optional[int] = None
    decay_factor: float = 0.5
    decay_shape: Optional[DecayShape] = None
    trigger: Trigger = Trigger.EVERY_SAMPLES
    max_counter: int = 1024
    per_epoch_decay: bool = True
    warm_disable_fraction: float = 0.75
    momentum_interval: Optional[int] = None
    frequency_interval: Optional[int] = None
    momentum_hot_threshold: int = 3
    scan_interval: Optional[int] = None
    scan_window_pages: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def resolved(self, scale: float, page_size: int) -> dict:
        """Concrete parameter values, as echoed into reports."""
        k = self.kind
        out = {"kind": k.value, "scale": scale}
        if k in (PolicyKind.SAWTOOTH_DEFAULT, PolicyKind.SAWTOOTH_QC, PolicyKind.SMOOTH):
            default_cp = COOLING_DEFAULT if k is PolicyKind.SAWTOOTH_DEFAULT else COOLING_QUICK
            cp = self.cooling_interval or scaled(default_cp, scale)
            if self.adapt_interval:
                adapt = self.adapt_interval
            elif k is PolicyKind.SMOOTH:
                adapt = cp
            else:
                adapt = scaled(ADAPT_INTERVAL, scale)
            shape = self.decay_shape or (
                DecayShape.LINEAR_SMOOTH if k is PolicyKind.SMOOTH else DecayShape.STEP
            )
            out.update(
                cooling_interval=cp,
                adapt_interval=adapt,
                decay_factor=self.decay_factor,
                decay_shape=shape.value,
                trigger=self.trigger.value,
                max_counter=self.max_counter,
                per_epoch_decay=self.per_epoch_decay,
                warm_disable_fraction=self.warm_disable_fraction,
            )
        elif k is PolicyKind.TWO_INTERVAL:
            out.update(
                momentum_interval=self.momentum_interval or scaled(MOMENTUM_INTERVAL, scale),
                frequency_interval=self.frequency_interval or scaled(FREQUENCY_INTERVAL, scale),
                momentum_hot_threshold=self.momentum_hot_threshold,
                adapt_interval=self.adapt_interval or scaled(ADAPT_INTERVAL, scale),
                decay_factor=self.decay_factor,
                warm_disable_fraction=self.warm_disable_fraction,
            )
        else:
            out.update(
                scan_interval=self.scan_interval or scaled(NUMA_SCAN_INTERVAL, scale),
                scan_window_pages=self.scan_window_pages or max(1, NUMA_SCAN_BYTES // page_size),
                hot_fault_threshold=2 if k is PolicyKind.NUMA_HINT_TWICE else 1,
                demotion=(
                    Demotion.NONE if k is PolicyKind.NUMA_HINT_NO_DEMOTION else Demotion.LRU_WATERMARK
                ).value,
            )
        return out


class Policy:
    """Base class; concrete policies override the hooks they need."""

    name = "base"

    def __init__(self, pages: list, fast: Tier, capacity: Tier, queues=None):
        self.pages = pages
        self.fast = fast
        self.capacity = capacity
        self.queues = queues

    def new_counter(self, t: LogicalTime) -> CounterState:
        return CounterState()

    def register(self, page: Page, t: LogicalTime) -> None:
        pass

    def unregister(self, page: Page) -> None:
        pass

    def on_tier_change(self, page: Page) -> None:
        pass

    def on_sample(self, page: Page, t: LogicalTime) -> list:
        return []

    def on_tick(self, t: LogicalTime) -> list:
        return []

    def revalidate(self, page: Page, kind: QueueKind, t: LogicalTime) -> bool:
        if kind is QueueKind.PROMOTION:
            return page.tier is TierKind.CAPACITY
        return page.tier is TierKind.FAST

    def coldness(self, page: Page, t: LogicalTime) -> tuple:
        return (page.last_access, page.id)

    def check_invariants(self) -> None:
        pass


class HistogramPolicy(Policy):
    """Histogram-binned counters with cooling and periodic threshold adaptation.

    Covers both counter schemes: ``smooth=False`` is the sawtooth tracker with
    lazy halving, ``smooth=True`` decays on every access.
    """

    def __init__(
        self,
        pages: list,
        fast: Tier,
        capacity: Tier,
        cooling: CoolingConfig,
        thresholds: ThresholdConfig,
        smooth: bool = False,
        queues=None,
        name: str = "histogram",
    ):
        super().__init__(pages, fast, capacity, queues)
        self.cooling = cooling
        self.thresholds = thresholds
        self.smooth = smooth
        self.name = name
        self.hist = HotnessHistogram()
        self.epoch = 0
        self.epoch_start = 0
        self.next_adapt = thresholds.adapt_interval_samples
        self.coolings = 0
        self.adaptations = 0
        self._max_trigger = (not smooth) and cooling.trigger is Trigger.MAX_COUNTER
        self._next_event = 0
        self._swept_at = 0

    # -- page lifecycle -------------------------------------------------
    def new_counter(self, t: LogicalTime) -> CounterState:
        if self._max_trigger:
            return CounterState(cpstart=self.epoch_start, epoch=self.epoch)
        cp = self.cooling.interval_samples
        e = t // cp
        return CounterState(cpstart=e * cp, epoch=e)

    def register(self, page: Page, t: LogicalTime) -> None:
        page.bin = 0
        self.hist.add(0, page.tier is TierKind.FAST)

    def unregister(self, page: Page) -> None:
        self.hist.remove(page.bin, page.tier is TierKind.FAST)

    def on_tier_change(self, page: Page) -> None:
        self.hist.set_tier(page.bin, page.tier is TierKind.FAST)

    # -- counters ---------------------------------------------------------
    def value(self, page: Page, t: LogicalTime) -> float:
        """Fold pending decay into the page and return its current value."""
        st = page.counter
        if self.smooth:
            return refresh_smooth(st, t, self.cooling)
        if self._max_trigger:
            fold_periods(st, self.epoch, self.epoch_start, self.cooling)
        else:
            cp = self.cooling.interval_samples
            e = t // cp
            fold_periods(st, e, e * cp, self.cooling)
        return st.base + st.accesses

    def _set_bin(self, page: Page, v: float) -> int:
        nb = bin_index(v)
        if nb != page.bin:
            self.hist.move(page.bin, nb, page.tier is TierKind.FAST)
            page.bin = nb
        return nb

    def refresh(self, page: Page, t: LogicalTime) -> int:
        return self._set_bin(page, self.value(page, t))

    def _advance(self, t: LogicalTime) -> list:
        """Fire due cooling and adaptation; returns intents from the adaptation sweep."""
        intents = []
        if t < self._next_event:
            return intents
        if not self._max_trigger:
            e = t // self.cooling.interval_samples
            if e > self.epoch:
                self.epoch = e
                self.epoch_start = e * self.cooling.interval_samples
                self._on_cooling(t)
        if t >= self.next_adapt:
            intents = self.sweep(t)
            self.adapt()
            intents = self._intents_after_adapt(intents)
            step = self.thresholds.adapt_interval_samples
            self.next_adapt = (t // step + 1) * step
        self._next_event = self.next_adapt
        if not self._max_trigger:
            cp = self.cooling.interval_samples
            self._next_event = min(self._next_event, (t // cp + 1) * cp)
        return intents

    def sweep(self, t: LogicalTime) -> list:
        """Background decay pass: bring every tracked page's bin up to date.

        Without accesses a counter only decays, so pages already in bin 0 are
        skipped.  Sawtooth values move only on access or cooling, so the pass
        is skipped entirely when no cooling happened since the previous one.
        """
        live = [p for p in self.pages if p is not None and p.live]
        if self.smooth or self.coolings != self._swept_at:
            refresh = self.refresh
            for p in live:
                if p.bin:
                    refresh(p, t)
            self._swept_at = self.coolings
        return live

    def _intents_after_adapt(self, live: list) -> list:
        h = self.hist
        t_hot, t_warm = h.t_hot, h.t_warm
        cold_below = t_hot if t_warm is None else t_warm
        out = []
        for p in live:
            if p.queued is not None:
                continue
            if p.tier is TierKind.CAPACITY:
                temp = Temperature.HOT if p.bin >= t_hot else None
            else:
                temp = Temperature.COLD if p.bin < cold_below else None
            if temp is not None:
                intent = self._intent(p, temp)
                if intent is not None:
                    out.append(intent)
        return out

    def _intent(self, page: Page, temp: Temperature):
        if page.tier is TierKind.CAPACITY:
            if temp is Temperature.HOT:
                return (QueueKind.PROMOTION, page.id)
        elif temp is Temperature.COLD:
            return (QueueKind.DEMOTION, page.id)
        return None

    def _on_cooling(self, t: LogicalTime) -> None:
        """Synchronous part of cooling: re-bin every queued page right away."""
        self.coolings += 1
        if self.queues is None:
            return
        for pid in list(self.queues.promotion) + list(self.queues.demotion):
            page = self.pages[pid]
            if page is not None and page.live:
                self.refresh(page, t)

    def adapt(self) -> None:
        self.hist.t_hot, self.hist.t_warm = adapt_thresholds(self.hist, self.fast, self.thresholds)
        self.adaptations += 1

    def classify(self, page: Page) -> Temperature:
        return classify(page.bin, self.hist.t_hot, self.hist.t_warm)

    def _record(self, page: Page, t: LogicalTime) -> float:
        if self.smooth:
            return record_access_smooth(page.counter, t, self.cooling)
        if self._max_trigger:
            v = record_access_sawtooth(
                page.counter, t, self.cooling, epoch=self.epoch, epoch_start=self.epoch_start
            )
            if v >= self.cooling.max_counter:
                self.epoch += 1
                self.epoch_start = t
                self._on_cooling(t)
                v = self.value(page, t)
            return v
        return record_access_sawtooth(page.counter, t, self.cooling)

    def on_sample(self, page: Page, t: LogicalTime) -> list:
        intents = self._advance(t)
        nb = self._set_bin(page, self._record(page, t))
        if page.queued is None and not (intents and any(pid == page.id for _, pid in intents)):
            intent = self._intent(page, classify(nb, self.hist.t_hot, self.hist.t_warm))
            if intent is not None:
                intents.append(intent)
        return intents

    def revalidate(self, page: Page, kind: QueueKind, t: LogicalTime) -> bool:
        self.refresh(page, t)
        temp = self.classify(page)
        if kind is QueueKind.PROMOTION:
            return page.tier is TierKind.CAPACITY and temp is Temperature.HOT
        return page.tier is TierKind.FAST and temp is Temperature.COLD

    def coldness(self, page: Page, t: LogicalTime) -> tuple:
        return (self.value(page, t), page.last_access, page.id)

    def check_invariants(self) -> None:
        from .core import InvariantError

        bins = [0] * len(self.hist.bins)
        fast_bins = [0] * len(self.hist.bins)
        for p in self.pages:
            if p is not None and p.live:
                bins[p.bin] += 1
                if p.tier is TierKind.FAST:
                    fast_bins[p.bin] += 1
        if bins != self.hist.bins or fast_bins != self.hist.fast_bins:
            raise InvariantError(
                f"histogram {self.hist.bins}/{self.hist.fast_bins} != recount {bins}/{fast_bins}"
            )


class TwoIntervalPolicy(HistogramPolicy):
    """Short momentum window with a static threshold next to a long-interval histogram.

    A page is promoted if its momentum count reaches the static threshold or
    its long-term bin is hot; it is demoted only when the long-term view says
    cold and it has no momentum.
    """

    def __init__(self, pages, fast, capacity, cooling, thresholds, two: TwoIntervalConfig, queues=None):
        super().__init__(pages, fast, capacity, cooling, thresholds, smooth=False, queues=queues,
                         name="two-interval")
        self.two = two
        self.m_window: dict = {}
        self.m_count: dict = {}
        self._now = 0

    def unregister(self, page: Page) -> None:
        super().unregister(page)
        self.m_window.pop(page.id, None)
        self.m_count.pop(page.id, None)

    def momentum(self, page: Page, t: LogicalTime) -> int:
        w = t // self.two.momentum_interval_samples
        if self.m_window.get(page.id) != w:
            return 0
        return self.m_count[page.id]

    def _intent(self, page: Page, temp: Temperature):
        bursting = self.momentum(page, self._now) >= self.two.momentum_hot_threshold
        if page.tier is TierKind.CAPACITY:
            if bursting or temp is Temperature.HOT:
                return (QueueKind.PROMOTION, page.id)
        elif temp is Temperature.COLD and not bursting:
            return (QueueKind.DEMOTION, page.id)
        return None

    def on_sample(self, page: Page, t: LogicalTime) -> list:
        self._now = t
        w = t // self.two.momentum_interval_samples
        if self.m_window.get(page.id) != w:
            self.m_window[page.id] = w
            self.m_count[page.id] = 0
        self.m_count[page.id] += 1
        return super().on_sample(page, t)

    def revalidate(self, page: Page, kind: QueueKind, t: LogicalTime) -> bool:
        self.refresh(page, t)
        temp = self.classify(page)
        bursting = self.momentum(page, t) >= self.two.momentum_hot_threshold
        if kind is QueueKind.PROMOTION:
            return page.tier is TierKind.CAPACITY and (bursting or temp is Temperature.HOT)
        return page.tier is TierKind.FAST and temp is Temperature.COLD and not bursting


class NumaHintPolicy(Policy):
    """NUMA-hinting fault tracking with a static hot threshold.

    The scanner arms a window of capacity-tier pages each round; an observed
    access to an armed page is a hinting fault.  A page that faulted in
    ``hot_fault_threshold`` consecutive rounds is promoted at the next visit.
    Demotion, when enabled, evicts least-recently-accessed fast pages once
    occupancy passes the high watermark.
    """

    def __init__(self, pages, fast, capacity, cfg: NumaHintConfig, queues=None, name="numa"):
        super().__init__(pages, fast, capacity, queues)
        self.cfg = cfg
        self.name = name
        self.armed: set = set()
        self.faulted: set = set()
        self.streak: dict = {}
        self.cursor = 0
        self.next_scan = cfg.scan_interval_samples
        self.faults = 0

    def unregister(self, page: Page) -> None:
        self.armed.discard(page.id)
        self.faulted.discard(page.id)
        self.streak.pop(page.id, None)

    def on_sample(self, page: Page, t: LogicalTime) -> list:
        if page.id in self.armed:
            self.armed.discard(page.id)
            self.faulted.add(page.id)
            self.faults += 1
        return []

    def on_tick(self, t: LogicalTime) -> list:
        intents = []
        if t >= self.next_scan:
            step = self.cfg.scan_interval_samples
            self.next_scan = (t // step + 1) * step
            intents.extend(self.numa_scan_tick(t))
        intents.extend(self._lru_demotions())
        return intents

    def numa_scan_tick(self, t: LogicalTime) -> list:
        """Visit the next window of capacity-tier pages; emit promotions."""
        pages = self.pages
        n = len(pages)
        if n == 0:
            return []
        intents = []
        visited = 0
        thr = self.cfg.hot_fault_threshold
        for step in range(n):
            pid = (self.cursor + step) % n
            page = pages[pid]
            if page is None or not page.live or page.tier is not TierKind.CAPACITY:
                continue
            if pid in self.faulted:
                self.faulted.discard(pid)
                s = self.streak.get(pid, 0) + 1
            else:
                s = 0
            if s >= thr:
                s = 0
                if page.queued is None:
                    intents.append((QueueKind.PROMOTION, pid))
            self.streak[pid] = s
            self.armed.add(pid)
            visited += 1
            if visited >= self.cfg.scan_window_pages:
                self.cursor = (pid + 1) % n
                break
        else:
            self.cursor = 0
        return intents

    def _lru_demotions(self) -> list:
        cfg = self.cfg
        fast = self.fast
        if cfg.demotion is Demotion.NONE or fast.capacity_pages == 0:
            return []
        if self.capacity.resident_pages == 0:
            return []
        if fast.resident_pages <= cfg.high_watermark * fast.capacity_pages:
            return []
        queued_demote = len(self.queues.demotion) if self.queues is not None else 0
        target = fast.resident_pages - int(cfg.low_watermark * fast.capacity_pages) - queued_demote
        if target <= 0:
            return []
        cands = [
            p for p in self.pages
            if p is not None and p.live and p.tier is TierKind.FAST and p.queued is None
        ]
        cands.sort(key=lambda p: (p.last_access, p.id))
        return [(QueueKind.DEMOTION, p.id) for p in cands[:target]]


def make_policy(spec: PolicySpec, pages: list, fast: Tier, capacity: Tier, queues,
                scale: float = 1.0, page_size: int = 4096) -> Policy:
    params = spec.resolved(scale, page_size)
    k = spec.kind
    if k in (PolicyKind.SAWTOOTH_DEFAULT, PolicyKind.SAWTOOTH_QC, PolicyKind.SMOOTH):
        cooling = CoolingConfig(
            interval_samples=params["cooling_interval"],
            decay_factor=params["decay_factor"],
            trigger=Trigger(params["trigger"]),
            max_counter=params["max_counter"],
            decay_shape=DecayShape(params["decay_shape"]),
            per_epoch_decay=params["per_epoch_decay"],
        )
        thresholds = ThresholdConfig(params["adapt_interval"], params["warm_disable_fraction"])
        return HistogramPolicy(pages, fast, capacity, cooling, thresholds,
                               smooth=k is PolicyKind.SMOOTH, queues=queues, name=k.value)
    if k is PolicyKind.TWO_INTERVAL:
        cooling = CoolingConfig(params["frequency_interval"], decay_factor=params["decay_factor"])
        thresholds = ThresholdConfig(params["adapt_interval"], params["warm_disable_fraction"])
        two = TwoIntervalConfig(params["momentum_interval"], params["frequency_interval"],
                                params["momentum_hot_threshold"])
        return TwoIntervalPolicy(pages, fast, capacity, cooling, thresholds, two, queues=queues)
    cfg = NumaHintConfig(
        scan_window_pages=params["scan_window_pages"],
        scan_interval_samples=params["scan_interval"],
        hot_fault_threshold=params["hot_fault_threshold"],
        demotion=Demotion(params["demotion"]),
    )
    return NumaHintPolicy(pages, fast, capacity, cfg, queues=queues, name=k.value)
