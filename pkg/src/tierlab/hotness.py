"""Per-page access counters (sawtooth and smooth), cooling and threshold adaptation.

Both counter schemes keep the same two accumulators per page: the counter
value folded at the start of the current cooling period (``base``) and the
number of accesses seen since then (``accesses``).  They differ only in how
the value is read between period boundaries:

* sawtooth: ``base + accesses``; at a boundary the whole thing is multiplied
  by the decay factor, so the value drops abruptly.
* smooth: ``w(f) * base + d * accesses`` where ``f`` is the elapsed fraction
  of the period and ``w`` slides from 1 to ``d``.  At ``f == 1`` this is
  ``d * (base + accesses)``, exactly the post-cooling sawtooth value.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .core import NUM_BINS, HotnessHistogram, LogicalTime, Tier


class Trigger(enum.Enum):
    EVERY_SAMPLES = "every_samples"
    MAX_COUNTER = "max_counter"


class DecayShape(enum.Enum):
    STEP = "step"
    LINEAR_SMOOTH = "linear"
    EXPONENTIAL_SMOOTH = "exponential"


class Temperature(enum.IntEnum):
    COLD = 0
    WARM = 1
    HOT = 2


@dataclass(slots=True)
class CounterState:
    base: float = 0.0
    accesses: int = 0
    cpstart: LogicalTime = 0
    epoch: int = 0


@dataclass
class CoolingConfig:
    interval_samples: int
    decay_factor: float = 0.5
    trigger: Trigger = Trigger.EVERY_SAMPLES
    max_counter: int = 1024
    decay_shape: DecayShape = DecayShape.STEP
    # False: a page untouched for several epochs is decayed only once.
    per_epoch_decay: bool = True

    def __post_init__(self):
        if self.interval_samples < 1:
            raise ValueError("cooling interval must be >= 1 sample")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError("decay factor must lie in (0, 1]")
        if self.max_counter < 2:
            raise ValueError("max-counter trigger threshold must be >= 2")


@dataclass
class ThresholdConfig:
    adapt_interval_samples: int
    warm_disable_fraction: float = 0.75

    def __post_init__(self):
        if self.adapt_interval_samples < 1:
            raise ValueError("adaptation interval must be >= 1 sample")


def cpstart_of(t: LogicalTime, cp: int) -> LogicalTime:
    if cp < 1:
        raise ValueError("cp must be >= 1")
    return (t // cp) * cp


def fold_periods(state: CounterState, epoch: int, cpstart: LogicalTime, cfg: CoolingConfig) -> None:
    """Apply every cooling that elapsed since the page was last folded."""
    n = epoch - state.epoch
    if n <= 0:
        return
    if not cfg.per_epoch_decay:
        n = 1
    state.base = (state.base + state.accesses) * cfg.decay_factor**n
    state.accesses = 0
    state.epoch = epoch
    state.cpstart = cpstart


def _epoch_of(t: LogicalTime, cfg: CoolingConfig, epoch: Optional[int]) -> int:
    return epoch if epoch is not None else t // cfg.interval_samples


def record_access_sawtooth(
    state: CounterState,
    t: LogicalTime,
    cfg: CoolingConfig,
    epoch: Optional[int] = None,
    epoch_start: Optional[LogicalTime] = None,
) -> float:
    """Count one access at time ``t``; returns the effective counter value.

    Decay is lazy: cooling epochs that passed since the page was last touched
    are applied here.  ``epoch``/``epoch_start`` override the sample-driven
    epoch for externally triggered cooling (max-counter trigger).
    """
    e = _epoch_of(t, cfg, epoch)
    if e > state.epoch:
        start = epoch_start if epoch_start is not None else e * cfg.interval_samples
        fold_periods(state, e, start, cfg)
    state.accesses += 1
    return state.base + state.accesses


def sawtooth_value(
    state: CounterState,
    t: LogicalTime,
    cfg: CoolingConfig,
    epoch: Optional[int] = None,
) -> float:
    """Current sawtooth value without recording an access (state untouched)."""
    e = _epoch_of(t, cfg, epoch)
    n = e - state.epoch
    if n <= 0:
        return state.base + state.accesses
    if not cfg.per_epoch_decay:
        n = 1
    return (state.base + state.accesses) * cfg.decay_factor**n


def _smooth_weight(f: float, cfg: CoolingConfig) -> float:
    d = cfg.decay_factor
    if cfg.decay_shape is DecayShape.EXPONENTIAL_SMOOTH:
        return d**f
    return 1.0 - (1.0 - d) * f


def smooth_value(state: CounterState, t: LogicalTime, cfg: CoolingConfig) -> float:
    """Smooth counter value within the state's current period.

    ``t`` may range over ``[cpstart, cpstart + cp]``; the closed upper end
    gives the value the period folds into.
    """
    f = (t - state.cpstart) / cfg.interval_samples
    if f < 0.0 or f > 1.0:
        raise ValueError(f"t={t} outside the period starting at {state.cpstart}")
    return _smooth_weight(f, cfg) * state.base + cfg.decay_factor * state.accesses


def smooth_current(state: CounterState, t: LogicalTime, cfg: CoolingConfig) -> float:
    """Smooth value at ``t`` for a state that may lag several periods behind."""
    cp = cfg.interval_samples
    start = cpstart_of(t, cp)
    if start == state.cpstart:
        return smooth_value(state, t, cfg)
    n = (start - state.cpstart) // cp
    if not cfg.per_epoch_decay:
        n = 1
    base = (state.base + state.accesses) * cfg.decay_factor**n
    return _smooth_weight((t - start) / cp, cfg) * base


def record_access_smooth(state: CounterState, t: LogicalTime, cfg: CoolingConfig) -> float:
    """Count one access at ``t`` under smooth decay; returns the new value."""
    cp = cfg.interval_samples
    start = (t // cp) * cp
    if start != state.cpstart:
        fold_periods(state, start // cp, start, cfg)
    state.accesses += 1
    return smooth_value(state, t, cfg)


def refresh_smooth(state: CounterState, t: LogicalTime, cfg: CoolingConfig) -> float:
    """Fold elapsed periods into ``state`` and return the value at ``t``."""
    cp = cfg.interval_samples
    start = (t // cp) * cp
    if start != state.cpstart:
        fold_periods(state, start // cp, start, cfg)
    return smooth_value(state, t, cfg)


def adapt_thresholds(
    h: HotnessHistogram, fast: Tier, cfg: ThresholdConfig
) -> tuple[int, Optional[int]]:
    """Pick T_hot so the hot set fits the fast tier; decide whether a warm bin exists.

    T_hot is the lowest bin whose suffix page count does not exceed the fast
    tier capacity (bin 15 if even the top bin overflows).  The warm bin is
    dropped when hot pages already resident in the fast tier fill at least
    ``warm_disable_fraction`` of it.
    """
    cap = fast.capacity_pages
    t_hot = NUM_BINS - 1
    cum = 0
    for b in range(NUM_BINS - 1, -1, -1):
        cum += h.bins[b]
        if cum > cap:
            break
        t_hot = b
    if t_hot == 0:
        return 0, None
    hot_fast = sum(h.fast_bins[t_hot:])
    if hot_fast >= cfg.warm_disable_fraction * cap:
        return t_hot, None
    return t_hot, t_hot - 1


def classify(page_bin: int, t_hot: int, t_warm: Optional[int]) -> Temperature:
    if page_bin >= t_hot:
        return Temperature.HOT
    if t_warm is not None and page_bin == t_warm:
        return Temperature.WARM
    return Temperature.COLD
