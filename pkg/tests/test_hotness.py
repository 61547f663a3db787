import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tierlab.core import NUM_BINS, HotnessHistogram, Tier, TierKind, bin_index
from tierlab.hotness import (
    CoolingConfig,
    CounterState,
    DecayShape,
    Temperature,
    ThresholdConfig,
    adapt_thresholds,
    classify,
    cpstart_of,
    record_access_sawtooth,
    record_access_smooth,
    sawtooth_value,
    smooth_current,
    smooth_value,
)

shapes = st.sampled_from([DecayShape.LINEAR_SMOOTH, DecayShape.EXPONENTIAL_SMOOTH])


def boundary_pairs(times, cp, shape):
    """Yield (sawtooth, smooth) values at every period boundary of an access stream."""
    cfg = CoolingConfig(cp, decay_shape=shape)
    saw, smo = CounterState(), CounterState()
    nxt = cp
    for t in sorted(times) + [None]:
        limit = t if t is not None else nxt + 2 * cp
        while nxt <= limit:
            yield sawtooth_value(saw, nxt, cfg), smooth_current(smo, nxt, cfg)
            nxt += cp
        if t is not None:
            record_access_sawtooth(saw, t, cfg)
            record_access_smooth(smo, t, cfg)


@given(st.integers(1, 500), st.lists(st.integers(0, 5000), max_size=200), shapes)
def test_boundary_equality(cp, times, shape):
    for a, b in boundary_pairs(times, cp, shape):
        assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


@given(st.integers(2, 200), st.floats(0, 1e4), st.integers(0, 50), shapes,
       st.data())
def test_smooth_continuity_without_accesses(cp, base, acc, shape, data):
    cfg = CoolingConfig(cp, decay_shape=shape)
    s = CounterState(base=base, accesses=acc, cpstart=0)
    t1 = data.draw(st.integers(0, cp))
    t2 = data.draw(st.integers(t1, cp))
    # steepest slope: (1 - d) for the linear ramp, ln(1/d) at the start of the exponential one
    slope = 0.5 if shape is DecayShape.LINEAR_SMOOTH else math.log(2)
    assert abs(smooth_value(s, t2, cfg) - smooth_value(s, t1, cfg)) <= (
        slope * base * (t2 - t1) / cp + 1e-9 * max(1.0, base)
    )
    # crossing the boundary with no accesses does not jump
    assert smooth_current(s, cp, cfg) == pytest.approx(smooth_value(s, cp, cfg), rel=1e-12)


def test_sawtooth_halves_at_boundary():
    cfg = CoolingConfig(10)
    s = CounterState()
    for t in range(10):
        record_access_sawtooth(s, t, cfg)
    assert sawtooth_value(s, 9, cfg) == 10
    assert sawtooth_value(s, 10, cfg) == 5
    assert sawtooth_value(s, 20, cfg) == 2.5


def test_sawtooth_single_decay_option():
    cfg = CoolingConfig(10, per_epoch_decay=False)
    s = CounterState(base=8)
    assert sawtooth_value(s, 35, cfg) == 4


@given(st.integers(1, 100), st.lists(st.tuples(st.integers(0, 3), st.integers(0, 40)), max_size=150),
       st.sampled_from([0.5, 0.25, 0.9]))
def test_lazy_decay_matches_synchronous_oracle(cp, events, d):
    """Apply-on-access decay equals decaying every page at every boundary."""
    cfg = CoolingConfig(cp, decay_factor=d)
    lazy = [CounterState() for _ in range(4)]
    sync = [0.0] * 4
    t = 0
    for page, gap in events:
        nt = t + gap
        for _ in range(nt // cp - t // cp):
            sync = [v * d for v in sync]
        t = nt
        sync[page] += 1
        got = record_access_sawtooth(lazy[page], t, cfg)
        assert got == pytest.approx(sync[page], rel=1e-9)
        for q in range(4):
            assert sawtooth_value(lazy[q], t, cfg) == pytest.approx(sync[q], rel=1e-9, abs=1e-300)


def test_smooth_linear_and_exponential_midpoint():
    s = CounterState(base=8.0, accesses=0, cpstart=0)
    assert smooth_value(s, 50, CoolingConfig(100, decay_shape=DecayShape.LINEAR_SMOOTH)) == 6.0
    exp = smooth_value(s, 50, CoolingConfig(100, decay_shape=DecayShape.EXPONENTIAL_SMOOTH))
    assert exp == pytest.approx(8 * 0.5**0.5)
    with pytest.raises(ValueError):
        smooth_value(s, 101, CoolingConfig(100))


def test_smooth_access_weight_is_decay_factor():
    cfg = CoolingConfig(100, decay_shape=DecayShape.LINEAR_SMOOTH)
    s = CounterState()
    assert record_access_smooth(s, 3, cfg) == 0.5
    assert record_access_smooth(s, 4, cfg) == 1.0


def test_cpstart_of():
    assert cpstart_of(0, 7) == 0
    assert cpstart_of(13, 7) == 7
    with pytest.raises(ValueError):
        cpstart_of(3, 0)


def oracle_thresholds(bins, fast_bins, cap, frac=0.75):
    fits = [t for t in range(NUM_BINS) if sum(bins[t:]) <= cap]
    t_hot = min(fits) if fits else NUM_BINS - 1
    if t_hot == 0:
        return 0, None
    if sum(fast_bins[t_hot:]) >= frac * cap:
        return t_hot, None
    return t_hot, t_hot - 1


hist_st = st.lists(st.integers(0, 60), min_size=NUM_BINS, max_size=NUM_BINS)


@given(hist_st, st.data(), st.integers(0, 400))
def test_adapt_thresholds_matches_oracle(bins, data, cap):
    fast_bins = [data.draw(st.integers(0, b)) for b in bins]
    h = HotnessHistogram(bins=list(bins), fast_bins=fast_bins)
    got = adapt_thresholds(h, Tier(TierKind.FAST, cap), ThresholdConfig(1))
    assert got == oracle_thresholds(bins, fast_bins, cap)


def test_adapt_thresholds_examples():
    bins = [0] * NUM_BINS
    bins[0], bins[3], bins[5] = 100, 10, 5
    h = HotnessHistogram(bins=bins, fast_bins=[0] * NUM_BINS)
    assert adapt_thresholds(h, Tier(TierKind.FAST, 15), ThresholdConfig(1)) == (1, 0)
    assert adapt_thresholds(h, Tier(TierKind.FAST, 14), ThresholdConfig(1)) == (4, 3)
    h.fast_bins[5] = 5
    assert adapt_thresholds(h, Tier(TierKind.FAST, 6), ThresholdConfig(1)) == (4, None)
    # nothing fits: only the top bin is hot
    h = HotnessHistogram(bins=[0] * 15 + [9], fast_bins=[0] * NUM_BINS)
    assert adapt_thresholds(h, Tier(TierKind.FAST, 3), ThresholdConfig(1))[0] == 15


def test_classify():
    assert classify(5, 5, 4) is Temperature.HOT
    assert classify(4, 5, 4) is Temperature.WARM
    assert classify(3, 5, 4) is Temperature.COLD
    assert classify(4, 5, None) is Temperature.COLD


@given(st.integers(2, 2**17), st.integers(1, 15))
def test_one_cooling_moves_hot_to_warm_not_cold(v, t_hot):
    """A halving drops a page at most one bin; with a warm bin that lands on warm, not cold."""
    if bin_index(v) < t_hot:
        return
    after = bin_index(v / 2)
    assert classify(after, t_hot, t_hot - 1) is not Temperature.COLD
    if after == t_hot - 1:
        # with the warm bin disabled the same page is cold straight away
        assert classify(after, t_hot, None) is Temperature.COLD


def test_cooling_config_validation():
    with pytest.raises(ValueError):
        CoolingConfig(0)
    with pytest.raises(ValueError):
        CoolingConfig(10, decay_factor=0)
    with pytest.raises(ValueError):
        ThresholdConfig(0)

