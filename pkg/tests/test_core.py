import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tierlab.core import (
    NUM_BINS,
    HotnessHistogram,
    InvariantError,
    Tier,
    TierKind,
    bin_index,
    histogram_move,
)


@pytest.mark.parametrize("n", range(16))
def test_bin_of_power_of_two(n):
    assert bin_index(2**n) == n


def test_bin_edges():
    assert bin_index(0) == 0
    assert bin_index(0.99) == 0
    assert bin_index(1.0) == 0
    assert bin_index(3.999) == 1
    assert bin_index(2**16) == 15
    assert bin_index(1e12) == 15


@given(st.floats(0, 1e9), st.floats(0, 1e9))
def test_bin_monotone(a, b):
    lo, hi = sorted((a, b))
    assert bin_index(lo) <= bin_index(hi)


@given(st.floats(1, 2**15, exclude_max=True))
def test_bin_is_floor_log2(v):
    assert bin_index(v) == math.floor(math.log2(int(v)))


def test_histogram_move_keeps_total():
    h = HotnessHistogram()
    for _ in range(5):
        h.add(0)
    histogram_move(h, 0, 7)
    assert h.total == 5 and h.bins[7] == 1 and h.bins[0] == 4
    histogram_move(h, 7, 7)
    assert h.bins[7] == 1


def test_histogram_underflow_raises():
    h = HotnessHistogram()
    with pytest.raises(InvariantError):
        h.remove(3)
    h.add(2)
    with pytest.raises(InvariantError):
        h.set_tier(2, fast=False)


ops = st.lists(
    st.tuples(st.sampled_from(["add", "move", "tier", "remove"]), st.integers(0, 10**6),
              st.integers(0, NUM_BINS - 1)),
    max_size=300,
)


@given(ops)
def test_histogram_matches_recount(seq):
    h = HotnessHistogram()
    pages = []  # [bin, fast]
    for op, pick, b in seq:
        if op == "add" or not pages:
            fast = pick % 2 == 0
            pages.append([b, fast])
            h.add(b, fast)
            continue
        p = pages[pick % len(pages)]
        if op == "move":
            h.move(p[0], b, p[1])
            p[0] = b
        elif op == "tier":
            p[1] = not p[1]
            h.set_tier(p[0], p[1])
        else:
            h.remove(p[0], p[1])
            pages.remove(p)
    assert h.bins == [sum(1 for q in pages if q[0] == i) for i in range(NUM_BINS)]
    assert h.fast_bins == [sum(1 for q in pages if q[0] == i and q[1]) for i in range(NUM_BINS)]
    assert h.total == len(pages)


def test_tier_properties():
    t = Tier(TierKind.FAST, 3, 1)
    assert t.free_pages == 2 and not t.full
    t.resident_pages = 3
    assert t.full
    with pytest.raises(ValueError):
        Tier(TierKind.FAST, -1)
