import pytest

from helpers import build
from tierlab.core import QueueKind, TierKind
from tierlab.hotness import Temperature
from tierlab.policies import (
    ADAPT_INTERVAL,
    COOLING_DEFAULT,
    COOLING_QUICK,
    FREQUENCY_INTERVAL,
    MOMENTUM_INTERVAL,
    Demotion,
    NumaHintConfig,
    PolicyKind,
    PolicySpec,
    TwoIntervalConfig,
)


def test_resolved_defaults_keep_ratios_under_scale():
    for scale in (1.0, 0.01):
        d = PolicySpec(PolicyKind.SAWTOOTH_DEFAULT).resolved(scale, 4096)
        q = PolicySpec(PolicyKind.SAWTOOTH_QC).resolved(scale, 4096)
        s = PolicySpec(PolicyKind.SMOOTH).resolved(scale, 4096)
        two = PolicySpec(PolicyKind.TWO_INTERVAL).resolved(scale, 4096)
        assert d["cooling_interval"] == round(COOLING_DEFAULT * scale)
        assert d["adapt_interval"] == round(ADAPT_INTERVAL * scale)
        assert q["cooling_interval"] == s["cooling_interval"] == round(COOLING_QUICK * scale)
        assert s["adapt_interval"] == s["cooling_interval"]
        assert s["decay_shape"] == "linear" and d["decay_shape"] == "step"
        assert two["momentum_interval"] == round(MOMENTUM_INTERVAL * scale)
        assert two["frequency_interval"] == round(FREQUENCY_INTERVAL * scale)


def test_numa_variants_resolve():
    assert PolicySpec(PolicyKind.NUMA_HINT_TWICE).resolved(1, 4096)["hot_fault_threshold"] == 2
    r = PolicySpec(PolicyKind.NUMA_HINT_NO_DEMOTION).resolved(1, 4096)
    assert r["demotion"] == "none" and r["scan_window_pages"] == 65536


def test_config_validation():
    with pytest.raises(ValueError):
        NumaHintConfig(10, 10, hot_fault_threshold=3)
    with pytest.raises(ValueError):
        TwoIntervalConfig(10, 10)


def scan_round(pol, pages, t, touched):
    intents = pol.on_tick(t)
    for pid in touched:
        pol.on_sample(pages[pid], t)
    return intents


@pytest.mark.parametrize("kind,rounds", [(PolicyKind.NUMA_HINT_ONCE, 1), (PolicyKind.NUMA_HINT_TWICE, 2)])
def test_numa_promotes_after_required_faults(kind, rounds):
    spec = PolicySpec(kind, scan_interval=10, scan_window_pages=100)
    pol, pages, *_ = build(spec, 4, fast_cap=2)
    t = 10
    scan_round(pol, pages, t, [1])  # arm
    promoted_at = None
    for r in range(1, 4):
        t += 10
        intents = scan_round(pol, pages, t, [1])
        if (QueueKind.PROMOTION, 1) in intents:
            promoted_at = r
            break
    assert promoted_at == rounds


def test_numa_twice_needs_consecutive_rounds():
    spec = PolicySpec(PolicyKind.NUMA_HINT_TWICE, scan_interval=10, scan_window_pages=100)
    pol, pages, *_ = build(spec, 2, fast_cap=1)
    scan_round(pol, pages, 10, [0])
    scan_round(pol, pages, 20, [])  # fault seen, round 1
    assert (QueueKind.PROMOTION, 0) not in scan_round(pol, pages, 30, [0])  # missed a round
    assert (QueueKind.PROMOTION, 0) not in scan_round(pol, pages, 40, [0])
    assert (QueueKind.PROMOTION, 0) in scan_round(pol, pages, 50, [])


def test_numa_lru_demotion_above_watermark():
    spec = PolicySpec(PolicyKind.NUMA_HINT_ONCE, scan_interval=10**9, scan_window_pages=1)
    pol, pages, fast, *_ = build(spec, 30, fast_cap=20, n_fast=20)
    for p in pages:
        p.last_access = 100 - p.id
    intents = pol.on_tick(1)
    # full (100% > 95%): demote down to 90%, least recently accessed first
    assert intents == [(QueueKind.DEMOTION, 19), (QueueKind.DEMOTION, 18)]


def test_numa_nodemotion_never_demotes():
    spec = PolicySpec(PolicyKind.NUMA_HINT_NO_DEMOTION, scan_interval=10**9, scan_window_pages=1)
    pol, pages, *_ = build(spec, 30, fast_cap=20, n_fast=20)
    assert pol.cfg.demotion is Demotion.NONE
    assert pol.on_tick(1) == []


def hist_policy(kind=PolicyKind.SAWTOOTH_QC, **kw):
    return PolicySpec(kind, cooling_interval=kw.pop("cp", 1000), adapt_interval=kw.pop("adapt", 10), **kw)


def test_warm_page_gets_no_intent():
    pol, pages, *_ = build(hist_policy(), 4, fast_cap=2)
    pol.hist.t_hot, pol.hist.t_warm = 3, 2
    pol._next_event = 10**9
    page = pages[2]
    for t in range(1, 5):  # value 4 -> bin 2 == warm
        intents = pol.on_sample(page, t)
    assert page.bin == 2 and pol.classify(page) is Temperature.WARM
    assert intents == []
    intents = []
    for t in range(5, 9):  # value 8 -> hot
        intents += pol.on_sample(page, t)
    assert (QueueKind.PROMOTION, 2) in intents


def test_cold_fast_page_gets_demotion_intent_after_adapt():
    pol, pages, *_ = build(hist_policy(adapt=30), 8, fast_cap=2, n_fast=2)
    intents = []
    # pages 4..7 land in bin 1, pages 2 and 3 in bin 3, the fast pages stay at 0
    seq = [4, 5, 6, 7] * 2 + [2, 3] * 10
    for t, pid in enumerate(seq + [4, 5], start=1):
        intents += pol.on_sample(pages[pid], t)
    assert (pol.hist.t_hot, pol.hist.t_warm) == (2, 1)
    kinds = {(k, pid) for k, pid in intents}
    assert (QueueKind.PROMOTION, 2) in kinds and (QueueKind.PROMOTION, 3) in kinds
    assert (QueueKind.DEMOTION, 0) in kinds and (QueueKind.DEMOTION, 1) in kinds


def test_histogram_tracks_every_page():
    pol, pages, *_ = build(hist_policy(PolicyKind.SMOOTH, cp=50, adapt=50), 20, fast_cap=5, n_fast=5)
    for t in range(1, 2000):
        pol.on_sample(pages[(t * 7) % 20 if t % 3 else 3], t)
    pol.check_invariants()
    assert pol.hist.total == 20


def test_two_interval_momentum_promotes_burst():
    spec = PolicySpec(PolicyKind.TWO_INTERVAL, momentum_interval=100, frequency_interval=10**6,
                      adapt_interval=10**6)
    pol, pages, *_ = build(spec, 4, fast_cap=2)
    intents = []
    for t in range(1, 4):
        intents += pol.on_sample(pages[3], t)
    assert (QueueKind.PROMOTION, 3) in intents
    assert pol.momentum(pages[3], 3) == 3
    assert pol.momentum(pages[3], 150) == 0


def test_two_interval_burst_blocks_demotion():
    spec = PolicySpec(PolicyKind.TWO_INTERVAL, momentum_interval=100, frequency_interval=10**6,
                      adapt_interval=10**6)
    pol, pages, *_ = build(spec, 4, fast_cap=2, n_fast=2)
    pol.hist.t_hot, pol.hist.t_warm = 10, None
    for t in range(1, 4):
        pol.on_sample(pages[0], t)
    assert not pol.revalidate(pages[0], QueueKind.DEMOTION, 3)
    assert pol.revalidate(pages[1], QueueKind.DEMOTION, 3)


def test_max_counter_trigger_cools_early():
    spec = hist_policy(PolicyKind.SAWTOOTH_DEFAULT, cp=10**9, adapt=10**9, max_counter=16)
    from tierlab.hotness import Trigger

    spec.trigger = Trigger.MAX_COUNTER
    pol, pages, *_ = build(spec, 2, fast_cap=1)
    for t in range(1, 17):
        pol.on_sample(pages[0], t)
    assert pol.coolings == 1
    assert pol.value(pages[0], 17) == 8


def test_unregister_removes_from_histogram():
    pol, pages, *_ = build(hist_policy(), 3, fast_cap=1, n_fast=1)
    pol.unregister(pages[0])
    pages[0].live = False
    assert pol.hist.total == 2 and sum(pol.hist.fast_bins) == 0


def test_revalidation_follows_tier():
    pol, pages, *_ = build(hist_policy(), 3, fast_cap=1, n_fast=1)
    pol.hist.t_hot, pol.hist.t_warm = 0, None
    assert pol.revalidate(pages[1], QueueKind.PROMOTION, 1)
    assert not pol.revalidate(pages[0], QueueKind.PROMOTION, 1)
    assert pages[0].tier is TierKind.FAST
