"""Small builders shared by unit tests."""

from tierlab.core import Page, Tier, TierKind
from tierlab.migration import MigrationQueues
from tierlab.policies import PolicySpec, make_policy


def build(spec: PolicySpec, n_pages: int, fast_cap: int, n_fast: int = 0, cap_cap=None, scale=1.0):
    """Pages 0..n_fast-1 start in the fast tier, the rest in the capacity tier."""
    fast = Tier(TierKind.FAST, fast_cap)
    cap = Tier(TierKind.CAPACITY, cap_cap if cap_cap is not None else n_pages)
    pages = [None] * n_pages
    q = MigrationQueues()
    pol = make_policy(spec, pages, fast, cap, q, scale)
    for i in range(n_pages):
        kind = TierKind.FAST if i < n_fast else TierKind.CAPACITY
        (fast if i < n_fast else cap).resident_pages += 1
        pages[i] = Page(id=i, tier=kind, counter=pol.new_counter(0))
        pol.register(pages[i], 0)
    return pol, pages, fast, cap, q
