import pytest

from tierlab.allocator import Strategy
from tierlab.config import ConfigError, load_config, load_matrix, load_workload_spec, substream_seed
from tierlab.policies import PolicyKind
from tierlab.workload import Archetype

BASE = """
[run]
seed = 9
scale = 0.01  # comments after values are fine
[workload]
archetype = small_object_skew
num_objects = 2_000
total_accesses = 1e4
contexts = a:64:0.5:0.7:0.9; b:128:0.5:0.3
[allocation]
strategy = context
depth = 4
[policy]
kind = sawtooth-default
decay_shape = exponential
per_epoch_decay = no
[tiers]
fast_fraction = 0.25
[sampling]
rate = 10
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_full_config(tmp_path):
    cfg = load_config(write(tmp_path, BASE))
    assert cfg.seed == 9 and cfg.scale == 0.01
    assert cfg.workload.archetype is Archetype.SMALL_OBJECT_SKEW
    assert cfg.workload.num_objects == 2000 and cfg.workload.total_accesses == 10_000
    assert [c.name for c in cfg.workload.contexts] == ["a", "b"]
    assert cfg.workload.contexts[0].skew == 0.9
    assert cfg.strategy.kind is Strategy.CONTEXT and cfg.strategy.depth == 4
    assert cfg.policy.kind is PolicyKind.SAWTOOTH_DEFAULT and not cfg.policy.per_epoch_decay
    assert cfg.resolve_fast_pages(100) == 25
    assert cfg.sampling().rate == 10


def test_seeds_come_from_named_substreams(tmp_path):
    cfg = load_config(write(tmp_path, BASE))
    assert cfg.workload_spec().seed == substream_seed(9, "workload")
    assert cfg.sampling().seed == substream_seed(9, "sampling")
    assert substream_seed(9, "workload") != substream_seed(9, "sampling")
    assert cfg.with_overrides(seed=10).workload_spec().seed == substream_seed(10, "workload")


def test_echo_is_complete(tmp_path):
    e = load_config(write(tmp_path, BASE)).echo()
    assert e["workload"]["archetype"] == "small_object_skew"
    assert e["strategy"] == {"kind": "context", "depth": 4, "regions": 32}
    assert e["cost"]["migration_cost_ns"] == 50_000.0


@pytest.mark.parametrize("bad,match", [
    ("[policy]\nkind = smooth\n", "workload"),
    ("[workload]\narchetype = stable_zipf\n", "policy"),
    ("[workload]\narchetype = nope\n[policy]\nkind = smooth\n", "archetype"),
    ("[workload]\nseed = 3\n[policy]\nkind = smooth\n", "seed"),
    ("[workload]\nbogus = 3\n[policy]\nkind = smooth\n", "bogus"),
    ("[workload]\n[policy]\nkind = smooth\n[run]\ncolour = red\n", "colour"),
    ("[workload]\n[policy]\nkind = smooth\ncooling_interval = soon\n", "cooling_interval"),
    ("[workload]\n[policy]\nkind = smooth\n[tiers]\nfast_pages = 3\nfast_fraction = 0.5\n", "not both"),
    ("[workload]\ntrace = missing.txt\n[policy]\nkind = smooth\n", "does not exist"),
    ("[workload]\n[policy]\nkind = smooth\n[cost]\nfast_latency_ns = 900\n", "latency"),
    ("not an ini", "c.ini"),
])
def test_bad_configs(tmp_path, bad, match):
    with pytest.raises(ConfigError, match=match):
        load_config(write(tmp_path, bad))


def test_trace_path_relative_to_config(tmp_path):
    (tmp_path / "t.txt").write_text("#tierlab-trace v1 page_size=4096\n")
    cfg = load_config(write(tmp_path, "[workload]\ntrace = t.txt\n[policy]\nkind = numa-once\n"))
    assert cfg.trace_path == (tmp_path / "t.txt").resolve()


def test_workload_spec_loader(tmp_path):
    spec, seed = load_workload_spec(write(tmp_path, BASE))
    assert seed == 9 and spec.num_objects == 2000


def test_matrix_rows(tmp_path):
    text = BASE + "[row base]\n[row smooth]\npolicy.kind = smooth\npolicy.cooling_interval = 77\n" \
                  "[row time]\nallocation.strategy = time\n"
    rows = dict(load_matrix(write(tmp_path, text)))
    assert list(rows) == ["base", "smooth", "time"]
    assert rows["smooth"].policy.kind is PolicyKind.SMOOTH
    # switching policy kind drops the base policy's settings
    assert rows["smooth"].policy.decay_shape is None and rows["smooth"].policy.cooling_interval == 77
    assert rows["time"].strategy.kind is Strategy.TIME and rows["base"].strategy.kind is Strategy.CONTEXT


def test_matrix_needs_rows(tmp_path):
    with pytest.raises(ConfigError, match="row"):
        load_matrix(write(tmp_path, BASE))
    with pytest.raises(ConfigError, match="section.key"):
        load_matrix(write(tmp_path, BASE + "[row x]\nkind = smooth\n"))
