"""Trace-driven simulator for tiered-memory page placement and migration policies."""

from .allocator import GroupingStrategy, Strategy, pages_for_access_fraction, resolve
from .core import InvariantError, TierKind, bin_index
from .metrics import CostModel, RunReport, access_cdf, estimated_runtime, heatmap
from .policies import PolicyKind, PolicySpec
from .simulator import SimConfig, simulate
from .workload import Archetype, SamplingModel, WorkloadSpec, generate, read_trace, write_trace

__all__ = [
    "Archetype",
    "CostModel",
    "GroupingStrategy",
    "InvariantError",
    "PolicyKind",
    "PolicySpec",
    "RunReport",
    "SamplingModel",
    "SimConfig",
    "Strategy",
    "TierKind",
    "WorkloadSpec",
    "access_cdf",
    "bin_index",
    "estimated_runtime",
    "generate",
    "heatmap",
    "pages_for_access_fraction",
    "read_trace",
    "resolve",
    "simulate",
    "write_trace",
]
