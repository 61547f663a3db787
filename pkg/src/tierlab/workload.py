"""Synthetic trace generators, the sampling model and trace file I/O.

A trace is a sequence of alloc / free / access records stored column-wise in
numpy arrays.  Generators are pure functions of their spec (seed included).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

ALLOC, FREE, ACCESS = 0, 1, 2
KIND_CHARS = {ALLOC: "A", FREE: "F", ACCESS: "X"}

HEADER_PREFIX = "#tierlab-trace v1"
BINARY_MAGIC = b"TLT1"
_RECORD = np.dtype([("kind", "<u1"), ("id", "<u8"), ("arg", "<u8"), ("ctx", "<i4")])

MASK64 = (1 << 64) - 1


class TraceError(ValueError):
    """Malformed or inconsistent trace input."""


class WorkloadError(ValueError):
    """A workload spec that cannot be generated."""


class EventKind(enum.IntEnum):
    ALLOC = ALLOC
    FREE = FREE
    ACCESS = ACCESS


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    kind: EventKind
    obj: int
    size: int = 0
    offset: int = 0
    frames: tuple = ()


@dataclass(eq=False)
class Trace:
    kinds: np.ndarray
    ids: np.ndarray
    args: np.ndarray
    ctx: np.ndarray
    contexts: list
    page_size: int = 4096
    lines: Optional[np.ndarray] = None  # source line per event, text traces only

    def __len__(self) -> int:
        return len(self.kinds)

    @property
    def num_accesses(self) -> int:
        return int(np.count_nonzero(self.kinds == ACCESS))

    def alloc_frames(self) -> list:
        idx = np.flatnonzero(self.kinds == ALLOC)
        return [self.contexts[c] for c in self.ctx[idx].tolist()]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.page_size == other.page_size
            and np.array_equal(self.kinds, other.kinds)
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.args, other.args)
            and self.alloc_frames() == other.alloc_frames()
        )

    def events(self) -> Iterator[TraceEvent]:
        for i, (k, o, a, c) in enumerate(
            zip(self.kinds.tolist(), self.ids.tolist(), self.args.tolist(), self.ctx.tolist())
        ):
            if k == ALLOC:
                yield TraceEvent(i, EventKind.ALLOC, o, size=a, frames=self.contexts[c])
            elif k == FREE:
                yield TraceEvent(i, EventKind.FREE, o)
            else:
                yield TraceEvent(i, EventKind.ACCESS, o, offset=a)

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.blake2b(digest_size=16)
        h.update(str(self.page_size).encode())
        for arr in (self.kinds, self.ids, self.args):
            h.update(np.ascontiguousarray(arr, dtype="<i8").tobytes())
        h.update(repr(self.alloc_frames()).encode())
        return h.hexdigest()

    @classmethod
    def from_events(cls, events: Sequence[TraceEvent], page_size: int = 4096) -> "Trace":
        ctx_index: dict = {}
        kinds, ids, args, ctx = [], [], [], []
        for ev in events:
            kinds.append(int(ev.kind))
            ids.append(ev.obj)
            if ev.kind == EventKind.ALLOC:
                args.append(ev.size)
                ctx.append(ctx_index.setdefault(tuple(ev.frames), len(ctx_index)))
            else:
                args.append(ev.offset if ev.kind == EventKind.ACCESS else 0)
                ctx.append(-1)
        return cls(
            np.asarray(kinds, dtype=np.uint8),
            np.asarray(ids, dtype=np.int64),
            np.asarray(args, dtype=np.int64),
            np.asarray(ctx, dtype=np.int32),
            list(ctx_index),
            page_size,
        )


def concat(parts: Sequence[Trace]) -> Trace:
    """Join traces that share a context table and page size."""
    first = parts[0]
    return Trace(
        np.concatenate([p.kinds for p in parts]),
        np.concatenate([p.ids for p in parts]),
        np.concatenate([p.args for p in parts]),
        np.concatenate([p.ctx for p in parts]),
        list(first.contexts),
        first.page_size,
    )


# ---------------------------------------------------------------------------
# Specs


class Archetype(enum.Enum):
    STABLE_ZIPF = "stable_zipf"
    PHASE_CHANGE = "phase_change"
    CHECKERED = "checkered"
    SMALL_OBJECT_SKEW = "small_object_skew"


@dataclass(frozen=True)
class ContextSpec:
    """One allocation site of the small-object workload."""

    name: str
    size: int
    object_share: float
    access_share: float
    skew: float = 0.0


# Tree-index flavoured default: few hot inner nodes, many cold leaves of the
# same size, and mid-temperature value records of a different size.
BTREE_CONTEXTS = (
    ContextSpec("inner", 256, 0.04, 0.45, 0.6),
    ContextSpec("leaf", 256, 0.46, 0.15, 0.0),
    ContextSpec("value", 96, 0.50, 0.40, 0.3),
)

DEFAULT_FRAME = (0x401000, 0x401040, 0x401080)


@dataclass(frozen=True)
class WorkloadSpec:
    archetype: Archetype = Archetype.STABLE_ZIPF
    num_objects: int = 1000
    object_size: int = 4096
    total_accesses: int = 100_000
    skew: float = 0.99
    hot_fraction: float = 0.2
    hot_share: float = 0.9
    switch_at: float = 0.5
    hot_a_start: int = 0
    hot_b_start: Optional[int] = None
    regions: int = 4
    period: int = 0
    contexts: tuple = BTREE_CONTEXTS
    wrapper_frames: int = 3
    frame_depth: int = 14
    seed: int = 0
    page_size: int = 4096
    arena_pages: int = 1 << 22

    @property
    def hot_objects(self) -> int:
        return max(1, int(round(self.hot_fraction * self.num_objects)))

    @property
    def b_start(self) -> int:
        return self.num_objects // 2 if self.hot_b_start is None else self.hot_b_start

    @property
    def checkered_period(self) -> int:
        return self.period or max(1, self.total_accesses // (2 * self.regions))


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & MASK64, *keys]))


def _validate(spec: WorkloadSpec) -> None:
    if spec.num_objects < 1 or spec.total_accesses < 0 or spec.object_size < 1:
        raise WorkloadError("num_objects, object_size must be positive and total_accesses >= 0")
    if spec.page_size < 1:
        raise WorkloadError("page_size must be positive")
    if not 0.0 <= spec.hot_share <= 1.0 or not 0.0 < spec.hot_fraction <= 1.0:
        raise WorkloadError("hot_share must lie in [0,1] and hot_fraction in (0,1]")
    if spec.skew < 0:
        raise WorkloadError("skew must be >= 0")
    if spec.archetype is not Archetype.SMALL_OBJECT_SKEW:
        pages_per_obj = -(-spec.object_size // spec.page_size)
        if spec.object_size < spec.page_size:
            pages_needed = -(-spec.num_objects * spec.object_size // spec.page_size)
        else:
            pages_needed = spec.num_objects * pages_per_obj
        if pages_needed > spec.arena_pages:
            raise WorkloadError(
                f"workload needs {pages_needed} pages but the arena holds {spec.arena_pages}"
            )


def _alloc_block(ids: np.ndarray, sizes: np.ndarray, ctx: np.ndarray, contexts, page_size) -> Trace:
    n = len(ids)
    return Trace(
        np.full(n, ALLOC, dtype=np.uint8),
        ids.astype(np.int64),
        sizes.astype(np.int64),
        ctx.astype(np.int32),
        list(contexts),
        page_size,
    )


def _access_block(obj: np.ndarray, offsets: np.ndarray, contexts, page_size) -> Trace:
    n = len(obj)
    return Trace(
        np.full(n, ACCESS, dtype=np.uint8),
        obj.astype(np.int64),
        offsets.astype(np.int64),
        np.full(n, -1, dtype=np.int32),
        list(contexts),
        page_size,
    )


def _uniform_allocs(spec: WorkloadSpec) -> Trace:
    n = spec.num_objects
    return _alloc_block(
        np.arange(n),
        np.full(n, spec.object_size),
        np.zeros(n),
        [DEFAULT_FRAME],
        spec.page_size,
    )


def zipf_table(n: int, skew: float) -> np.ndarray:
    """Inverse-CDF table for ranks 0..n-1 with P(rank i) proportional to (i+1)^-skew."""
    ranks = np.arange(1, n + 1, dtype=np.float64)
    with np.errstate(over="ignore", under="ignore"):
        w = ranks ** (-skew) if np.isfinite(skew) else (ranks == 1).astype(np.float64)
    cdf = np.cumsum(w)
    return cdf / cdf[-1]


def zipf_draw(rng: np.random.Generator, table: np.ndarray, n: int) -> np.ndarray:
    idx = np.searchsorted(table, rng.random(n), side="right")
    return np.minimum(idx, len(table) - 1)


def _offsets(rng: np.random.Generator, sizes: np.ndarray) -> np.ndarray:
    return np.floor(rng.random(len(sizes)) * sizes).astype(np.int64)


def gen_stable_zipf(spec: WorkloadSpec) -> Trace:
    """Fixed zipfian popularity, most popular objects allocated first."""
    _validate(spec)
    table = zipf_table(spec.num_objects, spec.skew)
    obj = zipf_draw(_rng(spec.seed, 1, 0), table, spec.total_accesses)
    offs = _offsets(_rng(spec.seed, 2, 0), np.full(len(obj), spec.object_size))
    allocs = _uniform_allocs(spec)
    return concat([allocs, _access_block(obj, offs, allocs.contexts, spec.page_size)])


def _two_level(rng, n: int, start: int, hot: int, total: int, share: float) -> np.ndarray:
    """``share`` of draws uniform over [start, start+hot), the rest uniform elsewhere."""
    is_hot = rng.random(n) < share
    hot_pick = start + rng.integers(0, hot, n)
    cold_n = total - hot
    if cold_n <= 0:
        return hot_pick
    r = rng.integers(0, cold_n, n)
    cold_pick = np.where(r < start, r, r + hot)
    return np.where(is_hot, hot_pick, cold_pick)


def _hot_phase(spec: WorkloadSpec, phase: int, start: int, n: int, contexts) -> Trace:
    obj = _two_level(_rng(spec.seed, 1, phase), n, start, spec.hot_objects, spec.num_objects,
                     spec.hot_share)
    offs = _offsets(_rng(spec.seed, 2, phase), np.full(n, spec.object_size))
    return _access_block(obj, offs, contexts, spec.page_size)


def gen_hotset(spec: WorkloadSpec, start: Optional[int] = None) -> Trace:
    """Stable two-level trace: ``hot_share`` of accesses on one fixed hot set."""
    _validate(spec)
    start = spec.hot_a_start if start is None else start
    if start + spec.hot_objects > spec.num_objects:
        raise WorkloadError("hot set runs past the last object")
    allocs = _uniform_allocs(spec)
    return concat([allocs, _hot_phase(spec, 0, start, spec.total_accesses, allocs.contexts)])


def gen_phase_change(spec: WorkloadSpec) -> Trace:
    """Hot set A for the first ``switch_at`` of the run, disjoint hot set B after."""
    _validate(spec)
    h = spec.hot_objects
    a, b = spec.hot_a_start, spec.b_start
    if a + h > spec.num_objects or b + h > spec.num_objects:
        raise WorkloadError("hot sets run past the last object")
    if a < b + h and b < a + h:
        raise WorkloadError("hot sets A and B overlap")
    n1 = int(round(spec.total_accesses * spec.switch_at))
    allocs = _uniform_allocs(spec)
    return concat([
        allocs,
        _hot_phase(spec, 0, a, n1, allocs.contexts),
        _hot_phase(spec, 1, b, spec.total_accesses - n1, allocs.contexts),
    ])


def gen_checkered(spec: WorkloadSpec) -> Trace:
    """Hot region cycles through ``regions`` disjoint regions every ``period`` accesses."""
    _validate(spec)
    k = spec.regions
    if k < 1:
        raise WorkloadError("regions must be >= 1")
    stride = spec.num_objects // k
    if k > 1 and spec.hot_objects > stride:
        raise WorkloadError("regions x hot set size exceeds the object count")
    p = spec.checkered_period
    allocs = _uniform_allocs(spec)
    parts = [allocs]
    done = 0
    block = 0
    while done < spec.total_accesses:
        n = min(p, spec.total_accesses - done)
        parts.append(_hot_phase(spec, block, (block % k) * stride, n, allocs.contexts))
        done += n
        block += 1
    return concat(parts)


def context_frames(c: int, wrapper_frames: int, depth: int) -> tuple:
    """Synthetic backtrace (innermost first): shared wrappers, then site-specific frames."""
    shared = tuple(0x401000 + 0x40 * k for k in range(wrapper_frames))
    own = tuple(0x500000 + 0x1000 * c + 0x40 * k for k in range(max(1, depth - wrapper_frames)))
    return shared + own


def gen_small_object_skew(spec: WorkloadSpec) -> Trace:
    """Many small objects from several call sites, interleaved in time.

    Each site has its own object size, share of objects and share of accesses;
    within a site, popularity is zipfian over a random permutation.
    """
    _validate(spec)
    ctxs = spec.contexts
    if len(ctxs) < 2:
        raise WorkloadError("small-object workload needs at least two allocation contexts")
    n = spec.num_objects
    obj_w = np.array([c.object_share for c in ctxs], dtype=np.float64)
    acc_w = np.array([c.access_share for c in ctxs], dtype=np.float64)
    if (obj_w <= 0).any() or (acc_w < 0).any():
        raise WorkloadError("context shares must be positive")
    obj_w /= obj_w.sum()
    acc_w /= acc_w.sum()
    sizes_by_ctx = np.array([c.size for c in ctxs], dtype=np.int64)
    if (sizes_by_ctx < 1).any():
        raise WorkloadError("context object sizes must be positive")
    total_bytes = int((obj_w * n * sizes_by_ctx).sum())
    if total_bytes > spec.arena_pages * spec.page_size:
        raise WorkloadError("small-object workload exceeds the arena")

    rng = _rng(spec.seed, 3, 0)
    owner = rng.choice(len(ctxs), size=n, p=obj_w)
    # guarantee every context owns at least one object
    for c in range(len(ctxs)):
        if not (owner == c).any():
            owner[c] = c
    contexts = [context_frames(c, spec.wrapper_frames, spec.frame_depth) for c in range(len(ctxs))]
    allocs = _alloc_block(np.arange(n), sizes_by_ctx[owner], owner, contexts, spec.page_size)

    members = [np.flatnonzero(owner == c) for c in range(len(ctxs))]
    arng = _rng(spec.seed, 1, 0)
    which = arng.choice(len(ctxs), size=spec.total_accesses, p=acc_w)
    obj = np.empty(spec.total_accesses, dtype=np.int64)
    for c, ids in enumerate(members):
        sel = np.flatnonzero(which == c)
        perm = _rng(spec.seed, 4, c).permutation(ids)
        ranks = zipf_draw(_rng(spec.seed, 5, c), zipf_table(len(ids), ctxs[c].skew), len(sel))
        obj[sel] = perm[ranks]
    offs = _offsets(_rng(spec.seed, 2, 0), sizes_by_ctx[owner][obj])
    return concat([allocs, _access_block(obj, offs, contexts, spec.page_size)])


GENERATORS = {
    Archetype.STABLE_ZIPF: gen_stable_zipf,
    Archetype.PHASE_CHANGE: gen_phase_change,
    Archetype.CHECKERED: gen_checkered,
    Archetype.SMALL_OBJECT_SKEW: gen_small_object_skew,
}


def generate(spec: WorkloadSpec) -> Trace:
    return GENERATORS[spec.archetype](spec)


def object_probabilities(spec: WorkloadSpec, phase: int = 0) -> np.ndarray:
    """Per-object access probability for a stationary stretch of the workload."""
    n = spec.num_objects
    if spec.archetype is Archetype.STABLE_ZIPF:
        return np.diff(zipf_table(n, spec.skew), prepend=0.0)
    h = spec.hot_objects
    if spec.archetype is Archetype.PHASE_CHANGE:
        start = spec.hot_a_start if phase == 0 else spec.b_start
    elif spec.archetype is Archetype.CHECKERED:
        start = (phase % spec.regions) * (n // spec.regions)
    else:
        raise WorkloadError("probabilities are only defined for the large-object archetypes")
    p = np.full(n, (1.0 - spec.hot_share) / (n - h) if n > h else 0.0)
    p[start:start + h] = spec.hot_share / h
    return p


def expected_distinct(probabilities: np.ndarray, draws: int) -> float:
    """Expected number of distinct items touched by ``draws`` independent draws."""
    return float(np.sum(-np.expm1(draws * np.log1p(-np.minimum(probabilities, 1 - 1e-15)))))


# ---------------------------------------------------------------------------
# Sampling


@dataclass(frozen=True)
class SamplingModel:
    """One-in-``rate`` observation of accesses, keyed on (seed, event seq).

    ``jitter`` perturbs the per-event sampling probability uniformly within
    ``(1 +/- jitter) / rate``, which keeps the mean rate at exactly ``1/rate``.
    """

    rate: int = 1
    seed: int = 0
    jitter: float = 0.0

    def __post_init__(self):
        if self.rate < 1:
            raise ValueError("sampling rate N must be >= 1")
        if not 0.0 <= self.jitter < 1.0:
            raise ValueError("jitter must lie in [0, 1)")


def _mix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def _mix64_np(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


_JITTER_SALT = 0x5DEECE66D


def _unit(h):
    return (h >> 11) * (1.0 / (1 << 53))


def sample(model: SamplingModel, seq: int) -> bool:
    if model.rate == 1 and model.jitter == 0.0:
        return True
    key = _mix64(model.seed & MASK64)
    weight = 1.0
    if model.jitter:
        u2 = _unit(_mix64(key ^ _JITTER_SALT ^ (seq & MASK64)))
        weight = 1.0 + model.jitter * (2.0 * u2 - 1.0)
    return _unit(_mix64(key ^ (seq & MASK64))) * model.rate < weight


def sample_mask(model: SamplingModel, n: int, start: int = 0) -> np.ndarray:
    """Vectorised ``sample`` over event sequence numbers ``start .. start+n-1``."""
    if model.rate == 1 and model.jitter == 0.0:
        return np.ones(n, dtype=bool)
    key = np.uint64(_mix64(model.seed & MASK64))
    seq = np.arange(start, start + n, dtype=np.uint64)
    u = (_mix64_np(seq ^ key) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
    if not model.jitter:
        return u * model.rate < 1.0
    u2 = (_mix64_np(seq ^ key ^ np.uint64(_JITTER_SALT)) >> np.uint64(11)).astype(np.float64)
    u2 *= 1.0 / (1 << 53)
    return u * model.rate < 1.0 + model.jitter * (2.0 * u2 - 1.0)


# ---------------------------------------------------------------------------
# Trace I/O


def write_trace(trace: Trace, path, binary: bool = False) -> None:
    path = Path(path)
    if binary:
        with open(path, "wb") as fh:
            fh.write(BINARY_MAGIC)
            fh.write(struct.pack("<II", trace.page_size, len(trace.contexts)))
            for frames in trace.contexts:
                fh.write(struct.pack("<I", len(frames)))
                fh.write(struct.pack(f"<{len(frames)}Q", *frames))
            rec = np.empty(len(trace), dtype=_RECORD)
            rec["kind"] = trace.kinds
            rec["id"] = trace.ids
            rec["arg"] = trace.args
            rec["ctx"] = trace.ctx
            fh.write(struct.pack("<Q", len(trace)))
            fh.write(rec.tobytes())
        return
    ctx_txt = [",".join(str(f) for f in frames) for frames in trace.contexts]
    lines = [f"{HEADER_PREFIX} page_size={trace.page_size}"]
    for k, o, a, c in zip(trace.kinds.tolist(), trace.ids.tolist(), trace.args.tolist(),
                          trace.ctx.tolist()):
        if k == ACCESS:
            lines.append(f"X {o} {a}")
        elif k == ALLOC:
            lines.append(f"A {o} {a} {ctx_txt[c]}")
        else:
            lines.append(f"F {o}")
    path.write_text("\n".join(lines) + "\n")


def _read_binary(data: bytes, path) -> Trace:
    try:
        pos = 4
        page_size, nctx = struct.unpack_from("<II", data, pos)
        pos += 8
        contexts = []
        for _ in range(nctx):
            (nf,) = struct.unpack_from("<I", data, pos)
            pos += 4
            contexts.append(tuple(struct.unpack_from(f"<{nf}Q", data, pos)))
            pos += 8 * nf
        (n,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        rec = np.frombuffer(data, dtype=_RECORD, count=n, offset=pos)
    except (struct.error, ValueError) as exc:
        raise TraceError(f"{path}: truncated binary trace ({exc})") from exc
    bad = np.flatnonzero(rec["kind"] > ACCESS)
    if len(bad):
        raise TraceError(f"{path}: record {int(bad[0])}: unknown kind {int(rec['kind'][bad[0]])}")
    return Trace(
        rec["kind"].astype(np.uint8),
        rec["id"].astype(np.int64),
        rec["arg"].astype(np.int64),
        rec["ctx"].astype(np.int32),
        contexts,
        int(page_size),
    )


def read_trace(path) -> Trace:
    """Parse a text or binary trace; errors carry the offending line number."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == BINARY_MAGIC:
        return _read_binary(data, path)
    text = data.decode("utf-8", errors="replace").splitlines()
    if not text or not text[0].startswith(HEADER_PREFIX):
        raise TraceError(f"{path}:1: missing '{HEADER_PREFIX}' header")
    page_size = 4096
    for tok in text[0][len(HEADER_PREFIX):].split():
        key, _, val = tok.partition("=")
        if key == "page_size":
            try:
                page_size = int(val)
            except ValueError:
                raise TraceError(f"{path}:1: bad page_size {val!r}") from None
    kinds, ids, args, ctx, linenos = [], [], [], [], []
    ctx_index: dict = {}
    for lineno, line in enumerate(text[1:], start=2):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        linenos.append(lineno)
        tag = parts[0]
        try:
            if tag == "X" and len(parts) == 3:
                kinds.append(ACCESS)
                ids.append(int(parts[1]))
                args.append(int(parts[2]))
                ctx.append(-1)
            elif tag == "A" and len(parts) == 4:
                frames = tuple(int(f) for f in parts[3].split(","))
                size = int(parts[2])
                kinds.append(ALLOC)
                ids.append(int(parts[1]))
                args.append(size)
                ctx.append(ctx_index.setdefault(frames, len(ctx_index)))
            elif tag == "F" and len(parts) == 2:
                kinds.append(FREE)
                ids.append(int(parts[1]))
                args.append(0)
                ctx.append(-1)
            else:
                raise TraceError(f"{path}:{lineno}: malformed record {line!r}")
        except ValueError as exc:
            if isinstance(exc, TraceError):
                raise
            raise TraceError(f"{path}:{lineno}: malformed record {line!r}") from None
        if ids[-1] < 0 or args[-1] < 0:
            raise TraceError(f"{path}:{lineno}: negative field in {line!r}")
    return Trace(
        np.asarray(kinds, dtype=np.uint8),
        np.asarray(ids, dtype=np.int64),
        np.asarray(args, dtype=np.int64),
        np.asarray(ctx, dtype=np.int32),
        list(ctx_index),
        page_size,
        np.asarray(linenos, dtype=np.int64),
    )
