"""``tierlab`` command line: generate traces, run simulations, compare configurations.

Exit codes: 0 success, 1 internal invariant violation, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .allocator import GroupingStrategy, Strategy, resolve
from .config import ConfigError, RunConfig, load_config, load_matrix, load_workload_spec, substream_seed
from .core import InvariantError
from .metrics import access_cdf, heatmap, working_set_size, write_cdf, write_heatmap, write_report
from .simulator import SimConfig, simulate
from .workload import TraceError, generate, read_trace, write_trace

EXIT_OK, EXIT_INVARIANT, EXIT_INPUT = 0, 1, 2


def load_trace(cfg: RunConfig):
    if cfg.trace_path is not None:
        return read_trace(cfg.trace_path)
    return generate(cfg.workload_spec())


def resolve_trace(cfg: RunConfig, trace=None):
    trace = load_trace(cfg) if trace is None else trace
    try:
        return resolve(trace, cfg.strategy)
    except TraceError as e:
        idx = getattr(e, "event", None)
        if cfg.trace_path is not None and idx is not None:
            where = f":{trace.lines[idx]}" if trace.lines is not None else f" event {idx}"
            raise TraceError(f"{cfg.trace_path}{where}: {e}") from None
        raise


def run_config(cfg: RunConfig, resolved=None):
    """Simulate one configuration; returns ``(resolved trace, report)``."""
    resolved = resolve_trace(cfg) if resolved is None else resolved
    touched = int((resolved.page_access_counts() > 0).sum())
    sim_cfg = SimConfig(
        policy=cfg.policy,
        fast_pages=cfg.resolve_fast_pages(touched),
        capacity_pages=cfg.capacity_pages,
        sampling=cfg.sampling(),
        migration=cfg.migration,
        cost=cfg.cost,
        scale=cfg.scale,
        bucket_accesses=cfg.bucket_accesses,
        warmup_accesses=cfg.warmup_accesses,
        invariant_every_ticks=cfg.invariant_every_ticks,
    )
    report = simulate(resolved, sim_cfg)
    echo = cfg.echo()
    echo["policy"] = cfg.policy.resolved(cfg.scale, resolved.page_size)
    echo["fast_pages_effective"] = sim_cfg.fast_pages
    echo["trace_fingerprint"] = resolved.fingerprint
    report.config = echo
    report.extra = {
        "pages": resolved.num_pages,
        "touched_pages": touched,
        "peak_pages": resolved.peak_pages,
        "fragmentation": resolved.fragmentation,
    }
    return resolved, report


def _out_dir(args, cfg=None) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.out is not None:
        return Path(cfg.out)
    return Path("out")


def _load(args, path) -> RunConfig:
    return load_config(path).with_overrides(seed=args.seed, scale=args.scale)


# -- subcommands --------------------------------------------------------------


def cmd_generate(args) -> int:
    spec, seed = load_workload_spec(args.spec)
    if args.seed is not None:
        seed = args.seed
    spec = dataclasses.replace(spec, seed=substream_seed(seed, "workload"))
    trace = generate(spec)
    out = Path(args.output) if args.output else _out_dir(args) / "trace.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(trace, out, binary=args.binary)
    resolved = resolve(trace, GroupingStrategy(Strategy.TIME))
    wss = working_set_size(resolved, args.tick_interval)
    print(f"wrote {out} ({len(trace)} events, {trace.num_accesses} accesses)")
    print(f"estimated WSS: {wss / 2**20:.2f} MiB ({wss / trace.page_size:.1f} pages per "
          f"{args.tick_interval}-access interval)")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args, args.config)
    _, report = run_config(cfg)
    out = _out_dir(args, cfg)
    write_report(report, out)
    print(f"hit_rate={report.hit_rate:.4f} promotions={report.promotions} "
          f"demotions={report.demotions} runtime_ns={report.estimated_runtime_ns:.6g} -> {out}")
    return EXIT_OK


def _compare_row(item):
    name, cfg = item
    resolved, report = run_config(cfg)
    return name, cfg, resolved.fingerprint, report


SUMMARY_COLUMNS = ["name", "policy", "strategy", "hit_rate", "promotions", "demotions",
                   "migrations", "estimated_runtime_ns", "slowdown_vs_best", "trace_fingerprint"]


def cmd_compare(args) -> int:
    rows = []
    if args.matrix:
        rows.extend(load_matrix(args.matrix))
    for p in args.configs:
        rows.append((Path(p).stem, load_config(p)))
    if not rows:
        raise ConfigError("compare needs config files or --matrix")
    rows = [(n, c.with_overrides(seed=args.seed, scale=args.scale)) for n, c in rows]
    fps = {c.trace_path or repr(c.workload_spec()) for _, c in rows}
    if len(fps) > 1:
        raise ConfigError("compare rows must share one trace (workload or trace file differs)")
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_compare_row, rows))
    else:
        results = [_compare_row(r) for r in rows]
    if len({fp for _, _, fp, _ in results}) > 1:
        raise ConfigError("compare rows resolved to different traces")
    best = min(r.estimated_runtime_ns for *_, r in results)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for name, cfg, fp, r in results:
            slow = r.estimated_runtime_ns / best if best > 0 else 1.0
            w.writerow([name, cfg.policy.kind.value, cfg.strategy.label, f"{r.hit_rate:.6f}",
                        r.promotions, r.demotions, r.migrations,
                        f"{r.estimated_runtime_ns:.1f}", f"{slow:.4f}", fp])
            if args.reports:
                write_report(r, out / name)
    print(path.read_text(), end="")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    cfg = _load(args, args.config)
    resolved = resolve_trace(cfg)
    m = heatmap(resolved, args.address_buckets, args.time_buckets)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_heatmap(m, out / "heatmap.csv")
    print(f"wrote {out / 'heatmap.csv'} ({m.shape[0]}x{m.shape[1]}, {int(m.sum())} accesses)")
    return EXIT_OK


def cmd_cdf(args) -> int:
    cfg = _load(args, args.config)
    resolved = resolve_trace(cfg)
    c = access_cdf(resolved)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_cdf(c, out / "cdf.csv")
    print(f"wrote {out / 'cdf.csv'} ({len(c)} touched pages)")
    return EXIT_OK


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="run seed (overrides config)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--scale", type=float, default=argparse.SUPPRESS,
                        help="multiplier for every sample-denominated interval")
    p = argparse.ArgumentParser(prog="tierlab", parents=[common],
                                description="Trace-driven tiered-memory simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic trace")
    g.add_argument("spec", help="file with a [workload] section")
    g.add_argument("-o", "--output", help="trace path (default: OUT/trace.txt)")
    g.add_argument("--binary", action="store_true", help="compact binary format")
    g.add_argument("--tick-interval", type=int, default=1000,
                   help="accesses per interval for the WSS estimate")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", parents=[common], help="run one configuration")
    s.add_argument("config")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", parents=[common], help="run several configurations on one trace")
    c.add_argument("configs", nargs="*")
    c.add_argument("--matrix", help="file with base sections and [row NAME] overrides")
    c.add_argument("--jobs", type=int, default=1, help="rows to run in parallel")
    c.add_argument("--reports", action="store_true", help="also write per-row reports")
    c.set_defaults(func=cmd_compare)

    h = sub.add_parser("heatmap", parents=[common], help="access heatmap CSV")
    h.add_argument("config")
    h.add_argument("--address-buckets", type=int, default=64)
    h.add_argument("--time-buckets", type=int, default=64)
    h.set_defaults(func=cmd_heatmap)

    d = sub.add_parser("cdf", parents=[common], help="per-page access CDF CSV")
    d.add_argument("config")
    d.set_defaults(func=cmd_cdf)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("seed", "out", "scale"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        return args.func(args)
    except InvariantError as e:
        print(f"tierlab: invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ValueError, OSError) as e:
        print(f"tierlab: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
