"""Command line: ``tsharvest run|sweep|reachability``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from . import harness
from .harness import (
    AXES,
    METHODS,
    PRESETS,
    apply_axis,
    emit_results,
    load_config,
    preset,
    reachability_csv,
    reachability_curve,
    run_scenario,
    sweep,
)
from .workload import ground_truth_lines

log = logging.getLogger("tsharvest")


def parse_seeds(text: str) -> list[int]:
    """``1,2,5`` or ``1-5`` (inclusive) or a mix of both."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty seed list")
    return out


def parse_value(text: str):
    t = text.strip()
    if t.lower() in ("none", "unconstrained"):
        return None
    for kind in (int, float):
        try:
            return kind(t)
        except ValueError:
            pass
    return t


def base_config(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.scenario)
    over = {}
    for name in ("method", "harvest_delay", "warmup", "duration"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    if getattr(args, "cycles", None) is not None:
        over["gossip_cycles"] = args.cycles
    return replace(cfg, **over) if over else cfg


def _common(p, seeds_default="1"):
    src = p.add_mutually_exclusive_group()
    src.add_argument("-c", "--config", help="YAML scenario file (see configs/SCHEMA.md)")
    src.add_argument("--scenario", choices=sorted(PRESETS), default="firefighting",
                     help="built-in scenario when no config file is given")
    p.add_argument("-o", "--out", default="results", help="output directory")
    p.add_argument("-s", "--seeds", type=parse_seeds, default=parse_seeds(seeds_default),
                   help="seed list, e.g. 1,2,3 or 1-5")
    p.add_argument("-j", "--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--no-plots", action="store_true", help="skip the PNG figures")


def _overrides(p):
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--harvest-delay", type=float)
    p.add_argument("--cycles", type=int, help="gossip cycles within the harvest delay")
    p.add_argument("--warmup", type=float)
    p.add_argument("--duration", type=float)


def cmd_run(args) -> int:
    cfg = base_config(args)
    os.makedirs(args.out, exist_ok=True)
    if args.trace:
        # traces are per run, so these go one seed at a time
        rows = []
        for s in args.seeds:
            c = replace(cfg, seed=s)
            res = run_scenario(c, trace_path=os.path.join(args.out, f"trace_seed{s}.csv"))
            with open(os.path.join(args.out, f"ground_truth_seed{s}.csv"), "w") as fh:
                fh.write("\n".join(ground_truth_lines(res.conversations)) + "\n")
            rows.append(harness.SweepRow(c.method, s, res.metrics))
        table = harness.SweepTable("method", rows)
    else:
        table = sweep(cfg, "method", [cfg.method], args.seeds, jobs=args.jobs)
    paths = emit_results(table, args.out)
    if args.positions:
        for s in args.seeds:
            p = os.path.join(args.out, f"positions_seed{s}.csv")
            topo = harness.build_topology(replace(cfg, seed=s))
            with open(p, "w") as fh:
                fh.write("\n".join(topo.position_lines(args.positions)) + "\n")
            paths.append(p)
    with open(os.path.join(args.out, "config.json"), "w") as fh:
        json.dump(harness.config_dict(cfg), fh, indent=2, default=str)
    if not args.no_plots:
        from .plotting import plot_run_reachability
        m = table.rows[0].metrics
        paths.append(plot_run_reachability(m, os.path.join(args.out, "run_reachability.png")))
    for r in table.rows:
        m = r.metrics
        print(f"{m.method} seed={m.seed} tp={m.tp_ratio:.4f} fp={m.fp_ratio:.4f} "
              f"overhead={m.overhead_kbps:.3f}KB/s conversations={m.conversations}")
    for p in paths:
        log.info("wrote %s", p)
    return 0


def cmd_sweep(args) -> int:
    cfg = base_config(args)
    values = [parse_value(v) for v in args.values.split(",")]
    for v in values:
        apply_axis(cfg, args.axis, v)  # fail fast on a bad value
    table = sweep(cfg, args.axis, values, args.seeds, jobs=args.jobs,
                  pair_overhead=args.pair_overhead)
    paths = emit_results(table, args.out)
    if not args.no_plots:
        from .plotting import plot_sweep
        paths += plot_sweep(table, args.out, metrics=("tp_ratio", "fp_ratio", "overhead_kbps"),
                            label=cfg.name)
    for v, mean, se in table.summary(args.metric):
        print(f"{args.axis}={v} {args.metric}={mean:.4f} +- {se:.4f}")
    for p in paths:
        log.info("wrote %s", p)
    return 0


def _curve(job):
    return reachability_curve(*job)


def cmd_reachability(args) -> int:
    if args.config:
        cfgs = [load_config(p) for p in args.config]
    else:
        cfgs = [preset(n) for n in (args.scenario or sorted(PRESETS))]
    if args.duration is not None:
        cfgs = [replace(c, duration=args.duration) for c in cfgs]
    jobs = [(c, args.seeds, args.horizon, args.step) for c in cfgs]
    if args.jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            outs = list(ex.map(_curve, jobs))
    else:
        outs = [_curve(j) for j in jobs]
    curves = {c.name: rows for c, rows in zip(cfgs, outs)}
    os.makedirs(args.out, exist_ok=True)
    p = os.path.join(args.out, "reachability.csv")
    with open(p, "w", newline="") as fh:
        fh.write(reachability_csv(curves))
    paths = [p]
    if not args.no_plots:
        from .plotting import plot_reachability
        paths.append(plot_reachability(curves, os.path.join(args.out, "reachability.png")))
    for name, rows in curves.items():
        print(f"{name}: t=0 {rows[0][1]:.3f}  t={rows[-1][0]:g}s {rows[-1][1]:.3f}")
    for p in paths:
        log.info("wrote %s", p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tsharvest",
                                 description="Epidemic time-series harvesting simulator")
    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="store_true", help="log files written")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", parents=[verbose], help="run one scenario for each seed")
    _common(p)
    _overrides(p)
    p.add_argument("--trace", action="store_true",
                   help="also write the message trace and ground truth per seed")
    p.add_argument("--positions", type=int, nargs="?", const=10, default=0, metavar="EVERY",
                   help="write node positions every EVERY seconds per seed (default 10)")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", parents=[verbose], help="sweep one parameter over values and seeds")
    _common(p, "1-5")
    _overrides(p)
    p.add_argument("--axis", required=True, choices=sorted(AXES))
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--metric", default="tp_ratio",
                   choices=("tp_ratio", "fp_ratio", "overhead_kbps", "pair_overhead"))
    p.add_argument("--pair-overhead", action="store_true",
                   help="keep traces in memory to report per-pair overhead")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("reachability", parents=[verbose], help="reachability of service hosts after a conversation")
    p.add_argument("-c", "--config", action="append", help="YAML scenario file (repeatable)")
    p.add_argument("--scenario", action="append", choices=sorted(PRESETS),
                   help="built-in scenario (repeatable; default: all)")
    p.add_argument("-o", "--out", default="results")
    p.add_argument("-s", "--seeds", type=parse_seeds, default=parse_seeds("1-5"))
    p.add_argument("-j", "--jobs", type=int, default=1, help="worker processes (one per scenario)")
    p.add_argument("--horizon", type=float, default=960.0, help="seconds after conversation end")
    p.add_argument("--step", type=float, default=60.0)
    p.add_argument("--duration", type=float, help="conversation window length")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(fn=cmd_reachability)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
