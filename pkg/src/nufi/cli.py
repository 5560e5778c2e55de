"""Command-line entry point."""

from __future__ import annotations

import argparse
import os
import sys

from . import io
from .simulation import SimulationError, run


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nufi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a simulation described by a config file")
    p.add_argument("--config", required=True, help="path to the run config")
    p.add_argument("--mode", help="override the solver mode")
    p.add_argument("--restart-period", type=int, dest="period")
    p.add_argument("--max-rank", type=int, dest="max_rank")
    p.add_argument("--tol", type=float, dest="rel_tol")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", dest="out_dir")
    return parser


def _run(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as f:
            cfg = io.parse_config(f.read())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except io.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name in ("mode", "period", "max_rank", "rel_tol", "seed", "threads", "out_dir"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    try:
        setup = io.build_setup(cfg)
    except io.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        artifacts = run(setup)
    except SimulationError as exc:
        print(f"error: simulation aborted: {exc}", file=sys.stderr)
        return 3
    os.makedirs(cfg.out_dir, exist_ok=True)
    io.write_timeseries(artifacts.rows, os.path.join(cfg.out_dir, "timeseries.csv"),
                        cadence=cfg.diag_every)
    for name, snaps in artifacts.snapshots.items():
        if snaps:
            io.dump_snapshot(snaps[-1], os.path.join(cfg.out_dir, f"snapshot_{name}.nflr"))
    for hm in artifacts.heatmaps:
        base = os.path.join(cfg.out_dir, f"heatmap_{hm.species}_t{hm.time:g}")
        io.write_heatmap(hm.values, hm.meta, base)
    print(f"wrote {cfg.out_dir}/timeseries.csv "
          f"({len(artifacts.rows)} rows, {artifacts.counter.verlet_micro_steps} micro-steps)")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _run(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
