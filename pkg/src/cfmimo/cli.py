"""Command line entry point: ``cfmimo run`` and ``cfmimo replay``."""

from __future__ import annotations

import argparse
import logging
import sys

from .experiment import (EQUAL, MAXMIN, ExperimentSpec, emit_results, load_manifest,
                         run_experiment)
from .precoder import SCHEMES
from .scenario import PRESETS, ConfigError, SystemConfig


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _load_config(args) -> SystemConfig:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.preset:
        return PRESETS[args.preset]
    if args.config:
        return SystemConfig.from_file(args.config)
    return SystemConfig()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfmimo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate drops and write per-user SE results")
    run.add_argument("--config", help="JSON system configuration (may name a base preset)")
    run.add_argument("--preset", choices=sorted(PRESETS), help="built-in configuration")
    run.add_argument("--seed", type=_u64, required=True)
    run.add_argument("--drops", type=_positive, default=50)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--scheme", action="append", choices=SCHEMES, dest="schemes",
                     help="repeat to select several (default: all)")
    run.add_argument("--power", choices=(MAXMIN, EQUAL), default=MAXMIN,
                     help="fpZF power policy; MRT baselines always use equal power")
    run.add_argument("--mc-blocks", type=_positive, default=1000)
    run.add_argument("--workers", type=_positive, default=1,
                     help="worker processes (results do not depend on this)")
    run.add_argument("--plot", action="store_true", help="also write cdf.png")

    replay = sub.add_parser("replay", help="re-run the experiment recorded in a manifest")
    replay.add_argument("manifest")
    replay.add_argument("--out", required=True)
    replay.add_argument("--workers", type=_positive, default=1)
    replay.add_argument("--plot", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            spec = ExperimentSpec(config=_load_config(args), seed=args.seed, n_drops=args.drops,
                                  schemes=tuple(args.schemes or SCHEMES), power=args.power,
                                  n_mc_blocks=args.mc_blocks, workers=args.workers)
        else:
            spec = load_manifest(args.manifest, workers=args.workers)
        result = run_experiment(spec)
        paths = emit_results(result, args.out, plot=args.plot)
    except (ConfigError, OSError, KeyError) as exc:
        print(f"cfmimo: error: {exc}", file=sys.stderr)
        return 2
    for label, table in result.tables.items():
        print(f"{label:14s} 95%-likely SE {table.percentiles['p5']:.4f}  "
              f"median SE {table.percentiles['p50']:.4f}  ({len(table.samples)} samples)")
    if result.exclusions:
        print(f"{len(result.exclusions)} excluded (drop, scheme) pairs; see manifest.json")
    print(f"results written to {paths['manifest.json'].parent}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
