"""Command-line entry points: generate, train, infer, eval, gradcheck.

Exit codes: 0 success, 1 validation/config error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ModelConfig, load_config
from .errors import (
    CheckpointError,
    ConfigError,
    DegenerateGeometryError,
    DegenerateSampleError,
    IngestionError,
    OracleError,
    ShapeError,
    StaleAttentionError,
)

VALIDATION_ERRORS = (ConfigError, ShapeError, DegenerateSampleError,
                     DegenerateGeometryError, StaleAttentionError,
                     CheckpointError, OracleError)
IO_ERRORS = (IngestionError, OSError)


def _cmd_generate(args) -> int:
    from .synthdata import generate_sequence

    h, w = args.size
    generate_sequence(args.seed, args.frames, h, w, loop=args.loop, out_dir=args.out)
    print(f"wrote {args.frames} frames ({h}x{w}, seed {args.seed}) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .pipeline import smoothed, train

    config = load_config(args.config) if args.config else ModelConfig()
    result = train(config, args.data, args.out, steps=args.steps, resume=args.resume,
                   log_path=args.log, ias_ckpt=args.ias_ckpt, quiet=False)
    totals = [r.total for r in result.history]
    if totals:
        curve = smoothed(totals, config.train.smooth_window)
        print(f"trained {result.final_step} steps; smoothed loss "
              f"{curve[0]:.4f} -> {curve[-1]:.4f}")
    print(f"checkpoint written to {args.out}")
    return 0


def _cmd_infer(args) -> int:
    from .pipeline import infer

    config = load_config(args.config) if args.config else ModelConfig()
    summary = infer(config, args.ckpt, args.frames, args.out,
                    dump_memory_stats=args.dump_memory_stats,
                    dump_light=args.dump_light)
    print(f"inferred {summary['frames']} frames; fused cloud has "
          f"{summary['cloud_points']} points; final cache {summary['final_cache']} tokens")
    return 0


def _cmd_eval(args) -> int:
    from .pipeline import evaluate, write_report

    thresholds = [float(t) for t in args.thresholds.split(",")] if args.thresholds else [1.0, 2.0, 5.0]
    report = evaluate(args.pred, args.gt, median_scale=not args.no_median_scale,
                      thresholds=thresholds)
    if args.out:
        write_report(args.out, report)
        print(f"report written to {args.out}")
    agg = report["aggregate"]["depth"]
    print(json.dumps({"aggregate_depth": agg, "aggregate_cloud": report["aggregate"]["cloud"]},
                     indent=1, sort_keys=True))
    return 0


def _cmd_gradcheck(args) -> int:
    from .oracles import run_gradcheck_suite

    results = run_gradcheck_suite(args.module)
    failed = False
    for name, res in results:
        worst = res.worst
        status = "pass" if res.passed else "FAIL"
        if not res.passed:
            failed = True
        print(f"{status}  {name:28s} worst rel error {worst.worst_rel_error:.3e} "
              f"({worst.name})")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coge",
        description="streaming pointmap/pose/depth estimation on procedural tube scenes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render a synthetic dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--size", type=int, nargs=2, metavar=("H", "W"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--loop", action="store_true",
                   help="revisit the first half of the trajectory in the second half")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="two-phase training on a generated dataset")
    p.add_argument("--config", help="JSON config file (defaults otherwise)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--steps", type=int, help="override config.train.steps")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--log", help="CSV training log path")
    p.add_argument("--ias-ckpt", dest="ias_ckpt",
                   help="load (if present) or save the frozen illumination net")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", help="stream frames through a checkpoint")
    p.add_argument("--config", help="JSON config file (defaults otherwise)")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--frames", required=True, help="dataset directory to stream")
    p.add_argument("--out", required=True)
    p.add_argument("--dump-memory-stats", action="store_true", dest="dump_memory_stats")
    p.add_argument("--dump-light", dest="dump_light", help="directory for light maps")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("eval", help="depth and point-cloud metrics vs ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--no-median-scale", action="store_true", dest="no_median_scale")
    p.add_argument("--thresholds", help="comma-separated cloud thresholds (default 1,2,5)")
    p.add_argument("--out", help="write the full JSON report here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference certification of gradients")
    p.add_argument("--module", help="restrict to one module (default: all)")
    p.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except IO_ERRORS as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
