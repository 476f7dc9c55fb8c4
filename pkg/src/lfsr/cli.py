"""``lfsr`` command line.

Exit status is 0 on success. Failures print one line, ``error[<category>]:
<message>``, to stderr and exit non-zero (2 for toolkit errors, 3 for I/O).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ExperimentConfig
from .errors import LFSRError
from .resample import METHODS

log = logging.getLogger("lfsr")


def _parse_keys(values):
    if not values:
        return None
    keys = []
    for v in values:
        parts = v.split(",")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"key {v!r} must be u,v,channel")
        keys.append([int(p) for p in parts])
    return keys


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands re-declare the global flags without defaults so they do not
    # clobber values given before the subcommand name
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=d(None), help="experiment config (YAML)")
    common.add_argument("--seed", type=int, default=d(None), help="override the config seed")
    common.add_argument("--out", type=Path, default=d(None), help="output location for this command")
    common.add_argument("--threads", type=int, default=d(None), help="BLAS thread limit")
    common.add_argument("--print-effective-config", action="store_true", default=d(False),
                        help="print the fully resolved config and exit")
    common.add_argument("-v", "--verbose", action="count", default=d(0))
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    p = argparse.ArgumentParser(prog="lfsr", description="Light-field spatial and angular super-resolution.",
                                parents=[_global_flags(suppress=False)])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="validate a light-field container")
    s.add_argument("path", type=Path)

    sub.add_parser("prepare", parents=[common], help="build low-resolution training/test derivatives")

    s = sub.add_parser("train", parents=[common], help="train angular or spatial networks")
    s.add_argument("target", choices=["angular", "spatial"])
    s.add_argument("--keys", nargs="*", metavar="U,V,C", help="spatial keys to train (default: config)")
    s.add_argument("--iterations", type=int, help="override train.iterations")
    s.add_argument("--resume", action="store_true", help="continue from saved checkpoints")
    s.add_argument("--data", type=Path, help="prepared data directory (default: config data_dir)")

    s = sub.add_parser("enhance", parents=[common], help="apply trained networks")
    s.add_argument("input", type=Path)
    s.add_argument("--mode", choices=pipeline.MODES, default="full")
    s.add_argument("--models", type=Path, help="model directory (default: config model_dir)")

    s = sub.add_parser("baseline", parents=[common], help="bicubic / nearest upsampling baselines")
    s.add_argument("input", type=Path)
    s.add_argument("--method", choices=METHODS, default="bicubic-interp")
    s.add_argument("--mode", choices=pipeline.MODES, default="full")

    s = sub.add_parser("evaluate", parents=[common], help="PSNR / SSIM report")
    s.add_argument("ref", type=Path)
    s.add_argument("test", type=Path)
    s.add_argument("--perspectives", default=None, help="all | middle (default: config)")
    s.add_argument("--method", default=None, help="label stored in the report")

    s = sub.add_parser("sweep", parents=[common], help="filter-size or depth sweep of the spatial net")
    s.add_argument("axis", choices=["filter-size", "depth"])
    s.add_argument("--key", metavar="U,V,C", help="perspective/channel to sweep (default: middle, channel 0)")
    s.add_argument("--iterations", type=int, help="override train.iterations")
    s.add_argument("--data", type=Path, help="prepared data directory (default: config data_dir)")
    return p


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig(base_dir=str(Path.cwd()))
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    iterations = getattr(args, "iterations", None)
    if iterations is not None:
        cfg.train = dataclasses.replace(cfg.train, iterations=iterations)
    return cfg


def _limit_threads(n):
    if n is None:
        return None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("threadpoolctl not installed; --threads ignored")
        return None
    return threadpool_limits(limits=n)


def run(args) -> object:
    cfg = _load_config(args)
    if args.print_effective_config:
        sys.stdout.write(cfg.to_yaml())
        return None
    cmd = args.command
    if cmd == "ingest":
        return pipeline.ingest(args.path)
    if cmd == "prepare":
        return pipeline.prepare(cfg, args.out or cfg.path(cfg.data_dir))
    if cmd == "train":
        data = args.data or cfg.path(cfg.data_dir)
        models = args.out or cfg.path(cfg.model_dir)
        if args.target == "angular":
            return pipeline.train_angular_cmd(cfg, data, models, resume=args.resume)
        keys = _parse_keys(args.keys) if args.keys is not None else None
        if args.keys is not None and not args.keys:
            keys = []
        return pipeline.train_spatial_cmd(cfg, data, models, keys=keys, resume=args.resume)
    if cmd == "enhance":
        out = args.out or Path(f"{args.input}_enhanced")
        return pipeline.enhance(args.input, args.models or cfg.path(cfg.model_dir), args.mode, out)
    if cmd == "baseline":
        out = args.out or Path(f"{args.input}_{args.method}")
        return pipeline.baseline(args.input, args.method, args.mode, out)
    if cmd == "evaluate":
        out = args.out or Path("report")
        persp = args.perspectives or cfg.evaluation.perspectives
        report = pipeline.evaluate(args.ref, args.test, out, persp, args.method)
        sys.stdout.write(report.table())
        return None
    if cmd == "sweep":
        key = tuple(int(p) for p in args.key.split(",")) if args.key else None
        return pipeline.sweep(cfg, args.data or cfg.path(cfg.data_dir), args.axis, args.out or Path("sweep"), key)
    raise AssertionError(cmd)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    limiter = _limit_threads(args.threads)
    try:
        result = run(args)
    except LFSRError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 2
    except argparse.ArgumentTypeError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 3
    finally:
        if limiter is not None:
            limiter.restore_original_limits()
    if result is not None:
        print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
