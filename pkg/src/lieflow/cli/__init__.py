"""Command-line front end: ``lieflow {gen,train,sample,eval,analyze,scalar-demo}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from ..errors import ConfigError, FormatError, LieFlowError
from .config import RunConfig, parse_kv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lieflow", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value config file")
    common.add_argument("--experiment", help="experiment name (e.g. so2_c4, so3_oct)")
    common.add_argument("--seed", type=int)
    common.add_argument("--schedule", choices=["uniform", "power"])
    common.add_argument("--n", type=float, help="power schedule exponent")
    common.add_argument("--steps", type=int, help="inference steps T (0: 20 for 2D, 100 for 3D)")
    common.add_argument("--threads", type=int, help="BLAS threads (0: library default)")
    common.add_argument("--svg", action="store_true", help="also render SVG plots")
    common.add_argument("--run-dir", type=Path, help="explicit run directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="write train/test datasets and manifest")
    t = sub.add_parser("train", parents=[common], help="train the velocity network")
    t.add_argument("--resume", action="store_true", help="continue from checkpoint.ckpt")
    s = sub.add_parser("sample", parents=[common], help="generate group elements and trajectories")
    s.add_argument("--count", type=int, help="number of test clouds to sample from")
    sub.add_parser("eval", parents=[common], help="W1 of canonicalized elements vs ground truth")
    sub.add_parser("analyze", parents=[common], help="emit plot-data tables")
    sub.add_parser("scalar-demo", parents=[common], help="scalar SO(2) to C4 flow with posterior analysis")
    return p


def resolve_config(args) -> RunConfig:
    kv = {}
    if args.config is not None:
        kv.update(parse_kv(args.config.read_text()))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        kv[k.strip()] = v.strip()
    for name in ("experiment", "seed", "schedule", "n", "steps", "threads"):
        v = getattr(args, name)
        if v is not None:
            kv[name] = str(v)
    return RunConfig.from_dict(kv)


def _apply_threads(n: int) -> None:
    if n > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _error_line(code: int, exc: BaseException) -> None:
    kind = {EXIT_CONFIG: "config", EXIT_NUMERIC: "numerical", EXIT_IO: "io"}[code]
    msg = str(exc).replace("\n", " ")
    print(f"error kind={kind} type={type(exc).__name__} message={msg}", file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
    except (ConfigError, ValueError) as exc:
        _error_line(EXIT_CONFIG, exc)
        return EXIT_CONFIG
    except OSError as exc:
        _error_line(EXIT_IO, exc)
        return EXIT_IO
    _apply_threads(cfg.threads)
    from . import commands

    run = args.run_dir or commands.run_dir_for(cfg)
    try:
        if args.command == "gen":
            paths = commands.cmd_gen(cfg, run)
            print("\n".join(str(p) for p in paths.values()))
        elif args.command == "train":
            _, losses = commands.cmd_train(cfg, run, resume=args.resume)
            print(f"epochs={len(losses)} final_loss={losses[-1] if losses else float('nan')!r}")
        elif args.command == "sample":
            H, _ = commands.cmd_sample(cfg, run, args.count)
            print(f"elements={len(H)}")
        elif args.command == "eval":
            print(commands.cmd_eval(cfg, run).to_text(), end="")
        elif args.command == "analyze":
            for p in commands.cmd_analyze(cfg, run, svg=args.svg).values():
                print(p)
        elif args.command == "scalar-demo":
            commands.cmd_scalar_demo(cfg, run, svg=args.svg)
            print((run / "posterior_report.txt").read_text(), end="")
    except ConfigError as exc:
        _error_line(EXIT_CONFIG, exc)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        _error_line(EXIT_IO, exc)
        return EXIT_IO
    except (LieFlowError, FloatingPointError, ArithmeticError) as exc:
        _error_line(EXIT_NUMERIC, exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        _error_line(EXIT_CONFIG, exc)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
