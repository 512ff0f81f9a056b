"""Command-line runner: generate, compare, sweep-segment, export-scatter.

Output directory precedence: --out, experiment.out in the config, $DRASP_OUT,
then ./runs. On failure the last stderr line is a JSON object prefixed with
``ERROR`` and the exit status is 1.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import config as cfgmod
from . import experiments as ex
from . import synthbench as sb

OUT_ENV = "DRASP_OUT"


def _experiment(args) -> cfgmod.ExperimentConfig:
    exp = cfgmod.load(args.config) if args.config else cfgmod.ExperimentConfig()
    if args.workers is not None:
        exp = dataclasses.replace(exp, workers=args.workers)
    return exp


def _out_dir(args, exp) -> Path:
    return Path(args.out or exp.out or os.environ.get(OUT_ENV) or "runs")


def cmd_generate(args) -> int:
    exp = _experiment(args)
    bench = exp.bench if args.seed is None else dataclasses.replace(exp.bench, seed=args.seed)
    out = _out_dir(args, exp) / "dataset"
    digest = sb.save(sb.generate(bench), out)
    print(f"dataset {out}")
    print(f"sha256 {digest}")
    return 0


def cmd_compare(args) -> int:
    exp = _experiment(args)
    if args.seed is not None:
        exp = dataclasses.replace(exp, seeds=(args.seed,))
    out = _out_dir(args, exp)
    res = ex.compare(exp, out)
    print(f"wrote {out / 'compare.tsv'} ({len(res['rows'])} rows)")
    for row in res["summary"]:
        print(f"{row[0]:<32} {row[1]:<8} srcc {row[8]:.3f} +/- {row[9]:.3f}  failed {row[3]}")
    return 0


def cmd_sweep(args) -> int:
    exp = _experiment(args)
    if args.seed is not None:
        exp = dataclasses.replace(exp, seeds=(args.seed,))
    n_values = tuple(int(v) for v in args.n.split(",")) if args.n else None
    out = _out_dir(args, exp)
    res = ex.sweep_segment(exp, out, n_values)
    print(f"wrote {out / 'sweep.tsv'} ({len(res['rows'])} rows)")
    for row in res["summary"]:
        print(f"n={row[0]:<4} {row[1]:<8} srcc {row[8]:.3f} +/- {row[9]:.3f}")
    return 0


def cmd_export_scatter(args) -> int:
    exp = _experiment(args)
    if args.split:
        exp = dataclasses.replace(exp, split=args.split)
    path = ex.export_scatter(args.checkpoint, exp, _out_dir(args, exp))
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drasp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="key = value experiment config")
        p.add_argument("--seed", type=int, help="override seed(s)")
        p.add_argument("--workers", type=int, help="parallel runs")
        p.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV} or ./runs)")

    p = sub.add_parser("generate", help="write a synthetic benchmark dataset")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("compare", help="train and evaluate every pooling method")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep-segment", help="DRASP over a range of segment lengths")
    common(p)
    p.add_argument("--n", help="comma list of segment lengths (default sweep.n_values)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-scatter", help="per-system predicted vs true MOS from a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_export_scatter)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        err = {"command": args.command, "error": type(exc).__name__, "message": str(exc)}
        print("ERROR " + json.dumps(err, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
