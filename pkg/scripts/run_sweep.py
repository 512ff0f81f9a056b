"""Segment-length sweep for DRASP; prints mean SRCC per segment length.

    python scripts/run_sweep.py configs/desk.conf --n 1,2,5,10,25,50 --out runs/sweep
"""
import argparse
from pathlib import Path

from drasp import config as cfgmod
from drasp import experiments as ex


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("config")
    parser.add_argument("--n", help="comma list of segment lengths")
    parser.add_argument("--out", default="runs/sweep")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    exp = cfgmod.load(args.config)
    exp.workers = args.workers
    n_values = [int(v) for v in args.n.split(",")] if args.n else None
    res = ex.sweep_segment(exp, Path(args.out), n_values)
    for row in res["summary"]:
        n, head, ok, failed, *stats = row
        print(f"n={n:<4} srcc {stats[4]:.3f} +/- {stats[5]:.3f}  lcc {stats[2]:.3f}  runs {ok}/{ok + failed}")


if __name__ == "__main__":
    main()
