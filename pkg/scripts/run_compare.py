"""Train every configured pooling method over all seeds and print the summary.

Thin wrapper around ``drasp compare`` that also prints the DRASP margin over
the baselines.

    python scripts/run_compare.py configs/desk.conf --out runs/desk --workers 4
"""
import argparse
from pathlib import Path

from drasp import config as cfgmod
from drasp import experiments as ex


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("config")
    parser.add_argument("--out", default="runs/compare")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    exp = cfgmod.load(args.config)
    exp.workers = args.workers
    res = ex.compare(exp, Path(args.out))
    srcc = {}
    for row in res["summary"]:
        method, head, ok, failed, *stats = row
        srcc[method] = stats[4]
        print(f"{method:<32} {head:<6} srcc {stats[4]:.3f} +/- {stats[5]:.3f}  "
              f"lcc {stats[2]:.3f}  ktau {stats[6]:.3f}  runs {ok}/{ok + failed}")
    if "drasp" in srcc:
        for method, value in srcc.items():
            if method != "drasp":
                print(f"drasp - {method}: {srcc['drasp'] - value:+.3f}")
    for r in res["results"]:
        if "fusion" in r:
            print(f"seed {r['seed']}: alpha {r['fusion'][0]:.3f} beta {r['fusion'][1]:.3f}")


if __name__ == "__main__":
    main()
