"""How much of the planted signal is recoverable from hand-built pooled features.

Fits a least-squares regressor on four feature sets of the raw frames
(global mean projection, plus global variance, plus segment-mean variance,
plus both) and reports test-split system-level SRCC for each. This gives an
upper-bound style reference for what each pooling family can see, without
any training noise.

    python scripts/oracle_features.py [--config configs/desk.conf] [--n 5]
"""
import argparse

import numpy as np

from drasp import config as cfgmod
from drasp import metrics as mt
from drasp import synthbench as sb
from drasp.pooling import SegmentationSpec, segment_average

FEATURE_SETS = {
    "global mean": ("mean",),
    "global mean + variance": ("mean", "var"),
    "global mean + segment variance": ("mean", "seg_var"),
    "all three": ("mean", "var", "seg_var"),
}


def features(clip, u, spec):
    x = clip.frames
    seg = segment_average(x, spec).value
    return {"mean": x.mean(0) @ u, "var": x.var(0).mean(), "seg_var": seg.var(0).mean()}


def design(rows, keys):
    X = np.array([[r[k] for k in keys] for r in rows])
    return np.hstack([np.ones((len(X), 1)), X, X ** 2, np.sqrt(np.abs(X))])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="experiment config (bench.* keys are used)")
    parser.add_argument("--n", type=int, default=5, help="segment length")
    args = parser.parse_args()
    bench = cfgmod.load(args.config).bench if args.config else sb.BenchConfig()
    ds = sb.generate(bench)
    u = sb.quality_direction(bench.d_in)
    spec = SegmentationSpec(args.n)
    train, test = ds.split_clips("train"), ds.split_clips("test")
    f_train = [features(c, u, spec) for c in train]
    f_test = [features(c, u, spec) for c in test]
    truth = sb.system_truth(ds, "test")
    for name, keys in FEATURE_SETS.items():
        w, *_ = np.linalg.lstsq(design(f_train, keys), [c.true_mos for c in train], rcond=None)
        pred = design(f_test, keys) @ w
        agg = mt.system_aggregate(zip((c.system_id for c in test), pred))
        m = mt.system_metrics(agg, truth)
        print(f"{name:<32} srcc {m['srcc']:.3f}  lcc {m['lcc']:.3f}  ktau {m['ktau']:.3f}")


if __name__ == "__main__":
    main()
