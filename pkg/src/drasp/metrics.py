"""System-level MOS evaluation: MSE, LCC, SRCC and Kendall tau-b."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.stats import rankdata


def _pair(x, y, min_len: int):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"inputs must be equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < min_len:
        raise ValueError(f"need at least {min_len} points, got {x.size}")
    return x, y


def system_aggregate(clip_predictions: Iterable[tuple[str, float]]) -> dict[str, float]:
    """Mean score per system, keys in first-seen order."""
    groups = defaultdict(list)
    for system_id, score in clip_predictions:
        groups[system_id].append(float(score))
    if not groups:
        raise ValueError("no clip predictions to aggregate")
    return {k: math.fsum(v) / len(v) for k, v in groups.items()}


def mse(x, y) -> float:
    x, y = _pair(x, y, 1)
    return float(np.mean((x - y) ** 2))


def lcc(x, y) -> float:
    x, y = _pair(x, y, 2)
    xm = x - x.mean()
    ym = y - y.mean()
    sxx = float(np.dot(xm, xm))
    syy = float(np.dot(ym, ym))
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("degenerate input")
    r = float(np.dot(xm, ym)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def srcc(x, y) -> float:
    """Pearson correlation of average (fractional) ranks."""
    x, y = _pair(x, y, 2)
    return lcc(rankdata(x), rankdata(y))


def ktau(x, y) -> float:
    """Kendall tau-b from concordant/discordant pair counts with tie corrections."""
    x, y = _pair(x, y, 2)
    n = x.size
    iu = np.triu_indices(n, k=1)
    dx = np.sign(np.subtract.outer(x, x))[iu]
    dy = np.sign(np.subtract.outer(y, y))[iu]
    prod = dx * dy
    concordant = int(np.count_nonzero(prod > 0))
    discordant = int(np.count_nonzero(prod < 0))
    n0 = n * (n - 1) // 2
    n1 = int(np.count_nonzero(dx == 0))
    n2 = int(np.count_nonzero(dy == 0))
    if n0 == n1 or n0 == n2:
        raise ValueError("degenerate input")
    tau = (concordant - discordant) / math.sqrt((n0 - n1) * (n0 - n2))
    return min(1.0, max(-1.0, tau))


@dataclass
class MetricReport:
    per_head: dict[str, dict[str, float]] = field(default_factory=dict)
    num_systems: int = 0

    def rows(self):
        for head, m in self.per_head.items():
            yield head, m["mse"], m["lcc"], m["srcc"], m["ktau"]


def system_metrics(predicted: dict[str, float], truth: dict[str, float]) -> dict[str, float]:
    systems = sorted(truth)
    if set(predicted) != set(systems):
        raise ValueError("predicted and true system sets differ")
    p = np.array([predicted[s] for s in systems])
    t = np.array([truth[s] for s in systems])
    return {"mse": mse(p, t), "lcc": lcc(p, t), "srcc": srcc(p, t), "ktau": ktau(p, t)}
