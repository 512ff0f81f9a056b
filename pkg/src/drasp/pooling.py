"""Temporal pooling operators: frame matrix (T, d) -> fixed-size embedding.

Every operator takes nodes (or arrays) and returns nodes, so all of them are
differentiable with respect to the frames and their parameters.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import numcore as nc
from .numcore import Node, Parameter


class PartialPolicy(enum.Enum):
    INCLUDE = "include"
    DROP = "drop"


@dataclass(frozen=True)
class SegmentationSpec:
    n: int
    partial_policy: PartialPolicy = PartialPolicy.INCLUDE

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"segment length must be >= 1, got {self.n}")
        if isinstance(self.partial_policy, str):
            object.__setattr__(self, "partial_policy", PartialPolicy(self.partial_policy))

    def num_segments(self, T: int) -> int:
        if self.partial_policy is PartialPolicy.INCLUDE:
            return -(-T // self.n)
        return T // self.n


@dataclass
class AttentionParams:
    """Scoring function z = v^T tanh(W a + b)."""

    W: Node
    b: Node
    v: Node

    def __post_init__(self):
        d_attn = self.W.shape[0]
        if self.W.value.ndim != 2 or self.b.shape != (d_attn,) or self.v.shape != (d_attn,):
            raise ValueError(
                f"inconsistent attention shapes W{self.W.shape} b{self.b.shape} v{self.v.shape}"
            )

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def d_attn(self) -> int:
        return self.W.shape[0]

    @classmethod
    def init(cls, d: int, d_attn: int, rng: np.random.Generator, prefix: str = "attn"):
        """W, v ~ U(-k, k) with k = 1/sqrt(fan_in); b = 0."""
        kw = 1.0 / math.sqrt(d)
        kv = 1.0 / math.sqrt(d_attn)
        W = rng.uniform(-kw, kw, size=(d_attn, d))
        v = rng.uniform(-kv, kv, size=d_attn)
        return cls(
            Parameter(f"{prefix}.W", W),
            Parameter(f"{prefix}.b", np.zeros(d_attn)),
            Parameter(f"{prefix}.v", v),
        )

    @classmethod
    def from_arrays(cls, W, b, v):
        return cls(nc.as_node(np.asarray(W, float)), nc.as_node(np.asarray(b, float)),
                   nc.as_node(np.asarray(v, float)))

    def parameters(self) -> list[Node]:
        return [self.W, self.b, self.v]


@dataclass
class FusionParams:
    alpha: Node
    beta: Node

    @classmethod
    def init(cls, prefix: str = "fusion"):
        # global branch only at start
        return cls(Parameter(f"{prefix}.alpha", 1.0), Parameter(f"{prefix}.beta", 0.0))

    def parameters(self) -> list[Node]:
        return [self.alpha, self.beta]


@dataclass
class PooledStats:
    mu: Node
    sigma: Node

    def vector(self) -> Node:
        return nc.concat([self.mu, self.sigma])


def frames(x) -> Node:
    """Validate and wrap a (T, d) frame matrix."""
    x = nc.as_node(x)
    if x.value.ndim != 2:
        raise ValueError(f"frame matrix must be 2-d, got shape {x.shape}")
    if x.shape[0] < 1:
        raise ValueError("empty sequence")
    if x.shape[1] < 1:
        raise ValueError("embedding width must be >= 1")
    return x


def average_pool(x) -> Node:
    return nc.mean(frames(x), axis=0)


def statistics_pool(x) -> PooledStats:
    """Frame mean and population standard deviation."""
    x = frames(x)
    mu = nc.mean(x, axis=0)
    var = nc.mean(nc.square(x), axis=0) - nc.square(mu)
    return PooledStats(mu, nc.clamped_sqrt(var))


def attention_weights(segments, p: AttentionParams, temperature: float = 1.0) -> Node:
    segments = frames(segments)
    if segments.shape[1] != p.d:
        raise ValueError(f"attention expects width {p.d}, got {segments.shape[1]}")
    hidden = nc.tanh(nc.matmul(segments, nc.transpose(p.W)) + p.b)
    scores = nc.matmul(hidden, p.v)
    return nc.softmax(scores, temperature)


def attentive_pool(x, p: AttentionParams, temperature: float = 1.0) -> Node:
    x = frames(x)
    w = attention_weights(x, p, temperature)
    return nc.matmul(w, x)


def attentive_statistics_over(items, w) -> PooledStats:
    """Weighted mean and weighted standard deviation of the rows of ``items``."""
    items = frames(items)
    w = nc.as_node(w)
    wv = w.value
    if wv.shape != (items.shape[0],):
        raise ValueError(f"weights shape {wv.shape} does not match {items.shape[0]} items")
    if np.any(wv < 0) or abs(wv.sum() - 1.0) > 1e-9:
        raise ValueError("unnormalized weights")
    mu = nc.matmul(w, items)
    var = nc.matmul(w, nc.square(items)) - nc.square(mu)
    return PooledStats(mu, nc.clamped_sqrt(var))


def attentive_statistics_pool(x, p: AttentionParams) -> PooledStats:
    x = frames(x)
    return attentive_statistics_over(x, attention_weights(x, p))


@lru_cache(maxsize=4096)
def _segment_matrix(T: int, n: int, policy: PartialPolicy) -> np.ndarray:
    S = SegmentationSpec(n, policy).num_segments(T)
    A = np.zeros((S, T))
    for s in range(S):
        stop = min((s + 1) * n, T)
        A[s, s * n:stop] = 1.0 / (stop - s * n)
    A.setflags(write=False)
    return A


def segment_average(x, spec: SegmentationSpec) -> Node:
    """Means of non-overlapping length-n segments, one row per segment."""
    x = frames(x)
    T = x.shape[0]
    if spec.partial_policy is PartialPolicy.DROP and T < spec.n:
        raise ValueError("no complete segment")
    return nc.matmul(_segment_matrix(T, spec.n, spec.partial_policy), x)


def segmental_attentive_statistics_pool(x, spec: SegmentationSpec, p: AttentionParams) -> PooledStats:
    segments = segment_average(x, spec)
    return attentive_statistics_over(segments, attention_weights(segments, p))


def drasp_pool(x, spec: SegmentationSpec, p: AttentionParams, f: FusionParams) -> Node:
    """alpha * [mu; sigma] + beta * [mu~; sigma~] over the global and segmental branches."""
    x = frames(x)
    global_branch = statistics_pool(x).vector()
    local_branch = segmental_attentive_statistics_pool(x, spec, p).vector()
    return nc.mul(f.alpha, global_branch) + nc.mul(f.beta, local_branch)


def multihead_attentive_pool(x, heads: Sequence[AttentionParams]) -> Node:
    return multires_multihead_attentive_pool(x, heads, [1.0] * len(heads))


def multires_multihead_attentive_pool(x, heads: Sequence[AttentionParams],
                                      temperatures: Sequence[float]) -> Node:
    if len(heads) != len(temperatures):
        raise ValueError(f"{len(heads)} heads but {len(temperatures)} temperatures")
    if not heads:
        raise ValueError("need at least one attention head")
    x = frames(x)
    return nc.concat([attentive_pool(x, p, t) for p, t in zip(heads, temperatures)])
