"""Experiment configuration files.

Flat ``key = value`` lines with dotted sections; ``#`` starts a comment.

    bench.*       BenchConfig fields (dataset generation)
    model.*       ModelConfig fields (pooling is set per method by the runner)
    train.*       TrainConfig fields
    experiment.dataset           path of a saved dataset; generated from bench.* if absent
    experiment.methods           comma list of pooling methods (default: all eight)
    experiment.seeds             comma list of run seeds
    experiment.out               output directory
    experiment.workers           parallel (method, seed) runs
    experiment.split             evaluation split (default test)
    experiment.save_checkpoints  true/false
    sweep.n_values               segment lengths for sweep-segment

Tuple-valued fields take comma lists, e.g. ``bench.split = 0.7, 0.15, 0.15``.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import POOLING_METHODS, ModelConfig, TrainConfig
from .synthbench import BenchConfig


@dataclass
class ExperimentConfig:
    bench: BenchConfig = field(default_factory=BenchConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: str | None = None
    methods: tuple[str, ...] = POOLING_METHODS
    seeds: tuple[int, ...] = (0,)
    out: str | None = None
    workers: int = 1
    split: str = "test"
    save_checkpoints: bool = True
    n_values: tuple[int, ...] = (1, 5, 10, 25, 50)

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.n_values = tuple(int(n) for n in self.n_values)
        bad = [m for m in self.methods if m not in POOLING_METHODS]
        if bad:
            raise ValueError(f"unknown pooling methods: {bad}")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.split not in ("train", "val", "test"):
            raise ValueError(f"unknown split {self.split!r}")

    def echo(self) -> str:
        """Single-line JSON of the full configuration."""
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


_EXPERIMENT_KEYS = {
    "experiment.dataset": "dataset",
    "experiment.methods": "methods",
    "experiment.seeds": "seeds",
    "experiment.out": "out",
    "experiment.workers": "workers",
    "experiment.split": "split",
    "experiment.save_checkpoints": "save_checkpoints",
    "sweep.n_values": "n_values",
}


def _scalar(text: str, like):
    if isinstance(like, bool):
        if text.lower() in ("true", "yes", "1"):
            return True
        if text.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text


def _coerce(text: str, default):
    if isinstance(default, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        like = default[0] if default else ""
        return tuple(_scalar(t, like) for t in items)
    if default is None:
        return text
    return _scalar(text, default)


def parse_lines(lines) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def from_mapping(entries: dict[str, str]) -> ExperimentConfig:
    sections = {"bench": {}, "model": {}, "train": {}}
    top = {}
    defaults = {
        "bench": BenchConfig(), "model": ModelConfig(), "train": TrainConfig(),
    }
    base = ExperimentConfig()
    for key, value in entries.items():
        if key in _EXPERIMENT_KEYS:
            name = _EXPERIMENT_KEYS[key]
            top[name] = _coerce(value, getattr(base, name))
            continue
        section, _, name = key.partition(".")
        if section not in sections or not name:
            raise ValueError(f"unknown config key {key!r}")
        proto = defaults[section]
        if name not in {f.name for f in dataclasses.fields(proto)}:
            raise ValueError(f"unknown config key {key!r}")
        sections[section][name] = _coerce(value, getattr(proto, name))
    return ExperimentConfig(
        bench=BenchConfig(**sections["bench"]),
        model=ModelConfig(**sections["model"]),
        train=TrainConfig(**sections["train"]),
        **top,
    )


def load(path) -> ExperimentConfig:
    return from_mapping(parse_lines(Path(path).read_text().splitlines()))
