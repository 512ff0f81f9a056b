"""Synthetic MOS benchmark with planted global and local quality signals.

Each system has a base quality ``q`` and an artifact process. A clip of T
frames is

    frames[t] = quality_gain * (q - 3) * u + s * eps[t]

with ``u`` a fixed unit direction and ``s`` a per-clip nuisance noise scale
(independent of quality). Artifact bursts of 3-8 frames overwrite the quality
pattern with one high-variance draw held over the burst (plus the clip's
frame noise). Bursts are coherent in time, so segment averaging keeps them
while it shrinks the white frame noise; global statistics see them only
mixed with the nuisance noise scale.

Clip MOS is ``clamp(q - penalty_scale * fraction * severity, 1, 5)`` with
``fraction`` the realised artifact frame fraction.

On-disk format (version 1), a directory holding:
    manifest.json  format tag, version, config echo, profiles, clip table
                   (clip_id, system_id, split, true_mos, T, offset)
    frames.npy     all clips' frames stacked row-wise, float64 (sum T, d_in)
    masks.npy      matching per-frame artifact mask, bool (sum T,)
Split sizes per system are floor(fraction * clips) for train and validation,
the remainder goes to test.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import Example

FORMAT = "drasp-synthbench"
FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")
MIN_BURST, MAX_BURST = 3, 8
MEAN_BURST = (MIN_BURST + MAX_BURST) / 2


@dataclass(frozen=True)
class SystemProfile:
    system_id: str
    q: float
    artifact_rate: float
    artifact_severity: float

    def __post_init__(self):
        if not 1.0 <= self.q <= 5.0:
            raise ValueError(f"{self.system_id}: base quality {self.q} outside [1, 5]")
        if self.artifact_rate < 0 or self.artifact_severity < 0:
            raise ValueError(f"{self.system_id}: artifact parameters must be >= 0")


@dataclass(frozen=True)
class BenchConfig:
    num_systems: int = 20
    clips_per_system: int = 40
    t_min: int = 80
    t_max: int = 200
    d_in: int = 16
    noise: float = 1.0
    noise_spread: tuple[float, float] = (0.5, 2.5)
    split: tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 0
    # planted expected MOS of the systems is spread evenly over this range
    score_range: tuple[float, float] = (1.5, 3.0)
    rate_range: tuple[float, float] = (0.0, 7.0)
    severity_range: tuple[float, float] = (3.0, 3.0)
    penalty_scale: float = 2.0
    artifact_gain: float = 1.5
    quality_gain: float = 2.0

    def __post_init__(self):
        for name in ("split", "noise_spread", "score_range", "rate_range", "severity_range"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        self.validate()

    def validate(self):
        if self.num_systems < 1:
            raise ValueError("num_systems must be >= 1")
        if self.clips_per_system < 1:
            raise ValueError("clips_per_system must be >= 1")
        if not 1 <= self.t_min <= self.t_max:
            raise ValueError("need 1 <= t_min <= t_max")
        if self.d_in < 1:
            raise ValueError("d_in must be >= 1")
        if len(self.split) != 3 or min(self.split) < 0 or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be three non-negative values summing to 1, got {self.split}")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        for name in ("noise_spread", "score_range", "rate_range", "severity_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"invalid {name}: {(lo, hi)}")
        lo, hi = self.score_range
        if lo < 1.0 or hi + self.max_penalty > 5.0:
            raise ValueError("score_range and artifact penalty must keep base quality in [1, 5]")
        if expected_fraction(self.rate_range[1], self) > 0.5:
            raise ValueError("artifact rate too high: expected artifact fraction exceeds 0.5")

    @property
    def mean_length(self) -> float:
        return (self.t_min + self.t_max) / 2

    @property
    def max_penalty(self) -> float:
        """Largest expected MOS penalty any generated system can carry."""
        return self.penalty_scale * self.severity_range[1] * expected_fraction(self.rate_range[1], self)

    def split_counts(self) -> tuple[int, int, int]:
        c = self.clips_per_system
        n_train = math.floor(self.split[0] * c + 1e-9)
        n_val = math.floor(self.split[1] * c + 1e-9)
        return n_train, n_val, c - n_train - n_val

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        return cls(**d)


@dataclass
class SyntheticClip:
    clip_id: int
    system_id: str
    frames: np.ndarray
    true_mos: float
    artifact_mask: np.ndarray
    split: str = "train"


@dataclass
class Dataset:
    config: BenchConfig
    profiles: list[SystemProfile]
    clips: list[SyntheticClip]
    splits: dict[str, list[int]] = field(default_factory=dict)

    def split_clips(self, split: str) -> list[SyntheticClip]:
        return [self.clips[i] for i in self.splits[split]]

    def examples(self, split: str, heads=("mos",)) -> list[Example]:
        return [
            Example(c.frames, {h: c.true_mos for h in heads}, c.system_id, clip_id=c.clip_id)
            for c in self.split_clips(split)
        ]

    def profile(self, system_id: str) -> SystemProfile:
        return next(p for p in self.profiles if p.system_id == system_id)


def true_mos(q: float, fraction: float, severity: float, penalty_scale: float = 2.0) -> float:
    return min(5.0, max(1.0, q - penalty_scale * fraction * severity))


def expected_fraction(rate: float, config: BenchConfig) -> float:
    """Expected artifact frame fraction for a system emitting ``rate`` bursts per clip."""
    return rate * MEAN_BURST / config.mean_length


def planted_score(profile: SystemProfile, config: BenchConfig) -> float:
    """Closed-form expected clip MOS of a system (exact while the clamp is inactive)."""
    frac = expected_fraction(profile.artifact_rate, config)
    return profile.q - config.penalty_scale * frac * profile.artifact_severity


def quality_direction(d_in: int) -> np.ndarray:
    return np.ones(d_in) / math.sqrt(d_in)


def make_profiles(config: BenchConfig) -> list[SystemProfile]:
    rng = np.random.default_rng([config.seed, 0, 0])
    N = config.num_systems
    lo, hi = config.score_range
    scores = rng.permutation(np.linspace(lo, hi, N)) if N > 1 else np.array([lo])
    rates = rng.uniform(*config.rate_range, size=N)
    severities = rng.uniform(*config.severity_range, size=N)
    profiles = []
    for i in range(N):
        penalty = config.penalty_scale * severities[i] * expected_fraction(rates[i], config)
        # base quality is chosen so the planted score lands on its grid point
        q = min(5.0, scores[i] + penalty)
        profiles.append(SystemProfile(f"sys{i:02d}", float(q), float(rates[i]), float(severities[i])))
    return profiles


def _artifact_frames(rng: np.random.Generator, rate: float, T: int, config: BenchConfig) -> int:
    # stochastic rounding keeps E[frames | T] = rate * MEAN_BURST * T / mean_length
    x = rate * MEAN_BURST * T / config.mean_length
    F = int(math.floor(x)) + int(rng.random() < x - math.floor(x))
    if F < MIN_BURST:
        F = MIN_BURST if rng.random() < F / MIN_BURST else 0
    return min(F, T // 2)


def _burst_lengths(rng: np.random.Generator, F: int) -> list[int]:
    k = min(max(round(F / MEAN_BURST), -(-F // MAX_BURST)), F // MIN_BURST)
    lengths = [MIN_BURST] * k
    for _ in range(F - MIN_BURST * k):
        open_ = [i for i, L in enumerate(lengths) if L < MAX_BURST]
        lengths[open_[rng.integers(len(open_))]] += 1
    return lengths


def _place(rng: np.random.Generator, lengths: list[int], T: int) -> list[tuple[int, int]]:
    k = len(lengths)
    if k == 0:
        return []
    free = T - sum(lengths) - (k - 1)
    cuts = np.sort(rng.integers(0, free + 1, size=k))
    gaps = np.diff(np.concatenate([[0], cuts]))
    pos = 0
    spans = []
    for gap, L in zip(gaps, lengths):
        pos += int(gap)
        spans.append((pos, pos + L))
        pos += L + 1
    return spans


def generate_clip(config: BenchConfig, profile: SystemProfile, system_index: int,
                  clip_index: int) -> SyntheticClip:
    rng = np.random.default_rng([config.seed, 1, system_index, clip_index])
    d = config.d_in
    T = int(rng.integers(config.t_min, config.t_max + 1))
    scale = config.noise * rng.uniform(*config.noise_spread)
    pattern = config.quality_gain * (profile.q - 3.0) * quality_direction(d)
    noise = scale * rng.standard_normal((T, d))
    x = pattern + noise
    mask = np.zeros(T, dtype=bool)
    if profile.artifact_rate > 0:
        F = _artifact_frames(rng, profile.artifact_rate, T, config)
        amp = config.artifact_gain * math.sqrt(profile.artifact_severity)
        for start, stop in _place(rng, _burst_lengths(rng, F), T):
            x[start:stop] = amp * rng.standard_normal(d) + noise[start:stop]
            mask[start:stop] = True
    frac = float(mask.mean())
    mos = true_mos(profile.q, frac, profile.artifact_severity, config.penalty_scale)
    return SyntheticClip(
        clip_id=system_index * config.clips_per_system + clip_index,
        system_id=profile.system_id,
        frames=x,
        true_mos=mos,
        artifact_mask=mask,
    )


def generate(config: BenchConfig, profiles: list[SystemProfile] | None = None) -> Dataset:
    if profiles is None:
        profiles = make_profiles(config)
    elif len(profiles) != config.num_systems:
        raise ValueError("number of profiles does not match num_systems")
    counts = config.split_counts()
    if min(counts) < 1:
        raise ValueError(f"every system needs a clip in every split, got per-system counts {counts}")
    clips = []
    splits = {s: [] for s in SPLITS}
    for i, profile in enumerate(profiles):
        system_clips = [generate_clip(config, profile, i, j) for j in range(config.clips_per_system)]
        order = np.random.default_rng([config.seed, 2, i]).permutation(config.clips_per_system)
        bounds = np.cumsum(counts)
        for rank, j in enumerate(order):
            name = SPLITS[int(np.searchsorted(bounds, rank, side="right"))]
            system_clips[j].split = name
        for c in system_clips:
            splits[c.split].append(c.clip_id)
        clips.extend(system_clips)
    for s in SPLITS:
        splits[s].sort()
    return Dataset(config, list(profiles), clips, splits)


def system_truth(dataset: Dataset, split: str | None = None) -> dict[str, float]:
    clips = dataset.clips if split is None else dataset.split_clips(split)
    if not clips:
        raise ValueError("empty dataset")
    sums, counts = {}, {}
    for c in clips:
        sums[c.system_id] = sums.get(c.system_id, 0.0) + c.true_mos
        counts[c.system_id] = counts.get(c.system_id, 0) + 1
    return {k: sums[k] / counts[k] for k in sums}


def planted_ranking_holds(dataset: Dataset) -> bool:
    truth = system_truth(dataset)
    by_truth = sorted(truth, key=lambda s: truth[s])
    planted = {p.system_id: planted_score(p, dataset.config) for p in dataset.profiles}
    by_planted = sorted(planted, key=lambda s: planted[s])
    return by_truth == by_planted


# serialization

def _manifest(dataset: Dataset) -> dict:
    offset = 0
    table = []
    for c in dataset.clips:
        T = c.frames.shape[0]
        table.append({
            "clip_id": c.clip_id, "system_id": c.system_id, "split": c.split,
            "true_mos": c.true_mos, "T": T, "offset": offset,
        })
        offset += T
    return {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "seed": dataset.config.seed,
        "config": asdict(dataset.config),
        "profiles": [asdict(p) for p in dataset.profiles],
        "clips": table,
    }


def _encoded(dataset: Dataset) -> dict[str, bytes]:
    manifest = json.dumps(_manifest(dataset), indent=1, sort_keys=True).encode() + b"\n"
    out = {"manifest.json": manifest}
    for name, arr in (
        ("frames.npy", np.concatenate([c.frames for c in dataset.clips]).astype(np.float64)),
        ("masks.npy", np.concatenate([c.artifact_mask for c in dataset.clips]).astype(bool)),
    ):
        buf = io.BytesIO()
        np.save(buf, arr, allow_pickle=False)
        out[name] = buf.getvalue()
    return out


def checksum(dataset: Dataset) -> str:
    h = hashlib.sha256()
    for name, blob in _encoded(dataset).items():
        h.update(name.encode())
        h.update(blob)
    return h.hexdigest()


def save(dataset: Dataset, directory) -> str:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, blob in _encoded(dataset).items():
        (directory / name).write_bytes(blob)
    return checksum(dataset)


def load(directory) -> Dataset:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{directory} is not a {FORMAT} dataset")
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset version {manifest.get('format_version')}")
    config = BenchConfig.from_dict(manifest["config"])
    profiles = [SystemProfile(**p) for p in manifest["profiles"]]
    frames = np.load(directory / "frames.npy", allow_pickle=False)
    masks = np.load(directory / "masks.npy", allow_pickle=False)
    clips = []
    splits = {s: [] for s in SPLITS}
    for row in manifest["clips"]:
        sl = slice(row["offset"], row["offset"] + row["T"])
        clips.append(SyntheticClip(row["clip_id"], row["system_id"], frames[sl].copy(),
                                   row["true_mos"], masks[sl].copy(), row["split"]))
        splits[row["split"]].append(row["clip_id"])
    return Dataset(config, profiles, clips, splits)
