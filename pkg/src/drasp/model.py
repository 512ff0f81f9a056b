"""Toy MOS predictor: frame encoder -> pooling -> K prediction heads.

The encoder is a small tanh MLP standing in for a pre-trained audio encoder.
Any pooling method from ``POOLING_METHODS`` can sit between encoder and heads;
heads may additionally see a per-clip conditioning vector (e.g. a text
embedding), concatenated to the pooled embedding.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import numcore as nc
from . import pooling as pl
from .numcore import Node, Parameter

log = logging.getLogger(__name__)

POOLING_METHODS = (
    "average",
    "statistics",
    "attentive",
    "attentive_statistics",
    "segmental_attentive_statistics",
    "drasp",
    "multihead",
    "multires_multihead",
)

CHECKPOINT_FORMAT = "drasp-checkpoint"
CHECKPOINT_VERSION = 1

# seed-stream tags: methods sharing a component shape share its initial values
_ENCODER, _ATTENTION, _HEAD = 1, 2, 3


@dataclass
class Example:
    frames: np.ndarray
    targets: dict[str, float]
    system_id: str = ""
    conditioning: np.ndarray | None = None
    clip_id: int | None = None


@dataclass
class ModelConfig:
    d_in: int = 16
    encoder_hidden: int = 64
    d: int = 32
    pooling: str = "drasp"
    segment_size: int = 5
    partial_policy: str = "include"
    d_attn: int = 128
    attn_heads: int = 4
    temperatures: tuple[float, ...] = (1.0, 2.0, 5.0, 10.0)
    heads: tuple[str, ...] = ("mos",)
    conditioned_heads: tuple[str, ...] = ()
    cond_dim: int = 0
    head_hidden: int = 32
    output_bias: float = 3.0

    def __post_init__(self):
        self.temperatures = tuple(float(t) for t in self.temperatures)
        self.heads = tuple(self.heads)
        self.conditioned_heads = tuple(self.conditioned_heads)
        if self.pooling not in POOLING_METHODS:
            raise ValueError(f"unknown pooling method {self.pooling!r}")
        if not self.heads:
            raise ValueError("need at least one prediction head")
        if len(set(self.heads)) != len(self.heads):
            raise ValueError("head names must be unique")
        unknown = set(self.conditioned_heads) - set(self.heads)
        if unknown:
            raise ValueError(f"conditioned heads not in heads: {sorted(unknown)}")
        if self.conditioned_heads and self.cond_dim < 1:
            raise ValueError("conditioned heads need cond_dim >= 1")
        if self.pooling == "multires_multihead" and len(self.temperatures) != self.attn_heads:
            raise ValueError("need one temperature per attention head")


def _uniform(rng, fan_in, shape):
    k = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-k, k, size=shape)


class Pooling:
    """One pooling method with its parameters, called on a (T, d) node."""

    def __init__(self, cfg: ModelConfig, seed: int):
        self.method = cfg.pooling
        self.spec = pl.SegmentationSpec(cfg.segment_size, cfg.partial_policy)
        self.temperatures = list(cfg.temperatures)
        n_attn = {"average": 0, "statistics": 0, "multihead": cfg.attn_heads,
                  "multires_multihead": cfg.attn_heads}.get(self.method, 1)
        self.attn = [
            pl.AttentionParams.init(cfg.d, cfg.d_attn, np.random.default_rng([seed, _ATTENTION, h]),
                                    prefix=f"pool.attn{h}")
            for h in range(n_attn)
        ]
        self.fusion = pl.FusionParams.init("pool.fusion") if self.method == "drasp" else None
        width = {"average": 1, "attentive": 1, "multihead": cfg.attn_heads,
                 "multires_multihead": cfg.attn_heads}.get(self.method, 2)
        self.out_width = width * cfg.d

    def parameters(self) -> list[Node]:
        params = [p for a in self.attn for p in a.parameters()]
        if self.fusion is not None:
            params += self.fusion.parameters()
        return params

    def __call__(self, x: Node) -> Node:
        m = self.method
        if m == "average":
            return pl.average_pool(x)
        if m == "statistics":
            return pl.statistics_pool(x).vector()
        if m == "attentive":
            return pl.attentive_pool(x, self.attn[0])
        if m == "attentive_statistics":
            return pl.attentive_statistics_pool(x, self.attn[0]).vector()
        if m == "segmental_attentive_statistics":
            return pl.segmental_attentive_statistics_pool(x, self.spec, self.attn[0]).vector()
        if m == "drasp":
            return pl.drasp_pool(x, self.spec, self.attn[0], self.fusion)
        if m == "multihead":
            return pl.multihead_attentive_pool(x, self.attn)
        return pl.multires_multihead_attentive_pool(x, self.attn, self.temperatures)


class MOSModel:
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.config = cfg
        self.seed = seed
        rng = np.random.default_rng([seed, _ENCODER])
        self.enc = {
            "W1": Parameter("enc.W1", _uniform(rng, cfg.d_in, (cfg.encoder_hidden, cfg.d_in))),
            "b1": Parameter("enc.b1", np.zeros(cfg.encoder_hidden)),
            "W2": Parameter("enc.W2", _uniform(rng, cfg.encoder_hidden, (cfg.d, cfg.encoder_hidden))),
            "b2": Parameter("enc.b2", np.zeros(cfg.d)),
        }
        self.pool = Pooling(cfg, seed)
        self.heads = {}
        for k, name in enumerate(cfg.heads):
            rng = np.random.default_rng([seed, _HEAD, k])
            width = self.head_input_width(name)
            self.heads[name] = {
                "W1": Parameter(f"head.{name}.W1", _uniform(rng, width, (cfg.head_hidden, width))),
                "b1": Parameter(f"head.{name}.b1", np.zeros(cfg.head_hidden)),
                "w2": Parameter(f"head.{name}.w2", _uniform(rng, cfg.head_hidden, cfg.head_hidden)),
                "b2": Parameter(f"head.{name}.b2", cfg.output_bias),
            }
        names = [p.name for p in self.parameters()]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")

    def head_input_width(self, head: str) -> int:
        extra = self.config.cond_dim if head in self.config.conditioned_heads else 0
        return self.pool.out_width + extra

    def parameters(self) -> list[Parameter]:
        params = list(self.enc.values()) + self.pool.parameters()
        for h in self.heads.values():
            params += list(h.values())
        return params

    def named_parameters(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.named_parameters()
        if set(state) != set(params):
            raise ValueError("state does not match model parameters")
        for name, value in state.items():
            if params[name].value.shape != np.shape(value):
                raise ValueError(f"shape mismatch for {name}")
            params[name].value = np.array(value, dtype=np.float64)

    def encode(self, x) -> Node:
        e = self.enc
        h = nc.tanh(nc.matmul(x, nc.transpose(e["W1"])) + e["b1"])
        return nc.matmul(h, nc.transpose(e["W2"])) + e["b2"]

    def forward_batch(self, clips: Sequence[np.ndarray],
                      conditioning: Sequence[np.ndarray | None] | None = None) -> dict[str, Node]:
        """Scores for a batch of clips, one (B,) node per head."""
        cfg = self.config
        if not clips:
            raise ValueError("empty batch")
        for c in clips:
            if np.ndim(c) != 2 or c.shape[1] != cfg.d_in:
                raise ValueError(f"clip frames must have shape (T, {cfg.d_in}), got {np.shape(c)}")
            if c.shape[0] < 1:
                raise ValueError("empty sequence")
        encoded = self.encode(nc.constant(np.concatenate(clips)))
        pooled, start = [], 0
        for c in clips:
            stop = start + c.shape[0]
            pooled.append(self.pool(nc.rows(encoded, start, stop)))
            start = stop
        P = nc.stack(pooled)
        cond = None
        if cfg.conditioned_heads:
            if conditioning is None or any(v is None for v in conditioning):
                raise ValueError("conditioned heads need a conditioning vector per clip")
            C = np.stack([np.asarray(v, dtype=np.float64) for v in conditioning])
            if C.shape != (len(clips), cfg.cond_dim):
                raise ValueError(f"conditioning must have width {cfg.cond_dim}")
            cond = nc.concat([P, nc.constant(C)], axis=1)
        out = {}
        for name, h in self.heads.items():
            inp = cond if name in cfg.conditioned_heads else P
            hidden = nc.tanh(nc.matmul(inp, nc.transpose(h["W1"])) + h["b1"])
            out[name] = nc.matmul(hidden, h["w2"]) + h["b2"]
        return out

    def forward(self, clip: np.ndarray, conditioning: np.ndarray | None = None) -> dict[str, Node]:
        out = self.forward_batch([clip], None if conditioning is None else [conditioning])
        return {k: nc.sum(v) for k, v in out.items()}

    def predict(self, examples: Sequence[Example], batch_size: int = 64) -> dict[str, np.ndarray]:
        preds = {h: [] for h in self.heads}
        with nc.no_grad():
            for i in range(0, len(examples), batch_size):
                chunk = examples[i:i + batch_size]
                out = self.forward_batch([e.frames for e in chunk], _conditioning(chunk))
                for h, v in out.items():
                    preds[h].append(v.value)
        return {h: np.concatenate(v) for h, v in preds.items()}


def _conditioning(examples: Sequence[Example]):
    if all(e.conditioning is None for e in examples):
        return None
    return [e.conditioning for e in examples]


# losses

LOSSES = ("mae", "mse", "mae_mse")


def loss(predictions, targets, kind: str = "mae", mae_weight: float = 1.0,
         mse_weight: float = 1.0) -> Node:
    pred = nc.as_node(predictions)
    t = np.asarray(targets, dtype=np.float64)
    if pred.value.ndim != 1 or pred.shape != t.shape:
        raise ValueError(f"predictions {pred.shape} and targets {t.shape} must be equal-length vectors")
    if t.size == 0:
        raise ValueError("empty batch")
    diff = pred - t
    if kind == "mae":
        return nc.mean(nc.absolute(diff))
    if kind == "mse":
        return nc.mean(nc.square(diff))
    if kind == "mae_mse":
        return mae_weight * nc.mean(nc.absolute(diff)) + mse_weight * nc.mean(nc.square(diff))
    raise ValueError(f"unknown loss {kind!r}")


def multihead_loss(outputs: dict[str, Node], examples: Sequence[Example], config: "TrainConfig") -> Node:
    terms = []
    for name, pred in outputs.items():
        t = [e.targets[name] for e in examples]
        terms.append(loss(pred, t, config.loss, config.mae_weight, config.mse_weight))
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total * (1.0 / len(terms))


# optimizers

class SGD:
    def __init__(self, params: Sequence[Parameter], lr: float):
        self.params = list(params)
        self.lr = lr

    def step(self):
        for p in self.params:
            if p.grad is not None:
                p.value = p.value - self.lr * p.grad


class AdamW:
    """Adam with decoupled weight decay (decay applied before the moment update)."""

    def __init__(self, params: Sequence[Parameter], lr: float, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {id(p): np.zeros_like(p.value) for p in self.params}
        self.v = {id(p): np.zeros_like(p.value) for p in self.params}

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[id(p)] = self.b1 * self.m[id(p)] + (1.0 - self.b1) * g
            v = self.v[id(p)] = self.b2 * self.v[id(p)] + (1.0 - self.b2) * g * g
            w = p.value * (1.0 - self.lr * self.weight_decay)
            p.value = w - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# training

@dataclass
class TrainConfig:
    optimizer: str = "adamw"
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    loss: str = "mae_mse"
    mae_weight: float = 1.0
    mse_weight: float = 1.0
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        if self.optimizer not in ("sgd", "adamw"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")

    @classmethod
    def clap(cls, **kw) -> "TrainConfig":
        """SGD 5e-4, MAE, batch 64: the CLAP-backbone recipe."""
        return cls(**{"optimizer": "sgd", "lr": 5e-4, "loss": "mae", "batch_size": 64, **kw})

    @classmethod
    def audiobox(cls, **kw) -> "TrainConfig":
        """AdamW 1e-4, MAE + MSE, batch 32: the AudioBox-Aesthetics recipe."""
        return cls(**{"optimizer": "adamw", "lr": 1e-4, "loss": "mae_mse", "batch_size": 32, **kw})

    def make_optimizer(self, params):
        if self.optimizer == "sgd":
            return SGD(params, self.lr)
        return AdamW(params, self.lr, self.betas, self.eps, self.weight_decay)


class EarlyStopping:
    """Stop after ``patience`` consecutive epochs without a strictly lower validation loss."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record an epoch; returns True if it is the new best."""
        if val_loss < self.best:
            self.best, self.best_epoch, self.bad_epochs = val_loss, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class TrainResult:
    model: MOSModel
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


def evaluate_loss(model: MOSModel, examples: Sequence[Example], config: TrainConfig,
                  batch_size: int = 64) -> float:
    total = 0.0
    with nc.no_grad():
        for i in range(0, len(examples), batch_size):
            chunk = examples[i:i + batch_size]
            out = model.forward_batch([e.frames for e in chunk], _conditioning(chunk))
            total += float(multihead_loss(out, chunk, config).value) * len(chunk)
    return total / len(examples)


def train(model: MOSModel, train_set: Sequence[Example], val_set: Sequence[Example],
          config: TrainConfig,
          validator: Callable[[MOSModel, int], float] | None = None) -> TrainResult:
    """Mini-batch training with early stopping on validation loss.

    Returns the model holding the parameters of the best validation epoch.
    ``validator(model, epoch)`` overrides the validation loss computation.
    """
    if not train_set or not val_set:
        raise ValueError("empty split")
    train_ids = {e.clip_id for e in train_set if e.clip_id is not None}
    if train_ids & {e.clip_id for e in val_set if e.clip_id is not None}:
        raise ValueError("train and validation splits overlap")
    params = model.parameters()
    opt = config.make_optimizer(params)
    rng = np.random.default_rng(config.seed)
    stopper = EarlyStopping(config.patience)
    best_state = model.state_dict()
    result = TrainResult(model)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_set))
        running = 0.0
        for i in range(0, len(order), config.batch_size):
            batch = [train_set[j] for j in order[i:i + config.batch_size]]
            nc.zero_grad(params)
            out = model.forward_batch([e.frames for e in batch], _conditioning(batch))
            batch_loss = multihead_loss(out, batch, config)
            nc.backward(batch_loss)
            opt.step()
            running += float(batch_loss.value) * len(batch)
        if validator is not None:
            val = float(validator(model, epoch))
        else:
            val = evaluate_loss(model, val_set, config)
        result.history.append(EpochRecord(epoch, running / len(train_set), val))
        log.debug("epoch %d train %.5f val %.5f", epoch, running / len(train_set), val)
        if stopper.update(epoch, val):
            best_state = model.state_dict()
        elif stopper.should_stop:
            result.stopped_early = True
            break
    nc.zero_grad(params)
    model.load_state_dict(best_state)
    result.best_epoch = stopper.best_epoch
    return result


# checkpoints

def save_checkpoint(path, model: MOSModel, train_config: TrainConfig | None = None):
    """npz archive: one float64 array per parameter plus a JSON ``__meta__`` entry."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "format_version": CHECKPOINT_VERSION,
        "seed": model.seed,
        "model_config": asdict(model.config),
        "train_config": asdict(train_config) if train_config is not None else None,
    }
    arrays = {f"param::{k}": v for k, v in model.state_dict().items()}
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[MOSModel, TrainConfig | None]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT or meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path} is not a version {CHECKPOINT_VERSION} checkpoint")
        state = {k[len("param::"):]: data[k] for k in data.files if k.startswith("param::")}
    model = MOSModel(ModelConfig(**meta["model_config"]), seed=meta["seed"])
    model.load_state_dict(state)
    tc = TrainConfig(**meta["train_config"]) if meta["train_config"] else None
    return model, tc
