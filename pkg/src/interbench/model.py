"""Miniature multi-task ranking model: preprocessing, interaction block, shared head."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .blocks import Block, BlockConfig, build, output_dim, resolve
from .errors import ConfigError, DataError, UsageError
from .tensor import RngState, as_rng, current_scope

PROB_CLAMP = 1e-12


@dataclass
class FeatureSchema:
    n_dense: int
    sparse_features: list[tuple[int, int]]  # (cardinality, emb_dim)
    embedding_features: list[tuple[int, int]]  # (raw_dim, projected_dim)
    seq_emb_dim: int
    K: int
    seq_proj_dim: int | None = None

    def __post_init__(self):
        self.sparse_features = [tuple(map(int, f)) for f in self.sparse_features]
        self.embedding_features = [tuple(map(int, f)) for f in self.embedding_features]
        if self.seq_proj_dim is None:
            self.seq_proj_dim = self.seq_emb_dim

    def problems(self) -> list[str]:
        errs = []
        if self.n_dense < 0:
            errs.append("schema.n_dense: must be >= 0")
        for i, (card, dim) in enumerate(self.sparse_features):
            if card < 2:
                errs.append(f"schema.sparse_features[{i}]: cardinality must be >= 2")
            if dim < 1:
                errs.append(f"schema.sparse_features[{i}]: emb_dim must be >= 1")
        for i, (raw, proj) in enumerate(self.embedding_features):
            if raw < 1 or proj < 1:
                errs.append(f"schema.embedding_features[{i}]: dims must be >= 1")
        if self.K < 1:
            errs.append("schema.K: need at least one task")
        if self.d_feat < 1:
            errs.append("schema: empty feature embedding")
        return errs

    @property
    def d_feat(self) -> int:
        seq = self.seq_proj_dim if self.seq_emb_dim else 0
        return (
            self.n_dense
            + sum(d for _, d in self.sparse_features)
            + sum(p for _, p in self.embedding_features)
            + seq
        )

    def layout(self) -> dict:
        return {
            "dense": self.n_dense,
            "sparse": [d for _, d in self.sparse_features],
            "embedding": [p for _, p in self.embedding_features],
            "seq": self.seq_proj_dim if self.seq_emb_dim else 0,
        }

    def to_dict(self) -> dict:
        return {
            "n_dense": self.n_dense,
            "sparse_features": [list(f) for f in self.sparse_features],
            "embedding_features": [list(f) for f in self.embedding_features],
            "seq_emb_dim": self.seq_emb_dim,
            "seq_proj_dim": self.seq_proj_dim,
            "K": self.K,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(**d)


@dataclass
class Batch:
    dense: np.ndarray
    sparse_ids: np.ndarray
    embedding_feats: list[np.ndarray]
    seq_emb: np.ndarray
    labels: np.ndarray
    session_id: np.ndarray
    origin: tuple[str, int] | None = None  # (spec hash, seed) of the generator

    def __len__(self) -> int:
        return self.dense.shape[0]


@dataclass
class OptimizerConfig:
    name: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class ModelConfig:
    schema: FeatureSchema
    interaction: BlockConfig
    head_hidden: list[int] = field(default_factory=lambda: [128, 64])
    loss_weights: list[float] | None = None
    concat_input_to_interaction_output: bool = True
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    grad_clip: float | None = None
    precision: str = "f64"
    checkpoint_every: int = 200
    max_restarts: int = 3

    def __post_init__(self):
        if self.loss_weights is None:
            self.loss_weights = [1.0] * self.schema.K

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    def resolved_interaction(self) -> BlockConfig:
        d = self.schema.d_feat
        return resolve(self.interaction, d, d, self.schema.layout())

    def problems(self) -> list[str]:
        errs = self.schema.problems()
        if len(self.loss_weights) != self.schema.K:
            errs.append(f"model.loss_weights: need {self.schema.K} weights, got {len(self.loss_weights)}")
        if any(not w > 0 for w in self.loss_weights):
            errs.append("model.loss_weights: weights must be > 0")
        if any(h < 1 for h in self.head_hidden):
            errs.append("model.head_hidden: sizes must be >= 1")
        if self.optimizer.name not in ("sgd", "adam"):
            errs.append(f"model.optimizer.name: must be sgd or adam, got {self.optimizer.name!r}")
        if self.optimizer.lr < 0:
            errs.append("model.optimizer.lr: must be >= 0")
        if self.grad_clip is not None and not self.grad_clip > 0:
            errs.append("model.grad_clip: must be > 0 when set")
        if self.precision not in ("f32", "f64"):
            errs.append("model.precision: must be f32 or f64")
        if self.checkpoint_every < 1 or self.max_restarts < 0:
            errs.append("model: checkpoint_every >= 1 and max_restarts >= 0 required")
        if not errs:
            errs.extend(self.resolved_interaction().problems())
        return errs

    def validate(self) -> "ModelConfig":
        errs = self.problems()
        if errs:
            raise ConfigError("invalid model config:\n  " + "\n  ".join(errs))
        return self

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "interaction": self.interaction.to_dict(),
            "head_hidden": list(self.head_hidden),
            "loss_weights": list(self.loss_weights),
            "concat_input_to_interaction_output": self.concat_input_to_interaction_output,
            "optimizer": dataclasses.asdict(self.optimizer),
            "grad_clip": self.grad_clip,
            "precision": self.precision,
            "checkpoint_every": self.checkpoint_every,
            "max_restarts": self.max_restarts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown model config field(s): {', '.join(unknown)}")
        kw = dict(d)
        kw["schema"] = FeatureSchema.from_dict(d["schema"])
        kw["interaction"] = BlockConfig.from_dict(d["interaction"])
        if "optimizer" in d:
            kw["optimizer"] = OptimizerConfig(**d["optimizer"])
        return cls(**kw)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss(probs: np.ndarray, labels: np.ndarray, weights) -> float:
    """Weighted binary cross entropy, summed over tasks, averaged over rows."""
    if probs.shape != labels.shape:
        raise ConfigError(f"probs {probs.shape} and labels {labels.shape} differ")
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = labels.astype(p.dtype)
    bce = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float((bce @ np.asarray(weights, dtype=p.dtype)).sum() / probs.shape[0])


def _l2_normalize(v):
    norm = np.sqrt((v * v).sum(axis=1))
    safe = np.where(norm > 0, norm, 1.0)
    return v / safe[:, None], safe


def _l2_backward(g, u, safe):
    # zero vectors pass through unchanged (norm stored as 1, u = 0 there)
    return (g - u * (g * u).sum(axis=1, keepdims=True)) / safe[:, None]


class Head(Block):
    """Shared MLP: ReLU hidden layers and K linear outputs."""

    def __init__(self, sizes, rng, dtype):
        super().__init__(BlockConfig("mlp", d_in=sizes[0], d_out=sizes[-1]), rng, dtype)
        self.n_layers = len(sizes) - 1
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.add_param(f"W{i}", a, b)
            self.add_param(f"b{i}", b)

    def forward(self, x, ctx=None):
        h = x
        for i in range(self.n_layers):
            self.save(**{f"in{i}": h})
            h = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if i < self.n_layers - 1:
                h = np.maximum(h, 0.0)
        return h

    def backward(self, grad_out):
        g = grad_out
        for i in reversed(range(self.n_layers)):
            x = self.saved(f"in{i}")
            self.grads[f"W{i}"] += x.T @ g
            self.grads[f"b{i}"] += g.sum(axis=0)
            g = g @ self.params[f"W{i}"].T
            if i > 0:
                g = g * (x > 0)
        self.release()
        return g, None


class RankingModel(Block):
    """preprocess -> interaction -> [concat input] -> shared head -> per-task sigmoid."""

    def __init__(self, config: ModelConfig, rng: RngState | int = 0):
        config.validate()
        rng = as_rng(rng)
        dtype = config.dtype
        super().__init__(config.resolved_interaction(), rng.split("model"), dtype)
        self.model_config = config
        schema = config.schema
        self.schema = schema
        for i, (card, dim) in enumerate(schema.sparse_features):
            self.add_param(f"emb{i}", card, dim)
        for i, (raw, proj) in enumerate(schema.embedding_features):
            self.add_param(f"P{i}", raw, proj)
            self.add_param(f"p{i}", proj)
        if schema.seq_emb_dim:
            self.add_param("Pseq", schema.seq_emb_dim, schema.seq_proj_dim)
            self.add_param("pseq", schema.seq_proj_dim)
        self.interaction = self.add_child("interaction", build(self.config, rng.split("interaction"), dtype))
        d_int = output_dim(self.config)
        d_head_in = d_int + (schema.d_feat if config.concat_input_to_interaction_output else 0)
        self.head = self.add_child("head", Head([d_head_in, *config.head_hidden, schema.K], rng.split("head"), dtype))
        self.dense_mean = np.zeros(schema.n_dense, dtype=dtype)
        self.dense_std = np.ones(schema.n_dense, dtype=dtype)

    @property
    def head_input_dim(self) -> int:
        return self.head.config.d_in

    # -- normalization -------------------------------------------------

    def fit_normalizer(self, dense: np.ndarray) -> None:
        """Freeze dense-feature statistics from a pass over training rows."""
        self.dense_mean = dense.mean(axis=0).astype(self.dtype)
        std = dense.std(axis=0)
        self.dense_std = np.where(std > 0, std, 1.0).astype(self.dtype)

    # -- forward/backward ---------------------------------------------

    def preprocess(self, batch: Batch) -> np.ndarray:
        schema = self.schema
        dt = self.dtype
        parts = [((batch.dense - self.dense_mean) / self.dense_std).astype(dt, copy=False)]
        ids = batch.sparse_ids
        for i, (card, _) in enumerate(schema.sparse_features):
            col = ids[:, i]
            if col.size and (col.min() < 0 or col.max() >= card):
                raise DataError(f"sparse feature {i}: id out of range [0, {card})")
            u, safe = _l2_normalize(self.params[f"emb{i}"][col])
            self.save(**{f"ids{i}": col, f"u_s{i}": u, f"n_s{i}": safe})
            parts.append(u)
        for i in range(len(schema.embedding_features)):
            raw = batch.embedding_feats[i].astype(dt, copy=False)
            u, safe = _l2_normalize(raw @ self.params[f"P{i}"] + self.params[f"p{i}"])
            self.save(**{f"raw{i}": raw, f"u_e{i}": u, f"n_e{i}": safe})
            parts.append(u)
        if schema.seq_emb_dim:
            raw = batch.seq_emb.astype(dt, copy=False)
            u, safe = _l2_normalize(raw @ self.params["Pseq"] + self.params["pseq"])
            self.save(raw_seq=raw, u_q=u, n_q=safe)
            parts.append(u)
        return np.ascontiguousarray(np.concatenate(parts, axis=1))

    def logits(self, batch: Batch) -> np.ndarray:
        x = self.preprocess(batch)
        h = self.interaction.forward(x)
        if self.model_config.concat_input_to_interaction_output:
            h = np.concatenate([h, x], axis=1)
        return self.head.forward(h)

    def forward(self, batch: Batch, ctx=None) -> np.ndarray:
        z = self.logits(batch)
        p = sigmoid(z)
        self.save(probs=p)
        return p

    def backward(self, grad_logits: np.ndarray):
        schema = self.schema
        gh, _ = self.head.backward(grad_logits)
        d_int = output_dim(self.config)
        gx_direct = None
        if self.model_config.concat_input_to_interaction_output:
            gx_direct = gh[:, d_int:]
            gh = gh[:, :d_int]
        gx, _ = self.interaction.backward(np.ascontiguousarray(gh))
        if gx_direct is not None:
            gx = gx + gx_direct
        off = schema.n_dense
        for i, (_, dim) in enumerate(schema.sparse_features):
            col, u, safe = self.saved(f"ids{i}", f"u_s{i}", f"n_s{i}")
            gv = _l2_backward(gx[:, off:off + dim], u, safe)
            np.add.at(self.grads[f"emb{i}"], col, gv)
            off += dim
        for i, (_, proj) in enumerate(schema.embedding_features):
            raw, u, safe = self.saved(f"raw{i}", f"u_e{i}", f"n_e{i}")
            gv = _l2_backward(gx[:, off:off + proj], u, safe)
            self.grads[f"P{i}"] += raw.T @ gv
            self.grads[f"p{i}"] += gv.sum(axis=0)
            off += proj
        if schema.seq_emb_dim:
            raw, u, safe = self.saved("raw_seq", "u_q", "n_q")
            gv = _l2_backward(gx[:, off:off + schema.seq_proj_dim], u, safe)
            self.grads["Pseq"] += raw.T @ gv
            self.grads["pseq"] += gv.sum(axis=0)
        self.release()
        return None, None

    def loss_and_backward(self, batch: Batch) -> tuple[float, np.ndarray]:
        """One training forward/backward; returns (loss, probs) and fills grads."""
        probs = self.forward(batch)
        labels = batch.labels.astype(probs.dtype)
        w = np.asarray(self.model_config.loss_weights, dtype=probs.dtype)
        value = loss(probs, labels, w)
        self.backward((probs - labels) * w / probs.shape[0])
        return value, probs

    def predict(self, batch: Batch) -> np.ndarray:
        was = self.training
        self.train(False)
        try:
            return self.forward(batch)
        finally:
            self.train(was)

    def param_nbytes(self) -> int:
        return sum(p.nbytes for _, p, _ in self.named_parameters())

    # -- state ---------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        state = {name: p for name, p, _ in self.named_parameters()}
        state["buffer.dense_mean"] = self.dense_mean
        state["buffer.dense_std"] = self.dense_std
        return state

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        for name, p, _ in self.named_parameters():
            if name not in state:
                raise DataError(f"checkpoint is missing parameter {name!r}")
            if state[name].shape != p.shape:
                raise DataError(f"checkpoint shape mismatch for {name!r}: {state[name].shape} vs {p.shape}")
            p[...] = state[name]
        self.dense_mean = np.array(state["buffer.dense_mean"], dtype=self.dtype)
        self.dense_std = np.array(state["buffer.dense_std"], dtype=self.dtype)


# ---------------------------------------------------------------- optimizers


class Optimizer:
    def __init__(self, model: RankingModel, cfg: OptimizerConfig):
        self.model = model
        self.cfg = cfg
        self.t = 0
        self.state: dict[str, np.ndarray] = {}
        if cfg.name == "adam":
            for name, p, _ in model.named_parameters():
                self.state[f"m/{name}"] = np.zeros_like(p)
                self.state[f"v/{name}"] = np.zeros_like(p)

    def state_nbytes(self) -> int:
        return sum(a.nbytes for a in self.state.values())

    def step(self) -> None:
        c = self.cfg
        self.t += 1
        if c.name == "sgd":
            for _, p, g in self.model.named_parameters():
                p -= c.lr * g
            return
        b1, b2 = c.beta1, c.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for name, p, g in self.model.named_parameters():
            m = self.state[f"m/{name}"]
            v = self.state[f"v/{name}"]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= c.lr * (m / corr1) / (np.sqrt(v / corr2) + c.eps)


def clip_grad_norm(model: Block, max_norm: float) -> float:
    total = float(np.sqrt(sum(float((g * g).sum()) for _, _, g in model.named_parameters())))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for _, _, g in model.named_parameters():
            g *= scale
    return total


# ---------------------------------------------------------------- checkpoints

CKPT_MAGIC = b"IBCK"
CKPT_VERSION = 1


@dataclass
class Checkpoint:
    step: int
    config_hash: str
    arrays: dict[str, np.ndarray]
    opt_t: int = 0


def snapshot(model: RankingModel, opt: Optimizer, step: int) -> Checkpoint:
    arrays = {k: v.copy() for k, v in model.state_arrays().items()}
    arrays.update({f"optim.{k}": v.copy() for k, v in opt.state.items()})
    return Checkpoint(step, model.model_config.config_hash(), arrays, opt.t)


def restore(model: RankingModel, opt: Optimizer, ckpt: Checkpoint) -> None:
    if ckpt.config_hash != model.model_config.config_hash():
        raise UsageError("checkpoint was written for a different model config")
    model.load_state_arrays(ckpt.arrays)
    for k, v in opt.state.items():
        v[...] = ckpt.arrays[f"optim.{k}"]
    opt.t = ckpt.opt_t


def write_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    """Layout (little-endian)::

        magic "IBCK" | u32 version | 32-byte sha256 config hash
        u64 step | u64 optimizer step | u32 n_blobs
        per blob: u32 name_len | name utf-8 | u32 ndim | u64 dims... | f64 data (row-major)
    """
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(bytes.fromhex(ckpt.config_hash))
        fh.write(struct.pack("<QQI", ckpt.step, ckpt.opt_t, len(ckpt.arrays)))
        for name in sorted(ckpt.arrays):
            arr = np.ascontiguousarray(ckpt.arrays[name], dtype="<f8")
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def read_checkpoint(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise DataError(f"checkpoint truncated while reading {what}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != CKPT_MAGIC:
        raise DataError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != CKPT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    config_hash = take(32, "config hash").hex()
    step, opt_t, n = struct.unpack("<QQI", take(20, "header"))
    arrays = {}
    for _ in range(n):
        (ln,) = struct.unpack("<I", take(4, "blob name length"))
        name = take(ln, "blob name").decode()
        (ndim,) = struct.unpack("<I", take(4, f"{name} ndim"))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim, f"{name} shape"))
        count = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(take(8 * count, f"{name} data"), dtype="<f8").reshape(shape).copy()
    return Checkpoint(step, config_hash, arrays, opt_t)


# ---------------------------------------------------------------- training


@dataclass
class StabilityLog:
    nan_events: list[tuple[int, str]] = field(default_factory=list)
    diverged: bool = False
    restarts: int = 0

    def summary(self) -> dict[str, Any]:
        return {"nan_events": len(self.nan_events), "restarts": self.restarts, "diverged": self.diverged}


@dataclass
class RunConfig:
    steps: int = 2000
    batch_size: int = 256
    seed: int = 0


class BatchStream:
    """Deterministic batches: step ``s`` maps to a fixed slice of a per-epoch permutation."""

    def __init__(self, dataset, batch_size: int, seed: int):
        self.dataset = dataset
        self.rows = dataset.split_indices("train")
        if len(self.rows) < batch_size:
            raise ConfigError(f"train split has {len(self.rows)} rows, fewer than batch_size={batch_size}")
        self.batch_size = batch_size
        self.per_epoch = len(self.rows) // batch_size
        self.rng = RngState(seed).split("shuffle")
        self._epoch = -1
        self._perm = None

    def indices(self, step: int) -> np.ndarray:
        epoch, j = divmod(step, self.per_epoch)
        if epoch != self._epoch:
            self._perm = self.rows[self.rng.generator(epoch).permutation(len(self.rows))]
            self._epoch = epoch
        return self._perm[j * self.batch_size:(j + 1) * self.batch_size]

    def batch(self, step: int) -> Batch:
        return self.dataset.batch(self.indices(step))


def _first_nonfinite_grad(model: Block) -> str | None:
    for name, _, g in model.named_parameters():
        if not np.all(np.isfinite(g)):
            return name
    return None


def train(model_config: ModelConfig, dataset, run: RunConfig, model: RankingModel | None = None, log_every: int = 50):
    """Train with checkpoint/restore on non-finite values.

    Returns ``(model, StabilityLog, curve)`` where ``curve`` holds ``(step, loss)``
    every ``log_every`` steps. A diverged run returns its log with the model
    restored to the last finite checkpoint.
    """
    if model is None:
        model = RankingModel(model_config, RngState(run.seed).split("init"))
        model.fit_normalizer(dataset.dense[dataset.split_indices("train")])
    stream = BatchStream(dataset, run.batch_size, run.seed)
    opt = Optimizer(model, model_config.optimizer)
    log = StabilityLog()
    curve: list[tuple[int, float]] = []
    ckpt = snapshot(model, opt, 0)
    step = 0
    model.train(True)
    while step < run.steps:
        batch = stream.batch(step)
        model.zero_grad()
        with np.errstate(all="ignore"):
            value, probs = model.loss_and_backward(batch)
            site = None
            if not np.all(np.isfinite(probs)):
                site = "forward"
            elif not np.isfinite(value):
                site = "loss"
            else:
                bad = _first_nonfinite_grad(model)
                if bad is not None:
                    site = f"grad:{bad}"
                else:
                    if model_config.grad_clip is not None:
                        clip_grad_norm(model, model_config.grad_clip)
                    opt.step()
                    for name, p, _ in model.named_parameters():
                        if not np.all(np.isfinite(p)):
                            site = f"update:{name}"
                            break
        if site is not None:
            log.nan_events.append((step, site))
            if log.restarts >= model_config.max_restarts:
                log.diverged = True
                restore(model, opt, ckpt)
                break
            log.restarts += 1
            restore(model, opt, ckpt)
            step = ckpt.step
            continue
        step += 1
        if step % log_every == 0 or step == run.steps:
            curve.append((step, value))
        if step % model_config.checkpoint_every == 0:
            ckpt = snapshot(model, opt, step)
    model.release_all()
    return model, log, curve


def evaluate_loss(model: RankingModel, dataset, split: str = "train", batch_size: int = 4096) -> float:
    rows = dataset.split_indices(split)
    total = 0.0
    w = np.asarray(model.model_config.loss_weights)
    for lo in range(0, len(rows), batch_size):
        b = dataset.batch(rows[lo:lo + batch_size])
        p = model.predict(b)
        total += loss(p, b.labels, w) * len(b)
    return total / len(rows)


def predict_dataset(model: RankingModel, dataset, split: str = "eval", batch_size: int = 4096) -> np.ndarray:
    rows = dataset.split_indices(split)
    out = [model.predict(dataset.batch(rows[lo:lo + batch_size])) for lo in range(0, len(rows), batch_size)]
    return np.concatenate(out, axis=0)


def persistent_nbytes(model: RankingModel, opt: Optimizer | None = None) -> int:
    """Parameters + gradients (+ optimizer state)."""
    return 2 * model.param_nbytes() + (opt.state_nbytes() if opt is not None else 0)


def instrumented_step(model: RankingModel, opt: Optimizer, batch: Batch) -> None:
    """One train step inside the active allocation scope, charging persistent state first."""
    scope = current_scope()
    if scope is None:
        raise UsageError("instrumented_step needs an active alloc_scope")
    scope.alloc(persistent_nbytes(model, opt))
    model.train(True)
    model.zero_grad()
    model.loss_and_backward(batch)
    opt.step()
