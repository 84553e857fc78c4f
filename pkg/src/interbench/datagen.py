"""Sessionized synthetic data with planted multiplicative interactions.

Every session draws from its own Philox sub-stream keyed on ``(seed, session)``,
so any session (and hence any row) can be regenerated alone and the result is
independent of generation order.

Per row and task ``k``::

    logit_k = bias_k + sum(coef * prod(components)) + noise_sigma * eps
    label_k ~ Bernoulli(sigmoid(logit_k))

Components reference observed feature values: ``("dense", j)``,
``("sparse", f, c)`` (component ``c`` of the latent vector of feature ``f``'s id),
``("emb", f, c)`` and ``("seq", c)``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, UsageError
from .model import Batch, FeatureSchema, sigmoid
from .tensor import RngState

MAX_ORDER = 5
SPLITS = {"train": 0, "eval": 1}


@dataclass
class Term:
    coefficient: float
    components: list[tuple]

    @property
    def order(self) -> int:
        return len(self.components)

    def to_list(self):
        return [self.coefficient, [list(c) for c in self.components]]

    @classmethod
    def from_list(cls, item):
        if isinstance(item, dict):
            return cls(float(item["coefficient"]), [tuple(c) for c in item["components"]])
        return cls(float(item[0]), [tuple(c) for c in item[1]])


@dataclass
class SyntheticSpec:
    schema: FeatureSchema
    terms: list[list[Term]]  # per task
    bias: list[float] | None = None
    noise_sigma: float = 0.0
    session_size: int = 25
    n_train_sessions: int = 2000
    n_eval_sessions: int = 400
    user_dense: int = 4
    user_sparse: int = 1
    latent_std: float = 1.0

    def __post_init__(self):
        if self.bias is None:
            self.bias = [0.0] * self.schema.K

    def problems(self) -> list[str]:
        s = self.schema
        errs = list(s.problems())
        if len(self.terms) != s.K:
            errs.append(f"spec.terms: need one term list per task ({s.K}), got {len(self.terms)}")
        if len(self.bias) != s.K:
            errs.append(f"spec.bias: need {s.K} entries")
        if self.session_size < 1 or self.n_train_sessions < 0 or self.n_eval_sessions < 0:
            errs.append("spec: session_size >= 1 and session counts >= 0 required")
        if self.noise_sigma < 0:
            errs.append("spec.noise_sigma: must be >= 0")
        if not 0 <= self.user_dense <= s.n_dense:
            errs.append("spec.user_dense: must lie in [0, n_dense]")
        if not 0 <= self.user_sparse <= len(s.sparse_features):
            errs.append("spec.user_sparse: must lie in [0, number of sparse features]")
        for k, task_terms in enumerate(self.terms):
            for t_i, term in enumerate(task_terms):
                where = f"spec.terms[{k}][{t_i}]"
                if term.order < 1:
                    errs.append(f"{where}: order must be >= 1")
                if term.order > MAX_ORDER:
                    errs.append(f"{where}: order {term.order} exceeds the maximum of {MAX_ORDER}")
                for comp in term.components:
                    msg = self._component_problem(comp)
                    if msg:
                        errs.append(f"{where}: {msg}")
        return errs

    def _component_problem(self, comp) -> str | None:
        s = self.schema
        kind = comp[0] if comp else None
        try:
            if kind == "dense" and len(comp) == 2 and 0 <= comp[1] < s.n_dense:
                return None
            if kind == "sparse" and len(comp) == 3:
                f, c = comp[1], comp[2]
                if 0 <= f < len(s.sparse_features) and 0 <= c < s.sparse_features[f][1]:
                    return None
            if kind == "emb" and len(comp) == 3:
                f, c = comp[1], comp[2]
                if 0 <= f < len(s.embedding_features) and 0 <= c < s.embedding_features[f][0]:
                    return None
            if kind == "seq" and len(comp) == 2 and 0 <= comp[1] < s.seq_emb_dim:
                return None
        except TypeError:
            pass
        return f"component {list(comp)!r} does not exist in the schema"

    def validate(self) -> "SyntheticSpec":
        errs = self.problems()
        if errs:
            raise ConfigError("invalid synthetic spec:\n  " + "\n  ".join(errs))
        return self

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "terms": [[t.to_list() for t in task] for task in self.terms],
            "bias": list(self.bias),
            "noise_sigma": self.noise_sigma,
            "session_size": self.session_size,
            "n_train_sessions": self.n_train_sessions,
            "n_eval_sessions": self.n_eval_sessions,
            "user_dense": self.user_dense,
            "user_sparse": self.user_sparse,
            "latent_std": self.latent_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        kw = dict(d)
        kw["schema"] = FeatureSchema.from_dict(d["schema"])
        kw["terms"] = [[Term.from_list(t) for t in task] for task in d["terms"]]
        return cls(**kw)

    def spec_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def default_schema() -> FeatureSchema:
    """d_feat = 16 dense + 4x8 sparse + 8 projected embedding + 8 projected sequence = 64."""
    return FeatureSchema(
        n_dense=16,
        sparse_features=[(100, 8), (50, 8), (20, 8), (10, 8)],
        embedding_features=[(32, 8)],
        seq_emb_dim=16,
        seq_proj_dim=8,
        K=2,
    )


def default_spec(**overrides) -> SyntheticSpec:
    """Task 0 ("save"): one centred order-3 product of item-side dense features,
    intercept tuned for ~2 positives per 25-row session. Task 1 ("click"): mixed
    low-order terms."""
    kw = dict(
        schema=default_schema(),
        terms=[
            [Term(3.0, [("dense", 4), ("dense", 5), ("dense", 6)])],
            [
                Term(1.0, [("dense", 7)]),
                Term(1.5, [("dense", 8), ("dense", 9)]),
                Term(0.8, [("sparse", 1, 0), ("dense", 10)]),
            ],
        ],
        bias=[-3.6, -1.0],
        noise_sigma=0.0,
    )
    kw.update(overrides)
    return SyntheticSpec(**kw)


# ---------------------------------------------------------------- dataset


@dataclass
class Dataset:
    spec: SyntheticSpec
    seed: int
    dense: np.ndarray
    sparse_ids: np.ndarray
    embedding_feats: list[np.ndarray]
    seq_emb: np.ndarray
    labels: np.ndarray
    session_id: np.ndarray
    split: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.dense.shape[0]

    @property
    def schema(self) -> FeatureSchema:
        return self.spec.schema

    @property
    def origin(self) -> tuple[str, int]:
        return (self.spec.spec_hash(), self.seed)

    def split_indices(self, name: str) -> np.ndarray:
        return np.flatnonzero(self.split == SPLITS[name])

    def batch(self, idx) -> Batch:
        idx = np.asarray(idx)
        return Batch(
            dense=self.dense[idx],
            sparse_ids=self.sparse_ids[idx],
            embedding_feats=[e[idx] for e in self.embedding_feats],
            seq_emb=self.seq_emb[idx],
            labels=self.labels[idx],
            session_id=self.session_id[idx],
            origin=self.origin,
        )

    def session_offsets(self, name: str = "eval") -> np.ndarray:
        """Row offsets (into ``split_indices(name)``) where each session starts, plus the end."""
        sid = self.session_id[self.split_indices(name)]
        if sid.size == 0:
            return np.zeros(1, dtype=np.int64)
        starts = np.flatnonzero(np.r_[True, sid[1:] != sid[:-1]])
        return np.r_[starts, sid.size].astype(np.int64)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.spec.spec_hash().encode())
        h.update(struct.pack("<Q", self.seed & ((1 << 64) - 1)))
        for arr in self._columns().values():
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def _columns(self) -> dict[str, np.ndarray]:
        cols = {"dense": self.dense, "sparse_ids": self.sparse_ids}
        for i, e in enumerate(self.embedding_feats):
            cols[f"embedding{i}"] = e
        cols["seq_emb"] = self.seq_emb
        cols["labels"] = self.labels
        cols["session_id"] = self.session_id
        cols["split"] = self.split
        return cols

    def equals(self, other: "Dataset") -> bool:
        a, b = self._columns(), other._columns()
        if a.keys() != b.keys() or self.seed != other.seed or self.spec.spec_hash() != other.spec.spec_hash():
            return False
        return all(x.dtype == b[k].dtype and x.shape == b[k].shape and x.tobytes() == b[k].tobytes() for k, x in a.items())


def latent_tables(spec: SyntheticSpec, seed: int) -> list[np.ndarray]:
    root = RngState(seed).split("latent")
    return [
        root.split(f"sparse{i}").generator().standard_normal((card, dim)) * spec.latent_std
        for i, (card, dim) in enumerate(spec.schema.sparse_features)
    ]


def _session_rows(spec: SyntheticSpec, stream: RngState, s: int):
    """All features of session ``s`` plus its label uniforms and logit noise."""
    schema = spec.schema
    m = spec.session_size
    g = stream.generator(s)
    ud, us = spec.user_dense, spec.user_sparse
    user_dense = g.standard_normal(ud)
    user_ids = [g.integers(0, schema.sparse_features[f][0]) for f in range(us)]
    seq = g.standard_normal(schema.seq_emb_dim)
    dense = np.empty((m, schema.n_dense))
    dense[:, :ud] = user_dense
    dense[:, ud:] = g.standard_normal((m, schema.n_dense - ud))
    ids = np.empty((m, len(schema.sparse_features)), dtype=np.int64)
    for f in range(len(schema.sparse_features)):
        if f < us:
            ids[:, f] = user_ids[f]
        else:
            ids[:, f] = g.integers(0, schema.sparse_features[f][0], size=m)
    embs = [g.standard_normal((m, raw)) for raw, _ in schema.embedding_features]
    seq_rows = np.broadcast_to(seq, (m, schema.seq_emb_dim)).copy()
    eps = g.standard_normal((m, schema.K))
    uniforms = g.random((m, schema.K))
    return dense, ids, embs, seq_rows, eps, uniforms


def _component_values(comp, dense, ids, embs, seq, tables):
    kind = comp[0]
    if kind == "dense":
        return dense[:, comp[1]]
    if kind == "sparse":
        return tables[comp[1]][ids[:, comp[1]], comp[2]]
    if kind == "emb":
        return embs[comp[1]][:, comp[2]]
    if kind == "seq":
        return seq[:, comp[1]]
    raise ConfigError(f"unknown component kind {kind!r}")


def true_logits(spec: SyntheticSpec, dense, ids, embs, seq, tables) -> np.ndarray:
    n = dense.shape[0]
    out = np.tile(np.asarray(spec.bias, dtype=np.float64), (n, 1))
    for k, task_terms in enumerate(spec.terms):
        for term in task_terms:
            prod = np.full(n, term.coefficient)
            for comp in term.components:
                prod = prod * _component_values(comp, dense, ids, embs, seq, tables)
            out[:, k] += prod
    return out


def generate(spec: SyntheticSpec, seed: int, sessions: range | None = None) -> Dataset:
    """Generate the train sessions followed by the eval sessions (or only ``sessions``)."""
    spec.validate()
    schema = spec.schema
    n_total = spec.n_train_sessions + spec.n_eval_sessions
    sessions = range(n_total) if sessions is None else sessions
    stream = RngState(seed).split("sessions")
    tables = latent_tables(spec, seed)
    parts = [_session_rows(spec, stream, s) for s in sessions]
    m = spec.session_size
    n = m * len(parts)
    if parts:
        dense = np.concatenate([p[0] for p in parts])
        ids = np.concatenate([p[1] for p in parts])
        embs = [np.concatenate([p[2][i] for p in parts]) for i in range(len(schema.embedding_features))]
        seq = np.concatenate([p[3] for p in parts])
        eps = np.concatenate([p[4] for p in parts])
        uni = np.concatenate([p[5] for p in parts])
    else:
        dense = np.zeros((0, schema.n_dense))
        ids = np.zeros((0, len(schema.sparse_features)), dtype=np.int64)
        embs = [np.zeros((0, raw)) for raw, _ in schema.embedding_features]
        seq = np.zeros((0, schema.seq_emb_dim))
        eps = uni = np.zeros((0, schema.K))
    logits = true_logits(spec, dense, ids, embs, seq, tables) + spec.noise_sigma * eps
    labels = (uni < sigmoid(logits)).astype(np.uint8)
    session_id = np.repeat(np.asarray(list(sessions), dtype=np.int64), m)
    split = (session_id >= spec.n_train_sessions).astype(np.uint8)
    ds = Dataset(spec, seed, dense, ids, embs, seq, labels, session_id, split)
    if n and (split == 1).any():
        from .harness import auc

        ev = ds.split_indices("eval")
        scores = bayes_scores(spec, ds.batch(ev))[:, 0]
        y = labels[ev, 0]
        if 0 < y.sum() < y.size:
            ds.meta["oracle_auc_save"] = auc(scores, y)
    return ds


def bayes_scores(spec: SyntheticSpec, batch: Batch, seed: int | None = None) -> np.ndarray:
    """Exact sigmoid of the noise-free generating logits."""
    if batch.origin is not None:
        spec_hash, origin_seed = batch.origin
        if spec_hash != spec.spec_hash():
            raise UsageError("batch was generated from a different spec")
        if seed is not None and seed != origin_seed:
            raise UsageError("batch was generated with a different seed")
        seed = origin_seed
    if seed is None:
        raise UsageError("bayes_scores needs the generating seed for batches without an origin")
    tables = latent_tables(spec, seed)
    z = true_logits(spec, batch.dense, batch.sparse_ids, batch.embedding_feats, batch.seq_emb, tables)
    return sigmoid(z)


# ---------------------------------------------------------------- file format

DS_MAGIC = b"IBDS"
DS_VERSION = 1
_DTYPES = {0: "<f8", 1: "<i8", 2: "u1"}
_CODES = {np.dtype("<f8"): 0, np.dtype("<i8"): 1, np.dtype("u1"): 2}


def write_dataset(path: str | Path, ds: Dataset) -> None:
    """Layout (little-endian)::

        magic "IBDS" | u32 version | 32-byte sha256 spec hash
        u64 schema_len | JSON {spec, seed, n_rows, meta}
        u32 n_sections
        per section: u32 name_len | name | u8 dtype code | u64 rows | u64 cols
                     | u64 payload_len | column-major payload
    """
    header = json.dumps(
        {"spec": ds.spec.to_dict(), "seed": ds.seed, "n_rows": len(ds), "meta": ds.meta}, sort_keys=True
    ).encode()
    cols = ds._columns()
    with open(path, "wb") as fh:
        fh.write(DS_MAGIC)
        fh.write(struct.pack("<I", DS_VERSION))
        fh.write(bytes.fromhex(ds.spec.spec_hash()))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(cols)))
        for name, arr in cols.items():
            arr2 = arr.reshape(arr.shape[0], -1)
            dt = np.dtype(arr2.dtype).newbyteorder("<") if arr2.dtype.itemsize > 1 else arr2.dtype
            payload = np.asfortranarray(arr2.astype(dt, copy=False)).tobytes(order="F")
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<BQQQ", _CODES[np.dtype(dt)], arr2.shape[0], arr2.shape[1], len(payload)))
            fh.write(payload)


def read_dataset(path: str | Path) -> Dataset:
    data = Path(path).read_bytes()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise DataError(f"dataset file truncated: missing {what}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != DS_MAGIC:
        raise DataError("not a dataset file (bad magic)")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != DS_VERSION:
        raise DataError(f"unsupported dataset version {version}")
    spec_hash = take(32, "spec hash").hex()
    (hlen,) = struct.unpack("<Q", take(8, "schema block length"))
    header = json.loads(take(hlen, "schema block"))
    spec = SyntheticSpec.from_dict(header["spec"])
    if spec.spec_hash() != spec_hash:
        raise DataError("spec hash in header does not match the embedded spec")
    (n_sections,) = struct.unpack("<I", take(4, "section count"))
    cols = {}
    for i in range(n_sections):
        (ln,) = struct.unpack("<I", take(4, f"section {i} name length"))
        name = take(ln, f"section {i} name").decode()
        code, rows, ncols, plen = struct.unpack("<BQQQ", take(25, f"section '{name}' header"))
        payload = take(plen, f"section '{name}' payload")
        arr = np.frombuffer(payload, dtype=_DTYPES[code]).reshape((rows, ncols), order="F")
        cols[name] = np.ascontiguousarray(arr)
    schema = spec.schema
    expected = ["dense", "sparse_ids", *[f"embedding{i}" for i in range(len(schema.embedding_features))],
                "seq_emb", "labels", "session_id", "split"]
    for name in expected:
        if name not in cols:
            raise DataError(f"dataset file truncated: missing section '{name}'")
    return Dataset(
        spec,
        header["seed"],
        cols["dense"],
        cols["sparse_ids"],
        [cols[f"embedding{i}"] for i in range(len(schema.embedding_features))],
        cols["seq_emb"],
        cols["labels"],
        cols["session_id"][:, 0].copy(),
        cols["split"][:, 0].copy(),
        header.get("meta", {}),
    )
