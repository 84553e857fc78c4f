"""Feature tokenizer and post-norm transformer encoder over unordered feature tokens.

No positional encoding: feature tokens carry identity through their projection
weights, not their order.
"""

from __future__ import annotations

import math

import numpy as np

from .. import kernels
from ..tensor import DEFAULT_DTYPE
from .base import Block, affine_backward, relu
from .config import BlockConfig, token_count

LN_EPS = 1e-5


def feature_segments(layout: dict) -> list[tuple[str, int]]:
    """``(kind, width)`` for each segment of the feature embedding, in storage order."""
    segs: list[tuple[str, int]] = []
    if layout.get("dense", 0):
        segs.append(("dense", layout["dense"]))
    segs += [("sparse", w) for w in layout.get("sparse", [])]
    segs += [("embedding", w) for w in layout.get("embedding", [])]
    if layout.get("seq", 0):
        segs.append(("seq", layout["seq"]))
    return segs


def tokenize_features(dense, sparse_embs, embedding_feats, seq_emb, params, n_groups, n_seq, token_dim):
    """Project features into ``(n, S + C + U + E, D)`` tokens.

    Token order: one per sparse feature, ``n_groups`` dense projections, ``n_seq``
    projections of the sequence embedding, then one per embedding feature.
    """
    D = token_dim
    toks = []
    for i, e in enumerate(sparse_embs):
        toks.append((e @ params[f"Ws{i}"] + params[f"bs{i}"])[:, None, :])
    if dense is not None and n_groups:
        n = dense.shape[0]
        toks.append((dense @ params["Wd"] + params["bd"]).reshape(n, n_groups, D))
    if seq_emb is not None and n_seq:
        n = seq_emb.shape[0]
        toks.append((seq_emb @ params["Wseq"] + params["bseq"]).reshape(n, n_seq, D))
    for i, e in enumerate(embedding_feats):
        toks.append((e @ params[f"We{i}"] + params[f"be{i}"])[:, None, :])
    return np.concatenate(toks, axis=1)


class EncoderLayer(Block):
    """Multi-head self-attention + ReLU FFN, each with residual then layernorm."""

    def __init__(self, config, rng, dtype=DEFAULT_DTYPE):
        super().__init__(config, rng, dtype)
        D = config.token_dim
        F = config.ffn_dim or 2 * D
        self.n_heads = config.n_heads
        for name in ("q", "k", "v", "o"):
            self.add_param(f"W{name}", D, D)
            # a key bias shifts every score in a softmax row equally; it is omitted
            if name != "k":
                self.add_param(f"b{name}", D)
        self.add_param("ln1_g", D, scheme="ones")
        self.add_param("ln1_b", D)
        self.add_param("W1", D, F)
        self.add_param("b1", F)
        self.add_param("W2", F, D)
        self.add_param("b2", D)
        self.add_param("ln2_g", D, scheme="ones")
        self.add_param("ln2_b", D)

    def _heads(self, m, n, t):
        h = self.n_heads
        return m.reshape(n, t, h, -1).transpose(0, 2, 1, 3)

    def attention_weights(self, tokens):
        n, t, D = tokens.shape
        p = self.params
        x = tokens.reshape(n * t, D)
        q = self._heads(x @ p["Wq"] + p["bq"], n, t)
        k = self._heads(x @ p["Wk"], n, t)
        s = (q @ k.transpose(0, 1, 3, 2)) / math.sqrt(D // self.n_heads)
        return kernels.softmax_rows(np.ascontiguousarray(s.reshape(-1, t))).reshape(s.shape)

    def forward(self, tokens, ctx=None):
        n, t, D = tokens.shape
        p = self.params
        x = np.ascontiguousarray(tokens.reshape(n * t, D))
        q = self._heads(x @ p["Wq"] + p["bq"], n, t)
        k = self._heads(x @ p["Wk"], n, t)
        v = self._heads(x @ p["Wv"] + p["bv"], n, t)
        scale = 1.0 / math.sqrt(D // self.n_heads)
        s = (q @ k.transpose(0, 1, 3, 2)) * scale
        a = kernels.softmax_rows(np.ascontiguousarray(s.reshape(-1, t))).reshape(s.shape)
        o = (a @ v).transpose(0, 2, 1, 3).reshape(n * t, D)
        r1 = np.ascontiguousarray(x + o @ p["Wo"] + p["bo"])
        h1, xh1, rs1 = kernels.layernorm_forward(r1, p["ln1_g"], p["ln1_b"], LN_EPS)
        f1 = relu(h1 @ p["W1"] + p["b1"])
        r2 = np.ascontiguousarray(h1 + f1 @ p["W2"] + p["b2"])
        out, xh2, rs2 = kernels.layernorm_forward(r2, p["ln2_g"], p["ln2_b"], LN_EPS)
        self.save(x=x, q=q, k=k, v=v, a=a, o=o, xh1=xh1, rs1=rs1, h1=h1, f1=f1, xh2=xh2, rs2=rs2)
        self._shape = (n, t, D)
        return out.reshape(n, t, D)

    def backward(self, grad_out):
        n, t, D = self._shape
        x, q, k, v, a, o, xh1, rs1, h1, f1, xh2, rs2 = self.saved(
            "x", "q", "k", "v", "a", "o", "xh1", "rs1", "h1", "f1", "xh2", "rs2"
        )
        p, gr = self.params, self.grads
        g = np.ascontiguousarray(grad_out.reshape(n * t, D))
        gr2, gg, gb = kernels.layernorm_backward(g, xh2, rs2, p["ln2_g"])
        gr["ln2_g"] += gg
        gr["ln2_b"] += gb
        gf1 = affine_backward(self, gr2, f1, "W2", "b2") * (f1 > 0)
        gh1 = np.ascontiguousarray(gr2 + affine_backward(self, gf1, h1, "W1", "b1"))
        gr1, gg, gb = kernels.layernorm_backward(gh1, xh1, rs1, p["ln1_g"])
        gr["ln1_g"] += gg
        gr["ln1_b"] += gb
        go = affine_backward(self, gr1, o, "Wo", "bo")
        go = self._heads(go, n, t)
        ga = go @ v.transpose(0, 1, 3, 2)
        gv = a.transpose(0, 1, 3, 2) @ go
        scale = 1.0 / math.sqrt(D // self.n_heads)
        gs = a * (ga - (ga * a).sum(axis=-1, keepdims=True)) * scale
        gq = gs @ k
        gk = gs.transpose(0, 1, 3, 2) @ q

        def merge(m):
            return m.transpose(0, 2, 1, 3).reshape(n * t, D)

        gx = gr1.copy()
        gx += affine_backward(self, merge(gq), x, "Wq", "bq")
        gx += affine_backward(self, merge(gk), x, "Wk", None)
        gx += affine_backward(self, merge(gv), x, "Wv", "bv")
        self.release()
        return gx.reshape(n, t, D), None


class TransformerEncoder(Block):
    """Tokenize the input, run ``n_layers`` encoder layers, concatenate output tokens.

    Without a ``token_layout`` the whole input is treated as one dense group.
    """

    def __init__(self, config, rng, dtype=DEFAULT_DTYPE):
        super().__init__(config, rng, dtype)
        D = config.token_dim
        self.layout = config.token_layout or {"dense": config.d_in}
        self.segments = feature_segments(self.layout)
        self.n_tokens = token_count(config)
        self.n_groups = config.dense_groups
        self.n_seq = config.seq_projections
        s_i = e_i = 0
        for kind, w in self.segments:
            if kind == "dense" and self.n_groups:
                self.add_param("Wd", w, self.n_groups * D, fan_out=D)
                self.add_param("bd", self.n_groups * D)
            elif kind == "sparse":
                self.add_param(f"Ws{s_i}", w, D)
                self.add_param(f"bs{s_i}", D)
                s_i += 1
            elif kind == "embedding":
                self.add_param(f"We{e_i}", w, D)
                self.add_param(f"be{e_i}", D)
                e_i += 1
            elif kind == "seq" and self.n_seq:
                self.add_param("Wseq", w, self.n_seq * D, fan_out=D)
                self.add_param("bseq", self.n_seq * D)
        layer_cfg = BlockConfig(
            "transformer-encoder", d_in=D, token_dim=D, n_heads=config.n_heads, ffn_dim=config.ffn_dim
        )
        self.layers = [
            self.add_child(f"layer{i}", EncoderLayer(layer_cfg, rng.split(f"layer{i}"), dtype))
            for i in range(config.n_layers)
        ]

    def split_input(self, x):
        parts = {"dense": None, "sparse": [], "embedding": [], "seq": None}
        off = 0
        for kind, w in self.segments:
            seg = x[:, off:off + w]
            off += w
            if kind in ("sparse", "embedding"):
                parts[kind].append(seg)
            else:
                parts[kind] = seg
        return parts

    def tokens(self, x):
        parts = self.split_input(x)
        return tokenize_features(
            parts["dense"], parts["sparse"], parts["embedding"], parts["seq"],
            self.params, self.n_groups, self.n_seq, self.config.token_dim,
        )

    def forward(self, x, ctx=None):
        self.save(x=x)
        h = self.tokens(x)
        for layer in self.layers:
            h = layer.forward(h)
        n = x.shape[0]
        return h.reshape(n, -1)

    def backward(self, grad_out):
        x = self.saved("x")
        n = x.shape[0]
        D = self.config.token_dim
        g = grad_out.reshape(n, self.n_tokens, D)
        for layer in reversed(self.layers):
            g, _ = layer.backward(g)
        parts = self.split_input(x)
        gx = np.zeros_like(x)
        # token order: sparse, dense groups, seq projections, embedding
        tok = 0
        grads_by_seg = {}
        for i, e in enumerate(parts["sparse"]):
            grads_by_seg[("sparse", i)] = affine_backward(self, g[:, tok, :], e, f"Ws{i}", f"bs{i}")
            tok += 1
        if parts["dense"] is not None and self.n_groups:
            gd = g[:, tok:tok + self.n_groups, :].reshape(n, -1)
            grads_by_seg[("dense", 0)] = affine_backward(self, gd, parts["dense"], "Wd", "bd")
            tok += self.n_groups
        if parts["seq"] is not None and self.n_seq:
            gs = g[:, tok:tok + self.n_seq, :].reshape(n, -1)
            grads_by_seg[("seq", 0)] = affine_backward(self, gs, parts["seq"], "Wseq", "bseq")
            tok += self.n_seq
        for i, e in enumerate(parts["embedding"]):
            grads_by_seg[("embedding", i)] = affine_backward(self, g[:, tok, :], e, f"We{i}", f"be{i}")
            tok += 1
        off = 0
        counters = {"sparse": 0, "embedding": 0, "dense": 0, "seq": 0}
        for kind, w in self.segments:
            key = (kind, counters[kind])
            counters[kind] += 1
            if key in grads_by_seg:
                gx[:, off:off + w] = grads_by_seg[key]
            off += w
        self.release()
        return gx, None
