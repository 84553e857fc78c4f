import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interbench.blocks import (
    VARIANTS,
    BlockConfig,
    build,
    feature_segments,
    finalmlp_fusion,
    output_dim,
    param_count,
    resolve,
    token_count,
    tokenize_features,
)
from interbench.errors import ConfigError, UsageError
from interbench.tensor import grad_check

LN_EPS = 1e-5


def ref_layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * g + b


def jitter(block, rng, scale=0.1):
    for _, p, _ in block.named_parameters():
        p += scale * rng.standard_normal(p.shape)
    return block


def zero_weights(block):
    for _, p, _ in block.named_parameters():
        p[...] = 0.0


# ---------------------------------------------------------------- cross family


class TestCrossFull:
    def test_param_shapes(self):
        blk = build(BlockConfig("cross-full", d_in=4), 0)
        assert {k: v.shape for k, v in blk.params.items()} == {"W": (4, 4), "b": (4,)}

    def test_zero_weights_is_residual(self, rng):
        blk = build(BlockConfig("cross-full", d_in=5), 0)
        zero_weights(blk)
        x0, xl = rng.standard_normal((3, 5)), rng.standard_normal((3, 5))
        np.testing.assert_array_equal(blk.forward(xl, x0), xl)

    def test_hand_example(self):
        blk = build(BlockConfig("cross-full", d_in=2), 0)
        blk.params["W"][...] = np.eye(2)
        blk.params["b"][...] = 0
        x = np.array([[1.0, 2.0]])
        np.testing.assert_array_equal(blk.forward(x, x), [[2.0, 6.0]])

    def test_batch_matches_per_row_loop(self, rng):
        d = 6
        blk = jitter(build(BlockConfig("cross-full", d_in=d), 1), rng)
        x0, xl = rng.standard_normal((16, d)), rng.standard_normal((16, d))
        W, b = blk.params["W"], blk.params["b"]
        expect = np.empty_like(xl)
        for r in range(16):
            for i in range(d):
                acc = b[i]
                for j in range(d):
                    acc += xl[r, j] * W[j, i]
                expect[r, i] = x0[r, i] * acc + xl[r, i]
        np.testing.assert_allclose(blk.forward(xl, x0), expect, atol=1e-12, rtol=0)


class TestCrossLowRank:
    def test_param_shapes(self):
        blk = build(BlockConfig("cross-lowrank", d_in=512, rank=64), 0)
        assert {k: v.shape for k, v in blk.params.items()} == {"U": (512, 64), "V": (512, 64), "b": (512,)}

    def test_linear_lowrank_matches_full_rank(self, rng):
        d, r = 7, 3
        lr = jitter(build(BlockConfig("cross-lowrank", d_in=d, rank=r, activation="none"), 2), rng)
        full = build(BlockConfig("cross-full", d_in=d), 0)
        full.params["W"][...] = lr.params["V"] @ lr.params["U"].T
        full.params["b"][...] = lr.params["b"]
        x0, xl = rng.standard_normal((9, d)), rng.standard_normal((9, d))
        np.testing.assert_allclose(lr.forward(xl, x0), full.forward(xl, x0), atol=1e-12, rtol=0)

    def test_zero_u_is_residual(self, rng):
        blk = build(BlockConfig("cross-lowrank", d_in=4, rank=2), 0)
        blk.params["U"][...] = 0
        x0, xl = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        np.testing.assert_array_equal(blk.forward(xl, x0), xl)

    def test_relu_kills_branch(self, rng):
        blk = build(BlockConfig("cross-lowrank", d_in=4, rank=2, activation="relu"), 0)
        blk.params["V"][...] = -np.abs(blk.params["V"])
        blk.params["b"][...] = rng.standard_normal(4)
        xl = np.abs(rng.standard_normal((3, 4))) + 0.1
        x0 = rng.standard_normal((3, 4))
        np.testing.assert_allclose(blk.forward(xl, x0), x0 * blk.params["b"] + xl, atol=1e-15)


class TestGatedCross:
    def test_zero_gate_halves(self, rng):
        blk = jitter(build(BlockConfig("gated-cross", d_in=4), 0), rng)
        blk.params["Wg"][...] = 0
        x0, xl = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        expect = 0.5 * (x0 * (xl @ blk.params["Wc"] + blk.params["b"])) + xl
        np.testing.assert_allclose(blk.forward(xl, x0), expect, atol=1e-14)

    def test_zero_cross_is_residual(self, rng):
        blk = build(BlockConfig("gated-cross", d_in=4), 0)
        blk.params["Wc"][...] = 0
        x0, xl = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        np.testing.assert_array_equal(blk.forward(xl, x0), xl)

    def test_scalar_loop(self, rng):
        d = 5
        blk = jitter(build(BlockConfig("gated-cross", d_in=d), 4), rng)
        Wc, b, Wg = blk.params["Wc"], blk.params["b"], blk.params["Wg"]
        x0, xl = rng.standard_normal((2, d)), rng.standard_normal((2, d))
        out = blk.forward(xl, x0)
        for r in range(2):
            for i in range(d):
                c = b[i] + sum(xl[r, j] * Wc[j, i] for j in range(d))
                gate = 1.0 / (1.0 + math.exp(-sum(xl[r, j] * Wg[j, i] for j in range(d))))
                assert abs(out[r, i] - (x0[r, i] * c * gate + xl[r, i])) < 1e-12


@pytest.mark.parametrize(
    "cfg",
    [
        BlockConfig("cross-full", d_in=6),
        BlockConfig("cross-lowrank", d_in=6, rank=2, activation="none"),
        BlockConfig("cross-lowrank", d_in=6, rank=2, activation="relu"),
        BlockConfig("gated-cross", d_in=6),
    ],
    ids=lambda c: f"{c.variant}-{c.activation}",
)
def test_residual_identity_with_zero_weights(cfg, rng):
    blk = build(cfg, 0)
    for _, p, _ in blk.named_parameters():
        if p.ndim == 2:
            p[...] = 0.0
    blk.params["b"][...] = 0.0
    xl = rng.standard_normal((5, 6))
    np.testing.assert_array_equal(blk.forward(xl, rng.standard_normal((5, 6))), xl)


@pytest.mark.parametrize("L", [1, 2, 3])
def test_stacked_cross_polynomial_degree(L):
    """Each output coordinate of L stacked layers is a polynomial of degree <= L+1."""
    rng = np.random.default_rng(L)
    cfg = resolve(BlockConfig("stack", children=[BlockConfig("cross-full")] * L), 2)
    blk = jitter(build(cfg, L), rng, 0.5)
    blk.train(False)
    pts = rng.uniform(-1, 1, size=(200, 2))
    out = blk.forward(pts)
    deg = L + 1
    monos = [(i, j) for i in range(deg + 1) for j in range(deg + 1 - i)]
    A = np.stack([pts[:, 0] ** i * pts[:, 1] ** j for i, j in monos], axis=1)
    for k in range(2):
        coef, *_ = np.linalg.lstsq(A, out[:, k], rcond=None)
        assert np.abs(A @ coef - out[:, k]).max() < 1e-8
    # one degree lower is not enough
    low = [(i, j) for i, j in monos if i + j <= L]
    B = A[:, [monos.index(m) for m in low]]
    coef, *_ = np.linalg.lstsq(B, out[:, 0], rcond=None)
    assert np.abs(B @ coef - out[:, 0]).max() > 1e-6


# ---------------------------------------------------------------- masknet


def staged_maskblock(p, v_in, v_emb):
    hidden = np.maximum(v_emb @ p["W1"] + p["b1"], 0)
    mask = hidden @ p["W2"] + p["b2"]
    pre = (mask * v_in) @ p["W3"] + p["b3"]
    return np.maximum(ref_layernorm(pre, p["gamma"], p["beta"]), 0)


class TestMaskBlock:
    def test_unit_mask(self, rng):
        blk = jitter(build(BlockConfig("maskblock", d_in=6, d_out=4, d_ctx=6), 0), rng)
        blk.params["W2"][...] = 0
        blk.params["b2"][...] = 1
        v = rng.standard_normal((5, 6))
        p = blk.params
        expect = np.maximum(ref_layernorm(v @ p["W3"] + p["b3"], p["gamma"], p["beta"]), 0)
        np.testing.assert_allclose(blk.forward(v, v), expect, atol=1e-12)

    def test_aggregation_width(self):
        blk = build(BlockConfig("maskblock", d_in=100, d_out=8, d_ctx=100, projection_ratio=2.0), 0)
        assert blk.params["W1"].shape == (100, 200)

    def test_staged_reference(self, rng):
        blk = jitter(build(BlockConfig("maskblock", d_in=8, d_out=8, d_ctx=8), 0), rng)
        v_in, v_emb = rng.standard_normal((6, 8)), rng.standard_normal((6, 8))
        np.testing.assert_allclose(blk.forward(v_in, v_emb), staged_maskblock(blk.params, v_in, v_emb), atol=1e-10)


class TestMaskNet:
    def test_parallel_one_equals_serial_one(self, rng):
        ser = jitter(build(resolve(BlockConfig("masknet-serial", n_blocks=1, d_out=5), 6), 0), rng)
        par = build(resolve(BlockConfig("masknet-parallel", n_blocks=1, d_out=5), 6), 9)
        for (_, a, _), (_, b, _) in zip(ser.named_parameters(), par.named_parameters()):
            b[...] = a
        x = rng.standard_normal((4, 6))
        np.testing.assert_array_equal(ser.forward(x), par.forward(x))

    def test_launched_width(self):
        cfg = resolve(BlockConfig("masknet-parallel", n_blocks=3, projection_ratio=2.0, d_out=512), 16)
        blk = build(cfg, 0)
        assert output_dim(cfg) == 1536
        assert blk.forward(np.ones((2, 16))).shape == (2, 1536)

    def test_serial_is_composition(self, rng):
        blk = jitter(build(resolve(BlockConfig("masknet-serial", n_blocks=2, d_out=5), 7), 0), rng)
        v = rng.standard_normal((4, 7))
        b0, b1 = blk.blocks
        manual = staged_maskblock(b1.params, staged_maskblock(b0.params, v, v), v)
        np.testing.assert_allclose(blk.forward(v), manual, atol=1e-10)

    def test_parallel_permutation_equivariance(self, rng):
        cfg = resolve(BlockConfig("masknet-parallel", n_blocks=3, d_out=4), 6)
        a = jitter(build(cfg, 0), rng)
        b = build(cfg, 1)
        perm = [2, 0, 1]
        for dst, src in enumerate(perm):
            for k, v in a.blocks[src].params.items():
                b.blocks[dst].params[k][...] = v
        x = rng.standard_normal((5, 6))
        ya, yb = a.forward(x), b.forward(x)
        chunks = np.split(ya, 3, axis=1)
        np.testing.assert_array_equal(yb, np.concatenate([chunks[i] for i in perm], axis=1))


# ---------------------------------------------------------------- finalmlp


class TestFinalMLPFusion:
    def test_bias_only(self):
        n, dim, k = 3, 8, 4
        c = dim // k
        out = finalmlp_fusion(
            np.ones((n, dim)), np.ones((n, dim)), np.ones((1, k)), np.zeros((1, dim)), np.zeros((1, dim)),
            np.zeros((k * c, c)), k,
        )
        np.testing.assert_array_equal(out, np.full((n, 1), 4.0))

    def test_k1_no_bilinear_is_affine(self, rng):
        dim = 5
        o1, o2 = rng.standard_normal((4, dim)), rng.standard_normal((4, dim))
        w1, w2 = rng.standard_normal((1, dim)), rng.standard_normal((1, dim))
        out = finalmlp_fusion(o1, o2, np.array([[0.3]]), w1, w2, np.zeros((dim, dim)), 1)
        expect = np.concatenate([o1, o2], axis=1) @ np.concatenate([w1, w2], axis=1).T + 0.3
        np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_scalar_expansion(self, rng):
        dim, k = 4, 2
        c = dim // k
        o1, o2 = rng.standard_normal((3, dim)), rng.standard_normal((3, dim))
        b, w1, w2 = rng.standard_normal((1, k)), rng.standard_normal((1, dim)), rng.standard_normal((1, dim))
        w3 = rng.standard_normal((k * c, c))
        out = finalmlp_fusion(o1, o2, b, w1, w2, w3, k)
        for r in range(3):
            total = 0.0
            for j in range(k):
                s = b[0, j]
                for i in range(c):
                    s += w1[0, j * c + i] * o1[r, j * c + i] + w2[0, j * c + i] * o2[r, j * c + i]
                    for m in range(c):
                        s += o1[r, j * c + i] * w3[j * c + i, m] * o2[r, j * c + m]
                total += s
            assert abs(out[r, 0] - total) < 1e-12

    def test_indivisible_width(self):
        with pytest.raises(ConfigError):
            finalmlp_fusion(np.ones((1, 5)), np.ones((1, 5)), np.ones((1, 2)), np.ones((1, 5)), np.ones((1, 5)),
                            np.ones((4, 2)), 2)
        assert BlockConfig("finalmlp-fusion", d_in=4, d_out=1, hidden_sizes=[6], n_heads=4).problems()


# ---------------------------------------------------------------- transformer


class TestTokenizer:
    def test_published_token_count(self):
        layout = {"dense": 12, "sparse": [4] * 10, "seq": 8}
        cfg = BlockConfig("transformer-encoder", d_in=60, token_dim=8, dense_groups=4, seq_projections=4,
                          token_layout=layout)
        assert token_count(cfg) == 18
        blk = build(cfg, 0)
        assert blk.tokens(np.ones((2, 60))).shape == (2, 18, 8)

    def test_dense_token_is_bias_with_zero_weights(self, rng):
        params = {"Wd": np.zeros((3, 4)), "bd": rng.standard_normal(4)}
        toks = tokenize_features(np.ones((2, 3)), [], [], None, params, 1, 0, 4)
        np.testing.assert_array_equal(toks[:, 0, :], np.broadcast_to(params["bd"], (2, 4)))

    @settings(max_examples=25, deadline=None)
    @given(
        st.integers(0, 6), st.integers(0, 3), st.lists(st.integers(1, 5), max_size=3),
        st.lists(st.integers(1, 5), max_size=2), st.integers(0, 3), st.sampled_from([2, 4, 6]),
    )
    def test_token_arithmetic(self, n_dense, groups, sparse, emb, seq_proj, D):
        layout = {"dense": n_dense, "sparse": sparse, "embedding": emb, "seq": 3 if seq_proj else 0}
        d = sum(w for _, w in feature_segments(layout))
        expect = len(sparse) + len(emb) + (groups if n_dense else 0) + (seq_proj if seq_proj else 0)
        if d == 0 or expect == 0:
            return
        cfg = BlockConfig("transformer-encoder", d_in=d, token_dim=D, dense_groups=groups,
                          seq_projections=seq_proj, token_layout=layout)
        assert token_count(cfg) == expect
        blk = build(cfg, 0)
        out = blk.forward(np.ones((2, d)))
        assert out.shape == (2, expect * D) == (2, output_dim(cfg))


def ref_encoder_layer(p, X, n_heads):
    """Per-example, per-head loops; post-norm."""
    n, t, D = X.shape
    dh = D // n_heads
    out = np.empty_like(X)
    for r in range(n):
        x = X[r]
        q = x @ p["Wq"] + p["bq"]
        k = x @ p["Wk"]
        v = x @ p["Wv"] + p["bv"]
        heads = []
        for h in range(n_heads):
            sl = slice(h * dh, (h + 1) * dh)
            s = q[:, sl] @ k[:, sl].T / math.sqrt(dh)
            e = np.exp(s - s.max(axis=1, keepdims=True))
            a = e / e.sum(axis=1, keepdims=True)
            heads.append(a @ v[:, sl])
        att = np.concatenate(heads, axis=1) @ p["Wo"] + p["bo"]
        h1 = ref_layernorm(x + att, p["ln1_g"], p["ln1_b"])
        f = np.maximum(h1 @ p["W1"] + p["b1"], 0) @ p["W2"] + p["b2"]
        out[r] = ref_layernorm(h1 + f, p["ln2_g"], p["ln2_b"])
    return out


class TestTransformer:
    def test_single_token_is_ffn_path(self, rng):
        cfg = BlockConfig("transformer-encoder", d_in=4, token_dim=4, n_heads=2, dense_groups=1)
        blk = jitter(build(cfg, 0), rng)
        layer = blk.layers[0]
        x = rng.standard_normal((3, 4))
        tok = blk.tokens(x)
        assert tok.shape[1] == 1
        np.testing.assert_allclose(layer.attention_weights(tok), 1.0)
        p = layer.params
        t = tok[:, 0, :]
        h1 = ref_layernorm(t + (t @ p["Wv"] + p["bv"]) @ p["Wo"] + p["bo"], p["ln1_g"], p["ln1_b"])
        f = np.maximum(h1 @ p["W1"] + p["b1"], 0) @ p["W2"] + p["b2"]
        np.testing.assert_allclose(blk.forward(x), ref_layernorm(h1 + f, p["ln2_g"], p["ln2_b"]), atol=1e-12)

    def test_attention_rows_sum_to_one(self, rng):
        cfg = BlockConfig("transformer-encoder", d_in=6, token_dim=4, n_heads=2,
                          token_layout={"sparse": [2, 2, 2]})
        blk = jitter(build(cfg, 0), rng)
        a = blk.layers[0].attention_weights(blk.tokens(rng.standard_normal((5, 6))))
        assert np.abs(a.sum(axis=-1) - 1).max() < 1e-12

    def test_matches_reference_encoder(self, rng):
        layout = {"dense": 6, "sparse": [3, 3]}
        cfg = BlockConfig("transformer-encoder", d_in=12, token_dim=8, n_heads=2, n_layers=2, dense_groups=2,
                          token_layout=layout)
        blk = jitter(build(cfg, 0), rng)
        x = rng.standard_normal((4, 12))
        h = blk.tokens(x)
        for layer in blk.layers:
            h = ref_encoder_layer(layer.params, h, 2)
        np.testing.assert_allclose(blk.forward(x), h.reshape(4, -1), atol=1e-8)


# ---------------------------------------------------------------- composition


class TestCompose:
    def test_stack_of_four_crosses_threads_x0(self, rng):
        cfg = resolve(BlockConfig("stack", children=[BlockConfig("cross-full")] * 4), 5)
        blk = jitter(build(cfg, 0), rng)
        x = rng.standard_normal((3, 5))
        h = x
        for child in blk.blocks:
            W, b = child.params["W"], child.params["b"]
            h = x * (h @ W + b) + h
        np.testing.assert_allclose(blk.forward(x), h, atol=1e-12)

    def test_parallel_single_child(self, rng):
        child = BlockConfig("gated-cross")
        par = jitter(build(resolve(BlockConfig("parallel-concat", children=[child]), 4), 0), rng)
        solo = build(resolve(child, 4), 1)
        for k, v in par.blocks[0].params.items():
            solo.params[k][...] = v
        x = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(par.forward(x), solo.forward(x))

    def test_dhen_two_stage(self, rng):
        cfg = resolve(
            BlockConfig("dhen", children=[[BlockConfig("cross-full")], [BlockConfig("masknet-parallel", d_out=3)]],
                        layer_widths=[5, 4]),
            6,
        )
        blk = jitter(build(cfg, 0), rng)
        x = rng.standard_normal((3, 6))
        out = blk.forward(x)
        assert out.shape == (3, 4) and output_dim(cfg) == 4
        cross = blk.layers[0][0][0]
        h = x * (x @ cross.params["W"] + cross.params["b"]) + x
        h = h @ blk.params["P0"] + blk.params["p0"]
        mb = blk.layers[1][0][0].blocks[0]
        h = staged_maskblock(mb.params, h, x) @ blk.params["P1"] + blk.params["p1"]
        np.testing.assert_allclose(out, h, atol=1e-10)

    def test_stack_dim_mismatch(self):
        cfg = BlockConfig("stack", d_in=4, children=[BlockConfig("cross-full", d_in=4), BlockConfig("cross-full", d_in=5)])
        with pytest.raises(ConfigError, match="children\\[1\\]"):
            build(cfg, 0)


# ---------------------------------------------------------------- backward contracts


GRAD_CONFIGS = {
    "mlp-linear": BlockConfig("mlp", hidden_sizes=[3], d_out=2, activation="none"),
    "cross-full": BlockConfig("cross-full"),
    "maskblock": BlockConfig("maskblock", d_out=5),
    "transformer": BlockConfig("transformer-encoder", token_dim=4, n_heads=2, dense_groups=2),
}


@pytest.mark.parametrize("name", list(GRAD_CONFIGS))
def test_zero_upstream_gives_zero_param_grads(name, rng):
    blk = jitter(build(resolve(GRAD_CONFIGS[name], 6), 0), rng)
    out = blk.forward(rng.standard_normal((3, 6)))
    blk.zero_grad()
    blk.backward(np.zeros_like(out))
    assert all(np.all(g == 0) for _, _, g in blk.named_parameters())


def test_linear_path_is_exact(rng):
    blk = jitter(build(resolve(GRAD_CONFIGS["mlp-linear"], 4), 0), rng)
    assert grad_check(blk, rng.standard_normal((3, 4))) < 1e-7


@pytest.mark.parametrize("name", list(GRAD_CONFIGS))
def test_backward_before_forward(name):
    blk = build(resolve(GRAD_CONFIGS[name], 6), 0)
    with pytest.raises(UsageError):
        blk.backward(np.ones((1, output_dim(blk.config))))


def test_inference_mode_caches_nothing(rng):
    blk = build(resolve(BlockConfig("stack", children=[BlockConfig("cross-full")] * 2), 4), 0)
    blk.train(False)
    blk.forward(rng.standard_normal((2, 4)))
    assert list(blk.saved_arrays()) == []


# ---------------------------------------------------------------- config and counts


class TestParamCount:
    def test_cross_full_d4(self):
        cfg = BlockConfig("cross-full", d_in=4)
        assert param_count(cfg) == 20 == build(cfg, 0).num_params()

    def test_gated_cross_d4(self):
        cfg = BlockConfig("gated-cross", d_in=4)
        assert param_count(cfg) == 36 == build(cfg, 0).num_params()
        assert 36 / 20 == pytest.approx(1.8)

    def test_lowrank_d4_r2(self):
        cfg = BlockConfig("cross-lowrank", d_in=4, rank=2)
        assert param_count(cfg) == 20 == build(cfg, 0).num_params()

    def test_stubs_count_but_do_not_build(self):
        cfg = BlockConfig("sdcnv3", d_in=8, n_layers=2, n_blocks=2)
        assert param_count(cfg) > 0
        with pytest.raises(ConfigError, match="stub"):
            build(cfg, 0)
        dl = BlockConfig("deeplight", d_in=8, d_out=4, hidden_sizes=[16])
        assert param_count(dl) == 64 + 8 * 16 + 16 + 16 * 4 + 4


class TestBlockConfig:
    def test_json_round_trip(self):
        cfg = BlockConfig("dhen", children=[[BlockConfig("cross-full"), BlockConfig("mlp", d_out=3)]],
                          layer_widths=[4])
        again = BlockConfig.from_dict(cfg.to_dict())
        assert again == cfg and again.to_json() == cfg.to_json()

    def test_all_problems_listed(self):
        cfg = BlockConfig("cross-lowrank", d_in=4, rank=9, activation="tanh", projection_ratio=-1)
        errs = cfg.problems()
        assert len(errs) == 3
        assert any("rank" in e for e in errs) and any("activation" in e for e in errs)

    def test_unknown_variant(self):
        with pytest.raises(ConfigError, match="unknown variant"):
            build(BlockConfig("xdeepfm", d_in=3), 0)

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="unknown"):
            BlockConfig.from_dict({"variant": "mlp", "widht": 3})

    def test_dhen_needs_nonempty_layers(self):
        assert BlockConfig("dhen", d_in=3, children=[[]], layer_widths=[2]).problems()

    def test_every_variant_tag_known(self):
        assert set(VARIANTS) >= {
            "mlp", "cross-full", "cross-lowrank", "gated-cross", "maskblock", "masknet-serial",
            "masknet-parallel", "finalmlp-fusion", "transformer-encoder", "stack", "parallel-concat", "dhen",
        }


def test_build_is_deterministic():
    cfg = resolve(BlockConfig("masknet-parallel", n_blocks=2, d_out=3), 5)
    a, b = build(cfg, 7), build(cfg, 7)
    for (_, p, _), (_, q, _) in zip(a.named_parameters(), b.named_parameters()):
        assert p.tobytes() == q.tobytes()


def test_float32_build():
    blk = build(resolve(BlockConfig("cross-full"), 3), 0, dtype=np.float32)
    assert blk.forward(np.ones((2, 3), dtype=np.float32)).dtype == np.float32


