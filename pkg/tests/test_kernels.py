import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interbench import kernels
from interbench.kernels import _pykernels

compiled = pytest.mark.skipif(not kernels.COMPILED, reason="compiled extension not built")


def _close(a, b, tol=1e-12):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    assert len(a) == len(b)
    for x, y in zip(a, b):
        np.testing.assert_allclose(np.asarray(x), np.asarray(y), rtol=tol, atol=tol)


@compiled
class TestParity:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 33), st.integers(0, 2**31 - 1))
    def test_elementwise_and_norm_kernels(self, n, d, seed):
        rng = np.random.default_rng(seed)
        x0, z, xl, g = (rng.standard_normal((n, d)) for _ in range(4))
        b, gamma, beta = (rng.standard_normal(d) for _ in range(3))
        c = kernels._ckernels
        _close(c.cross_combine(x0, z, b, xl), _pykernels.cross_combine(x0, z, b, xl))
        _close(c.cross_combine_backward(g, x0, z, b), _pykernels.cross_combine_backward(g, x0, z, b))
        fwd_c = c.layernorm_forward(x0, gamma, beta, 1e-5)
        fwd_p = _pykernels.layernorm_forward(x0, gamma, beta, 1e-5)
        _close(fwd_c, fwd_p, 1e-10)
        _close(c.layernorm_backward(g, fwd_p[1], fwd_p[2], gamma),
               _pykernels.layernorm_backward(g, fwd_p[1], fwd_p[2], gamma), 1e-10)
        _close(c.softmax_rows(50 * z), _pykernels.softmax_rows(50 * z))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 5))
    def test_ranking_kernels(self, seed, k):
        rng = np.random.default_rng(seed)
        sizes = rng.integers(k, 20, size=30)
        off = np.r_[0, np.cumsum(sizes)].astype(np.int64)
        scores = rng.integers(0, 4, size=off[-1]).astype(np.float64)
        labels = (rng.random(off[-1]) < 0.3).astype(np.int64)
        labels[0], labels[1] = 1, 0
        np.testing.assert_array_equal(kernels._ckernels.session_topk_hits(scores, labels, off, k),
                                      _pykernels.session_topk_hits(scores, labels, off, k))
        assert kernels._ckernels.auc_rank_sum(scores, labels) == pytest.approx(
            _pykernels.auc_rank_sum(scores, labels), abs=1e-12)


def test_non_contiguous_inputs_route_to_fallback(rng):
    x = rng.standard_normal((6, 8))[:, ::2]
    z = rng.standard_normal((6, 4))
    b = np.zeros(4)
    np.testing.assert_array_equal(kernels.cross_combine(x, z, b, z), x * z + z)
    f32 = x.astype(np.float32)
    assert kernels.cross_combine(f32, f32, b.astype(np.float32), f32).dtype == np.float32


def test_forced_fallback():
    env = dict(os.environ, INTERBENCH_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from interbench import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
