"""Compiled kernels versus the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--rows N] [--dim D] [--reps R]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from interbench.kernels import _pykernels

try:
    from interbench.kernels import _ckernels
except ImportError:
    _ckernels = None


def cases(rows: int, dim: int, rng: np.random.Generator):
    x0, z, xl, g = (rng.standard_normal((rows, dim)) for _ in range(4))
    b = rng.standard_normal(dim)
    gamma, beta = rng.standard_normal(dim), rng.standard_normal(dim)
    _, xhat, rstd = _pykernels.layernorm_forward(x0, gamma, beta, 1e-5)
    s = rng.standard_normal((rows * 4, 13))
    sess = 25
    n_sc = (rows // sess) * sess
    scores = rng.standard_normal(n_sc)
    labels = (rng.random(n_sc) < 0.1).astype(np.int64)
    offsets = np.arange(0, n_sc + 1, sess, dtype=np.int64)
    return {
        "cross_combine": ((x0, z, b, xl), {}),
        "cross_combine_backward": ((g, x0, z, b), {}),
        "layernorm_forward": ((x0, gamma, beta, 1e-5), {}),
        "layernorm_backward": ((g, xhat, rstd, gamma), {}),
        "softmax_rows": ((s,), {}),
        "session_topk_hits": ((scores, labels, offsets, 3), {}),
        "auc_rank_sum": ((scores, labels), {}),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4096)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--reps", type=int, default=50)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"rows={args.rows} dim={args.dim} reps={args.reps}")
    print(f"{'kernel':<24}{'numpy us':>12}{'cython us':>12}{'speedup':>10}")
    for name, (a, kw) in cases(args.rows, args.dim, rng).items():
        py = getattr(_pykernels, name)
        t_py = min(timeit.repeat(lambda: py(*a, **kw), number=1, repeat=args.reps)) * 1e6
        if _ckernels is None:
            print(f"{name:<24}{t_py:>12.1f}{'n/a':>12}{'':>10}")
            continue
        cy = getattr(_ckernels, name)
        t_cy = min(timeit.repeat(lambda: cy(*a, **kw), number=1, repeat=args.reps)) * 1e6
        print(f"{name:<24}{t_py:>12.1f}{t_cy:>12.1f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
