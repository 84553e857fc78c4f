import dataclasses
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interbench.errors import ConfigError, UsageError
from interbench.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    apply_baseline,
    auc,
    hit_at_k,
    measure_latency,
    measure_memory,
    peak_stats,
    reproducibility,
    run_experiment,
    run_sweep,
)
from interbench.model import RankingModel, RunConfig
from interbench.presets import PRESETS


def brute_hits(scores, labels, offsets, k):
    """Recount with Python sorting; ties resolved by row order."""
    out = []
    for lo, hi in zip(offsets[:-1], offsets[1:]):
        rows = sorted(range(lo, hi), key=lambda i: (-scores[i], i))
        if sum(labels[lo:hi]) > 0:
            out.append(sum(labels[i] for i in rows[:k]))
    return sum(out) / len(out) if out else 0.0


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


class TestHitAtK:
    def test_two_saves_on_top(self):
        scores = np.array([0.9, 0.1, 0.8, 0.2, 0.3])
        labels = np.array([1, 0, 1, 0, 0])
        assert hit_at_k(scores, labels, [0, 5]) == 2.0

    def test_all_equal_scores_take_first_rows(self):
        labels = np.array([0, 0, 0, 1, 1, 1, 0, 0])
        assert hit_at_k(np.zeros(8), labels, [0, 8]) == 0.0
        assert hit_at_k(np.zeros(8), labels[::-1].copy(), [0, 8]) == 1.0

    def test_sessions_without_saves_skipped(self):
        scores = np.arange(8.0)
        labels = np.array([0, 0, 0, 0, 0, 1, 0, 1])
        assert hit_at_k(scores, labels, [0, 4, 8]) == 2.0

    def test_modes(self):
        scores = np.array([5.0, 4, 3, 2, 1, 5, 4, 3, 2, 1])
        labels = np.array([1, 0, 0, 1, 1, 1, 1, 0, 0, 0])
        off = [0, 5, 10]
        assert hit_at_k(scores, labels, off, mode="per-session") == pytest.approx(1.5)
        assert hit_at_k(scores, labels, off, mode="global-ratio") == pytest.approx(3 / 5)
        assert hit_at_k(scores, labels, off, mode="capped") == pytest.approx((1 / 3 + 1.0) / 2)
        with pytest.raises(ConfigError):
            hit_at_k(scores, labels, off, mode="other")

    def test_random_sessions_match_recount(self, rng):
        sizes = rng.integers(3, 30, size=200)
        off = np.r_[0, np.cumsum(sizes)]
        n = off[-1]
        scores = rng.integers(0, 6, size=n).astype(float)  # plenty of ties
        labels = (rng.random(n) < 0.15).astype(int)
        assert hit_at_k(scores, labels, off) == brute_hits(scores, labels, off, 3)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        off = np.arange(0, 101, 10)
        scores = rng.standard_normal(100)
        labels = (rng.random(100) < 0.3).astype(int)
        base = hit_at_k(scores, labels, off)
        assert hit_at_k(np.exp(2 * scores) + 7, labels, off) == base
        assert hit_at_k(np.arctan(scores), labels, off) == base

    def test_errors(self):
        with pytest.raises(UsageError):
            hit_at_k(np.zeros(0), np.zeros(0), [0])
        with pytest.raises(UsageError):
            hit_at_k(np.zeros(5), np.zeros(5), [0, 2, 5])
        with pytest.raises(UsageError):
            hit_at_k(np.zeros(6), np.zeros(6), [0, 4])


class TestAuc:
    def test_perfect(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_ties_half(self):
        assert auc([0.5, 0.5], [0, 1]) == 0.5

    def test_null_scores(self, rng):
        n = 10_000
        y = (rng.random(n) < 0.5).astype(int)
        n1 = y.sum()
        sigma = np.sqrt((n1 * (n - n1) * (n + 1)) / 12) / (n1 * (n - n1))
        assert abs(auc(rng.random(n), y) - 0.5) < 3 * sigma

    def test_pairwise_oracle(self, rng):
        scores = np.round(rng.standard_normal(1000), 1)
        y = (rng.random(1000) < 0.3).astype(int)
        assert auc(scores, y) == pytest.approx(brute_auc(scores, y), abs=1e-12)

    def test_monotone_invariant(self, rng):
        scores = rng.standard_normal(500)
        y = (rng.random(500) < 0.4).astype(int)
        assert auc(scores, y) == auc(1 / (1 + np.exp(-3 * scores)), y)

    def test_single_class(self):
        with pytest.raises(UsageError):
            auc([0.1, 0.2], [1, 1])


def _exp(name="baseline-dcnv2x4", steps=20, **kw):
    return ExperimentConfig(name, PRESETS[name].model_config(), RunConfig(steps=steps, batch_size=64, seed=0),
                            latency_batch=64, **kw)


class TestLatency:
    def test_reps_floor(self, small_dataset):
        m = RankingModel(PRESETS["linear"].model_config(), 0)
        with pytest.raises(ConfigError):
            measure_latency(m, [small_dataset.batch(np.arange(8))], warmup=10, reps=99)

    def test_self_consistency_and_no_caching(self, small_dataset):
        m = RankingModel(PRESETS["baseline-dcnv2x4"].model_config(), 0)
        batches = [small_dataset.batch(np.arange(i * 64, (i + 1) * 64)) for i in range(4)]
        a, p99a = measure_latency(m, batches, 10, 500)
        b, _ = measure_latency(m, batches, 10, 500)
        assert 0 < a <= p99a
        assert abs(a - b) / min(a, b) < 0.10
        assert not list(m.saved_arrays()) and m.training

    def test_identity_faster_than_cross(self, small_dataset):
        batches = [small_dataset.batch(np.arange(512))]
        lin = RankingModel(PRESETS["linear"].model_config(), 0)
        cross = RankingModel(PRESETS["baseline-dcnv2x4"].model_config(), 0)
        assert measure_latency(lin, batches, 10, 100)[0] < measure_latency(cross, batches, 10, 100)[0]


class TestMemory:
    def test_budget_twice_peak_is_fifty(self, small_dataset):
        cfg = PRESETS["baseline-dcnv2x4"].model_config()
        b = small_dataset.batch(np.arange(128))
        peak = peak_stats(cfg, b).peak_bytes
        assert measure_memory(cfg, b, 2 * peak) == 50.0
        assert measure_memory(cfg, b, 4 * peak) == 25.0
        with pytest.raises(ConfigError):
            measure_memory(cfg, b, None)

    def test_batch_doubling_grows_peak(self, small_dataset):
        for name in ("baseline-dcnv2x4", "masknet-parallel-2", "transformer-h2-d64-l1"):
            cfg = PRESETS[name].model_config()
            small = peak_stats(cfg, small_dataset.batch(np.arange(100))).peak_bytes
            big = peak_stats(cfg, small_dataset.batch(np.arange(200))).peak_bytes
            assert big > small

    def test_baseline_closed_form(self, small_dataset):
        # Independent accounting from layer dimensions (f64, Adam).
        n, d, depth, K = 256, 64, 4, 2
        sparse = [(100, 8), (50, 8), (20, 8), (10, 8)]
        head = [2 * d, 128, 64, K]
        params = (
            sum(c * e for c, e in sparse) + (32 * 8 + 8) + (16 * 8 + 8)
            + depth * (d * d + d)
            + sum(a * b + b for a, b in zip(head[:-1], head[1:]))
        )
        persistent = 8 * params * 4  # weights, grads, two moment buffers
        per_row = (
            len(sparse) * (8 + 8 * 8 + 8)  # ids, unit vectors, norms
            + (32 + 8 + 1) * 8  # raw embedding feature, unit vector, norm
            + (16 + 8 + 1) * 8  # raw sequence feature, unit vector, norm
            + 2 * depth * d * 8  # layer inputs (first one is x0) and pre-gate products
            + sum(head[:-1]) * 8  # head layer inputs
            + K * 8  # probabilities
        )
        expect = persistent + n * per_row
        cfg = PRESETS["baseline-dcnv2x4"].model_config()
        got = peak_stats(cfg, small_dataset.batch(np.arange(n))).peak_bytes
        assert abs(got - expect) <= 0.01 * expect


class TestExperiments:
    def test_self_baseline_zero_deltas(self, small_dataset):
        rep = run_experiment(_exp(baseline="self", budget_bytes=10**8), small_dataset)
        assert rep.hit3_rel_gain == 0.0 and rep.latency_rel == 0.0
        assert rep.baseline == "self"
        assert rep.hit3_save >= 0 and rep.peak_memory_pct >= 0 and rep.latency_median_us > 0
        assert tuple(dataclasses.asdict(rep)) == CSV_COLUMNS

    def test_cross_host_latency_delta_omitted(self, small_dataset):
        rep = run_experiment(_exp(), small_dataset)
        other = dataclasses.replace(rep, host="elsewhere", name="b")
        with pytest.warns(UserWarning, match="another host"):
            apply_baseline(rep, other)
        assert rep.hit3_rel_gain == 0.0 and rep.latency_rel is None

    def test_diverged_row_has_no_metrics(self, small_dataset):
        rep = run_experiment(_exp("stability-probe", steps=50), small_dataset)
        assert rep.diverged and rep.restarts == 3 and rep.nan_events == 4
        assert rep.hit3_save is None and rep.auc is None and rep.latency_median_us is None

    def test_sweep_matches_sequential(self, small_dataset):
        exps = [_exp("stack-d5"), _exp("linear")]
        reps, base = run_sweep(exps, small_dataset, baseline=_exp(), workers=2)
        assert base.name == "baseline-dcnv2x4"
        assert [r.baseline for r in reps] == ["baseline-dcnv2x4"] * 2
        solo = run_experiment(exps[0], small_dataset)
        assert reps[0].hit3_save == solo.hit3_save and reps[0].final_train_loss == solo.final_train_loss

    def test_invalid_config_listed(self, small_dataset):
        bad = dataclasses.replace(_exp(), hit_mode="nope", budget_bytes=-1)
        with pytest.raises(ConfigError) as exc:
            run_experiment(bad, small_dataset)
        assert "hit_mode" in str(exc.value) and "budget_bytes" in str(exc.value)


class TestReproducibility:
    def test_identical_seed_zero_std(self, small_dataset):
        rep = reproducibility(_exp(), small_dataset, [2, 2, 2])
        assert rep.std_dev == 0.0 and len(set(rep.per_seed_hit3)) == 1

    def test_population_std(self, small_dataset):
        rep = reproducibility(_exp(), small_dataset, [0, 1, 2])
        assert rep.std_dev == pytest.approx(float(np.std(rep.per_seed_hit3)), abs=1e-15)

    def test_needs_three_seeds(self, small_dataset):
        with pytest.raises(ConfigError):
            reproducibility(_exp(), small_dataset, [0, 1])

    def test_diverged_seeds_excluded(self, small_dataset):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rep = reproducibility(_exp("stability-probe"), small_dataset, [0, 1, 2], baseline_std=0.01)
        assert rep.excluded_seeds == [0, 1, 2] and rep.std_dev is None and rep.flagged
        assert len([w for w in caught if "diverged" in str(w.message)]) == 3

    def test_flag_rule(self, small_dataset):
        rep = reproducibility(_exp(), small_dataset, [0, 1, 2], baseline_std=0.0)
        assert rep.flagged == (rep.std_dev > 0)
        rep = reproducibility(_exp(), small_dataset, [0, 1, 2], baseline_std=1e9)
        assert not rep.flagged
