"""Regional aggregation, asymmetric loss, global branch, and fusion."""

import numpy as np
import pytest

import sspa.autodiff as ad
from sspa.aggregation import (
    LossConfig,
    asymmetric_loss,
    average_aggregate,
    fuse,
    global_predict,
    hard_aggregate,
    regional_logits,
    soft_aggregate,
    total_loss,
)
from sspa.gradcheck import check_against_fd
from tests_helpers import asymmetric_loss_oracle, soft_aggregate_oracle


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class TestRegionalLogits:
    def test_orthogonal_rows_give_zero(self):
        x = np.array([[1.0, 0.0, 0.0, 0.0]])
        t = np.array([[0.0, 1.0, 0.0, 0.0]])
        assert regional_logits(x, t).data[0, 0] == 0.0

    def test_aligned_unit_rows_give_one(self):
        e1 = np.array([[1.0, 0.0, 0.0]])
        assert regional_logits(e1, e1).data[0, 0] == 1.0

    def test_matches_sum_of_products(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 4))
        t = rng.standard_normal((2, 4))
        out = regional_logits(x, t).data
        for i in range(3):
            for j in range(2):
                acc = 0.0
                for k in range(4):
                    acc += x[i, k] * t[j, k]
                assert abs(out[i, j] - acc) < 1e-12


class TestSoftAggregate:
    def test_single_patch(self):
        p_r = np.array([[0.7, -1.2]])
        probs, gamma = soft_aggregate(p_r, 1.0)
        np.testing.assert_allclose(probs.data, sigmoid(p_r[0]), atol=1e-12)
        np.testing.assert_allclose(gamma.data, np.ones((1, 2)), atol=0)

    def test_constant_column_is_uniform(self):
        p_r = np.full((5, 1), 0.3)
        probs, gamma = soft_aggregate(p_r, 2.0)
        np.testing.assert_allclose(gamma.data, np.full((5, 1), 0.2), atol=1e-12)
        np.testing.assert_allclose(probs.data, [sigmoid(0.3)], atol=1e-12)

    def test_low_temperature_approaches_hard(self):
        rng = np.random.default_rng(1)
        p_r = rng.standard_normal((6, 4))  # seed gives clearly unique column maxima
        probs, _ = soft_aggregate(p_r, 1e-3)
        hard = hard_aggregate(p_r)
        np.testing.assert_allclose(probs.data, hard.data, atol=1e-6)

    def test_high_temperature_approaches_average(self):
        rng = np.random.default_rng(2)
        p_r = rng.standard_normal((6, 4))
        probs, _ = soft_aggregate(p_r, 1e6)
        avg = average_aggregate(p_r)
        np.testing.assert_allclose(probs.data, avg.data, atol=1e-6)

    def test_gamma_columns_sum_to_one(self):
        rng = np.random.default_rng(3)
        for tau in (1e-3, 0.1, 1.0, 17.0, 1e6):
            p_r = rng.standard_normal((7, 5)) * 3
            _, gamma = soft_aggregate(p_r, tau)
            np.testing.assert_allclose(gamma.data.sum(axis=0), 1.0, atol=1e-9)

    def test_weighted_sum_between_mean_and_max(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            p_r = rng.standard_normal((6, 3)) * 2
            _, gamma = soft_aggregate(p_r, float(rng.uniform(0.05, 5.0)))
            weighted = (gamma.data * p_r).sum(axis=0)
            assert (weighted >= p_r.mean(axis=0) - 1e-12).all()
            assert (weighted <= p_r.max(axis=0) + 1e-12).all()

    def test_matches_oracle(self):
        rng = np.random.default_rng(5)
        p_r = rng.standard_normal((4, 3))
        probs, gamma = soft_aggregate(p_r, 0.7)
        ref_probs, ref_gamma = soft_aggregate_oracle(p_r, 0.7)
        np.testing.assert_allclose(probs.data, ref_probs, atol=1e-12)
        np.testing.assert_allclose(gamma.data, ref_gamma, atol=1e-12)

    def test_bad_temperature(self):
        with pytest.raises(ValueError):
            soft_aggregate(np.ones((2, 2)), 0.0)


class TestHardAverage:
    def test_hard_takes_max(self):
        col = np.array([[1.0], [3.0], [2.0]])
        np.testing.assert_allclose(hard_aggregate(col).data, [sigmoid(3.0)], atol=1e-12)

    def test_average_takes_mean(self):
        col = np.array([[1.0], [3.0], [2.0]])
        np.testing.assert_allclose(average_aggregate(col).data, [sigmoid(2.0)], atol=1e-12)


class TestAsymmetricLoss:
    def test_positive_half_probability_is_log_two(self):
        loss = asymmetric_loss(np.array([0.5]), np.array([1.0]), LossConfig(gamma_pos=0.0))
        assert abs(float(loss.data) - 0.6931) < 1e-4

    def test_confident_negative_vanishes(self):
        cfg = LossConfig()
        loss = asymmetric_loss(np.array([1e-6]), np.array([0.0]), cfg)
        assert float(loss.data) < 1e-11

    def test_matches_per_term_oracle(self):
        rng = np.random.default_rng(6)
        p = rng.uniform(0.05, 0.95, size=4)
        y = np.array([1.0, 0.0, 1.0, 0.0])
        cfg = LossConfig(gamma_pos=0.5, gamma_neg=2.0)
        loss = asymmetric_loss(p, y, cfg)
        ref = asymmetric_loss_oracle(p, y, 0.5, 2.0)
        assert abs(float(loss.data) - ref) < 1e-12

    def test_equals_bce_when_unfocused(self):
        rng = np.random.default_rng(7)
        cfg = LossConfig(gamma_pos=0.0, gamma_neg=0.0)
        for _ in range(1000):
            c = int(rng.integers(1, 6))
            p = rng.uniform(1e-4, 1 - 1e-4, size=c)
            y = (rng.random(c) < 0.5).astype(np.float64)
            loss = float(asymmetric_loss(p, y, cfg).data)
            bce = float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
            assert abs(loss - bce) < 1e-10

    def test_nonnegative(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            p = rng.uniform(0, 1, size=5)
            y = (rng.random(5) < 0.5).astype(np.float64)
            cfg = LossConfig(gamma_pos=float(rng.uniform(0, 3)), gamma_neg=float(rng.uniform(0, 4)))
            assert float(asymmetric_loss(p, y, cfg).data) >= 0.0

    def test_rejects_soft_labels(self):
        with pytest.raises(ValueError):
            asymmetric_loss(np.array([0.5]), np.array([0.3]), LossConfig())

    def test_default_config_values(self):
        cfg = LossConfig()
        assert cfg.gamma_pos == 0.0
        assert cfg.gamma_neg == 2.0
        assert cfg.lam == 1.0


class TestGlobalPredict:
    def test_orthogonal_gives_half(self):
        x0 = np.array([1.0, 0.0, 0.0])
        t_g = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(global_predict(x0, t_g).data, [0.5, 0.5], atol=0)

    def test_aligned_saturates(self):
        x0 = np.array([100.0, 0.0])
        t_g = np.array([[1.0, 0.0]])
        assert global_predict(x0, t_g).data[0] > 1 - 1e-12

    def test_matches_dot_oracle(self):
        rng = np.random.default_rng(9)
        x0 = rng.standard_normal(4)
        t_g = rng.standard_normal((3, 4))
        np.testing.assert_allclose(global_predict(x0, t_g).data, sigmoid(t_g @ x0), atol=1e-12)


class TestTotalLoss:
    def test_lambda_zero_is_global_only(self):
        rng = np.random.default_rng(10)
        p_g = rng.uniform(0.1, 0.9, 4)
        p_r = rng.uniform(0.1, 0.9, 4)
        y = np.array([1.0, 0.0, 0.0, 1.0])
        cfg = LossConfig(lam=0.0)
        total = total_loss(ad.constant(p_g), ad.constant(p_r), y, cfg)
        alone = asymmetric_loss(p_g, y, cfg)
        assert abs(float(total.data) - float(alone.data)) < 1e-15

    def test_equal_branches_double(self):
        rng = np.random.default_rng(11)
        p = rng.uniform(0.1, 0.9, 4)
        y = np.array([0.0, 1.0, 1.0, 0.0])
        cfg = LossConfig(lam=1.0)
        total = total_loss(ad.constant(p), ad.constant(p), y, cfg)
        single = asymmetric_loss(p, y, cfg)
        np.testing.assert_allclose(float(total.data), 2 * float(single.data), atol=1e-14)

    def test_sum_with_default_lambda(self):
        rng = np.random.default_rng(12)
        p_g = rng.uniform(0.1, 0.9, 4)
        p_r = rng.uniform(0.1, 0.9, 4)
        y = (rng.random(4) < 0.5).astype(np.float64)
        cfg = LossConfig()
        total = float(total_loss(ad.constant(p_g), ad.constant(p_r), y, cfg).data)
        ref = asymmetric_loss_oracle(p_g, y, 0.0, 2.0) + asymmetric_loss_oracle(p_r, y, 0.0, 2.0)
        assert abs(total - ref) < 1e-12

    def test_fusion_average(self):
        p_g = np.array([0.2, 0.8])
        p_r = np.array([0.6, 0.4])
        np.testing.assert_array_equal(fuse(p_g, p_r), (p_g + p_r) / 2.0)


class TestAggregationGradients:
    def test_temperature_gradient(self):
        rng = np.random.default_rng(13)
        p_r = rng.standard_normal((5, 3)) * 2
        y = np.array([1.0, 0.0, 1.0])
        arrays = {"log_tau": np.array(0.3)}

        def build(p):
            probs, _ = soft_aggregate(p_r, ad.exp(p["log_tau"]))
            return asymmetric_loss(probs, y, LossConfig())

        assert check_against_fd(build, arrays) < 1e-4

    def test_logits_gradient_through_all_aggregators(self):
        rng = np.random.default_rng(14)
        y = np.array([1.0, 0.0, 1.0])
        for agg in ("soft", "hard", "average"):
            arrays = {"p_r": rng.standard_normal((5, 3)) * 2}

            def build(p, _agg=agg):
                if _agg == "soft":
                    probs, _ = soft_aggregate(p["p_r"], 0.7)
                elif _agg == "hard":
                    probs = hard_aggregate(p["p_r"])
                else:
                    probs = average_aggregate(p["p_r"])
                return asymmetric_loss(probs, y, LossConfig())

            assert check_against_fd(build, arrays) < 1e-4
