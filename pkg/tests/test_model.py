"""Tests for model averaging and prediction."""

import numpy as np
import pytest

from pfbp.model import CombinedModel, accuracy_curve, combine_models, predict


class TestCombineModels:
    def test_identical_vectors_are_fixed_point(self):
        beta = np.array([0.3, -1.2, 0.7])
        model = combine_models([beta, beta, beta], feature_ids=(4, 9))
        np.testing.assert_allclose(model.beta_hat, beta, rtol=1e-15)
        assert model.n_local_models == 3

    def test_simple_average(self):
        model = combine_models([[0.0, 2.0], [2.0, 0.0]], feature_ids=(1,))
        np.testing.assert_array_equal(model.beta_hat, [1.0, 1.0])

    def test_matches_independent_mean(self):
        rng = np.random.default_rng(0)
        betas = [rng.normal(size=4) for _ in range(15)]
        model = combine_models(betas, feature_ids=(0, 1, 2))
        expected = sum(betas) / 15  # plain arithmetic oracle
        np.testing.assert_allclose(model.beta_hat, expected, rtol=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        betas = [rng.normal(size=3) for _ in range(7)]
        a = combine_models(betas, feature_ids=(0, 5))
        b = combine_models(betas[::-1], feature_ids=(0, 5))
        np.testing.assert_allclose(a.beta_hat, b.beta_hat, rtol=1e-12)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            combine_models([], feature_ids=())
        with pytest.raises(ValueError):
            combine_models([[1.0, 2.0], [1.0]], feature_ids=(3,))
        with pytest.raises(ValueError):
            combine_models([[1.0, 2.0, 3.0]], feature_ids=(3,))
        with pytest.raises(ValueError):
            CombinedModel(feature_ids=(1,), beta_hat=np.array([np.inf, 0.0]),
                          n_local_models=1)


class TestPredict:
    def test_zero_coefficients_give_half(self):
        model = CombinedModel(feature_ids=(0,), beta_hat=np.zeros(2),
                              n_local_models=1)
        probs = predict(model, np.array([[5.0], [-3.0]]))
        np.testing.assert_array_equal(probs, [0.5, 0.5])

    def test_huge_logits_stay_inside_unit_interval(self):
        model = CombinedModel(feature_ids=(0,), beta_hat=np.array([0.0, 30.0]),
                              n_local_models=1)
        probs = predict(model, np.array([[1e4], [-1e4]]))
        assert 0.0 < probs[0] < 1.0 and 0.0 < probs[1] < 1.0
        assert probs[0] > 0.999 and probs[1] < 0.001

    def test_matches_hand_computation(self):
        model = CombinedModel(feature_ids=(1,), beta_hat=np.array([0.5, -2.0]),
                              n_local_models=1)
        rows = np.array([[9.9, x] for x in (-1.0, 0.0, 0.25, 1.0, 2.0)])
        got = predict(model, rows)
        expected = 1.0 / (1.0 + np.exp(-(0.5 - 2.0 * rows[:, 1])))
        np.testing.assert_allclose(got, expected, rtol=1e-12)

    def test_missing_columns_rejected(self):
        model = CombinedModel(feature_ids=(3,), beta_hat=np.zeros(2),
                              n_local_models=1)
        with pytest.raises(ValueError):
            predict(model, np.ones((2, 2)))


class TestAccuracyCurve:
    def test_intercept_only_matches_majority_rate(self):
        rng = np.random.default_rng(2)
        target = (rng.random(400) < 0.5).astype(int)
        values = rng.normal(size=(400, 2))
        model = CombinedModel(feature_ids=(), beta_hat=np.array([2.0]),
                              n_local_models=1)
        acc = accuracy_curve(values, target, [model])
        assert acc[0] == pytest.approx(target.mean(), abs=1e-12)

    def test_curve_length_matches_models(self):
        rng = np.random.default_rng(3)
        target = np.array([0, 1] * 20)
        values = rng.normal(size=(40, 2))
        models = [
            CombinedModel(feature_ids=(0,), beta_hat=np.array([0.0, s]),
                          n_local_models=1)
            for s in (0.0, 1.0, -1.0)
        ]
        assert len(accuracy_curve(values, target, models)) == 3

    def test_degenerate_holdout_rejected(self):
        model = CombinedModel(feature_ids=(), beta_hat=np.zeros(1),
                              n_local_models=1)
        with pytest.raises(ValueError):
            accuracy_curve(np.ones((0, 1)), np.array([]), [model])
        with pytest.raises(ValueError):
            accuracy_curve(np.ones((3, 1)), np.array([1, 1, 1]), [model])
