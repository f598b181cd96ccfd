"""
Unit tests for histogram gradient-boosted trees.
"""
import numpy as np
import pytest

from predictors.configs import GbdtConfig
from predictors.gbdt import FeatureBins, GbdtModel, gbdt_fit, gbdt_predict
from shared.errors import InsufficientData, WidthMismatch


def exhaustive_split(x, grad, lam, min_leaf):
    """Best (gain, feature, threshold) by enumerating every observed value"""
    best = (-np.inf, -1, None)
    n, total = grad.size, grad.sum()
    for f in range(x.shape[1]):
        for t in np.unique(x[:, f])[:-1]:
            left = x[:, f] <= t
            n_l = left.sum()
            if n_l < min_leaf or n - n_l < min_leaf:
                continue
            g_l = grad[left].sum()
            g_r = total - g_l
            gain = g_l ** 2 / (n_l + lam) + g_r ** 2 / (n - n_l + lam) - total ** 2 / (n + lam)
            if gain > best[0]:
                best = (gain, f, t)
    return best


def reference_stumps(x, y, iterations, lr, lam, min_leaf):
    """Independent depth-1 boosting used as an oracle"""
    base = y.mean()
    pred = np.full(y.size, base)
    stumps = []
    for _ in range(iterations):
        grad = pred - y
        gain, f, t = exhaustive_split(x, grad, lam, min_leaf)
        if f < 0 or gain <= 1e-12:
            value = -grad.sum() / (y.size + lam)
            stumps.append((None, None, value, value))
            pred = pred + lr * value
            continue
        left = x[:, f] <= t
        v_l = -grad[left].sum() / (left.sum() + lam)
        v_r = -grad[~left].sum() / ((~left).sum() + lam)
        stumps.append((f, t, v_l, v_r))
        pred = pred + lr * np.where(left, v_l, v_r)

    def predict(z):
        out = np.full(z.shape[0], base)
        for f, t, v_l, v_r in stumps:
            out = out + lr * (v_l if f is None else np.where(z[:, f] <= t, v_l, v_r))
        return out

    return predict


class TestFeatureBins:
    """Tests for FeatureBins"""

    def test_few_unique_values_get_exact_edges(self):
        bins = FeatureBins.fit(np.array([[3.0], [1.0], [2.0], [1.0]]), 256)
        assert bins.edges[0].tolist() == [1.0, 2.0]
        assert bins.transform(np.array([[1.0], [1.5], [2.0], [9.0]])).ravel().tolist() == [0, 1, 1, 2]

    def test_many_values_capped(self):
        x = np.random.default_rng(0).normal(size=(2000, 1))
        assert FeatureBins.fit(x, 256).n_bins[0] <= 256

    def test_constant_feature_single_bin(self):
        assert FeatureBins.fit(np.ones((5, 1)), 256).n_bins.tolist() == [1]


class TestGbdtFit:
    """Tests for gbdt_fit"""

    def test_constant_target(self):
        x = np.random.default_rng(0).normal(size=(30, 3))
        model = gbdt_fit(x, np.full((30, 3), 0.4), GbdtConfig(iterations=5))
        assert np.allclose(gbdt_predict(model, x), 0.4)
        assert all(tree.n_leaves == 1 for tree in model.trees[0])

    def test_step_function_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(size=(80, 2))
        y = np.where(x[:, 1] > 0.37, 1.0, 0.0)[:, None]
        config = GbdtConfig(iterations=1, max_depth=1, max_leaf_nodes=2, min_samples_leaf=5, l2=0.05)
        tree = gbdt_fit(x, y, config).trees[0][0]
        _, feature, threshold = exhaustive_split(x, y.mean() - y[:, 0], 0.05, 5)
        assert tree.feature[0] == feature == 1
        assert tree.threshold[0] == threshold

    def test_training_mse_non_increasing(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(60, 4))
        y = np.sin(x[:, :1]) + 0.1 * rng.normal(size=(60, 1))
        config = GbdtConfig(iterations=30, learning_rate=0.2, max_depth=3, min_samples_leaf=3)
        full = gbdt_fit(x, y, config)
        errors = []
        for k in range(31):
            partial = GbdtModel(config, 4, full.base_score, [full.trees[0][:k]])
            errors.append(float(np.mean((gbdt_predict(partial, x) - y) ** 2)))
        assert all(b <= a + 1e-12 for a, b in zip(errors, errors[1:]))
        assert errors[-1] < errors[0]

    def test_matches_reference_reimplementation(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(size=(50, 3))
        y = x[:, 0] * 2 - x[:, 2] + 0.05 * rng.normal(size=50)
        config = GbdtConfig(iterations=15, learning_rate=0.1, max_depth=1, max_leaf_nodes=2,
                            min_samples_leaf=5, l2=0.05)
        model = gbdt_fit(x, y[:, None], config)
        reference = reference_stumps(x, y, 15, 0.1, 0.05, 5)
        probe = rng.uniform(size=(20, 3))
        assert np.allclose(gbdt_predict(model, probe)[:, 0], reference(probe), atol=1e-10)

    def test_leaf_and_depth_limits(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(200, 5))
        y = rng.normal(size=(200, 1))
        model = gbdt_fit(x, y, GbdtConfig(iterations=3, max_depth=2, max_leaf_nodes=3, min_samples_leaf=5))
        for tree in model.trees[0]:
            assert tree.n_leaves <= 3
            counts = np.bincount(tree.leaf_index(x), minlength=tree.feature.size)
            leaves = tree.feature < 0
            assert np.all(counts[leaves][counts[leaves] > 0] >= 5)

    def test_nan_targets_skipped_per_column(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(20, 2))
        y = np.column_stack([x[:, 0], np.full(20, np.nan)])
        model = gbdt_fit(x, y, GbdtConfig(iterations=2, min_samples_leaf=2))
        assert model.trees[1] == []
        assert np.all(gbdt_predict(model, x)[:, 1] == 0.0)

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            gbdt_fit(np.ones((9, 2)), np.ones((9, 1)), GbdtConfig(min_samples_leaf=5))


class TestGbdtPredict:
    """Tests for gbdt_predict"""

    def test_zero_iterations_is_base_score(self):
        x = np.random.default_rng(6).normal(size=(12, 2))
        y = np.random.default_rng(7).normal(size=(12, 3))
        model = gbdt_fit(x, y, GbdtConfig(iterations=0))
        assert np.allclose(gbdt_predict(model, x[:3]), y.mean(axis=0))

    def test_piecewise_constant(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(40, 2))
        model = gbdt_fit(x, x[:, :1], GbdtConfig(iterations=1, max_depth=1, min_samples_leaf=5))
        tree = model.trees[0][0]
        a = np.array([[x[:, 0].max() + 5.0, 0.0]])
        b = np.array([[x[:, 0].max() + 9.0, 0.0]])
        assert np.array_equal(tree.leaf_index(a), tree.leaf_index(b))
        assert np.array_equal(gbdt_predict(model, a), gbdt_predict(model, b))

    def test_width_mismatch(self):
        model = gbdt_fit(np.random.default_rng(9).normal(size=(12, 2)), np.ones((12, 1)), GbdtConfig(iterations=1))
        with pytest.raises(WidthMismatch):
            gbdt_predict(model, np.ones((2, 3)))

    def test_array_round_trip(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(30, 3))
        config = GbdtConfig(iterations=4, max_depth=3, min_samples_leaf=3)
        model = gbdt_fit(x, rng.normal(size=(30, 2)), config)
        again = GbdtModel.from_arrays(model.to_arrays(), config, 3)
        assert np.array_equal(gbdt_predict(again, x), gbdt_predict(model, x))
