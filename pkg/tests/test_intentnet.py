import math

import numpy as np
import pytest

from gazeassist.exceptions import ConfigError
from gazeassist.intentnet import (
    ModelConfig,
    TrainConfig,
    IntentNetClassifier,
    Prediction,
    bce_loss,
    forward,
    gradient_check,
    init_params,
    load_checkpoint,
    loss_and_grads,
    positional_encoding,
    predict_window,
    save_checkpoint,
    train,
)

CFG = ModelConfig()


def rand_batch(rng, bs=8, sw=30):
    x = np.empty((bs, sw, 3))
    x[:, :, 0] = rng.uniform(0, 1, (bs, sw))
    x[:, :, 1] = rng.uniform(0, 1, (bs, sw))
    x[:, :, 2] = rng.uniform(0, 10, (bs, sw))
    return x


def separable_fixture(rng, n=256, sw=30):
    """Intent windows hold ratio near 8, no-intent near 0.1."""
    X = np.empty((n, sw, 3))
    y = np.zeros(n)
    X[:, :, 0] = rng.uniform(0, 1, (n, sw))
    X[:, :, 1] = rng.uniform(0, 1, (n, sw))
    half = n // 2
    X[:half, :, 2] = rng.normal(8.0, 0.5, (half, sw))
    X[half:, :, 2] = np.abs(rng.normal(0.1, 0.05, (n - half, sw)))
    y[:half] = 1
    return X, y


class TestPositionalEncoding:
    def test_row_zero_alternates(self):
        pe = positional_encoding(5, 8)
        assert np.allclose(pe[0, 0::2], 0.0)
        assert np.allclose(pe[0, 1::2], 1.0)

    def test_sin_one(self):
        pe = positional_encoding(3, 48)
        assert pe[1, 0] == pytest.approx(math.sin(1.0), abs=1e-9)

    def test_bounded(self):
        pe = positional_encoding(64, 48)
        assert np.all(pe >= -1.0) and np.all(pe <= 1.0)

    def test_odd_d_model_rejected(self):
        with pytest.raises(ConfigError):
            positional_encoding(4, 7)


class TestModelConfig:
    def test_kernel_scales_pinned(self):
        with pytest.raises(ConfigError):
            ModelConfig(kernel_scales=(3, 5, 7))

    def test_heads_must_divide(self):
        with pytest.raises(ConfigError):
            ModelConfig(d_model=48, n_heads=5)


class TestForward:
    def test_zero_input_zero_head_gives_half(self):
        params = init_params(CFG)
        params["head_W2"][:] = 0.0
        params["head_b2"][:] = 0.0
        p, _ = forward(np.zeros((3, 30, 3)), params, CFG)
        assert np.allclose(p, 0.5)

    def test_permutation_equivariance(self):
        params = init_params(CFG)
        rng = np.random.default_rng(0)
        x = rand_batch(rng)
        p, _ = forward(x, params, CFG)
        perm = rng.permutation(x.shape[0])
        p2, _ = forward(x[perm], params, CFG)
        assert np.allclose(p[perm], p2, atol=1e-12)

    def test_deterministic_eval(self):
        params = init_params(CFG)
        x = rand_batch(np.random.default_rng(1))
        p1, _ = forward(x, params, CFG)
        p2, _ = forward(x, params, CFG)
        assert np.array_equal(p1, p2)

    def test_per_sample_independence(self):
        params = init_params(CFG)
        rng = np.random.default_rng(2)
        x = rand_batch(rng, bs=6)
        p, _ = forward(x, params, CFG)
        x2 = x.copy()
        x2[3:] = rng.uniform(0, 5, x2[3:].shape)
        p2, _ = forward(x2, params, CFG)
        assert np.allclose(p[:3], p2[:3], atol=1e-12)

    def test_probabilities_in_open_interval(self):
        params = init_params(CFG)
        x = rand_batch(np.random.default_rng(3), bs=16)
        p, _ = forward(x, params, CFG)
        assert np.all(p > 0.0) and np.all(p < 1.0)

    def test_attention_rows_sum_to_one(self):
        params = init_params(CFG)
        x = rand_batch(np.random.default_rng(4))
        _, cache = forward(x, params, CFG)
        for lc in cache["layers"]:
            P = lc["P"]
            assert np.all(P >= 0.0)
            assert np.allclose(P.sum(axis=-1), 1.0, atol=1e-9)

    def test_channel_gates_open_interval_and_ablation(self):
        params = init_params(CFG)
        x = rand_batch(np.random.default_rng(5))
        _, cache = forward(x, params, CFG)
        g = cache["se"]["g"]
        assert np.all(g > 0.0) and np.all(g < 1.0)
        _, cache_on = forward(x, params, CFG, gates_forced_on=True)
        A = cache_on["se"]["A"]
        # gates pinned to 1: conv branch output is the plain temporal mean
        x_conv = cache_on["h"][:, :CFG.conv_total]
        assert np.allclose(x_conv, A.mean(axis=1), atol=1e-12)

    def test_shape_mismatch_rejected(self):
        params = init_params(CFG)
        with pytest.raises(ValueError):
            forward(np.zeros((4, 30, 2)), params, CFG)


class TestLoss:
    def test_half_probability_unit_loss(self):
        loss, _ = bce_loss(np.array([0.5]), np.array([1.0]))
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_perfect_prediction_tiny_loss_zero_grads(self):
        params = init_params(CFG)
        params["head_b2"][:] = 40.0  # saturate past the clamp
        x = rand_batch(np.random.default_rng(6), bs=4)
        y = np.ones(4)
        loss, grads = loss_and_grads(x, y, params, CFG)
        assert loss < 1e-6
        assert max(np.abs(g).max() for g in grads.values()) == 0.0

    def test_duplication_leaves_mean_loss_unchanged(self):
        params = init_params(CFG)
        x = rand_batch(np.random.default_rng(7), bs=4)
        y = np.array([1.0, 0.0, 1.0, 0.0])
        loss1, _ = bce_loss(forward(x, params, CFG)[0], y)
        loss2, _ = bce_loss(forward(np.concatenate([x, x]), params, CFG)[0],
                            np.concatenate([y, y]))
        assert loss1 == pytest.approx(loss2, abs=1e-12)


class TestGradientCheck:
    def test_healthy_below_tolerance(self):
        params = init_params(CFG)
        assert gradient_check(params, CFG, n_probes=80, seed=11) < 1e-4

    def test_fault_injection_detected(self):
        params = init_params(CFG)
        assert gradient_check(params, CFG, n_probes=80, seed=11, fault="ffn") > 1e-2

    def test_zero_probes_warns(self):
        params = init_params(CFG)
        with pytest.warns(UserWarning):
            assert gradient_check(params, CFG, n_probes=0) == 0.0


class TestTraining:
    def test_separable_data_sanity_fast(self):
        rng = np.random.default_rng(0)
        X, y = separable_fixture(rng, n=192)
        res = train(X, y, CFG, TrainConfig(epochs=6, seed=0, dtype="float32"))
        assert res.final_accuracy >= 0.99

    def test_zero_learning_rate_keeps_params(self):
        rng = np.random.default_rng(1)
        X, y = separable_fixture(rng, n=64)
        cfg_nodrop = ModelConfig(dropout=0.0)
        before = init_params(cfg_nodrop)
        res = train(X, y, cfg_nodrop,
                    TrainConfig(learning_rate=0.0, epochs=3, seed=0),
                    initial={k: v.copy() for k, v in before.items()})
        assert all(np.array_equal(res.params[k], before[k]) for k in before)
        losses = [m.loss for m in res.history]
        assert max(losses) - min(losses) < 1e-12

    def test_same_seed_identical_params(self):
        rng = np.random.default_rng(2)
        X, y = separable_fixture(rng, n=64)
        r1 = train(X, y, CFG, TrainConfig(epochs=2, seed=5, dtype="float32"))
        r2 = train(X, y, CFG, TrainConfig(epochs=2, seed=5, dtype="float32"))
        assert all(np.array_equal(r1.params[k], r2.params[k]) for k in r1.params)

    def test_single_class_rejected(self):
        X = np.zeros((8, 30, 3))
        with pytest.raises(ValueError):
            train(X, np.zeros(8), CFG, TrainConfig(epochs=1))


class TestPredictionRule:
    def test_above_half_is_intent(self):
        assert Prediction.from_probability(0.7).decided == 1

    def test_exactly_half_is_no_intent(self):
        assert Prediction.from_probability(0.5).decided == 0

    def test_below_half_is_no_intent(self):
        assert Prediction.from_probability(0.3).decided == 0

    def test_predict_window_consistency(self):
        params = init_params(CFG)
        x = rand_batch(np.random.default_rng(8), bs=1)
        pred = predict_window(x[0], params, CFG)
        p, _ = forward(x, params, CFG)
        assert pred.y_hat == pytest.approx(float(p[0]), abs=1e-12)
        assert pred.decided == int(p[0] > 0.5)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        params = init_params(CFG)
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(path, params, CFG)
        loaded, cfg = load_checkpoint(path)
        assert cfg == CFG
        assert all(np.array_equal(loaded[k], params[k]) for k in params)

    def test_rejects_foreign_file(self, tmp_path):
        path = str(tmp_path / "other.npz")
        np.savez(path, a=np.zeros(3))
        with pytest.raises(ValueError):
            load_checkpoint(path)


class TestEstimator:
    def test_sklearn_protocol(self):
        from sklearn.base import clone
        est = IntentNetClassifier(epochs=2, seed=1)
        params = est.get_params()
        assert params["epochs"] == 2
        est2 = clone(est)
        assert est2.get_params() == params

    def test_fit_predict_shapes(self):
        rng = np.random.default_rng(9)
        X, y = separable_fixture(rng, n=96)
        est = IntentNetClassifier(epochs=3, seed=0).fit(X, y)
        proba = est.predict_proba(X)
        assert proba.shape == (96, 2)
        assert np.allclose(proba.sum(axis=1), 1.0)
        pred = est.predict(X)
        assert set(np.unique(pred)) <= {0, 1}
        assert est.score(X, y) >= 0.9

    def test_unfitted_raises(self):
        from sklearn.exceptions import NotFittedError
        est = IntentNetClassifier()
        with pytest.raises(NotFittedError):
            est.predict(np.zeros((1, 30, 3)))
