import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfmlsim.classifier import (
    ModelConfig,
    forward,
    init_params,
    input_gradient,
    input_gradient_sign_batches,
    loss,
    loss_and_input_gradient,
    loss_and_param_gradients,
    predict_top1,
)
from rfmlsim.errors import InvalidInputError
from rfmlsim.rng import substream


def _naive_forward(params, x):
    """Loop-level reference in float64: conv1 -> ReLU -> conv2 -> BN -> ReLU
    -> fc1 -> BN -> ReLU -> fc2, with inference-mode batch norm."""
    cfg = params.config
    t = {k: v.astype(np.float64) for k, v in params.tensors.items()}
    k, p, n = cfg.kernel_width, cfg.pad, cfg.input_size
    out = []
    for ex in np.asarray(x, dtype=np.float64):
        xp = np.pad(ex[0], ((0, 0), (p, p)))
        a1 = np.zeros((cfg.conv1_channels, 2, n))
        for c in range(cfg.conv1_channels):
            for h in range(2):
                for i in range(n):
                    a1[c, h, i] = sum(t["conv1.weight"][c, 0, 0, j] * xp[h, i + j] for j in range(k))
        a1 = np.maximum(a1, 0)
        a1p = np.pad(a1, ((0, 0), (0, 0), (p, p)))
        z2 = np.zeros((cfg.conv2_channels, n))
        for o in range(cfg.conv2_channels):
            for i in range(n):
                z2[o, i] = t["conv2.bias"][o] + np.sum(t["conv2.weight"][o] * a1p[:, :, i:i + k])
        if cfg.norm_mode == "batchnorm":
            z2 = ((z2 - t["bn2.running_mean"][:, None]) / np.sqrt(t["bn2.running_var"][:, None] + 1e-5)
                  * t["bn2.gamma"][:, None] + t["bn2.beta"][:, None])
        flat = np.maximum(z2, 0).T.ravel()  # time-major flatten
        z3 = t["fc1.weight"] @ flat + t["fc1.bias"]
        if cfg.norm_mode == "batchnorm":
            z3 = (z3 - t["bn3.running_mean"]) / np.sqrt(t["bn3.running_var"] + 1e-5) * t["bn3.gamma"] + t["bn3.beta"]
        out.append(t["fc2.weight"] @ np.maximum(z3, 0) + t["fc2.bias"])
    return np.array(out)


def _randomise_bn(params, seed):
    r = np.random.default_rng(seed)
    for name in ("bn2", "bn3"):
        if f"{name}.gamma" not in params.tensors:
            continue
        w = params[f"{name}.gamma"].size
        params.tensors[f"{name}.gamma"] = r.uniform(0.5, 1.5, w).astype(params.dtype)
        params.tensors[f"{name}.beta"] = r.normal(0, 0.3, w).astype(params.dtype)
        params.tensors[f"{name}.running_mean"] = r.normal(0, 0.2, w).astype(params.dtype)
        params.tensors[f"{name}.running_var"] = r.uniform(0.5, 2.0, w).astype(params.dtype)
    return params


@pytest.fixture
def f64_params(tiny_config):
    return _randomise_bn(init_params(tiny_config, seed=8, dtype=np.float64), 2)


@pytest.fixture
def batch(rng, tiny_config):
    return rng.normal(size=(6, 1, 2, tiny_config.input_size))


class TestConfig:
    def test_shapes(self):
        cfg = ModelConfig(128, 5)
        shapes = cfg.tensor_shapes()
        assert shapes["conv1.weight"] == (256, 1, 1, 7)
        assert shapes["conv2.weight"] == (80, 256, 2, 7)
        assert shapes["fc1.weight"] == (256, 80 * 128)
        assert shapes["fc2.weight"] == (5, 256)
        assert "conv1.bias" not in shapes
        assert "bn2.gamma" in shapes

    def test_dropout_has_no_batch_norm(self):
        assert not any(k.startswith("bn") for k in ModelConfig(128, 5, norm_mode="dropout").tensor_shapes())

    @pytest.mark.parametrize("kwargs", [{"kernel_width": 6}, {"norm_mode": "layernorm"}, {"num_classes": 1},
                                        {"dropout_rate": 1.0}, {"class_names": ("a",)}])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidInputError):
            ModelConfig(**{"input_size": 32, "num_classes": 5, **kwargs})

    def test_dict_round_trip(self, tiny_config):
        assert ModelConfig.from_dict(tiny_config.to_dict()) == tiny_config

    def test_init_is_seeded(self, tiny_config):
        assert init_params(tiny_config, 1).equals(init_params(tiny_config, 1))
        assert not init_params(tiny_config, 1).equals(init_params(tiny_config, 2))


class TestForward:
    @pytest.mark.parametrize("norm_mode", ["batchnorm", "dropout"])
    def test_matches_loop_oracle(self, norm_mode, rng):
        cfg = ModelConfig(16, 3, conv1_channels=3, conv2_channels=2, fc1_units=5, norm_mode=norm_mode)
        params = _randomise_bn(init_params(cfg, 4, dtype=np.float64), 6)
        x = rng.normal(size=(3, 1, 2, 16))
        assert np.allclose(forward(params, x), _naive_forward(params, x), rtol=1e-10, atol=1e-12)

    def test_float32_close_to_float64(self, f64_params, batch):
        lo = forward(f64_params.astype(np.float32), batch)
        assert lo.dtype == np.float32
        assert np.allclose(lo, forward(f64_params, batch), atol=1e-4)

    def test_batching_is_transparent(self, f64_params, rng):
        x = rng.normal(size=(10, 1, 2, 32))
        assert np.allclose(forward(f64_params, x, batch_size=3), forward(f64_params, x), rtol=1e-12)

    def test_accepts_single_example(self, f64_params, batch):
        assert forward(f64_params, batch[0]).shape == (1, 5)

    def test_rejects_wrong_shape(self, f64_params):
        with pytest.raises(InvalidInputError):
            forward(f64_params, np.zeros((2, 1, 2, 31)))

    def test_examples_are_independent_in_inference(self, f64_params, batch):
        whole = forward(f64_params, batch)
        single = np.concatenate([forward(f64_params, b[None]) for b in batch])
        assert np.allclose(whole, single, rtol=1e-12)


class TestLoss:
    @staticmethod
    def _oracle(logits, labels):
        mpmath.mp.dps = 50
        total = mpmath.mpf(0)
        for row, y in zip(logits, labels):
            lse = mpmath.log(mpmath.fsum(mpmath.exp(mpmath.mpf(float(v))) for v in row))
            total += lse - mpmath.mpf(float(row[y]))
        return float(total / len(labels))

    @given(st.lists(st.lists(st.floats(-80, 80), min_size=4, max_size=4), min_size=1, max_size=8), st.data())
    @settings(max_examples=60, deadline=None)
    def test_matches_extended_precision(self, rows, data):
        logits = np.array(rows)
        labels = data.draw(st.lists(st.integers(0, 3), min_size=len(rows), max_size=len(rows)))
        assert loss(logits, labels) == pytest.approx(self._oracle(logits, labels), rel=1e-9, abs=1e-12)

    def test_extreme_logits_stay_finite(self):
        assert math.isfinite(loss(np.array([[1e4, -1e4, 0.0]]), [1]))

    def test_label_checks(self):
        with pytest.raises(InvalidInputError):
            loss(np.zeros((2, 3)), [0, 3])
        with pytest.raises(InvalidInputError):
            loss(np.zeros((2, 3)), [0])


def _central_difference(f, x, idx, h):
    xp, xm = x.copy(), x.copy()
    xp[idx] += h
    xm[idx] -= h
    return (f(xp) - f(xm)) / (2 * h)


class TestGradients:
    @pytest.mark.parametrize("norm_mode", ["batchnorm", "dropout"])
    def test_input_gradient(self, norm_mode, rng):
        cfg = ModelConfig(32, 5, conv1_channels=6, conv2_channels=4, fc1_units=12, norm_mode=norm_mode)
        params = _randomise_bn(init_params(cfg, 11, dtype=np.float64), 12)
        x = rng.normal(size=(4, 1, 2, 32))
        y = np.array([0, 1, 2, 3])
        _, g = loss_and_input_gradient(params, x, y)
        f = lambda z: loss(forward(params, z), y)
        for flat in rng.choice(x.size, 40, replace=False):
            idx = np.unravel_index(flat, x.shape)
            assert g[idx] == pytest.approx(_central_difference(f, x, idx, 1e-6), rel=1e-5, abs=1e-9)

    @pytest.mark.parametrize("norm_mode", ["batchnorm", "dropout"])
    def test_parameter_gradients_in_training_mode(self, norm_mode, rng):
        cfg = ModelConfig(16, 3, conv1_channels=4, conv2_channels=3, fc1_units=6, norm_mode=norm_mode,
                          dropout_rate=0.3)
        params = _randomise_bn(init_params(cfg, 13, dtype=np.float64), 14)
        x = rng.normal(size=(5, 1, 2, 16))
        y = np.array([0, 1, 2, 0, 1])
        _, grads, _ = loss_and_param_gradients(params.copy(), x, y, train=True, rng=substream(5, "drop"))

        def f_for(name, idx):
            def f(value):
                q = params.copy()
                q.tensors[name][idx] = value
                return loss_and_param_gradients(q, x, y, train=True, rng=substream(5, "drop"))[0]
            return f

        for name in params.learnable:
            tensor = params[name]
            for flat in rng.choice(tensor.size, min(5, tensor.size), replace=False):
                idx = np.unravel_index(flat, tensor.shape)
                f = f_for(name, idx)
                v = tensor[idx]
                numeric = (f(v + 1e-6) - f(v - 1e-6)) / 2e-6
                assert grads[name][idx] == pytest.approx(numeric, rel=1e-4, abs=1e-8), name

    def test_sign_batches_match_full_batch_signs(self, f64_params, rng):
        x = rng.normal(size=(9, 1, 2, 32))
        y = rng.integers(0, 5, 9)
        full = np.sign(input_gradient(f64_params, x, y))
        assert np.array_equal(np.sign(input_gradient_sign_batches(f64_params, x, y, batch_size=4)), full)

    def test_gradient_ascent_raises_loss(self, f64_params, rng):
        x = rng.normal(size=(20, 1, 2, 32))
        y = rng.integers(0, 5, 20)
        g = input_gradient(f64_params, x, y)
        before = [loss(forward(f64_params, x[i:i + 1]), y[i:i + 1]) for i in range(20)]
        after = [loss(forward(f64_params, (x + 1e-4 * np.sign(g))[i:i + 1]), y[i:i + 1]) for i in range(20)]
        assert np.mean(np.array(after) >= np.array(before)) >= 0.95


class TestPrediction:
    def test_tie_goes_to_lowest_index(self):
        assert predict_top1(np.array([[1.0, 3.0, 3.0], [2.0, 2.0, 2.0]])).tolist() == [1, 0]

    def test_from_params(self, f64_params, batch):
        assert np.array_equal(predict_top1(f64_params, batch), np.argmax(forward(f64_params, batch), axis=1))
