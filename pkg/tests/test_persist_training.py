import struct

import numpy as np
import pytest

from rfmlsim.classifier import (
    ModelConfig,
    TrainConfig,
    evaluate,
    init_params,
    load_params,
    save_params,
    train,
)
from rfmlsim.errors import (
    CorruptFileError,
    InvalidInputError,
    ShapeMismatchError,
    VersionMismatchError,
)


@pytest.fixture
def saved(tmp_path, tiny_params):
    path = tmp_path / "model.bin"
    params = tiny_params.copy()
    params.meta["split_seed"] = 7
    save_params(params, path)
    return path, params


class TestPersist:
    def test_round_trip(self, saved):
        path, params = saved
        back = load_params(path)
        assert back.equals(params)
        assert back.meta == {"split_seed": 7}

    def test_bytes_are_stable(self, saved, tmp_path):
        path, params = saved
        save_params(load_params(path), tmp_path / "again.bin")
        assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()

    def test_bad_magic(self, saved):
        path, _ = saved
        path.write_bytes(b"NOTAMODL" + path.read_bytes()[8:])
        with pytest.raises(CorruptFileError):
            load_params(path)

    def test_other_version(self, saved):
        path, _ = saved
        path.write_bytes(b"RFMLMDL9" + path.read_bytes()[8:])
        with pytest.raises(VersionMismatchError):
            load_params(path)

    @pytest.mark.parametrize("cut", [4, 10, 200, -1])
    def test_truncated(self, saved, cut):
        path, _ = saved
        path.write_bytes(path.read_bytes()[:cut])
        with pytest.raises(CorruptFileError):
            load_params(path)

    def test_trailing_bytes(self, saved):
        path, _ = saved
        path.write_bytes(path.read_bytes() + b"\0")
        with pytest.raises(CorruptFileError):
            load_params(path)

    def test_garbled_header(self, saved):
        path, _ = saved
        data = bytearray(path.read_bytes())
        data[12] = ord("#")
        path.write_bytes(bytes(data))
        with pytest.raises(CorruptFileError):
            load_params(path)

    def test_expected_config_mismatch(self, saved, tiny_config):
        path, _ = saved
        other = ModelConfig(**{**tiny_config.to_dict(), "fc1_units": 13})
        with pytest.raises(ShapeMismatchError):
            load_params(path, expected=other)
        assert load_params(path, expected=tiny_config).config == tiny_config

    def test_tensor_shape_mismatch(self, saved):
        path, params = saved
        tensors = dict(params.tensors)
        tensors["fc2.bias"] = np.zeros(6, dtype=np.float32)
        raw = bytearray(path.read_bytes())
        # Rewrite the file with the wrong-sized tensor by hand.
        hlen = struct.unpack_from("<I", raw, 8)[0]
        body = [bytes(raw[:12 + hlen]), struct.pack("<I", len(tensors))]
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f4")
            body.append(struct.pack("<H", len(name)) + name.encode() + struct.pack("<B", arr.ndim))
            body.append(struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes())
        path.write_bytes(b"".join(body))
        with pytest.raises(ShapeMismatchError):
            load_params(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_params(tmp_path / "absent.bin")


def _separable(rng, n, size=32):
    """Two easy classes: a tone versus noise, both at unit power."""
    t = np.arange(size)
    tone = np.stack([np.cos(0.3 * t), np.sin(0.3 * t)])
    x = rng.normal(size=(n, 1, 2, size)) * 0.7
    y = rng.integers(0, 2, n)
    x[y == 1, 0] += tone
    return x.astype(np.float32), y


class TestTrainConfig:
    @pytest.mark.parametrize("kwargs", [{"learning_rate": 0}, {"batch_size": 0}, {"max_epochs": -1},
                                        {"beta1": 1.0}, {"early_stop_patience": 0}])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidInputError):
            TrainConfig(**kwargs)


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    return _separable(rng, 400), _separable(rng, 100)


@pytest.fixture(scope="module")
def cfg():
    return ModelConfig(32, 2, conv1_channels=4, conv2_channels=3, fc1_units=8)


@pytest.fixture(scope="module")
def fitted(data, cfg):
    return train(data[0], data[1], cfg, TrainConfig(max_epochs=8, batch_size=32, seed=2))


class TestTraining:
    def test_learns_separable_task(self, fitted, data):
        params, history = fitted
        assert history[-1]["train_loss"] < history[0]["train_loss"]
        assert evaluate(params, *data[1])[1] > 0.9

    def test_history_fields(self, fitted):
        _, history = fitted
        assert [h["epoch"] for h in history] == list(range(1, len(history) + 1))
        assert set(history[0]) == {"epoch", "train_loss", "train_acc", "val_loss", "val_acc", "seconds"}

    def test_returns_best_validation_model(self, fitted, data):
        params, history = fitted
        best = min(h["val_loss"] for h in history)
        assert evaluate(params, *data[1])[0] == pytest.approx(best, rel=1e-6)
        assert params.meta["epochs_run"] == len(history)

    def test_deterministic(self, fitted, data, cfg):
        again, _ = train(data[0], data[1], cfg, TrainConfig(max_epochs=8, batch_size=32, seed=2))
        assert again.equals(fitted[0])

    def test_early_stopping(self, data, cfg):
        # A huge learning rate makes validation loss stall quickly.
        _, history = train(data[0], data[1], cfg,
                           TrainConfig(max_epochs=50, batch_size=32, learning_rate=0.5, early_stop_patience=2))
        assert len(history) < 50
        best_epoch = int(np.argmin([h["val_loss"] for h in history])) + 1
        assert len(history) == best_epoch + 2

    def test_empty_split(self, data, cfg):
        with pytest.raises(InvalidInputError):
            train(data[0], (data[1][0][:0], data[1][1][:0]), cfg, TrainConfig(max_epochs=1))

    def test_seed_changes_initialisation(self, cfg):
        assert not init_params(cfg, 0).equals(init_params(cfg, 1))
