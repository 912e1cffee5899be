import numpy as np
import pytest

from rfmlsim.classifier import ModelConfig, init_params
from rfmlsim.dataset import DatasetSpec, generate, split
from rfmlsim.modem import SCHEME_NAMES


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_config():
    """A narrow network that keeps the full layer structure but runs fast."""
    return ModelConfig(input_size=32, num_classes=5, conv1_channels=6, conv2_channels=4, fc1_units=12,
                       class_names=SCHEME_NAMES)


@pytest.fixture(scope="session")
def tiny_params(tiny_config):
    return init_params(tiny_config, seed=3)


@pytest.fixture(scope="session")
def small_model():
    """Narrow 128-sample model with randomised batch-norm statistics."""
    cfg = ModelConfig(input_size=128, num_classes=5, conv1_channels=8, conv2_channels=4, fc1_units=16,
                      class_names=SCHEME_NAMES)
    params = init_params(cfg, seed=5)
    r = np.random.default_rng(9)
    for name in ("bn2", "bn3"):
        width = params[f"{name}.gamma"].size
        params.tensors[f"{name}.gamma"] = r.uniform(0.5, 1.5, width).astype(np.float32)
        params.tensors[f"{name}.beta"] = r.normal(0, 0.2, width).astype(np.float32)
        params.tensors[f"{name}.running_mean"] = r.normal(0, 0.1, width).astype(np.float32)
        params.tensors[f"{name}.running_var"] = r.uniform(0.5, 2.0, width).astype(np.float32)
    return params


@pytest.fixture(scope="session")
def small_dataset():
    return generate(DatasetSpec(input_size=128, examples_per_class_per_snr=40, seed=21))


@pytest.fixture(scope="session")
def small_splits(small_dataset):
    return split(small_dataset, seed=4)


def pytest_terminal_summary(terminalreporter):
    from acceptance_support import REPORT

    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(REPORT):
            terminalreporter.write_line(line)
