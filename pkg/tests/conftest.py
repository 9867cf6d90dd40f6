import numpy as np
import pytest

from bayestego import StegoKey, TrainConfig, extract_patches, model_hash, train
from bayestego.predictor import DualHeadedModel
from bayestego.synthetic import synthetic_image


_CRITERIA = {}


def record(number, name, ok, detail=""):
    """Register the outcome of one acceptance criterion for the summary."""
    _CRITERIA[number] = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(_CRITERIA[number])


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])


def small_model(seed=0, sizes=(12, 8, 8), rate=0.3, scale=0.5):
    """Model with every parameter random, so no ReLU sits on a kink at zero input."""
    rng = np.random.default_rng(seed)
    params = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        params += [rng.normal(0, scale, (a, b)), rng.normal(0, scale, b)]
    h = sizes[-1]
    params += [rng.normal(0, scale, h), rng.normal(0, scale),
               rng.normal(0, scale, h), rng.normal(0, scale)]
    return DualHeadedModel.from_parameters(sizes, rate, params)


@pytest.fixture(scope="session")
def trained_model():
    images = [synthetic_image(64, 64, seed=s) for s in range(8)]
    X, y = extract_patches(images, n_patches=20_000, seed=0)
    model, _ = train((X, y), TrainConfig(epochs=20, seed=0))
    return model


@pytest.fixture(scope="session")
def trained_key(trained_model):
    return StegoKey(model_hash(trained_model), seed=7, T=8)


@pytest.fixture(scope="session")
def cover():
    return synthetic_image(64, 64, seed=321)
