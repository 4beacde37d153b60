from pathlib import Path

import numpy as np
import pytest

from srmt import imageio, model as model_io, nn, seeds as seeds_mod

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def model():
    return model_io.load_model(FIXTURES / "model.srmtw")


@pytest.fixture(scope="session")
def seed_set(model):
    loaded, excluded = seeds_mod.load_seed_set(FIXTURES / "seeds", model)
    assert not excluded, "committed seeds must all load cleanly"
    return loaded


@pytest.fixture(scope="session")
def first_seed(seed_set):
    return seed_set[0]


@pytest.fixture(scope="session")
def first_prediction(model, first_seed):
    return nn.forward(model, first_seed.pixels)


def random_image(rng: np.random.Generator, channels: int = 1,
                 size: int = 32) -> np.ndarray:
    """uint8-quantized random image, matching the PNG pixel lattice."""
    raw = rng.integers(0, 256, size=(channels, size, size))
    return (raw / 255.0).astype(np.float32)
