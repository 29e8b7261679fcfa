import numpy as np
import pytest

from breakable_machine.nn import bmnet_tiny

LABELS = ["astronaut", "bear", "doctor", "firefighter"]


@pytest.fixture(scope="session")
def labels():
    return list(LABELS)


@pytest.fixture(scope="session")
def tiny_model():
    return bmnet_tiny(LABELS, seed=42)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_input(rng, size=56):
    return rng.uniform(-1.0, 1.0, size=(3, size, size)).astype(np.float32)
