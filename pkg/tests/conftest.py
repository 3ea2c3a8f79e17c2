import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, h, w, channels=1):
    if channels == 1:
        return rng.uniform(0.0, 1.0, size=(h, w))
    return rng.uniform(0.0, 1.0, size=(h, w, channels))
