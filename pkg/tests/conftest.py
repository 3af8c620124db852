import numpy as np
import pytest

from wedgetomo import ImageGrid, default_phantom


@pytest.fixture(scope="session")
def phantom121():
    return default_phantom(0)


@pytest.fixture(scope="session")
def phantom61(phantom121):
    # half-resolution slice for quick solver tests
    return ImageGrid(phantom121.values[::2, ::2].copy(), 1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
