import numpy as np
import pytest

from critspde.spectral import SpectralModel


@pytest.fixture
def ou1():
    return SpectralModel(np.array([1.0]))


@pytest.fixture
def ou3():
    return SpectralModel(np.array([1.0, 4.0, 9.0]))
