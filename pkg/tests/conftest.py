import numpy as np
import pytest
from hypothesis import settings

from nlhelmholtz.grid import Field, GridSpec

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def torus_pi():
    """[-pi, pi)^3 with 16 points per axis."""
    return GridSpec(3, np.pi, 16)


def cos_mode(grid, k=2):
    x1 = grid.coords()[0]
    return Field.real(grid, np.broadcast_to(np.cos(k * x1), grid.shape))


def rel(a, b):
    return np.linalg.norm(np.ravel(a - b)) / np.linalg.norm(np.ravel(b))
