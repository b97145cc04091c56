import numpy as np
import pytest
from hypothesis import strategies as st

from pathentropy import CompartmentalSystem


def random_system(rng: np.random.Generator, d: int) -> CompartmentalSystem:
    """Sparse-or-dense random open system.

    Off-diagonals U[0,1], each zeroed with probability 1/2; exit rates
    U[0.1,1]; inputs U[0,1] renormalised.  Positive exit rates everywhere
    keep the system open.
    """
    off = rng.uniform(0.0, 1.0, size=(d, d)) * (rng.random((d, d)) < 0.5)
    np.fill_diagonal(off, 0.0)
    z = rng.uniform(0.1, 1.0, size=d)
    B = off.copy()
    np.fill_diagonal(B, -(off.sum(axis=0) + z))
    u = rng.uniform(0.0, 1.0, size=d)
    if u.sum() == 0.0:
        u[0] = 1.0
    return CompartmentalSystem(u / u.sum(), B)


@st.composite
def systems(draw, max_d: int = 8):
    d = draw(st.integers(1, max_d))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_system(np.random.default_rng(seed), d)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def serial():
    return CompartmentalSystem([1.0, 0.0], [[-1.0, 0.0], [1.0, -1.0]])


@pytest.fixture
def feedback():
    return CompartmentalSystem([1.0, 0.0], [[-1.0, 0.5], [1.0, -1.0]])


@pytest.fixture
def parallel():
    return CompartmentalSystem([1.0, 1.0], [[-1.0, 0.0], [0.0, -1.0]])
