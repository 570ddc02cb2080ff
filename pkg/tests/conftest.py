import numpy as np
import pytest
from hypothesis import strategies as st

from entmem.qstate import PolarizationKet, TwoQubitState


def random_density_matrix(rng: np.random.Generator, rank: int = 4) -> TwoQubitState:
    """Ginibre-ensemble random state: G G+ normalized."""
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    m = g @ g.conj().T
    return TwoQubitState(m / np.trace(m).real)


def random_pure_ket(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(17)


@st.composite
def polarization_kets(draw):
    re_h = draw(st.floats(-1, 1, allow_nan=False))
    im_h = draw(st.floats(-1, 1, allow_nan=False))
    re_v = draw(st.floats(-1, 1, allow_nan=False))
    im_v = draw(st.floats(-1, 1, allow_nan=False))
    norm2 = re_h**2 + im_h**2 + re_v**2 + im_v**2
    if norm2 < 1e-6:
        re_h = 1.0
    return PolarizationKet(complex(re_h, im_h), complex(re_v, im_v))


@st.composite
def density_matrices(draw):
    seed = draw(st.integers(min_value=0, max_value=2**31 - 1))
    rank = draw(st.integers(min_value=1, max_value=4))
    return random_density_matrix(np.random.default_rng(seed), rank=rank)
