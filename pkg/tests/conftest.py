import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_mps(rng, n, d, chi, real=False):
    """Random open-boundary MPS with bonds capped by ``chi`` and the exact maximal ranks."""
    from tnvqml.tensor_core import Mps

    bonds = [1] + [min(chi, d**k, d ** (n - k)) for k in range(1, n)] + [1]
    cores = []
    for i in range(n):
        shape = (bonds[i], d, bonds[i + 1])
        c = rng.normal(size=shape)
        if not real:
            c = c + 1j * rng.normal(size=shape)
        cores.append(c)
    return Mps(tuple(cores))


def random_mpo(rng, n, d, chi):
    from tnvqml.tensor_core import Mpo

    bonds = [1] + [chi] * (n - 1) + [1]
    return Mpo(tuple(rng.normal(size=(bonds[i], d, d, bonds[i + 1])) + 0j for i in range(n)))
