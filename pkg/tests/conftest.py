import numpy as np
import pytest

from csurf import fhe
from csurf.params import FheParams, toy_params

TINY_Q = 256**2  # threshold 16384, N = 48: fast enough for per-test key use


@pytest.fixture(scope="session")
def tiny_params():
    return FheParams(q=TINY_Q, n=2, sigma=1)


@pytest.fixture(scope="session")
def tiny_keys(tiny_params):
    sk, pk = fhe.keygen(tiny_params, seed=7)
    return sk, pk


@pytest.fixture(scope="session")
def toy():
    params = toy_params()
    sk, pk = fhe.keygen(params, seed=0)
    return params, sk, pk


@pytest.fixture(scope="session")
def mirror_toy():
    params = toy_params()
    sk, pk = fhe.keygen(params, seed=0, backend=fhe.MIRROR)
    return params, sk, pk


@pytest.fixture()
def rng():
    return np.random.default_rng(1)
