from pathlib import Path

import numpy as np
import pytest

from ccportfolio import SingleFactorModel

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_sf(rng, n, sort=False):
    beta = rng.normal(1.0, 0.5, n)
    eps = rng.uniform(0.01, 1.0, n)
    if sort:
        beta, eps = np.sort(beta), np.sort(eps)[::-1]
    return SingleFactorModel(beta, eps, float(rng.uniform(0.2, 2.0)))
