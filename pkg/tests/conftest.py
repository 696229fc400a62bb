import numpy as np
import pytest

from selfdb.dataio import PhantomSpec, gen_phantom
from selfdb.operators import make_nested_triple, simulate_measurement
from selfdb.tensors import NoiseDraw, gaussian


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def phantom64():
    return gen_phantom(PhantomSpec(size=64, seed=3), 0)


@pytest.fixture
def triple64():
    return make_nested_triple(64, (1 / 4, 1 / 6, 1 / 8), 1 / 16, NoiseDraw(5))


@pytest.fixture
def noiseless_y(phantom64, triple64):
    return simulate_measurement(phantom64, None, triple64.m, 0.0, None)


def cplx(shape, seed):
    return gaussian(shape, NoiseDraw(seed, 99))
