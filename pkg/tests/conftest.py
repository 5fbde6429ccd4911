import numpy as np
import pytest

from bnsharp import Batch, BnMlp, NetworkSpec, ParamVector
from bnsharp.data import gen_spirals


@pytest.fixture
def small_net():
    return BnMlp(NetworkSpec((2, 8, 8, 2), eps=0.0))


@pytest.fixture
def small_theta(small_net):
    return small_net.init_params(0)


@pytest.fixture
def small_batch():
    ds = gen_spirals(0, 64, 1.5, 0.15)
    return ds.train_batch()


@pytest.fixture
def spiral_ds():
    return gen_spirals(0, 64, 1.5, 0.15)


def random_param(rng, sizes, n1):
    return ParamVector([rng.standard_normal(s) for s in sizes], n1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
