import numpy as np
import pytest

from levygmm.levy_sim import SimModelSpec
from levygmm.moments import default_moment_set


@pytest.fixture(scope="session")
def bench_model():
    return SimModelSpec.benchmark(alpha=1.3)


@pytest.fixture(scope="session")
def bench_theta(bench_model):
    return bench_model.theta()


@pytest.fixture(scope="session")
def fset():
    return default_moment_set()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
