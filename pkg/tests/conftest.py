import numpy as np
import pytest
from hypothesis import settings

from bcinclusion.grid import DiscreteDomain, Disk, SpeedModel

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def dom32():
    return DiscreteDomain.square(32)


@pytest.fixture(scope="session")
def disk32(dom32):
    return SpeedModel.build(dom32, 1.0, [Disk((0.5, 0.5), 0.15, 2.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(42)
