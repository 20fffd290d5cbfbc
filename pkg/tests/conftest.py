import pytest

from croplink.height import MastConstraints
from croplink.propagation import TABLE1_CORN


@pytest.fixture(scope="session")
def table1():
    return TABLE1_CORN


@pytest.fixture(scope="session")
def mast():
    return MastConstraints(h_min=0.5, h_max=30.0, coarse_step=0.25)
