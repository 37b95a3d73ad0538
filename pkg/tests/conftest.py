import numpy as np
import pytest

from pe_builder import minimal_pe32


@pytest.fixture(scope="session")
def minimal_pe():
    """(bytes, ground-truth info) for the hand-assembled minimal PE32."""
    return minimal_pe32()


@pytest.fixture()
def rng():
    return np.random.default_rng(20170101)
