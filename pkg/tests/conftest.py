import logging

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

# solver non-convergence warnings are expected in a few degenerate probes
logging.getLogger("spectralpath").setLevel(logging.ERROR)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
