import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20161)


def random_symmetric(rng, n):
    b = rng.standard_normal((n, n))
    return b + b.T
