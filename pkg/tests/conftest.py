import numpy as np
import pytest

from qconsensus.graph import star_graph
from qconsensus.linear import LinearPlant

AUV_ROW = (0.216, -1.502, 2.286)
AUV_K = (-0.25, 0.0)
AUV_X0 = np.array(
    [
        [57.55, 181.56, 113.06],
        [96.21, 32.08, 180.69],
        [26.76, 75.41, 197.66],
        [71.21, 118.11, 79.59],
        [108.91, 50.44, 19.41],
    ]
)
AUV_TARGET = 133.40
AUV_KC = (0.0720, -0.4426, 0.4029)
SCRIPTED_FAILURES = (10, 30, 45, 70, 85, 105, 125, 145, 165, 185)


def scripted_flags(n_steps: int) -> np.ndarray:
    flags = np.ones(n_steps + 1, dtype=bool)
    flags[[k for k in SCRIPTED_FAILURES if k <= n_steps]] = False
    return flags


@pytest.fixture
def auv_plant():
    return LinearPlant.from_last_row(AUV_ROW)


@pytest.fixture
def star5():
    return star_graph(5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
