import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

from bvmc.model import GraphicalModel, random_model

SYMMETRY_POOL = (0.5, 1.0, -0.7)


@pytest.fixture
def small_random_models() -> list[GraphicalModel]:
    """Random 4-6 var models with a small weight pool, so repeated weights
    (and hence symmetries) actually occur."""
    return [
        random_model(4 + seed % 3, 5 + seed % 4, seed=seed, weight_pool=SYMMETRY_POOL)
        for seed in range(12)
    ]
