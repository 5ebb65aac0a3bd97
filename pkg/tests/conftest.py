import numpy as np
import pytest

from routedmlp import data
from routedmlp.rng import derive_rng


@pytest.fixture
def rng():
    return derive_rng(12345, "tests")


@pytest.fixture
def separable_toy(rng):
    """Linearly separable 2-class problem in 20 dims."""
    X = rng.normal(size=(120, 20))
    w = rng.normal(size=20)
    y = (X @ w > 0).astype(int)
    return X, y


@pytest.fixture
def small_synth():
    config = data.SynthConfig(
        n_participants=12, n_clusters=3, days_per_participant=30, seed=42
    )
    return data.synth_generate(config)
