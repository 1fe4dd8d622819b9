import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("ivspectral", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ivspectral")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
