import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def cached_scene(seed, shape, diameter):
    from gaugescout.scene import generate_scene

    return generate_scene(seed, shape, diameter)[0]


@pytest.fixture(scope="session")
def scene_c160():
    return cached_scene(0, "circle", 160)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
