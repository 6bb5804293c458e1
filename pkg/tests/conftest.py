import numpy as np
import pytest
from hypothesis import settings, HealthCheck

settings.register_profile(
    "fem",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("fem")


@pytest.fixture
def lshape():
    from dwr_diffusion import make_lshape

    return make_lshape()


@pytest.fixture
def unit_square():
    from dwr_diffusion import make_unit_square

    return make_unit_square()


@pytest.fixture
def hanging_mesh():
    """Two unit cells side by side with the left one refined once."""
    from dwr_diffusion import QuadMesh

    pts = [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)]
    mesh = QuadMesh(pts, [(0, 1, 3, 4), (1, 2, 4, 5)])
    mesh.refine({0})
    return mesh


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
