import numpy as np
import pytest
from CFOIE.core.geometry.surfaces import SurfaceSpec, discretize, make_surface, two_tori
from CFOIE.core.operators.formulations import build_kernel_set

K_PI = np.pi


@pytest.fixture(scope="session")
def sphere_grid():
    """Unit sphere, 24 patches, p = 6 (N = 864)."""
    return discretize(make_surface(SurfaceSpec.sphere(), 2), 6)


@pytest.fixture(scope="session")
def coarse_sphere_grid():
    """Unit sphere, 6 patches, p = 5 (N = 150)."""
    return discretize(make_surface(SurfaceSpec.sphere(), 1), 5)


@pytest.fixture(scope="session")
def torus_grid():
    """Torus (1, 1/2), 36 patches, p = 6 (N = 1296)."""
    return discretize(make_surface(SurfaceSpec.torus(1.0, 0.5), 6), 6)


@pytest.fixture(scope="session")
def coarse_torus_grid():
    """Torus (1, 1/2), 16 patches, p = 5 (N = 400)."""
    return discretize(make_surface(SurfaceSpec.torus(1.0, 0.5), 4), 5)


@pytest.fixture(scope="session")
def flower_grid():
    return discretize(make_surface(SurfaceSpec.flower(), 2), 6)


@pytest.fixture(scope="session")
def two_tori_grid():
    return discretize(make_surface(two_tori("interlocking"), 3), 5)


@pytest.fixture(scope="session")
def sphere_mats(sphere_grid):
    return build_kernel_set(sphere_grid, K_PI, workers=2)


@pytest.fixture(scope="session")
def coarse_sphere_mats(coarse_sphere_grid):
    return build_kernel_set(coarse_sphere_grid, K_PI)


@pytest.fixture(scope="session")
def coarse_torus_mats(coarse_torus_grid):
    return build_kernel_set(coarse_torus_grid, K_PI, workers=2)


@pytest.fixture(scope="session")
def two_tori_mats(two_tori_grid):
    return build_kernel_set(two_tori_grid, 0.1, workers=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
