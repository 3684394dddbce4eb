import numpy as np
import pytest

from surfcut.cut import extract_surface_cells
from surfcut.level_set import sphere
from surfcut.mesh import build_box_mesh, extract_active_mesh, interpolate_levelset


def sphere_setup(n_cells=10, offset=(0.0, 0.0, 0.0)):
    mesh = build_box_mesh([[-1.6, 1.6]] * 3, n_cells)
    active = extract_active_mesh(mesh, interpolate_levelset(mesh, sphere(center=offset)))
    return active, extract_surface_cells(active)


@pytest.fixture(scope="session")
def sphere10():
    return sphere_setup(10)


@pytest.fixture(scope="session")
def sphere7_offset():
    return sphere_setup(7, offset=(0.11, -0.07, 0.05))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
