import numpy as np
import pytest

from tightfit import body_model as bm
from tightfit.meshgeo import TriMesh


@pytest.fixture(scope="session")
def cube():
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                  [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], dtype=float)
    f = np.array([[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
                  [0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5],
                  [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]])
    return TriMesh(v, f)


def icosphere_mesh(level, radius=1.0):
    dirs, faces = bm._icosphere(level)
    return TriMesh(dirs * radius, faces)


@pytest.fixture(scope="session")
def icosphere3():
    return icosphere_mesh(3)


@pytest.fixture(scope="session")
def stick_small():
    """Lightweight articulated body for geometry-level tests."""
    return bm.make_stick_model(bm.StickConfig(subdivision=2))


@pytest.fixture(scope="session")
def stick_medium():
    """Mid-resolution body for fitting tests."""
    return bm.make_stick_model(bm.StickConfig(subdivision=3))


@pytest.fixture(scope="session")
def stick_default():
    """Full default body (used by acceptance-grade tests)."""
    return bm.make_stick_model()
