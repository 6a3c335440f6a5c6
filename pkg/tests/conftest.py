"""Shared geometry fixtures."""

import numpy as np
import pytest

from silmesh.mesh import TriMesh


def make_cube(half: float = 1.0) -> TriMesh:
    """Axis-aligned cube of side 2*half, triangulated, outward wound."""
    v = np.array([
        (-1, -1, -1), (1, -1, -1), (1, 1, -1), (-1, 1, -1),
        (-1, -1, 1), (1, -1, 1), (1, 1, 1), (-1, 1, 1),
    ], dtype=np.float32) * half
    f = np.array([
        (0, 2, 1), (0, 3, 2),    # -z
        (4, 5, 6), (4, 6, 7),    # +z
        (0, 1, 5), (0, 5, 4),    # -y
        (3, 7, 6), (3, 6, 2),    # +y
        (0, 4, 7), (0, 7, 3),    # -x
        (1, 2, 6), (1, 6, 5),    # +x
    ], dtype=np.int32)
    return TriMesh(v, f)


@pytest.fixture
def cube():
    return make_cube()
