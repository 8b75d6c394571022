import numpy as np
import pytest

from sulcdepth.mesh import TriangleMesh, icosphere
from sulcdepth.phantoms import PhantomSpec, generate_phantom, irregular_phantom


def grid_mesh(nx=11, ny=11, spacing=1.0, z=None):
    """Planar regular grid in the xy plane, alternating diagonals."""
    x, y = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing, indexing="ij")
    zz = np.zeros_like(x) if z is None else z(x, y)
    verts = np.stack([x.ravel(), y.ravel(), zz.ravel()], axis=1)
    idx = np.arange(nx * ny).reshape(nx, ny)
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            if (i + j) % 2:
                faces += [(a, b, c), (a, c, d)]
            else:
                faces += [(a, b, d), (b, c, d)]
    return TriangleMesh(verts, np.asarray(faces))


def interior(nx, ny):
    idx = np.arange(nx * ny).reshape(nx, ny)
    return idx[1:-1, 1:-1].ravel()


def tetrahedron():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriangleMesh(v, f)


def unit_cube():
    v = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float)
    f = np.array([
        [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5], [0, 4, 5], [0, 5, 1],
        [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
    ])
    return TriangleMesh(v, f)


@pytest.fixture(scope="session")
def sphere3():
    return icosphere(3)


@pytest.fixture(scope="session")
def wrinkled():
    return generate_phantom(PhantomSpec(radius=30.0, amplitude=3.0, frequency=6, subdiv=4, seed=0))


@pytest.fixture(scope="session")
def irregular():
    return irregular_phantom(subdiv=4, seed=1)


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
