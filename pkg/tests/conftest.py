import numpy as np
import pytest

from eigenbranch.assembly import assemble
from eigenbranch.eigensolver import smallest_eigenpairs
from eigenbranch.geometry import (
    build_elongated_polygon,
    build_right_triangle,
    build_sine_branch_domain,
    robin,
)
from eigenbranch.meshing import triangulate

UNIT_SQUARE = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]


@pytest.fixture(scope="session")
def unit_square():
    return build_elongated_polygon(UNIT_SQUARE, 0.5)


@pytest.fixture(scope="session")
def neumann_square_mesh():
    return triangulate(build_elongated_polygon(UNIT_SQUARE, 0.5, robin(0.0)), 0.05)


@pytest.fixture(scope="session")
def sine_case():
    """Square of side 1.54 with a sine branch of length 5, three modes."""
    dom = build_sine_branch_domain(1.54, 5.0, 1.0)
    mesh = triangulate(dom, 0.03)
    pairs = smallest_eigenpairs(assemble(mesh), 3)
    return dom, mesh, pairs


@pytest.fixture(scope="session")
def triangle_case():
    """Right triangle through the corner (2, 1) of the inscribed rectangle, d = 1.32."""
    dom = build_right_triangle(2.0, 1.0, 1.32)
    mesh = triangulate(dom, 0.03)
    pairs = smallest_eigenpairs(assemble(mesh), 3)
    return dom, mesh, pairs


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])
