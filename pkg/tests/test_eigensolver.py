import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from eigenbranch import eigensolver
from eigenbranch.assembly import AssembledSystem, assemble
from eigenbranch.eigensolver import (
    read_eigenvectors,
    residuals,
    smallest_eigenpairs,
    summary_json,
    write_eigenvectors,
)
from eigenbranch.errors import ConvergenceError, DataError, FactorizationError, InvalidInputError
from eigenbranch.geometry import build_elongated_polygon
from eigenbranch.meshing import refine, triangulate

PI2 = np.pi**2


@pytest.fixture(scope="module")
def square_pairs(unit_square):
    mesh = triangulate(unit_square, 0.05)
    sys = assemble(mesh)
    return mesh, sys, smallest_eigenpairs(sys, 3)


def test_square_spectrum(square_pairs):
    _, _, pairs = square_pairs
    lam = np.array([p.eigenvalue for p in pairs])
    exact = np.array([2, 5, 5]) * PI2
    assert np.all(lam >= exact)
    assert np.all(lam <= exact * 1.01)
    assert np.all(np.diff(lam) >= 0)
    assert [p.index for p in pairs] == [1, 2, 3]


def test_m_orthonormal(square_pairs):
    _, sys, pairs = square_pairs
    V = np.column_stack([sys.restrict(p.u) for p in pairs])
    assert_allclose(V.T @ (sys.M @ V), np.eye(3), atol=1e-8)


def test_residuals_and_scale_invariance(square_pairs):
    _, sys, pairs = square_pairs
    V = np.column_stack([sys.restrict(p.u) for p in pairs])
    lam = np.array([p.eigenvalue for p in pairs])
    r = residuals(sys.A, sys.M, lam, V)
    assert np.all(r <= 1e-8)
    assert_allclose(r, [p.residual for p in pairs])
    # perturb so the residual is well above rounding noise before comparing
    W = V + 1e-3 * np.sin(np.arange(V.size)).reshape(V.shape)
    rw = residuals(sys.A, sys.M, lam, W)
    assert np.all(rw > 1e-6)
    assert_allclose(residuals(1e3 * sys.A, 1e3 * sys.M, lam, W), rw, rtol=1e-10)


def test_refinement_monotone(unit_square):
    mesh = triangulate(unit_square, 0.1)
    coarse = [p.eigenvalue for p in smallest_eigenpairs(assemble(mesh), 3)]
    fine = [p.eigenvalue for p in smallest_eigenpairs(assemble(refine(mesh)), 3)]
    assert np.all(np.array(fine) <= np.array(coarse))


def test_thin_rectangle():
    dom = build_elongated_polygon([(0, 0), (1, 0), (1, 0.1), (0, 0.1)], 0.5)
    lam = smallest_eigenpairs(assemble(triangulate(dom, 0.01)), 1)[0].eigenvalue
    exact = PI2 * (1 + 1 / 0.01)
    assert exact <= lam <= 1.01 * exact


def test_neumann_kernel(neumann_square_mesh):
    sys = assemble(neumann_square_mesh)
    p = smallest_eigenpairs(sys, 1)[0]
    assert abs(p.eigenvalue) < 1e-10
    assert_allclose(p.u, p.u.mean(), rtol=1e-8)


def test_deterministic(square_pairs):
    _, sys, pairs = square_pairs
    again = smallest_eigenpairs(sys, 3)
    for a, b in zip(pairs, again):
        assert a.eigenvalue == b.eigenvalue
        assert np.array_equal(a.u, b.u)
    assert summary_json(pairs) == summary_json(again)


def test_dense_and_sparse_agree(unit_square, monkeypatch):
    sys = assemble(triangulate(unit_square, 0.05))
    assert sys.n > eigensolver.DENSE_LIMIT
    sparse = smallest_eigenpairs(sys, 3)
    monkeypatch.setattr(eigensolver, "DENSE_LIMIT", 10**6)
    dense = smallest_eigenpairs(sys, 3)
    assert_allclose([p.eigenvalue for p in sparse], [p.eigenvalue for p in dense], rtol=1e-10)
    assert_allclose(abs(sparse[0].u), abs(dense[0].u), atol=1e-8)


def test_non_convergence_reports_residuals(unit_square):
    sys = assemble(triangulate(unit_square, 0.05))
    with pytest.raises(ConvergenceError) as info:
        smallest_eigenpairs(sys, 3, tol=1e-30, max_iter=2)
    assert len(info.value.residuals) > 0


def test_argument_checks(square_pairs):
    _, sys, _ = square_pairs
    with pytest.raises(InvalidInputError):
        smallest_eigenpairs(sys, 0)
    with pytest.raises(InvalidInputError):
        smallest_eigenpairs(sys, 3, tol=1e-3)


def test_singular_shift_raises():
    n = 500
    K = sp.csr_matrix((n, n))
    M = sp.identity(n, format="csr")
    sys = AssembledSystem(K, M, sp.csr_matrix((n, n)), np.arange(n), n + 1)
    with pytest.raises(FactorizationError):
        smallest_eigenpairs(sys, 1, sigma=0.0)


def test_eigenvector_io(tmp_path, square_pairs):
    _, _, pairs = square_pairs
    write_eigenvectors(pairs, tmp_path / "v.txt")
    U = read_eigenvectors(tmp_path / "v.txt")
    assert_allclose(U, np.column_stack([p.u for p in pairs]), rtol=1e-15)
    text = (tmp_path / "v.txt").read_text().splitlines()
    (tmp_path / "bad.txt").write_text("\n".join(text[:5]) + "\n")
    with pytest.raises(DataError):
        read_eigenvectors(tmp_path / "bad.txt")
    (tmp_path / "junk.txt").write_text("hello\n")
    with pytest.raises(DataError):
        read_eigenvectors(tmp_path / "junk.txt")
