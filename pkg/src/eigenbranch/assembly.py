"""P1 finite element matrices for ``-Lap u = lambda u`` with Dirichlet/Robin data.

Stiffness, mass and Robin boundary matrices are built with the exact
element formulas for piecewise-linear functions; Dirichlet vertices are
eliminated from the system.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import InvalidCoefficientError, InvalidInputError, OverConstrainedError
from .meshing import Mesh


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Matrices restricted to the free (non-Dirichlet) vertices.

    ``K``, ``M`` and ``R`` are symmetric CSR matrices of size
    ``len(free_dofs)``; ``free_dofs[i]`` is the mesh vertex of unknown ``i``.
    """

    K: sp.csr_matrix
    M: sp.csr_matrix
    R: sp.csr_matrix
    free_dofs: np.ndarray
    n_vertices: int

    @property
    def n(self) -> int:
        return len(self.free_dofs)

    @property
    def A(self) -> sp.csr_matrix:
        """Energy operator ``K + R``."""
        return (self.K + self.R).tocsr()

    @property
    def is_pure_neumann(self) -> bool:
        return self.n == self.n_vertices and self.R.nnz == 0

    def restrict(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape == (self.n,):
            return u
        if u.shape == (self.n_vertices,):
            return u[self.free_dofs]
        raise InvalidInputError(f"vector of length {u.shape} matches neither {self.n} free dofs nor {self.n_vertices} vertices")

    def extend(self, u) -> np.ndarray:
        """Lift a free-dof vector to all mesh vertices (zero on Dirichlet vertices)."""
        full = np.zeros(self.n_vertices)
        full[self.free_dofs] = u
        return full


def element_matrices(mesh: Mesh):
    """Local stiffness and mass blocks, shapes ``(M, 3, 3)``."""
    p = mesh.vertices[mesh.triangles]
    area = mesh.signed_areas
    # gradients of barycentric functions: rotated opposite edges / (2 area)
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grad = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * area)[:, None, None]
    Ke = area[:, None, None] * np.einsum("tik,tjk->tij", grad, grad)
    Me = (area / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))
    return Ke, Me


def _scatter(rows, cols, vals, n) -> sp.csr_matrix:
    # coo -> csr sums duplicates in storage order, independent of scheduling
    A = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    return A


def assemble_full(mesh: Mesh, robin_h: Optional[Callable] = None):
    """Unrestricted ``(K, M, R)`` over all mesh vertices.

    ``robin_h(midpoint, marker)`` may override the coefficient of each Robin
    edge; by default the marker's constant ``h`` is used.
    """
    n = mesh.n_vertices
    t = mesh.triangles
    Ke, Me = element_matrices(mesh)
    rows = np.repeat(t, 3, axis=1)
    cols = np.tile(t, (1, 3))
    K = _scatter(rows, cols, Ke, n)
    M = _scatter(rows, cols, Me, n)

    robin_edges, hs = [], []
    for (a, b), m in zip(mesh.boundary_edges.tolist(), mesh.boundary_markers):
        if m.is_dirichlet:
            continue
        h = m.h if robin_h is None else float(robin_h(0.5 * (mesh.vertices[a] + mesh.vertices[b]), m))
        if h < 0:
            raise InvalidCoefficientError(f"Robin coefficient must be nonnegative, got {h}")
        if h > 0:
            robin_edges.append((a, b))
            hs.append(h)
    if robin_edges:
        e = np.array(robin_edges)
        ell = np.hypot(*(mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]]).T)
        Re = (np.array(hs) * ell / 6.0)[:, None, None] * np.array([[2.0, 1.0], [1.0, 2.0]])
        R = _scatter(np.repeat(e, 2, axis=1), np.tile(e, (1, 2)), Re, n)
    else:
        R = sp.csr_matrix((n, n))
    return K, M, R


def assemble(mesh: Mesh, robin_h: Optional[Callable] = None) -> AssembledSystem:
    """Assemble and eliminate Dirichlet vertices."""
    K, M, R = assemble_full(mesh, robin_h)
    fixed = mesh.boundary_vertices(dirichlet_only=True)
    free = np.setdiff1d(np.arange(mesh.n_vertices), fixed)
    if free.size == 0:
        raise OverConstrainedError("every vertex is constrained by a Dirichlet condition")

    def sub(A):
        return A[free][:, free].tocsr()

    return AssembledSystem(sub(K), sub(M), sub(R), free, mesh.n_vertices)


def rayleigh(sys: AssembledSystem, u) -> float:
    """Rayleigh quotient ``u.(K+R)u / u.Mu``."""
    u = sys.restrict(u)
    den = float(u @ (sys.M @ u))
    if not np.any(u) or den <= 0:
        raise InvalidInputError("Rayleigh quotient of a zero vector")
    return float(u @ (sys.K @ u) + u @ (sys.R @ u)) / den


def write_coo(A: sp.spmatrix, path) -> None:
    """Dump ``A`` as ``row col value`` lines (zero-based indices)."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as fh:
        fh.write(f"% {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for i in order:
            fh.write(f"{C.row[i]} {C.col[i]} {C.data[i]:.17g}\n")
