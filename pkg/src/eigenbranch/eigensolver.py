"""Lowest eigenpairs of the generalized problem ``(K + R) u = lambda M u``.

Shift-invert Lanczos (ARPACK through :func:`scipy.sparse.linalg.eigsh`)
with a sparse LU factorization of the shifted operator, followed by a
Rayleigh-Ritz cleanup that makes the returned vectors exactly
M-orthonormal.  Convergence is judged on the scale-invariant residual

    ||A u - lambda M u|| / (||A u|| + |lambda| ||M u||),

with the denominator floored at ``1e-6 ||A||_1 ||u||`` so that kernel
vectors (pure Neumann, ``lambda = 0``) get a meaningful value.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledSystem
from .errors import ConvergenceError, DataError, FactorizationError, InvalidInputError

log = logging.getLogger(__name__)

DEFAULT_SEED = 0x5EED
DEFAULT_TOL = 1e-8
DENSE_LIMIT = 400


@dataclass(frozen=True, eq=False)
class EigenPair:
    """One eigenpair; ``u`` spans all mesh vertices and is zero on Dirichlet ones."""

    eigenvalue: float
    u: np.ndarray
    residual: float
    index: int

    def summary(self) -> dict:
        return {"index": self.index, "lambda": self.eigenvalue, "residual": self.residual}


def residuals(A, M, lam, V) -> np.ndarray:
    V = np.atleast_2d(V.T).T
    AV, MV = A @ V, M @ V
    num = np.linalg.norm(AV - MV * lam, axis=0)
    den = np.linalg.norm(AV, axis=0) + np.abs(lam) * np.linalg.norm(MV, axis=0)
    # floor for kernel vectors, where A u is pure rounding noise
    floor = 1e-6 * spla.norm(A, 1) * np.linalg.norm(V, axis=0)
    return num / np.maximum(den, floor)


def spectral_scale(A, M) -> float:
    return float(A.diagonal().sum() / M.diagonal().sum())


def _factor(A, M, sigma):
    try:
        lu = spla.splu(sp.csc_matrix(A - sigma * M))
    except RuntimeError as exc:
        raise FactorizationError(str(exc)) from None
    if not np.all(np.isfinite(lu.U.diagonal())) or np.any(lu.U.diagonal() == 0):
        raise FactorizationError("shifted operator is singular")
    return lu


def _rayleigh_ritz(A, M, V):
    Am = V.T @ (A @ V)
    Mm = V.T @ (M @ V)
    Am = 0.5 * (Am + Am.T)
    Mm = 0.5 * (Mm + Mm.T)
    lam, C = sla.eigh(Am, Mm)
    return lam, V @ C


def _fix_sign(V):
    for j in range(V.shape[1]):
        i = int(np.argmax(np.abs(V[:, j])))
        if V[i, j] < 0:
            V[:, j] = -V[:, j]
    return V


def smallest_eigenpairs(
    sys: AssembledSystem,
    k: int,
    tol: float = DEFAULT_TOL,
    seed: int = DEFAULT_SEED,
    sigma: float = None,
    max_iter: int = None,
) -> list:
    """Return the ``k`` smallest eigenpairs in ascending order.

    Parameters
    ----------
    sys : AssembledSystem
    k : int
        Number of pairs, ``1 <= k < n``.
    tol : float
        Residual bound every returned pair must satisfy, in ``(0, 1e-4]``.
    seed : int
        Seed of the deterministic starting vector.
    sigma : float, optional
        Shift.  Defaults to 0, or to ``-1e-6`` times the spectral scale
        ``trace(A) / trace(M)`` for pure Neumann systems.
    max_iter : int, optional
        Maximum number of Arnoldi restarts.

    Raises
    ------
    FactorizationError
        If the shifted operator is singular even after the fallback shift.
    ConvergenceError
        If some residual exceeds ``tol``; carries the best residuals.
    """
    if k < 1:
        raise InvalidInputError("k must be at least 1")
    if not (0 < tol <= 1e-4):
        raise InvalidInputError("tol must lie in (0, 1e-4]")
    n = sys.n
    if k >= n:
        raise InvalidInputError(f"k={k} must be smaller than the number of free dofs {n}")
    A, M = sys.A, sys.M
    scale = spectral_scale(A, M)
    if sigma is None:
        sigma = -1e-6 * scale if sys.is_pure_neumann else 0.0

    if n <= DENSE_LIMIT:
        lam, V = sla.eigh(A.toarray(), M.toarray(), subset_by_index=(0, k - 1))
    else:
        try:
            lu = _factor(A, M, sigma)
        except FactorizationError:
            if sigma != 0.0:
                raise
            sigma = -1e-6 * scale
            log.warning("singular operator at zero shift; retrying with sigma=%g", sigma)
            lu = _factor(A, M, sigma)
        opinv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
        v0 = np.random.default_rng(seed).standard_normal(n)
        ncv = min(n, max(2 * k + 1, 20))
        try:
            lam, V = spla.eigsh(
                A, k=k, M=M, sigma=sigma, OPinv=opinv, v0=v0, ncv=ncv,
                which="LM", tol=0.0, maxiter=max_iter if max_iter is not None else 50 * n,
            )
        except spla.ArpackNoConvergence as exc:
            lam, V = exc.eigenvalues, exc.eigenvectors
            res = residuals(A, M, lam, V) if len(lam) else []
            raise ConvergenceError(
                f"ARPACK converged {len(lam)} of {k} pairs", res, lam
            ) from None
        lam, V = _rayleigh_ritz(A, M, V)

    order = np.argsort(lam, kind="stable")
    lam, V = lam[order], V[:, order]
    V = V / np.sqrt(np.einsum("ij,ij->j", V, M @ V))
    V = _fix_sign(V)
    res = residuals(A, M, lam, V)
    if np.any(res > tol):
        raise ConvergenceError(
            f"residuals {np.array2string(res, precision=3)} exceed tol={tol:g}", res, lam
        )
    return [EigenPair(float(l), sys.extend(V[:, j]), float(r), j + 1) for j, (l, r) in enumerate(zip(lam, res))]


def write_eigenvectors(pairs, path) -> None:
    """One row per mesh vertex, one column per eigenpair (ascending)."""
    U = np.column_stack([p.u for p in pairs])
    with open(path, "w") as fh:
        fh.write(f"# eigenvectors {U.shape[0]} {U.shape[1]}\n")
        for row in U:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def read_eigenvectors(path) -> np.ndarray:
    try:
        with open(path) as fh:
            header = fh.readline().split()
            if header[:2] != ["#", "eigenvectors"]:
                raise ValueError("missing header")
            nv, k = int(header[2]), int(header[3])
            U = np.loadtxt(fh, ndmin=2)
    except (ValueError, IndexError, OSError) as exc:
        raise DataError(f"{path}: unreadable eigenvector file ({exc})") from None
    if U.shape != (nv, k) or not np.all(np.isfinite(U)):
        raise DataError(f"{path}: expected {nv}x{k} finite values, got shape {U.shape}")
    return U


def summary_json(pairs) -> str:
    return json.dumps([p.summary() for p in pairs], indent=1)
