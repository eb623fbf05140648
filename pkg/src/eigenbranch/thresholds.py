"""Spectral thresholds of branch cross-sections.

The first eigenvalue ``mu1`` of ``-v'' = mu v`` on a cross-sectional
interval is ``pi**2 / l**2`` for Dirichlet ends.  With Robin ends
``v' - h1 v = 0`` (bottom) and ``v' + h2 v = 0`` (top), ``mu1 = alpha**2``
for the first positive root of the determinant of the boundary conditions
applied to ``c1 sin(alpha y) + c2 cos(alpha y)``:

    F(alpha) = (h1 h2 - alpha**2) sin(alpha l) + alpha (h1 + h2) cos(alpha l).

The branch threshold is the infimum of ``mu1`` along the branch.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EigenbranchError, InvalidInputError
from .geometry import BranchProfile

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class RobinInterval:
    length: float
    h1: float
    h2: float

    def __post_init__(self):
        if not self.length > 0:
            raise InvalidInputError(f"interval length must be positive, got {self.length}")
        if self.h1 < 0 or self.h2 < 0:
            raise InvalidInputError("Robin coefficients must be nonnegative")


def dirichlet_interval_mu(length: float) -> float:
    if not length > 0:
        raise InvalidInputError(f"interval length must be positive, got {length}")
    return math.pi**2 / length**2


def effective_h(h: float, y_prime: float) -> float:
    """Robin coefficient seen by the cross-section of a wall with slope ``y_prime``."""
    if h < 0:
        raise InvalidInputError(f"Robin coefficient must be nonnegative, got {h}")
    return h * math.sqrt(1.0 + y_prime * y_prime)


def robin_characteristic(alpha, iv: RobinInterval):
    """``F(alpha)``; its first positive root is ``sqrt(mu1)``."""
    al = alpha * iv.length
    return (iv.h1 * iv.h2 - alpha * alpha) * np.sin(al) + alpha * (iv.h1 + iv.h2) * np.cos(al)


def _reduced_characteristic(alpha, iv: RobinInterval):
    # F(alpha) / alpha, written with sinc so it is smooth through alpha = 0
    al = alpha * iv.length
    return (iv.h1 * iv.h2 - alpha * alpha) * iv.length * np.sinc(al / np.pi) + (iv.h1 + iv.h2) * np.cos(al)


def robin_interval_mu(iv: RobinInterval, tol: float = 1e-15) -> float:
    """First Robin eigenvalue of the interval.

    ``F`` vanishes identically at ``alpha = 0``, so roots are sought for
    ``G = F / alpha`` instead: ``G(0) = h1 h2 l + h1 + h2 > 0`` and
    ``G(pi / l) = -(h1 + h2) < 0`` whenever ``h1 + h2 > 0``, so the first
    root lies in ``(0, pi / l)`` even when it is tiny (``~ sqrt(h / l)``
    for small ``h``).  The scan uses steps of ``pi / (64 l)`` and the
    bracket is bisected to relative width ``tol``.
    """
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    ell = iv.length
    if iv.h1 == 0 and iv.h2 == 0:
        return 0.0
    top = math.pi / ell
    grid = np.linspace(0.0, top, 65)
    G = _reduced_characteristic(grid, iv)
    change = np.flatnonzero((G[:-1] > 0) & (G[1:] <= 0))
    if change.size == 0:
        raise EigenbranchError(f"no sign change of the Robin characteristic function for {iv}")
    lo, hi = grid[change[0]], grid[change[0] + 1]
    if G[change[0] + 1] == 0:
        return float(hi * hi)
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _reduced_characteristic(mid, iv) > 0:
            lo = mid
        else:
            hi = mid
    alpha = 0.5 * (lo + hi)
    return float(alpha * alpha)


def rayleigh_oracle_1d(iv: RobinInterval, n: int) -> float:
    """Smallest eigenvalue of the P1 discretization of the 1D Rayleigh quotient.

    ``n`` nodes on ``[0, l]``; boundary terms ``h1 v(0)**2 + h2 v(l)**2``
    enter the stiffness matrix.  Converges at ``O(n**-2)``.
    """
    if n < 100:
        raise InvalidInputError("the 1D oracle needs at least 100 nodes")
    dx = iv.length / (n - 1)
    main = np.full(n, 2.0)
    main[0] = main[-1] = 1.0
    K = sp.diags([np.full(n - 1, -1.0), main, np.full(n - 1, -1.0)], [-1, 0, 1]) / dx
    K = K.tolil()
    K[0, 0] += iv.h1
    K[n - 1, n - 1] += iv.h2
    M = sp.diags([np.full(n - 1, 1.0), 2.0 * main, np.full(n - 1, 1.0)], [-1, 0, 1]) * (dx / 6.0)
    sigma = -1.0 / iv.length**2
    K, M = K.tocsc(), M.tocsc()
    v = spla.eigsh(K, k=1, M=M, sigma=sigma, which="LM", v0=np.ones(n), tol=0.0)[1][:, 0]
    # the Rayleigh quotient of the Ritz vector is accurate to its squared error
    return float(v @ (K @ v) / (v @ (M @ v)))


def extrapolated_oracle(iv: RobinInterval, n: int = 1000) -> float:
    """Two-level Richardson extrapolation of :func:`rayleigh_oracle_1d`.

    Uses ``n``, ``2n`` and ``4n`` elements and assumes
    an error expansion in even powers of the element size.
    """
    m1, m2, m4 = (rayleigh_oracle_1d(iv, k * n + 1) for k in (1, 2, 4))
    r1 = (4.0 * m2 - m1) / 3.0
    r2 = (4.0 * m4 - m2) / 3.0
    return (16.0 * r2 - r1) / 15.0


@dataclass(frozen=True, eq=False)
class ThresholdCurve:
    """Sampled ``mu1(x)`` along a branch and its infimum ``mu``."""

    x: np.ndarray
    mu1: np.ndarray
    capped: np.ndarray
    mu: float
    argmin_x: float
    z0: float

    def summary(self) -> dict:
        return {"mu": self.mu, "argmin_x": self.argmin_x, "z0": self.z0}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "mu1", "capped"])
            for x, m, c in zip(self.x, self.mu1, self.capped):
                w.writerow([f"{x:.12e}", f"{m:.12e}", int(c)])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=1)


HSpec = Union[None, float, Callable]


def _mu1_at(profile: BranchProfile, h: HSpec, x: float, ceiling: float):
    y1, d1, y2, d2 = (float(v) for v in profile.walls(x))
    ell = y2 - y1
    if ell <= 0:
        return ceiling, True
    if h is None:
        mu = math.pi**2 / ell**2
    else:
        hb = h(x, y1) if callable(h) else float(h)
        ht = h(x, y2) if callable(h) else float(h)
        mu = robin_interval_mu(RobinInterval(ell, effective_h(hb, d1), effective_h(ht, d2)))
    if mu > ceiling:
        return ceiling, True
    return mu, False


def _golden_min(f, lo, hi, rtol):
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > rtol * max(1.0, abs(lo), abs(hi)):
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def threshold_curve(
    profile: BranchProfile,
    h: HSpec = None,
    z0: float = 0.0,
    n_samples: int = 256,
    ceiling: Optional[float] = None,
) -> ThresholdCurve:
    """Sample ``mu1`` on ``[z0, a]`` and locate its infimum.

    Parameters
    ----------
    profile : BranchProfile
        Branch walls; ``x`` is the branch coordinate in ``[0, a]``.
    h : None, float or callable
        ``None`` for Dirichlet walls, a constant Robin coefficient, or
        ``h(x, y)`` evaluated at the wall point ``(x, y_i(x))``.
    z0 : float
        Left end of the range over which the infimum is taken.
    n_samples : int
        Uniform samples; the minimizing sample is refined by golden-section
        search to relative ``1e-10`` in ``x``.
    ceiling : float, optional
        Cap for values near a closed end (default ``1e6 / a**2``); capped
        samples are flagged.
    """
    a = profile.a
    if not (0.0 <= z0 < a):
        raise InvalidInputError(f"z0 must lie in [0, {a}), got {z0}")
    if n_samples < 16:
        raise InvalidInputError("n_samples must be at least 16")
    ceiling = 1e6 / a**2 if ceiling is None else float(ceiling)
    xs = np.linspace(z0, a, n_samples)
    vals, caps = zip(*(_mu1_at(profile, h, float(x), ceiling) for x in xs))
    vals, caps = np.array(vals), np.array(caps, dtype=bool)
    i = int(np.argmin(vals))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, n_samples - 1)]
    xr, vr = _golden_min(lambda x: _mu1_at(profile, h, x, ceiling)[0], lo, hi, 1e-10)
    if vr < vals[i]:
        mu, xm = vr, xr
    else:
        mu, xm = vals[i], xs[i]
    return ThresholdCurve(xs, vals, caps, float(mu), float(xm), float(z0))
