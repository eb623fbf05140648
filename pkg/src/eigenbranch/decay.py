"""Exponential-decay certification of eigenfunctions along a branch.

Slice norms ``||u||_{L2(Q(z))}`` over vertical chords and tail norms
``||u||_{L2(Omega(z))}`` over the part of the mesh right of ``z`` are
computed exactly for the P1 interpolant (``u**2`` is quadratic on every
chord piece and every clipped sub-triangle).  The certifiers compare them
with the bounds

    norm(z) <= norm(z0) * exp(-beta * sqrt(mu - lambda) * (z - z0)),

where ``beta = 1`` for branches that never widen and ``1/sqrt(2)``
otherwise (slice norms), and ``beta = 1/sqrt(2)`` for tail norms.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InsufficientDataError, InvalidInputError
from .meshing import Mesh

BETA_GENERAL = 1.0 / math.sqrt(2.0)
BETA_MONOTONE = 1.0
TOL_CERT = 0.02
SLICE_FLOOR = 1e-13
FIT_LOWER = 1e-12
FIT_UPPER_FRACTION = 0.1


def _as_field(mesh: Mesh, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_vertices,):
        raise InvalidInputError(f"expected one value per mesh vertex ({mesh.n_vertices}), got shape {u.shape}")
    return u


def _chord_pieces(mesh: Mesh, u: np.ndarray, x: float):
    """End points ``(ya, ua, yb, ub)`` of the chord through each crossed triangle."""
    P = mesh.vertices[mesh.triangles]
    U = u[mesh.triangles]
    xs = P[..., 0]
    cand = np.flatnonzero((xs.min(axis=1) <= x) & (x < xs.max(axis=1)))
    if cand.size == 0:
        return (np.empty(0),) * 4
    P, U, xs = P[cand], U[cand], xs[cand]
    ys = P[..., 1]
    j = [1, 2, 0]
    xi, xj = xs, xs[:, j]
    crosses = (xi <= x) != (xj <= x)
    den = np.where(crosses, xj - xi, 1.0)
    t = np.where(crosses, (x - xi) / den, 0.0)
    yc = ys + t * (ys[:, j] - ys)
    uc = U + t * (U[:, j] - U)
    # exactly two crossing edges per candidate triangle
    idx = np.argsort(~crosses, axis=1, kind="stable")[:, :2]
    rows = np.arange(len(cand))[:, None]
    y2, u2 = yc[rows, idx], uc[rows, idx]
    swap = y2[:, 0] > y2[:, 1]
    y2[swap] = y2[swap][:, ::-1]
    u2[swap] = u2[swap][:, ::-1]
    return y2[:, 0], u2[:, 0], y2[:, 1], u2[:, 1]


def slice_norm(mesh: Mesh, u, x: float, y_range: Optional[tuple] = None) -> float:
    """L2 norm of the P1 field ``u`` on the vertical chord at abscissa ``x``.

    ``y_range`` restricts the chord to a window (used for star branches in
    a rotated frame).  Outside the mesh extent the chord is empty and 0 is
    returned.
    """
    u = _as_field(mesh, u)
    ya, ua, yb, ub = _chord_pieces(mesh, u, float(x))
    if ya.size == 0:
        return 0.0
    if y_range is not None:
        lo, hi = y_range
        ca, cb = np.maximum(ya, lo), np.minimum(yb, hi)
        keep = cb > ca
        ya, ua, yb, ub, ca, cb = ya[keep], ua[keep], yb[keep], ub[keep], ca[keep], cb[keep]
        span = np.where(yb > ya, yb - ya, 1.0)
        ua, ub = ua + (ca - ya) / span * (ub - ua), ua + (cb - ya) / span * (ub - ua)
        ya, yb = ca, cb
    total = np.sum((yb - ya) / 3.0 * (ua * ua + ua * ub + ub * ub))
    return float(math.sqrt(max(total, 0.0)))


def _tri_sq_integral(p, uu):
    """Exact integral of ``u**2`` over triangles ``p`` (T, 3, 2) with vertex values ``uu`` (T, 3)."""
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    s = (uu * uu).sum(axis=1) + uu[:, 0] * uu[:, 1] + uu[:, 1] * uu[:, 2] + uu[:, 2] * uu[:, 0]
    return area / 6.0 * s


def _clip(poly, a, b, c):
    """Sutherland-Hodgman clip of ``[(x, y, u), ...]`` to ``a x + b y >= c``."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp = a * p[0] + b * p[1] - c
        fq = a * q[0] + b * q[1] - c
        if fp >= 0:
            out.append(p)
        if (fp >= 0) != (fq >= 0):
            t = fp / (fp - fq)
            out.append(tuple(pi + t * (qi - pi) for pi, qi in zip(p, q)))
    return out


def tail_norm(mesh: Mesh, u, x0: float, y_range: Optional[tuple] = None) -> float:
    """L2 norm of ``u`` over the part of the mesh with ``x >= x0``.

    Triangles entirely inside the region use the exact P1 formula;
    triangles cut by ``x = x0`` (or by the ``y_range`` window) are clipped
    and the resulting polygon is fan-triangulated.
    """
    u = _as_field(mesh, u)
    P = mesh.vertices[mesh.triangles]
    U = u[mesh.triangles]
    planes = [(1.0, 0.0, float(x0))]
    if y_range is not None:
        planes += [(0.0, 1.0, float(y_range[0])), (0.0, -1.0, -float(y_range[1]))]
    inside = np.ones(len(P), dtype=bool)
    outside = np.zeros(len(P), dtype=bool)
    for a, b, c in planes:
        f = a * P[..., 0] + b * P[..., 1] - c
        inside &= np.all(f >= 0, axis=1)
        outside |= np.all(f <= 0, axis=1)
    total = _tri_sq_integral(P[inside], U[inside]).sum()
    for k in np.flatnonzero(~inside & ~outside):
        poly = [(P[k, i, 0], P[k, i, 1], U[k, i]) for i in range(3)]
        for a, b, c in planes:
            poly = _clip(poly, a, b, c)
            if len(poly) < 3:
                break
        if len(poly) < 3:
            continue
        arr = np.array(poly)
        fan = np.array([[0, i, i + 1] for i in range(1, len(poly) - 1)])
        total += _tri_sq_integral(arr[fan][..., :2], arr[fan][..., 2]).sum()
    return float(math.sqrt(max(total, 0.0)))


def fit_decay_rate(z_grid, norms, min_points: int = 8) -> float:
    """Magnitude of the least-squares slope of ``log(norms)`` against ``z``.

    Only slices with ``1e-12 <= norm <= 0.1 * max(norms)`` enter the fit.
    """
    z = np.asarray(z_grid, dtype=float)
    s = np.asarray(norms, dtype=float)
    if np.count_nonzero(s > SLICE_FLOOR) < min_points:
        raise InsufficientDataError(f"fewer than {min_points} slices above the noise floor {SLICE_FLOOR:g}")
    window = (s >= FIT_LOWER) & (s <= FIT_UPPER_FRACTION * s.max())
    if np.count_nonzero(window) < 2:
        raise InsufficientDataError("fewer than two slices inside the fit window")
    slope = np.polyfit(z[window], np.log(s[window]), 1)[0]
    return float(abs(slope))


@dataclass(frozen=True, eq=False)
class DecayReport:
    """Outcome of a decay certification.

    ``measured`` is the norm family the bound applies to (slice norms for
    the cross-sectional estimate, tail norms for the subbranch estimate);
    ``bound`` and ``bound_margins`` are ``None`` when not applicable.
    """

    kind: str
    z_grid: np.ndarray
    slice_norms: np.ndarray
    tail_norms: np.ndarray
    mu: float
    lam: float
    z0: float
    beta: float
    tol_cert: float
    bound: Optional[np.ndarray]
    bound_margins: Optional[np.ndarray]
    fitted_rate: Optional[float]
    verdict: str
    checked: np.ndarray = field(default=None)

    @property
    def measured(self) -> np.ndarray:
        return self.slice_norms if self.kind == "slice" else self.tail_norms

    @property
    def predicted_rate(self) -> Optional[float]:
        if self.lam >= self.mu:
            return None
        return self.beta * math.sqrt(self.mu - self.lam)

    def to_dict(self) -> dict:
        def arr(v):
            return None if v is None else [float(f"{x:.12e}") for x in v]

        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "mu": self.mu,
            "lambda": self.lam,
            "z0": self.z0,
            "beta": self.beta,
            "tol_cert": self.tol_cert,
            "predicted_rate": self.predicted_rate,
            "fitted_rate": self.fitted_rate,
            "z_grid": arr(self.z_grid),
            "slice_norms": arr(self.slice_norms),
            "tail_norms": arr(self.tail_norms),
            "bound": arr(self.bound),
            "bound_margins": arr(self.bound_margins),
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "slice_norm", "tail_norm", "bound", "margin"])
            for i, z in enumerate(self.z_grid):
                b = "" if self.bound is None else f"{self.bound[i]:.12e}"
                m = "" if self.bound_margins is None else f"{self.bound_margins[i]:.12e}"
                w.writerow([f"{z:.12e}", f"{self.slice_norms[i]:.12e}", f"{self.tail_norms[i]:.12e}", b, m])


def _grid(mesh, z0, z_grid, n_grid, z_end):
    if z_grid is not None:
        return np.asarray(z_grid, dtype=float)
    if z_end is None:
        z_end = mesh.extent[1]
    if not z0 < z_end:
        raise InvalidInputError(f"z0={z0} must lie left of the branch end {z_end}")
    return np.linspace(z0, z_end, n_grid)


def _certify(kind, mesh, u, lam, mu, z0, beta, z_grid, n_grid, tol_cert, y_range, z_end) -> DecayReport:
    u = _as_field(mesh, u)
    z = _grid(mesh, z0, z_grid, n_grid, z_end)
    slices = np.array([slice_norm(mesh, u, zi, y_range) for zi in z])
    tails = np.array([tail_norm(mesh, u, zi, y_range) for zi in z])
    try:
        rate = fit_decay_rate(z, slices)
    except InsufficientDataError:
        rate = None
    common = dict(
        kind=kind, z_grid=z, slice_norms=slices, tail_norms=tails, mu=float(mu), lam=float(lam),
        z0=float(z0), beta=beta, tol_cert=tol_cert, fitted_rate=rate,
    )
    if lam >= mu:
        return DecayReport(bound=None, bound_margins=None, verdict="not_applicable",
                           checked=np.zeros(len(z), dtype=bool), **common)
    measured = slices if kind == "slice" else tails
    ref = slice_norm(mesh, u, z0, y_range) if kind == "slice" else tail_norm(mesh, u, z0, y_range)
    bound = ref * np.exp(-beta * math.sqrt(mu - lam) * (z - z0))
    checked = (z > z0) & (measured >= SLICE_FLOOR)
    ok = measured[checked] <= bound[checked] * (1.0 + tol_cert)
    verdict = "pass" if np.all(ok) else "fail"
    return DecayReport(bound=bound, bound_margins=bound - measured, verdict=verdict, checked=checked, **common)


def certify_theorem1(
    mesh: Mesh, u, lam: float, mu: float, z0: float, monotone: bool = False,
    z_grid=None, n_grid: int = 64, tol_cert: float = TOL_CERT,
    y_range: Optional[tuple] = None, z_end: Optional[float] = None,
) -> DecayReport:
    """Check the cross-sectional (slice-norm) decay bound.

    ``beta = 1`` when ``monotone`` (branch walls never diverge beyond
    ``z0``), else ``1/sqrt(2)``.  The verdict is ``pass`` when every
    slice ``z > z0`` above the noise floor ``1e-13`` obeys the bound with
    a multiplicative slack ``1 + tol_cert``; ``not_applicable`` when
    ``lam >= mu``.
    """
    beta = BETA_MONOTONE if monotone else BETA_GENERAL
    return _certify("slice", mesh, u, lam, mu, z0, beta, z_grid, n_grid, tol_cert, y_range, z_end)


def certify_theorem2(
    mesh: Mesh, u, lam: float, mu: float, x0: float,
    z_grid=None, n_grid: int = 64, tol_cert: float = TOL_CERT,
    y_range: Optional[tuple] = None, z_end: Optional[float] = None,
) -> DecayReport:
    """Check the subbranch (tail-norm) decay bound with ``beta = 1/sqrt(2)``."""
    return _certify("tail", mesh, u, lam, mu, x0, BETA_GENERAL, z_grid, n_grid, tol_cert, y_range, z_end)


@dataclass(frozen=True, eq=False)
class MaslovReport:
    """Discrete check of ``I'' >= 2 (mu - lambda) I`` for the tail energy ``I``."""

    x: np.ndarray
    I: np.ndarray
    I_second: np.ndarray
    rhs: np.ndarray
    tolerance: np.ndarray
    satisfied: np.ndarray
    fraction: float
    passed: bool
    I_prime_negative: bool
    endpoint: dict

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "passed": self.passed,
            "I_prime_negative": self.I_prime_negative,
            "endpoint": self.endpoint,
            "x": self.x.tolist(),
            "I": self.I.tolist(),
        }


def maslov_check(
    mesh: Mesh, u, lam: float, mu: float, x_grid,
    closed_end: bool = True, pass_fraction: float = 0.95,
    rel_tol: float = 1e-3, y_range: Optional[tuple] = None,
) -> MaslovReport:
    """Check the second-order differential inequality for ``I(x) = tail_norm(x)**2``.

    ``I''`` is a centred second difference on the uniform ``x_grid``.  An
    interior point passes when ``I'' >= 2 (mu - lam) I - tol`` with
    ``tol = rel_tol * max(I)`` plus the truncation estimate
    ``|d4 I| / (12 dx**2)`` from fourth differences.  When the branch is
    closed at the last grid point, ``I(a)`` and ``I'(a)`` must vanish to
    ``1e-10`` relative to ``I(x0)``.
    """
    x = np.asarray(x_grid, dtype=float)
    if x.size < 8:
        raise InvalidInputError("the Maslov check needs at least 8 grid points")
    dx = np.diff(x)
    if not np.allclose(dx, dx[0], rtol=1e-9) or dx[0] <= 0:
        raise InvalidInputError("x_grid must be uniform and increasing")
    if lam >= mu:
        raise InvalidInputError("the inequality is only meaningful for lambda < mu")
    h = dx[0]
    u = _as_field(mesh, u)
    I = np.array([tail_norm(mesh, u, xi, y_range) ** 2 for xi in x])
    I2 = (I[2:] - 2.0 * I[1:-1] + I[:-2]) / h**2
    rhs = 2.0 * (mu - lam) * I[1:-1]
    d4 = np.abs(I[4:] - 4 * I[3:-1] + 6 * I[2:-2] - 4 * I[1:-3] + I[:-4])
    d4 = np.concatenate([[d4[0]], d4, [d4[-1]]])
    tol = rel_tol * I.max() + d4 / (12.0 * h**2)
    ok = I2 >= rhs - tol
    fraction = float(ok.mean())
    dI = (I[2:] - I[:-2]) / (2.0 * h)
    endpoint = {}
    if closed_end:
        eps = 1e-10 * I[0]
        slope_end = -slice_norm(mesh, u, x[-1], y_range) ** 2
        endpoint = {
            "I_end": float(I[-1]),
            "I_prime_end": float(slope_end),
            "I_end_ok": bool(abs(I[-1]) <= eps),
            "I_prime_end_ok": bool(abs(slope_end) <= eps / (x[-1] - x[0])),
        }
    passed = fraction >= pass_fraction and all(v for k, v in endpoint.items() if k.endswith("_ok"))
    return MaslovReport(x, I, I2, rhs, tol, ok, fraction, bool(passed), bool(np.all(dI < 0)), endpoint)
