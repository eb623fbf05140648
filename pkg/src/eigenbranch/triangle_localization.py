"""Analytic localization criterion for right triangles.

A right triangle with legs ``d`` (vertical) and ``c`` (horizontal) is cut
at ``x = a`` into a trapeze and a small triangle; the inscribed rectangle
has sides ``a x b``.  With ``zeta = d/b - 1`` and ``kappa = a/b`` the
trial function ``y (y - d + (d - b) x / a) sin(pi x / a)`` on the trapeze
has Rayleigh quotient below ``pi**2 / b**2`` exactly when

    kappa**2 * P_A(zeta) - P_B(zeta) > 0,

where ``P_A`` and ``P_B`` are the quintics below.  Since ``pi**2 / b**2``
is the threshold of the small triangle, this certifies exponential decay
of the first eigenfunction there.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

_P2 = math.pi**2
_P4 = math.pi**4

#: Coefficients ``A_0 .. A_5`` of ``P_A`` (ascending powers).
A_COEFFS = np.array([
    12.0 * (_P4 - 10.0 * _P2),
    30.0 * (_P4 - 6.0 * _P2),
    20.0 * (2.0 * _P4 - 9.0 * _P2 + 9.0),
    30.0 * (_P4 - 4.0 * _P2 + 3.0),
    6.0 * (2.0 * _P4 - 10.0 * _P2 + 15.0),
    2.0 * _P4 - 15.0 * _P2 + 45.0,
])

#: Coefficients ``B_0 .. B_5`` of ``P_B`` (ascending powers).
B_COEFFS = np.array([
    12.0 * _P4,
    30.0 * _P4,
    20.0 * (2.0 * _P4 + 3.0 * _P2),
    30.0 * (_P4 + 3.0 * _P2),
    6.0 * (2.0 * _P4 + 10.0 * _P2 - 15.0),
    2.0 * _P4 + 15.0 * _P2 - 45.0,
])


def _horner(coeffs, z):
    out = np.zeros_like(np.asarray(z, dtype=float))
    for c in coeffs[::-1]:
        out = out * z + c
    return out if out.ndim else float(out)


def pa(zeta):
    return _horner(A_COEFFS, zeta)


def pb(zeta):
    return _horner(B_COEFFS, zeta)


def _bisect(f, lo, hi, tol):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def zeta0(tol: float = 1e-14) -> float:
    """The unique root of ``P_A`` in ``(0, 1)``; ``P_A > 0`` exactly beyond it."""
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    return _bisect(pa, 0.0, 1.0, tol)


ZETA0 = zeta0()


def q_value(zeta: float, a: float, b: float) -> float:
    """``pi**2/b**2 (v, v) - (grad v, grad v)`` for the trial function ``v``."""
    if not (a >= b > 0) or zeta <= 0:
        raise InvalidInputError("need a >= b > 0 and zeta > 0")
    kappa = a / b
    return b**5 / (720.0 * _P2 * a) * (kappa**2 * pa(zeta) - pb(zeta))


def localized_predicate(a: float, b: float, d: float) -> bool:
    """Sufficient (not necessary) condition for decay in the small triangle."""
    if not (a >= b > 0):
        raise InvalidInputError("need a >= b > 0")
    if d <= b:
        raise InvalidInputError(f"leg d={d} must exceed b={b}")
    zeta = d / b - 1.0
    return bool(zeta > ZETA0 and (a / b) ** 2 > pb(zeta) / pa(zeta))


def f(zeta: float) -> float:
    """``sqrt(P_B) / (sqrt(P_A) zeta)``, strictly decreasing on ``(zeta0, inf)``.

    The localization condition is ``c / d > f(zeta)``.
    """
    zeta = np.asarray(zeta, dtype=float)
    if np.any(zeta <= ZETA0):
        raise InvalidInputError(f"f is defined only for zeta > zeta0 = {ZETA0:.6g}")
    out = np.sqrt(pb(zeta)) / (np.sqrt(pa(zeta)) * zeta)
    return out if out.ndim else float(out)


def f_inverse(r: float, tol: float = 1e-13) -> float:
    """Solve ``f(zeta) = r`` by bisection, doubling the upper bracket from 10 up to 1e6."""
    if r <= 0:
        raise InvalidInputError("f_inverse needs r > 0")
    lo = ZETA0 * (1.0 + 1e-9)
    hi = 10.0
    while f(hi) > r:
        hi *= 2.0
        if hi > 1e6:
            raise InvalidInputError(f"f_inverse({r}) not bracketed below 1e6")
    return _bisect(lambda z: f(z) - r, lo, hi, tol)


def inscribed_rectangle(c: float, d: float, zeta: float) -> tuple:
    """Sides ``(a, b)`` of the rectangle inscribed in the ``c x d`` right triangle."""
    if c <= 0 or d <= 0 or zeta <= 0:
        raise InvalidInputError("need c, d, zeta > 0")
    return c * zeta / (zeta + 1.0), d / (zeta + 1.0)


@dataclass(frozen=True, eq=False)
class Diagram:
    """Sign of ``kappa**2 P_A - P_B`` on a ``(zeta, kappa)`` grid.

    ``localized[i, j]`` refers to ``kappas[i]`` and ``zetas[j]``;
    ``intervals[i]`` lists ``(zeta_lo, zeta_hi)`` runs of localized cells
    in row ``i`` with end points refined by bisection.
    """

    zetas: np.ndarray
    kappas: np.ndarray
    localized: np.ndarray
    intervals: tuple

    def row(self, kappa: float) -> list:
        i = int(np.argmin(np.abs(self.kappas - kappa)))
        return list(self.intervals[i])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["zeta", "kappa", "localized"])
            for i, k in enumerate(self.kappas):
                for j, z in enumerate(self.zetas):
                    w.writerow([f"{z:.12e}", f"{k:.12e}", int(self.localized[i, j])])

    def summary(self) -> dict:
        return {
            "zeta0": ZETA0,
            "rows": [
                {"kappa": float(k), "intervals": [list(iv) for iv in ivs]}
                for k, ivs in zip(self.kappas, self.intervals)
            ],
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=1)


def diagram(zeta_range=(1e-3, 10.0), kappa_range=(1.0, 10.0), n_zeta=400, n_kappa=91) -> Diagram:
    """Localization region in the ``(zeta, kappa)`` plane."""
    (z_lo, z_hi), (k_lo, k_hi) = zeta_range, kappa_range
    if not (0 < z_lo < z_hi) or not (0 < k_lo <= k_hi) or n_zeta < 2 or n_kappa < 1:
        raise InvalidInputError("ranges must be positive and increasing with at least two zeta samples")
    zetas = np.linspace(z_lo, z_hi, n_zeta)
    kappas = np.linspace(k_lo, k_hi, n_kappa)
    sign = kappas[:, None] ** 2 * pa(zetas)[None, :] - pb(zetas)[None, :]
    loc = sign > 0
    intervals = []
    for i, k in enumerate(kappas):
        g = lambda z, k=k: k * k * pa(z) - pb(z)
        runs = []
        row = loc[i]
        j = 0
        while j < n_zeta:
            if not row[j]:
                j += 1
                continue
            start = j
            while j < n_zeta and row[j]:
                j += 1
            lo = zetas[start] if start == 0 else _bisect(g, zetas[start - 1], zetas[start], 1e-12)
            hi = zetas[j - 1] if j == n_zeta else _bisect(g, zetas[j - 1], zetas[j], 1e-12)
            runs.append((float(lo), float(hi)))
        intervals.append(tuple(runs))
    return Diagram(zetas, kappas, loc, tuple(intervals))
