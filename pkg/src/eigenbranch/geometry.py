"""Planar branched domains: builders, cross-sections and simple geometric
quantities (inradius, wall monotonicity).

Every domain is a simple, counterclockwise polyline with one boundary
condition per edge.  A domain may carry a split abscissa ``split_x``
separating the basic part (``x < split_x``) from a branch (``x > split_x``)
and a :class:`BranchProfile` describing the branch walls as graphs over
the branch axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import shapely
from scipy.interpolate import CubicHermiteSpline
from scipy.special import jn_zeros

from .errors import GeometryError, InvalidInputError

#: First positive zero of the Bessel function J0.
J0_FIRST_ZERO = float(jn_zeros(0, 1)[0])

#: Sagitta tolerance used to choose the number of samples on curved walls.
DEFAULT_TOL_GEOM = 1e-4


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary marker of one polyline edge.

    ``kind`` is ``"dirichlet"`` or ``"robin"``; for Robin edges ``h`` is the
    coefficient in ``du/dn + h u = 0`` (``h = 0`` is Neumann).
    """

    kind: str
    h: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "robin"):
            raise InvalidInputError(f"unknown boundary condition kind {self.kind!r}")
        if self.kind == "dirichlet" and self.h != 0.0:
            object.__setattr__(self, "h", 0.0)

    @property
    def is_dirichlet(self) -> bool:
        return self.kind == "dirichlet"

    def to_text(self) -> str:
        return "dirichlet" if self.is_dirichlet else f"robin:{self.h!r}"

    @classmethod
    def from_text(cls, text: str) -> "BoundaryCondition":
        text = text.strip()
        if text == "dirichlet":
            return DIRICHLET
        if text.startswith("robin:"):
            return cls("robin", float(text[6:]))
        raise InvalidInputError(f"cannot parse boundary marker {text!r}")

    @classmethod
    def from_config(cls, cfg: Optional[dict]) -> "BoundaryCondition":
        if cfg is None:
            return DIRICHLET
        kind = cfg.get("type", "dirichlet")
        if kind == "dirichlet":
            return DIRICHLET
        if kind in ("robin", "neumann"):
            return cls("robin", float(cfg.get("h", 0.0)))
        raise InvalidInputError(f"unknown boundary condition type {kind!r}")


DIRICHLET = BoundaryCondition("dirichlet")


def robin(h: float) -> BoundaryCondition:
    return BoundaryCondition("robin", float(h))


@dataclass(frozen=True)
class CrossSection:
    """Vertical chord ``{x} x intervals`` of a domain."""

    x: float
    intervals: tuple

    @property
    def length(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))


@dataclass(frozen=True, eq=False)
class BranchProfile:
    """Branch walls ``y1(t) < y < y2(t)`` for ``0 <= t <= a``.

    ``t`` is measured along the branch axis from ``origin`` (the abscissa
    of the branch mouth in the domain's frame, or in the rotated frame of
    a star branch).  Samples live on a uniform grid; evaluation between
    samples uses cubic Hermite interpolation through values and slopes.
    """

    a: float
    t: np.ndarray
    y1: np.ndarray
    dy1: np.ndarray
    y2: np.ndarray
    dy2: np.ndarray
    closed_end: bool
    origin: float = 0.0

    def __post_init__(self):
        arrays = [np.asarray(v, dtype=float) for v in (self.t, self.y1, self.dy1, self.y2, self.dy2)]
        n = arrays[0].size
        if self.a <= 0:
            raise GeometryError("branch length must be positive")
        if n < 3 or any(v.shape != (n,) for v in arrays):
            raise GeometryError("branch profile needs at least 3 samples per array of equal length")
        dt = np.diff(arrays[0])
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0) or dt[0] <= 0:
            raise GeometryError("branch profile samples must lie on a uniform increasing grid")
        for name, v in zip(("t", "y1", "dy1", "y2", "dy2"), arrays):
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        t, y1, y2 = self.t, self.y1, self.y2
        gap = y2 - y1
        inner = gap[:-1] if self.closed_end else gap
        if np.any(inner <= 0):
            raise GeometryError("branch walls must satisfy y1 < y2 inside the branch")
        if self.closed_end and abs(gap[-1]) > 1e-9 * (1.0 + np.abs(y2).max()):
            raise GeometryError("closed branch requires y1(a) == y2(a)")
        for y, dy in ((y1, self.dy1), (y2, self.dy2)):
            fd = (y[2:] - y[:-2]) / (t[2:] - t[:-2])
            # mean value theorem: fd equals y' somewhere in the two-cell window
            spread = np.maximum(np.abs(dy[2:] - dy[1:-1]), np.abs(dy[:-2] - dy[1:-1]))
            if np.any(np.abs(fd - dy[1:-1]) > 1.5 * spread + 1e-9 * (1.0 + np.abs(dy).max())):
                raise GeometryError("stored wall slopes disagree with finite differences of the samples")

    @cached_property
    def _splines(self):
        return (CubicHermiteSpline(self.t, self.y1, self.dy1), CubicHermiteSpline(self.t, self.y2, self.dy2))

    def walls(self, t):
        """Return ``(y1, y1', y2, y2')`` evaluated at branch coordinate ``t``."""
        s1, s2 = self._splines
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.a)
        return s1(t), s1(t, 1), s2(t), s2(t, 1)

    def width(self, t):
        y1, _, y2, _ = self.walls(t)
        return np.maximum(y2 - y1, 0.0)

    @classmethod
    def from_functions(cls, a, y1, dy1, y2, dy2, n, closed_end, origin=0.0):
        t = np.linspace(0.0, a, n)
        return cls(a, t, y1(t), dy1(t), y2(t), dy2(t), closed_end, origin)

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "origin": self.origin,
            "closed_end": self.closed_end,
            "t": self.t.tolist(),
            "y1": self.y1.tolist(),
            "dy1": self.dy1.tolist(),
            "y2": self.y2.tolist(),
            "dy2": self.dy2.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BranchProfile":
        return cls(
            float(d["a"]), d["t"], d["y1"], d["dy1"], d["y2"], d["dy2"],
            bool(d["closed_end"]), float(d.get("origin", 0.0)),
        )


@dataclass(frozen=True, eq=False)
class PlanarDomain:
    """Simple polygon with per-edge boundary markers.

    Edge ``i`` joins ``boundary[i]`` and ``boundary[(i + 1) % n]`` and
    carries ``markers[i]``.
    """

    boundary: np.ndarray
    markers: tuple
    split_x: Optional[float] = None
    branch_profile: Optional[BranchProfile] = None
    family: str = "polygon"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.array(self.boundary, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise GeometryError("boundary must be a list of at least three (x, y) vertices")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("boundary vertices must be finite")
        if np.allclose(pts[0], pts[-1]) and len(pts) > 3:
            pts = pts[:-1]
        pts.setflags(write=False)
        object.__setattr__(self, "boundary", pts)
        markers = tuple(self.markers)
        if len(markers) == 1:
            markers = markers * len(pts)
        if len(markers) != len(pts):
            raise GeometryError(f"expected {len(pts)} edge markers, got {len(markers)}")
        if not all(isinstance(m, BoundaryCondition) for m in markers):
            raise GeometryError("every edge needs exactly one BoundaryCondition marker")
        object.__setattr__(self, "markers", markers)
        if not shapely.LinearRing(pts).is_simple:
            raise GeometryError("boundary polyline self-intersects", )
        if self.signed_area <= 0:
            raise GeometryError("boundary must be positively (counterclockwise) oriented")
        if self.split_x is not None:
            object.__setattr__(self, "split_x", float(self.split_x))
            if len(cross_section(self, self.split_x).intervals) != 1:
                raise GeometryError(
                    f"vertical line x={self.split_x} must cross the boundary exactly twice"
                )

    @property
    def n_edges(self) -> int:
        return len(self.boundary)

    @property
    def signed_area(self) -> float:
        x, y = self.boundary[:, 0], self.boundary[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    @property
    def area(self) -> float:
        return abs(self.signed_area)

    @property
    def extent(self) -> tuple:
        """``(z1, z2)``: the range of abscissas with nonempty cross-sections."""
        return float(self.boundary[:, 0].min()), float(self.boundary[:, 0].max())

    @property
    def diameter(self) -> float:
        lo, hi = self.boundary.min(axis=0), self.boundary.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    @cached_property
    def polygon(self):
        return shapely.Polygon(self.boundary)

    def edges(self):
        """Yield ``(p, q, marker)`` for every boundary edge."""
        n = len(self.boundary)
        for i in range(n):
            yield self.boundary[i], self.boundary[(i + 1) % n], self.markers[i]

    def with_markers(self, bc: BoundaryCondition) -> "PlanarDomain":
        return PlanarDomain(self.boundary, (bc,), self.split_x, self.branch_profile, self.family, dict(self.params))

    def rotated(self, angle: float) -> "PlanarDomain":
        """Copy rotated by ``angle`` radians about the origin (split and profile dropped)."""
        c, s = math.cos(angle), math.sin(angle)
        rot = self.boundary @ np.array([[c, s], [-s, c]])
        return PlanarDomain(rot, self.markers, None, None, self.family, dict(self.params))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.params,
            "vertices": self.boundary.tolist(),
            "markers": [m.to_text() for m in self.markers],
            "split_x": self.split_x,
            "branch_profile": None if self.branch_profile is None else self.branch_profile.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "PlanarDomain":
        prof = d.get("branch_profile")
        return cls(
            np.asarray(d["vertices"], dtype=float),
            tuple(BoundaryCondition.from_text(m) for m in d["markers"]),
            d.get("split_x"),
            None if prof is None else BranchProfile.from_dict(prof),
            d.get("family", "polygon"),
            dict(d.get("params", {})),
        )


def _check_positive(**kw):
    for name, value in kw.items():
        if not (value > 0 and math.isfinite(value)):
            raise GeometryError(f"{name} must be positive, got {value}")


def recommended_samples(a: float, max_curvature: float = 1.0, tol_geom: float = DEFAULT_TOL_GEOM) -> int:
    """Samples per wall so the polyline sagitta stays below ``tol_geom``."""
    return max(16, int(math.ceil(a * math.sqrt(max_curvature / (8.0 * tol_geom)))))


def build_sine_branch_domain(
    L: float,
    a: float,
    b: float,
    n_samples: Optional[int] = None,
    bc: BoundaryCondition = DIRICHLET,
    wall: Callable = np.sin,
    wall_slope: Callable = np.cos,
) -> PlanarDomain:
    """Square of side ``L`` with a constant-width branch ``f(x) < y < f(x) + b``.

    The square occupies ``-L < x < 0`` and is vertically centred on the
    branch mouth ``[f(0), f(0) + b]``; the branch runs over ``0 < x < a``
    and is closed by a vertical segment at ``x = a``.  ``split_x = 0``.

    Parameters
    ----------
    L, a, b : float
        Square side, branch length and branch width.
    n_samples : int, optional
        Points per curved wall; defaults to :func:`recommended_samples`.
    bc : BoundaryCondition
        Marker applied to every edge.
    wall, wall_slope : callable
        Lower wall ``f`` and its derivative (default ``sin``/``cos``).
    """
    _check_positive(L=L, a=a, b=b)
    if b > L:
        raise GeometryError(f"branch mouth wider than square side (b={b} > L={L})")
    if n_samples is None:
        n_samples = recommended_samples(a)
    if n_samples < 16:
        raise GeometryError("n_samples must be at least 16")
    t = np.linspace(0.0, a, int(n_samples))
    lo = wall(t)
    f0 = float(lo[0])
    y_lo = f0 + 0.5 * (b - L)
    y_hi = f0 + 0.5 * (b + L)
    pts = [(-L, y_lo), (0.0, y_lo)]
    pts += list(zip(t, lo))
    pts += list(zip(t[::-1], lo[::-1] + b))
    pts += [(0.0, y_hi), (-L, y_hi)]
    pts = _dedupe(pts)
    profile = BranchProfile.from_functions(
        a, wall, wall_slope, lambda x: wall(x) + b, wall_slope, int(n_samples), closed_end=False
    )
    return PlanarDomain(
        pts, (bc,), 0.0, profile, "sine",
        {"L": L, "a": a, "b": b, "n_samples": int(n_samples)},
    )


def _dedupe(pts, tol=1e-14):
    out = []
    for p in pts:
        if not out or math.hypot(p[0] - out[-1][0], p[1] - out[-1][1]) > tol:
            out.append((float(p[0]), float(p[1])))
    if math.hypot(out[0][0] - out[-1][0], out[0][1] - out[-1][1]) <= tol:
        out.pop()
    return np.array(out)


def build_star_domain(
    n_branches: int,
    r_disk: float = 1.0,
    l_branch: float = 1.5,
    w_base: float = 0.08,
    n_disk_samples: int = 1024,
    bc: BoundaryCondition = DIRICHLET,
) -> PlanarDomain:
    """Disk of radius ``r_disk`` with ``n_branches`` isosceles triangles.

    Branch ``k`` points along angle ``2 pi k / n_branches``; its base is a
    chord of length ``w_base`` on the circle and its apex lies at distance
    ``r_disk + l_branch`` from the centre.  ``branch_profile`` describes
    branch 0 in its own frame (axis along ``+x``); by symmetry it applies
    to every branch after rotation.
    """
    if n_branches < 3:
        raise GeometryError("a star domain needs at least 3 branches")
    _check_positive(r_disk=r_disk, l_branch=l_branch, w_base=w_base)
    if w_base >= 2 * r_disk:
        raise GeometryError("branch base wider than the disk")
    half = math.asin(w_base / (2 * r_disk))
    if n_branches * 2 * half >= 2 * math.pi:
        raise GeometryError(
            f"branch bases overlap: {n_branches} chords of width {w_base} do not fit on a circle of radius {r_disk}"
        )
    theta = 2 * math.pi * np.arange(n_branches) / n_branches
    sample_ang = 2 * math.pi * np.arange(n_disk_samples) / n_disk_samples
    gap = 0.3 * 2 * math.pi / n_disk_samples
    r_tip = r_disk + l_branch
    pts = []
    for k, th in enumerate(theta):
        nxt = theta[k + 1] if k + 1 < n_branches else 2 * math.pi
        pts.append((r_disk * math.cos(th - half), r_disk * math.sin(th - half)))
        pts.append((r_tip * math.cos(th), r_tip * math.sin(th)))
        pts.append((r_disk * math.cos(th + half), r_disk * math.sin(th + half)))
        arc = sample_ang[(sample_ang > th + half + gap) & (sample_ang < nxt - half - gap)]
        pts += [(r_disk * math.cos(s), r_disk * math.sin(s)) for s in arc]
    # start of branch 0 is at a negative angle; rotate list so it stays CCW
    base = math.sqrt(r_disk**2 - (w_base / 2) ** 2)
    a = r_tip - base
    hw = w_base / 2
    profile = BranchProfile.from_functions(
        a,
        lambda t: -hw * (1 - t / a), lambda t: np.full_like(t, hw / a),
        lambda t: hw * (1 - t / a), lambda t: np.full_like(t, -hw / a),
        65, closed_end=True, origin=base,
    )
    return PlanarDomain(
        np.array(pts), (bc,), None, profile, "star",
        {
            "n_branches": n_branches, "r_disk": r_disk, "l_branch": l_branch,
            "w_base": w_base, "n_disk_samples": n_disk_samples,
            "branch_angles": theta.tolist(),
        },
    )


def right_triangle_leg(a: float, b: float, d: float) -> float:
    """Horizontal leg ``c = a d / (d - b)`` of the triangle through ``(a, b)``."""
    return a * d / (d - b)


def build_right_triangle(a: float, b: float, d: float, bc: BoundaryCondition = DIRICHLET) -> PlanarDomain:
    """Right triangle with legs ``d`` (on ``x = 0``) and ``c`` (on ``y = 0``).

    The hypotenuse passes through ``(a, b)`` so the rectangle ``a x b`` is
    inscribed; ``split_x = a`` separates the trapeze from the small
    triangle that serves as the branch.
    """
    _check_positive(a=a, b=b, d=d)
    if a < b:
        raise GeometryError(f"rectangle must satisfy a >= b (a={a}, b={b})")
    if d <= b:
        raise GeometryError(f"leg d={d} must exceed b={b} for the hypotenuse to pass above the rectangle")
    c = right_triangle_leg(a, b, d)
    ab = c - a
    profile = BranchProfile.from_functions(
        ab,
        lambda t: np.zeros_like(t), lambda t: np.zeros_like(t),
        lambda t: b * (1 - t / ab), lambda t: np.full_like(t, -b / ab),
        65, closed_end=True, origin=a,
    )
    return PlanarDomain(
        np.array([(0.0, 0.0), (c, 0.0), (0.0, d)]), (bc,), a, profile, "triangle",
        {"a": a, "b": b, "d": d, "c": c},
    )


#: Representative elongated hexagon; only its qualitative shape matters.
DEFAULT_HEXAGON = ((0.0, 0.0), (3.0, 0.0), (9.0, 0.15), (9.4, 0.45), (3.0, 1.5), (0.0, 1.5))
DEFAULT_HEXAGON_SPLIT = 3.5


def build_elongated_polygon(
    vertices: Sequence = DEFAULT_HEXAGON,
    split_x: Optional[float] = DEFAULT_HEXAGON_SPLIT,
    bc: BoundaryCondition = DIRICHLET,
) -> PlanarDomain:
    """Arbitrary simple polygon; clockwise input is reoriented."""
    pts = np.asarray(vertices, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise GeometryError("polygon needs at least three (x, y) vertices")
    if not shapely.LinearRing(pts).is_simple:
        raise GeometryError("polygon vertices self-intersect")
    x, y = pts[:, 0], pts[:, 1]
    if np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y) < 0:
        pts = pts[::-1]
    return PlanarDomain(pts, (bc,), split_x, None, "polygon", {"vertices": pts.tolist(), "split_x": split_x})


def cross_section(dom: PlanarDomain, x: float) -> CrossSection:
    """Intervals of the vertical chord of ``dom`` at abscissa ``x``.

    Vertices lying exactly on the line are attributed to the right side,
    so at a vertical boundary edge the section is its right-hand limit.
    """
    p = dom.boundary
    q = np.roll(p, -1, axis=0)
    crosses = (p[:, 0] <= x) != (q[:, 0] <= x)
    if not np.any(crosses):
        return CrossSection(float(x), ())
    p, q = p[crosses], q[crosses]
    ys = p[:, 1] + (x - p[:, 0]) * (q[:, 1] - p[:, 1]) / (q[:, 0] - p[:, 0])
    ys.sort()
    intervals = tuple((float(lo), float(hi)) for lo, hi in zip(ys[0::2], ys[1::2]) if hi > lo)
    return CrossSection(float(x), intervals)


def _distance_inside(dom: PlanarDomain, xs, ys):
    inside = shapely.contains_xy(dom.polygon, xs, ys)
    d = np.zeros(xs.shape)
    if np.any(inside):
        d[inside] = shapely.distance(shapely.points(xs[inside], ys[inside]), dom.polygon.exterior)
    return d


def inradius(dom: PlanarDomain, tol: float = 1e-4, n_starts: int = 12) -> float:
    """Radius of the largest disk inscribed in ``dom``.

    A coarse grid of the distance-to-boundary field seeds ``n_starts``
    well-separated candidates, each refined by successively finer local
    grids.  The distance field is 1-Lipschitz, so the value of the final
    local grid is within ``tol`` of the local maximum it brackets.
    """
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    lo, hi = dom.boundary.min(axis=0), dom.boundary.max(axis=0)
    step = max(dom.diameter / 400.0, tol)
    gx = np.arange(lo[0] + step / 2, hi[0], step)
    gy = np.arange(lo[1] + step / 2, hi[1], step)
    X, Y = np.meshgrid(gx, gy)
    xs, ys = X.ravel(), Y.ravel()
    d = _distance_inside(dom, xs, ys)
    order = np.argsort(-d, kind="stable")
    starts = []
    for i in order:
        if d[i] <= 0 or len(starts) >= n_starts:
            break
        if all(math.hypot(xs[i] - sx, ys[i] - sy) >= 4 * step for sx, sy, _ in starts):
            starts.append((xs[i], ys[i], d[i]))
    best = 0.0
    offs = np.linspace(-1.0, 1.0, 11)
    for cx, cy, val in starts:
        s = step
        while s > tol / 8:
            OX, OY = np.meshgrid(cx + offs * s, cy + offs * s)
            dd = _distance_inside(dom, OX.ravel(), OY.ravel())
            j = int(np.argmax(dd))
            if dd[j] >= val:
                cx, cy, val = OX.ravel()[j], OY.ravel()[j], dd[j]
            s /= 5.0
        best = max(best, val)
    return float(best)


def inradius_localization_predicate(rho: float, b_max: float) -> bool:
    """True iff ``rho / b_max > j0 / pi``.

    Under this condition the first Dirichlet eigenvalue is below the
    threshold ``pi**2 / b_max**2`` of any branch of width at most ``b_max``.
    """
    if rho <= 0 or b_max <= 0:
        raise InvalidInputError("rho and b_max must be positive")
    return rho / b_max > J0_FIRST_ZERO / math.pi


def branch_wall_monotonicity(profile: BranchProfile) -> tuple:
    """Return ``(monotone, closed)`` for the branch walls.

    ``monotone`` means the branch never widens outward (``y1' >= 0`` and
    ``y2' <= 0``), which is the condition for the sharper decay rate.
    """
    slope = max(np.abs(profile.dy1).max(), np.abs(profile.dy2).max())
    eps = 1e-12 * (1.0 + slope)
    monotone = bool(np.all(profile.dy1 >= -eps) and np.all(profile.dy2 <= eps))
    closed = bool(abs(profile.y1[-1] - profile.y2[-1]) <= eps)
    return monotone, closed


def domain_from_config(cfg: dict) -> PlanarDomain:
    """Build a domain from its JSON configuration document."""
    cfg = dict(cfg)
    family = cfg.pop("family", None)
    bc = BoundaryCondition.from_config(cfg.pop("bc", None))
    try:
        if family == "sine":
            return build_sine_branch_domain(
                float(cfg["L"]), float(cfg["a"]), float(cfg["b"]), cfg.get("n_samples"), bc
            )
        if family == "star":
            return build_star_domain(
                int(cfg["n_branches"]), float(cfg.get("r_disk", 1.0)), float(cfg.get("l_branch", 1.5)),
                float(cfg.get("w_base", 0.08)), int(cfg.get("n_disk_samples", 1024)), bc,
            )
        if family == "triangle":
            return build_right_triangle(float(cfg["a"]), float(cfg["b"]), float(cfg["d"]), bc)
        if family == "polygon":
            return build_elongated_polygon(
                cfg.get("vertices", DEFAULT_HEXAGON), cfg.get("split_x", DEFAULT_HEXAGON_SPLIT), bc
            )
        if family == "rectangle":
            w, hgt = float(cfg.get("width", 1.0)), float(cfg.get("height", 1.0))
            _check_positive(width=w, height=hgt)
            return build_elongated_polygon([(0, 0), (w, 0), (w, hgt), (0, hgt)], cfg.get("split_x"), bc)
    except KeyError as exc:
        raise GeometryError(f"{family} domain config is missing parameter {exc.args[0]!r}") from None
    raise GeometryError(f"unknown domain family {family!r}")
