"""Conforming triangulations of planar domains for P1 finite elements.

Meshes come from a constrained Delaunay triangulation with Ruppert-type
quality refinement (the ``triangle`` library), followed by targeted
refinement of triangles whose longest edge exceeds ``1.5 * h_target``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import triangle as tr

from .errors import DataError, InvalidInputError, MeshingError
from .geometry import BoundaryCondition, PlanarDomain

MIN_ANGLE_DEG = 20.0
H_MAX_FACTOR = 1.5


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh with marked boundary edges.

    Attributes
    ----------
    vertices : (N, 2) float array
    triangles : (M, 3) int array, counterclockwise
    boundary_edges : (E, 2) int array
    boundary_markers : tuple of BoundaryCondition, one per boundary edge
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_markers: tuple

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 2)
        t = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        e = np.array(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        for name, arr in (("vertices", v), ("triangles", t), ("boundary_edges", e)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "boundary_markers", tuple(self.boundary_markers))
        if len(self.boundary_markers) != len(e):
            raise MeshingError("one marker per boundary edge required")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, each as a sorted vertex pair."""
        return np.unique(_all_edges(self.triangles), axis=0)

    @property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.hypot(*(self.vertices[e[:, 1]] - self.vertices[e[:, 0]]).T)

    @property
    def h_max(self) -> float:
        return float(self.edge_lengths.max())

    def angles(self) -> np.ndarray:
        """Interior angles in degrees, shape ``(M, 3)``."""
        p = self.vertices[self.triangles]
        out = np.empty((len(p), 3))
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            w = p[:, (i + 2) % 3] - p[:, i]
            cos = np.einsum("ij,ij->i", u, w) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
            out[:, i] = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
        return out

    def min_angle(self) -> float:
        return float(self.angles().min())

    @property
    def extent(self) -> tuple:
        return float(self.vertices[:, 0].min()), float(self.vertices[:, 0].max())

    def boundary_vertices(self, dirichlet_only: bool = False) -> np.ndarray:
        mask = np.array([m.is_dirichlet or not dirichlet_only for m in self.boundary_markers], dtype=bool)
        return np.unique(self.boundary_edges[mask])

    def rotated(self, angle: float) -> "Mesh":
        """Copy with vertices rotated by ``angle`` radians about the origin."""
        c, s = math.cos(angle), math.sin(angle)
        return Mesh(self.vertices @ np.array([[c, s], [-s, c]]), self.triangles, self.boundary_edges, self.boundary_markers)

    def validate(self) -> None:
        """Raise :class:`MeshingError` if a structural invariant is violated."""
        if len(self.triangles) == 0:
            raise MeshingError("mesh has no triangles")
        bad = np.flatnonzero(self.signed_areas <= 0)
        if bad.size:
            c = self.vertices[self.triangles[bad[0]]].mean(axis=0)
            raise MeshingError("non-positive triangle area", tuple(c))
        all_e = _all_edges(self.triangles)
        uniq, counts = np.unique(all_e, axis=0, return_counts=True)
        if counts.max() > 2:
            c = self.vertices[uniq[np.argmax(counts)]].mean(axis=0)
            raise MeshingError("edge shared by more than two triangles", tuple(c))
        topo = {tuple(e) for e in uniq[counts == 1]}
        marked = {tuple(sorted(e)) for e in self.boundary_edges.tolist()}
        if topo != marked or len(marked) != len(self.boundary_edges):
            raise MeshingError("marked boundary edges do not match the mesh boundary")

    def to_dict(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary_edges": self.boundary_edges.tolist(),
            "boundary_markers": [m.to_text() for m in self.boundary_markers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mesh":
        try:
            return cls(
                np.asarray(d["vertices"], dtype=float),
                np.asarray(d["triangles"], dtype=np.int64),
                np.asarray(d["boundary_edges"], dtype=np.int64),
                tuple(BoundaryCondition.from_text(m) for m in d["boundary_markers"]),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise DataError(f"malformed mesh document: {exc}") from None


def _all_edges(tris: np.ndarray) -> np.ndarray:
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    return np.sort(e, axis=1)


def _pslg(dom: PlanarDomain, h: float):
    """Boundary vertices and segments with every edge pre-split to length <= h."""
    bcs = []
    verts, segs, marks = [], [], []
    n = dom.n_edges
    scale = dom.diameter
    for i, (p, q, m) in enumerate(dom.edges()):
        length = math.hypot(q[0] - p[0], q[1] - p[1])
        if length < 1e-12 * scale:
            raise MeshingError("boundary edge below floating-point resolution", (float(p[0]), float(p[1])))
        if m not in bcs:
            bcs.append(m)
        k = max(1, math.ceil(length / h - 1e-9))
        start = len(verts)
        for j in range(k):
            verts.append(p + (q - p) * (j / k))
        for j in range(k):
            a = start + j
            b = start + j + 1 if (i < n - 1 or j < k - 1) else 0
            segs.append((a, b))
            marks.append(bcs.index(m) + 1)
    return np.array(verts), np.array(segs), np.array(marks), bcs


def triangulate(dom: PlanarDomain, h_target: float, min_angle: float = MIN_ANGLE_DEG) -> Mesh:
    """Quality triangulation of ``dom`` with edge lengths near ``h_target``.

    Every polyline vertex is a mesh vertex and boundary edges inherit the
    marker of the polyline edge they subdivide.  The realized ``h_max`` is
    at most ``1.5 * h_target`` (or the longest polyline edge, whichever is
    larger, when ``h_target`` exceeds the domain size).  Angles below
    ``min_angle`` can only survive next to input corners sharper than
    ``min_angle``.
    """
    if not (h_target > 0 and math.isfinite(h_target)):
        raise InvalidInputError("h_target must be a positive number")
    h = min(h_target, dom.diameter)
    verts, segs, marks, bcs = _pslg(dom, h)
    pslg = {"vertices": verts, "segments": segs, "segment_markers": marks[:, None]}
    # 1.25x the equilateral area lands near the nominal element count
    area = 1.25 * math.sqrt(3.0) / 4.0 * h * h
    try:
        out = tr.triangulate(pslg, f"pq{min_angle:g}a{area:.17g}Q")
        limit = H_MAX_FACTOR * h
        for _ in range(20):
            tris = out["triangles"]
            p = out["vertices"][tris]
            longest = np.max(np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2), axis=1)
            if longest.max() <= limit:
                break
            d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
            tri_area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
            out["triangle_max_area"] = np.where(longest > limit, 0.5 * tri_area, -1.0)[:, None]
            out = tr.triangulate(out, f"rpq{min_angle:g}aQ")
    except (RuntimeError, ValueError) as exc:
        raise MeshingError(f"triangulation failed: {exc}") from None
    return _mesh_from_triangle(out, bcs)


def _mesh_from_triangle(out: dict, bcs) -> Mesh:
    v = np.asarray(out["vertices"], dtype=float)
    t = np.asarray(out["triangles"], dtype=np.int64)
    p = v[t]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    t[neg] = t[neg][:, [0, 2, 1]]
    seg_marker = {
        tuple(sorted(s)): int(m)
        for s, m in zip(np.asarray(out["segments"]).tolist(), np.asarray(out["segment_markers"]).ravel().tolist())
    }
    uniq, counts = np.unique(_all_edges(t), axis=0, return_counts=True)
    bnd = uniq[counts == 1]
    markers = []
    for e in bnd.tolist():
        m = seg_marker.get(tuple(e))
        if m is None or m < 1:
            raise MeshingError("boundary edge without a segment marker", tuple(v[e].mean(axis=0)))
        markers.append(bcs[m - 1])
    mesh = Mesh(v, t, bnd, tuple(markers))
    mesh.validate()
    return mesh


def refine(mesh: Mesh) -> Mesh:
    """Split every triangle into four through its edge midpoints."""
    t = mesh.triangles
    all_e = _all_edges(t)
    uniq, inv = np.unique(all_e, axis=0, return_inverse=True)
    inv = inv.ravel()
    nv = mesh.n_vertices
    mid = nv + inv.reshape(3, -1).T  # columns: edge 01, 12, 20
    verts = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])])
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    ab, bc, ca = mid[:, 0], mid[:, 1], mid[:, 2]
    new_t = np.concatenate(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ]
    )
    lookup = {tuple(e): nv + i for i, e in enumerate(uniq.tolist())}
    bnd, markers = [], []
    for (p, q), m in zip(mesh.boundary_edges.tolist(), mesh.boundary_markers):
        k = lookup[(min(p, q), max(p, q))]
        bnd += [(p, k), (k, q)]
        markers += [m, m]
    return Mesh(verts, new_t, np.array(bnd), tuple(markers))


def barycentric(mesh: Mesh, p) -> np.ndarray:
    """Barycentric coordinates of point ``p`` in every triangle, shape ``(M, 3)``."""
    v = mesh.vertices[mesh.triangles]
    x, y = float(p[0]), float(p[1])
    x0, y0 = v[:, 0, 0], v[:, 0, 1]
    d1, d2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    l1 = ((x - x0) * d2[:, 1] - (y - y0) * d2[:, 0]) / det
    l2 = (d1[:, 0] * (y - y0) - d1[:, 1] * (x - x0)) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=1)


def locate(mesh: Mesh, p, eps: float = 1e-12) -> Optional[tuple]:
    """Find the triangle containing ``p``.

    Returns ``(index, coords)`` with barycentric ``coords`` in ``[0, 1]``
    summing to one, choosing the lowest index when ``p`` lies on a shared
    edge or vertex, or ``None`` when ``p`` is outside the mesh.
    """
    lam = barycentric(mesh, p)
    inside = np.flatnonzero(np.all(lam >= -eps, axis=1))
    if inside.size == 0:
        return None
    i = int(inside[0])
    c = np.clip(lam[i], 0.0, 1.0)
    return i, c / c.sum()


def write_mesh_json(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        json.dump(mesh.to_dict(), fh)


def read_mesh_json(path) -> Mesh:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from None
    return Mesh.from_dict(d)


def write_mesh_text(mesh: Mesh, path) -> None:
    """Whitespace-delimited export: vertices, triangles, boundary-edges blocks."""
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
        fh.write(f"boundary_edges {len(mesh.boundary_edges)}\n")
        for (a, b), m in zip(mesh.boundary_edges, mesh.boundary_markers):
            fh.write(f"{a} {b} {m.to_text()}\n")


def read_mesh_text(path) -> Mesh:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    blocks = {}
    i = 0
    try:
        while i < len(lines):
            name, count = lines[i][0], int(lines[i][1])
            blocks[name] = lines[i + 1 : i + 1 + count]
            if len(blocks[name]) != count:
                raise DataError(f"{path}: block {name!r} is truncated")
            i += 1 + count
        verts = np.array([[float(a), float(b)] for a, b in blocks["vertices"]])
        tris = np.array([[int(a) for a in row] for row in blocks["triangles"]])
        bnd = np.array([[int(r[0]), int(r[1])] for r in blocks["boundary_edges"]])
        markers = tuple(BoundaryCondition.from_text(r[2]) for r in blocks["boundary_edges"])
    except (KeyError, ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed mesh text ({exc})") from None
    return Mesh(verts, tris, bnd, markers)


def sample_on_grid(mesh: Mesh, U, nx: int = 201, ny: int = 201):
    """Interpolate vertex fields onto a regular grid covering the mesh.

    Returns ``(xs, ys, values)`` with ``values`` of shape ``(ny, nx, k)``;
    grid points outside the mesh get ``nan``.
    """
    U = np.asarray(U, dtype=float).reshape(mesh.n_vertices, -1)
    (x0, y0), (x1, y1) = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    xs, ys = np.linspace(x0, x1, nx), np.linspace(y0, y1, ny)
    out = np.full((ny, nx, U.shape[1]), np.nan)
    dx, dy = (x1 - x0) / max(nx - 1, 1), (y1 - y0) / max(ny - 1, 1)
    for t in mesh.triangles:
        p = mesh.vertices[t]
        i0, i1 = np.searchsorted(xs, p[:, 0].min() - 1e-12 * dx), np.searchsorted(xs, p[:, 0].max() + 1e-12 * dx, "right")
        j0, j1 = np.searchsorted(ys, p[:, 1].min() - 1e-12 * dy), np.searchsorted(ys, p[:, 1].max() + 1e-12 * dy, "right")
        if i0 >= i1 or j0 >= j1:
            continue
        X, Y = np.meshgrid(xs[i0:i1], ys[j0:j1])
        d1, d2 = p[1] - p[0], p[2] - p[0]
        det = d1[0] * d2[1] - d1[1] * d2[0]
        l1 = ((X - p[0, 0]) * d2[1] - (Y - p[0, 1]) * d2[0]) / det
        l2 = (d1[0] * (Y - p[0, 1]) - d1[1] * (X - p[0, 0])) / det
        l0 = 1.0 - l1 - l2
        hit = (l0 >= -1e-12) & (l1 >= -1e-12) & (l2 >= -1e-12)
        if not hit.any():
            continue
        vals = l0[hit, None] * U[t[0]] + l1[hit, None] * U[t[1]] + l2[hit, None] * U[t[2]]
        block = out[j0:j1, i0:i1]
        block[hit] = vals
    return xs, ys, out
