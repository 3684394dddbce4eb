"""Planar cuts of tetrahedra by a linear level set, and quadrature rules.

Everything is batched: a ``SurfaceCells`` object holds the cut polygons of
many tets as flat arrays, and ``cut_tet`` is the single-tet view of it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mesh import ActiveMesh, DegenerateTetError, p1_gradients  # noqa: F401


class DegenerateCutError(ValueError):
    pass



# barycentric points and weights (weights sum to one)
_A4, _B4 = 0.445948490915965, 0.108103018168070
_C4, _D4 = 0.091576213509771, 0.816847572980459
TRIANGLE_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    2: (np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]), np.full(3, 1 / 3)),
    4: (np.array([[_A4, _A4, _B4], [_A4, _B4, _A4], [_B4, _A4, _A4],
                  [_C4, _C4, _D4], [_C4, _D4, _C4], [_D4, _C4, _C4]]),
        np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)),
}
_A2, _B2 = 0.5854101966249685, 0.1381966011250105
TET_RULES = {
    1: (np.array([[0.25, 0.25, 0.25, 0.25]]), np.array([1.0])),
    2: (np.array([[_A2, _B2, _B2, _B2], [_B2, _A2, _B2, _B2],
                  [_B2, _B2, _A2, _B2], [_B2, _B2, _B2, _A2]]), np.full(4, 0.25)),
}


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray


def barycentric(coords: np.ndarray, grads: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``points`` (n, q, 3) in tets (n, 4, 3)."""
    centroid = coords.mean(axis=1)
    return 0.25 + np.einsum("nij,nqj->nqi", grads, points - centroid[:, None])


@dataclass(frozen=True)
class SurfaceCell:
    parent_tet: int
    polygon: np.ndarray
    triangles: np.ndarray
    area: float
    normal: np.ndarray


@dataclass(frozen=True)
class SurfaceCells:
    """Cut polygons of a batch of tets.

    ``parent`` indexes the caller's tet list (the position in
    ``ActiveMesh.active_tets`` for cells from ``extract_surface_cells``);
    ``polygon`` is padded with NaN for triangles; ``tri_points`` and
    ``tri_cell`` describe the fan triangles of all cells.
    """

    parent: np.ndarray
    polygon: np.ndarray
    n_vertices: np.ndarray
    tri_index: np.ndarray
    tri_points: np.ndarray
    tri_cell: np.ndarray
    area: np.ndarray
    normal: np.ndarray

    def __len__(self) -> int:
        return len(self.parent)

    def __getitem__(self, i) -> SurfaceCell:
        nv = int(self.n_vertices[i])
        tris = self.tri_index[i][: nv - 2]
        return SurfaceCell(int(self.parent[i]), self.polygon[i, :nv], tris,
                           float(self.area[i]), self.normal[i])

    @property
    def total_area(self) -> float:
        return float(self.area.sum())


def _interp(x, v, a, b):
    rows = np.arange(len(x))
    va, vb = v[rows, a], v[rows, b]
    t = va / (va - vb)
    return x[rows, a] + t[:, None] * (x[rows, b] - x[rows, a])


def _tri_area(p):
    return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=-1)


def cut_tets(coords, values) -> SurfaceCells:
    """Intersect tets ``(n, 4, 3)`` with the zero set of their linear interpolants."""
    coords = np.asarray(coords, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.any(values == 0):
        raise DegenerateCutError("vertex values must be nonzero (snap them first)")
    neg = values < 0
    nneg = neg.sum(axis=1)
    keep = (nneg > 0) & (nneg < 4)
    parent = np.flatnonzero(keep)
    x, v, neg, nneg = coords[keep], values[keep], neg[keep], nneg[keep]
    n = len(parent)
    poly = np.full((n, 4, 3), np.nan)
    nvert = np.where(nneg == 2, 4, 3)

    tri = nvert == 3
    if tri.any():
        minority = np.where(nneg[tri, None] == 1, neg[tri], ~neg[tri])
        order = np.argsort(~minority, axis=1, kind="stable")  # lone vertex first
        xt, vt = x[tri], v[tri]
        pts = [_interp(xt, vt, order[:, 0], order[:, k]) for k in (1, 2, 3)]
        poly[tri, :3] = np.stack(pts, axis=1)
    quad = ~tri
    if quad.any():
        order = np.argsort(~neg[quad], axis=1, kind="stable")  # two negatives first
        a, b, c, d = order.T
        xq, vq = x[quad], v[quad]
        # a-c, a-d, b-d, b-c is a closed cycle of the four cut edges
        pts = [_interp(xq, vq, a, c), _interp(xq, vq, a, d),
               _interp(xq, vq, b, d), _interp(xq, vq, b, c)]
        poly[quad] = np.stack(pts, axis=1)

    tri_index = np.zeros((n, 2, 3), dtype=int)
    tri_index[:, 0] = [0, 1, 2]
    if quad.any():
        pq = poly[quad]
        d02 = np.linalg.norm(pq[:, 0] - pq[:, 2], axis=1)
        d13 = np.linalg.norm(pq[:, 1] - pq[:, 3], axis=1)
        use02 = d02 <= d13
        tq = np.where(use02[:, None, None], [[0, 1, 2], [0, 2, 3]], [[0, 1, 3], [1, 2, 3]])
        tri_index[quad] = tq
    ntri = nvert - 2
    tri_cell = np.repeat(np.arange(n), ntri)
    slot = np.concatenate([np.arange(k) for k in ntri]) if n else np.zeros(0, dtype=int)
    idx = tri_index[tri_cell, slot]
    tri_points = poly[tri_cell[:, None], idx]
    area = np.bincount(tri_cell, weights=_tri_area(tri_points), minlength=n)

    if n:
        grads, _ = p1_gradients(x)
        g = np.einsum("ni,nij->nj", v, grads)
        normal = g / np.linalg.norm(g, axis=1, keepdims=True)
    else:
        normal = np.zeros((0, 3))
    return SurfaceCells(parent, poly, nvert, tri_index, tri_points, tri_cell, area, normal)


def cut_tet(tet_coords, values) -> Optional[SurfaceCell]:
    cells = cut_tets(np.asarray(tet_coords, dtype=float)[None], np.asarray(values, dtype=float)[None])
    return cells[0] if len(cells) else None


def extract_surface_cells(active: ActiveMesh) -> SurfaceCells:
    values = active.vertex_values[active.tet_vertices]
    return cut_tets(active.tet_coords, values)


def triangle_rule(tri_points: np.ndarray, degree: int):
    """Quadrature points ``(m, q, 3)`` and weights ``(m, q)`` on flat triangles."""
    if degree not in TRIANGLE_RULES:
        raise ValueError(f"unsupported surface quadrature degree {degree}")
    bary, w = TRIANGLE_RULES[degree]
    pts = np.einsum("qk,mkj->mqj", bary, tri_points)
    return pts, _tri_area(tri_points)[:, None] * w[None]


def surface_quadrature(cell: SurfaceCell, degree: int) -> QuadratureRule:
    tris = cell.polygon[cell.triangles]
    pts, w = triangle_rule(tris, degree)
    return QuadratureRule(pts.reshape(-1, 3), w.ravel())


def tet_rule(coords: np.ndarray, degree: int):
    if degree not in TET_RULES:
        raise ValueError(f"unsupported tet quadrature degree {degree}")
    _, vol = p1_gradients(coords)
    bary, w = TET_RULES[degree]
    pts = np.einsum("qk,mkj->mqj", bary, coords)
    return pts, np.abs(vol)[:, None] * w[None]


def tet_quadrature(tet_coords, degree: int) -> QuadratureRule:
    pts, w = tet_rule(np.asarray(tet_coords, dtype=float)[None], degree)
    return QuadratureRule(pts[0], w[0])


def write_cells(cells: SurfaceCells, active: ActiveMesh, path) -> None:
    """One line per cell: parent tet, vertex count, polygon coords (NaN padded), area, normal."""
    rows = np.column_stack([
        active.active_tets[cells.parent], cells.n_vertices,
        cells.polygon.reshape(len(cells), 12), cells.area, cells.normal,
    ])
    header = "parent_tet n_vertices x0 y0 z0 x1 y1 z1 x2 y2 z2 x3 y3 z3 area nx ny nz"
    np.savetxt(path, rows, header=header, fmt=["%d", "%d"] + ["%.17g"] * 16)
