"""Structured tetrahedral background mesh and the active (cut) sub-mesh."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import permutations

import numpy as np

from .level_set import ImplicitSurface


class SurfaceOutsideMeshError(ValueError):
    pass


class DegenerateTetError(ValueError):
    pass


def p1_gradients(coords: np.ndarray):
    """Gradients of the four barycentric coordinates and signed volumes.

    ``coords`` has shape ``(n, 4, 3)``; returns ``(n, 4, 3)`` and ``(n,)``.
    """
    coords = np.asarray(coords, dtype=float)
    J = coords[:, 1:] - coords[:, :1]
    vol = np.linalg.det(J) / 6.0
    scale = np.abs(J).max(axis=(1, 2)) ** 3
    if np.any(np.abs(vol) <= 1e-14 * scale):
        raise DegenerateTetError("zero-volume tetrahedron")
    Jinv = np.linalg.inv(J)
    g = np.empty_like(coords)
    g[:, 1:] = np.transpose(Jinv, (0, 2, 1))
    g[:, 0] = -g[:, 1:].sum(axis=1)
    return g, vol


def _kuhn_local_tets():
    """Six tets of the unit cube sharing the (0,0,0)-(1,1,1) diagonal.

    Corners are encoded as bit triples ``4*i + 2*j + k``.
    """
    tets = []
    for perm in permutations(range(3)):
        corner = np.zeros(3, dtype=int)
        path = [corner.copy()]
        for axis in perm:
            corner[axis] = 1
            path.append(corner.copy())
        path = np.array(path)
        e = path[1:] - path[0]
        if np.linalg.det(e) < 0:
            path[[2, 3]] = path[[3, 2]]
        tets.append(path)
    return np.array(tets)  # (6, 4, 3) corner offsets


KUHN_TETS = _kuhn_local_tets()


@dataclass(frozen=True)
class BoxMesh:
    """Kuhn-split structured mesh of an axis-aligned box.

    Vertex ``(i, j, k)`` has index ``(i*(ny+1) + j)*(nz+1) + k``; cell
    ``(i, j, k)`` has index ``(i*ny + j)*nz + k`` and owns tets
    ``6*cell .. 6*cell + 5``. Full vertex and tet arrays are built lazily.
    """

    bounds: np.ndarray
    n_cells: tuple

    @property
    def cell_size(self) -> np.ndarray:
        return (self.bounds[:, 1] - self.bounds[:, 0]) / np.asarray(self.n_cells)

    @property
    def h(self) -> float:
        """Mesh size: the (largest) cell edge length."""
        return float(self.cell_size.max())

    @property
    def longest_edge(self) -> float:
        return float(np.linalg.norm(self.cell_size))

    @property
    def vertex_shape(self) -> tuple:
        return tuple(n + 1 for n in self.n_cells)

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.vertex_shape))

    @property
    def n_tets(self) -> int:
        return 6 * int(np.prod(self.n_cells))

    def vertex_coords(self, ids) -> np.ndarray:
        ijk = np.stack(np.unravel_index(np.asarray(ids), self.vertex_shape), axis=-1)
        return self.bounds[:, 0] + ijk * self.cell_size

    def tets_of_cells(self, cells) -> np.ndarray:
        """Vertex ids, shape ``(6*len(cells), 4)``, of the tets in ``cells``."""
        cells = np.asarray(cells, dtype=np.int64)
        cijk = np.stack(np.unravel_index(cells, self.n_cells), axis=-1)
        corners = cijk[:, None, None, :] + KUHN_TETS[None]
        ids = np.ravel_multi_index(tuple(np.moveaxis(corners, -1, 0)), self.vertex_shape)
        return ids.reshape(-1, 4)

    @cached_property
    def vertices(self) -> np.ndarray:
        return self.vertex_coords(np.arange(self.n_vertices))

    @cached_property
    def tets(self) -> np.ndarray:
        return self.tets_of_cells(np.arange(int(np.prod(self.n_cells))))


def build_box_mesh(bounds, n_cells) -> BoxMesh:
    bounds = np.asarray(bounds, dtype=float).reshape(3, 2)
    if np.isscalar(n_cells) or np.ndim(n_cells) == 0:
        n_cells = (int(n_cells),) * 3
    n_cells = tuple(int(n) for n in n_cells)
    if min(n_cells) < 1:
        raise ValueError("n_cells must be >= 1 along every axis")
    if np.any(bounds[:, 1] <= bounds[:, 0]):
        raise ValueError("degenerate bounds")
    return BoxMesh(bounds=bounds, n_cells=n_cells)


def snap_values(values: np.ndarray, snap_tol: float) -> np.ndarray:
    v = np.array(values, dtype=float)
    small = np.abs(v) < snap_tol
    v[small] = np.where(v[small] < 0, -snap_tol, snap_tol)
    return v


def interpolate_levelset(mesh: BoxMesh, surface: ImplicitSurface, snap_tol=None) -> np.ndarray:
    """Nodal values of the level set, snapped away from zero."""
    if snap_tol is None:
        snap_tol = 1e-10 * mesh.h
    values = np.empty(mesh.n_vertices)
    chunk = 1 << 20
    for start in range(0, mesh.n_vertices, chunk):
        ids = np.arange(start, min(start + chunk, mesh.n_vertices))
        values[ids] = surface.value(mesh.vertex_coords(ids))
    return snap_values(values, snap_tol)


@dataclass(frozen=True)
class ActiveMesh:
    """Tets of the background mesh cut by the discrete surface.

    ``interior_faces`` holds global tet ids ``(t_plus, t_minus)`` with
    ``t_plus < t_minus``; ``face_vertices`` the sorted vertex triple.
    """

    parent: BoxMesh
    active_tets: np.ndarray
    tet_vertices: np.ndarray
    interior_faces: np.ndarray
    face_vertices: np.ndarray
    active_vertices: np.ndarray
    vertex_values: np.ndarray

    @property
    def n_dofs(self) -> int:
        return len(self.active_vertices)

    @property
    def h(self) -> float:
        return self.parent.h

    def dof_of_vertex(self, vertex_ids) -> np.ndarray:
        vertex_ids = np.asarray(vertex_ids)
        dofs = np.searchsorted(self.active_vertices, vertex_ids)
        ok = (dofs < self.n_dofs) & (self.active_vertices[np.minimum(dofs, self.n_dofs - 1)] == vertex_ids)
        if not np.all(ok):
            raise KeyError("vertex is not active")
        return dofs

    @cached_property
    def tet_dofs(self) -> np.ndarray:
        return self.dof_of_vertex(self.tet_vertices)

    @cached_property
    def tet_coords(self) -> np.ndarray:
        return self.parent.vertex_coords(self.tet_vertices)

    @cached_property
    def tet_gradients(self):
        """Barycentric gradients ``(n, 4, 3)`` and volumes of the active tets."""
        g, vol = p1_gradients(self.tet_coords)
        return g, np.abs(vol)

    @cached_property
    def dof_coords(self) -> np.ndarray:
        return self.parent.vertex_coords(self.active_vertices)

    def local_index(self, tet_ids) -> np.ndarray:
        return np.searchsorted(self.active_tets, tet_ids)


def _interior_faces(tet_ids, tet_vertices):
    faces = np.concatenate([np.delete(tet_vertices, i, axis=1) for i in range(4)])
    owners = np.tile(tet_ids, 4)
    faces = np.sort(faces, axis=1)
    order = np.lexsort((owners, faces[:, 2], faces[:, 1], faces[:, 0]))
    faces, owners = faces[order], owners[order]
    same = np.all(faces[1:] == faces[:-1], axis=1)
    first = np.flatnonzero(same)
    pairs = np.stack([owners[first], owners[first + 1]], axis=1)
    fv = faces[first]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order], fv[order]


def extract_active_mesh(mesh: BoxMesh, values: np.ndarray) -> ActiveMesh:
    """Collect tets whose vertex values are not all of one sign."""
    values = np.asarray(values, dtype=float)
    if np.any(values == 0):
        raise ValueError("level-set values must be snapped away from zero")
    grid = values.reshape(mesh.vertex_shape)
    corners = [grid[i:i + mesh.n_cells[0], j:j + mesh.n_cells[1], k:k + mesh.n_cells[2]]
               for i in (0, 1) for j in (0, 1) for k in (0, 1)]
    cmin = np.minimum.reduce(corners)
    cmax = np.maximum.reduce(corners)
    cells = np.flatnonzero(((cmin < 0) & (cmax > 0)).ravel())
    tv = mesh.tets_of_cells(cells)
    tids = (6 * cells[:, None] + np.arange(6)).ravel()
    tvals = values[tv]
    cut = (tvals.min(axis=1) < 0) & (tvals.max(axis=1) > 0)
    tv, tids = tv[cut], tids[cut]
    if len(tids) == 0:
        raise SurfaceOutsideMeshError("no background tet is cut by the surface")
    boundary = np.concatenate([grid[0].ravel(), grid[-1].ravel(), grid[:, 0].ravel(),
                               grid[:, -1].ravel(), grid[:, :, 0].ravel(), grid[:, :, -1].ravel()])
    if boundary.min() < 0 < boundary.max():
        raise SurfaceOutsideMeshError("discrete surface crosses the boundary of the background box")
    active_vertices = np.unique(tv)
    faces, fverts = _interior_faces(tids, tv)
    return ActiveMesh(
        parent=mesh,
        active_tets=tids,
        tet_vertices=tv,
        interior_faces=faces,
        face_vertices=fverts,
        active_vertices=active_vertices,
        vertex_values=values,
    )


def write_vtk(active: ActiveMesh, path) -> None:
    """Legacy ASCII VTK unstructured grid: active vertices, active tets, ``rho_h``."""
    pts = active.dof_coords
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\nactive mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(pts)} double\n")
        np.savetxt(fh, pts, fmt="%.17g")
        n = len(active.active_tets)
        fh.write(f"CELLS {n} {5 * n}\n")
        np.savetxt(fh, np.column_stack([np.full(n, 4), active.tet_dofs]), fmt="%d")
        fh.write(f"CELL_TYPES {n}\n")
        np.savetxt(fh, np.full(n, 10), fmt="%d")
        fh.write(f"POINT_DATA {len(pts)}\nSCALARS rho_h double 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, active.vertex_values[active.active_vertices], fmt="%.17g")
