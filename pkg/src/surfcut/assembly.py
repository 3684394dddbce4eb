"""Sparse assembly of the surface and stabilization forms on the active mesh."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .cut import SurfaceCells, barycentric, triangle_rule
from .mesh import ActiveMesh

GRADIENT_VARIANTS = ("tangential", "full")
STABILIZATIONS = ("none", "full_gradient", "face")


@dataclass(frozen=True)
class FormRecipe:
    """Which bilinear form to assemble.

    ``stab_power`` is the exponent of ``h`` weighting the full gradient
    stabilization; ``face_power`` the one for the face stabilization.
    """

    gradient_variant: str = "tangential"
    stabilization: str = "none"
    tau: float = 0.0
    include_mass: bool = False
    stab_power: float = 1.0
    face_power: float = 0.0

    def __post_init__(self):
        if self.gradient_variant not in GRADIENT_VARIANTS:
            raise ValueError(f"gradient_variant must be one of {GRADIENT_VARIANTS}")
        if self.stabilization not in STABILIZATIONS:
            raise ValueError(f"stabilization must be one of {STABILIZATIONS}")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")

    @property
    def stabilized(self) -> bool:
        return self.stabilization != "none" and self.tau > 0


@dataclass(frozen=True)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    recipe: FormRecipe
    surface_weights: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def scatter(dofs: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    """Sum element matrices ``local[e]`` on rows/cols ``dofs[e]`` into CSR.

    Triplets are stably sorted by (row, col) before summation so the result
    does not depend on anything but the element order.
    """
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    vals = local.reshape(-1)
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    key = rows.astype(np.int64) * n + cols
    start = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    data = np.add.reduceat(vals, start) if len(vals) else vals
    r, c = rows[start], cols[start]
    indptr = np.searchsorted(r, np.arange(n + 1))
    return sp.csr_matrix((data, c, indptr), shape=(n, n))


def add_structural(*mats) -> sp.csr_matrix:
    """Sum of sparse matrices keeping every stored entry, exact zeros included.

    ``A + B`` in scipy prunes entries that cancel to zero, which would hide
    the coupling pattern of the forms.
    """
    coo = [sp.coo_matrix(m) for m in mats]
    rows = np.concatenate([m.row for m in coo])
    cols = np.concatenate([m.col for m in coo])
    vals = np.concatenate([m.data for m in coo])
    out = sp.csr_matrix((vals, (rows, cols)), shape=coo[0].shape)
    out.sum_duplicates()
    return out


def _cell_gradients(active: ActiveMesh, cells: SurfaceCells):
    grads, _ = active.tet_gradients
    return grads[cells.parent], active.tet_dofs[cells.parent]


def assemble_tangential_stiffness(active: ActiveMesh, cells: SurfaceCells) -> sp.csr_matrix:
    G, dofs = _cell_gradients(active, cells)
    n = cells.normal
    PG = G - np.einsum("ekj,ej->ek", G, n)[:, :, None] * n[:, None, :]
    local = cells.area[:, None, None] * np.einsum("eaj,ebj->eab", PG, PG)
    return scatter(dofs, local, active.n_dofs)


def assemble_full_stiffness(active: ActiveMesh, cells: SurfaceCells) -> sp.csr_matrix:
    G, dofs = _cell_gradients(active, cells)
    local = cells.area[:, None, None] * np.einsum("eaj,ebj->eab", G, G)
    return scatter(dofs, local, active.n_dofs)


def assemble_normal_gradient(active: ActiveMesh, cells: SurfaceCells) -> sp.csr_matrix:
    """``(n_h . grad v, n_h . grad w)`` over the surface cells."""
    G, dofs = _cell_gradients(active, cells)
    gn = np.einsum("ekj,ej->ek", G, cells.normal)
    local = cells.area[:, None, None] * gn[:, :, None] * gn[:, None, :]
    return scatter(dofs, local, active.n_dofs)


def assemble_full_gradient_stabilization(active: ActiveMesh, stab_power: float = 1.0) -> sp.csr_matrix:
    grads, vol = active.tet_gradients
    weight = active.h ** stab_power * vol
    local = weight[:, None, None] * np.einsum("eaj,ebj->eab", grads, grads)
    return scatter(active.tet_dofs, local, active.n_dofs)


def face_geometry(active: ActiveMesh):
    """Unit normals and areas of the interior faces."""
    p = active.parent.vertex_coords(active.face_vertices)
    cr = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    norm = np.linalg.norm(cr, axis=1)
    return cr / norm[:, None], 0.5 * norm


def assemble_face_stabilization(active: ActiveMesh, face_power: float = 0.0) -> sp.csr_matrix:
    """Penalty on jumps of the normal derivative across interior faces."""
    grads, _ = active.tet_gradients
    plus = active.local_index(active.interior_faces[:, 0])
    minus = active.local_index(active.interior_faces[:, 1])
    nF, area = face_geometry(active)
    jump = np.concatenate([
        np.einsum("fkj,fj->fk", grads[plus], nF),
        -np.einsum("fkj,fj->fk", grads[minus], nF),
    ], axis=1)
    dofs = np.concatenate([active.tet_dofs[plus], active.tet_dofs[minus]], axis=1)
    weight = area * active.h ** face_power
    local = weight[:, None, None] * jump[:, :, None] * jump[:, None, :]
    return scatter(dofs, local, active.n_dofs)


def cell_quadrature(active: ActiveMesh, cells: SurfaceCells, degree: int):
    pts, w = triangle_rule(cells.tri_points, degree)
    tet = cells.parent[cells.tri_cell]
    grads, _ = active.tet_gradients
    lam = barycentric(active.tet_coords[tet], grads[tet], pts)
    return pts, w, lam, active.tet_dofs[tet]


def assemble_surface_mass(active: ActiveMesh, cells: SurfaceCells, degree: int = 2) -> sp.csr_matrix:
    _, w, lam, dofs = cell_quadrature(active, cells, degree)
    local = np.einsum("tq,tqa,tqb->tab", w, lam, lam)
    return scatter(dofs, local, active.n_dofs)


def assemble_load(active: ActiveMesh, cells: SurfaceCells, f_extended: Callable, degree: int = 4) -> np.ndarray:
    """``(f^e, v)`` over the surface cells; ``f_extended`` maps ``(m, 3)`` points to values."""
    pts, w, lam, dofs = cell_quadrature(active, cells, degree)
    fq = np.asarray(f_extended(pts.reshape(-1, 3)), dtype=float).reshape(w.shape)
    local = np.einsum("tq,tqa->ta", w * fq, lam)
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=active.n_dofs)


def surface_weights(active: ActiveMesh, cells: SurfaceCells) -> np.ndarray:
    """Integrals of the basis functions over the discrete surface."""
    _, w, lam, dofs = cell_quadrature(active, cells, 1)
    local = np.einsum("tq,tqa->ta", w, lam)
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=active.n_dofs)


def stiffness(recipe: FormRecipe, active: ActiveMesh, cells: SurfaceCells) -> sp.csr_matrix:
    if recipe.gradient_variant == "tangential":
        A = assemble_tangential_stiffness(active, cells)
    else:
        A = assemble_full_stiffness(active, cells)
    terms = [A]
    if recipe.stabilization == "full_gradient" and recipe.tau > 0:
        terms.append(recipe.tau * assemble_full_gradient_stabilization(active, recipe.stab_power))
    elif recipe.stabilization == "face" and recipe.tau > 0:
        terms.append(recipe.tau * assemble_face_stabilization(active, recipe.face_power))
    if recipe.include_mass:
        terms.append(assemble_surface_mass(active, cells))
    return add_structural(*terms)


def combine(recipe: FormRecipe, active: ActiveMesh, cells: SurfaceCells,
            f_extended: Optional[Callable] = None) -> SparseSystem:
    A = stiffness(recipe, active, cells)
    if f_extended is None:
        rhs = np.zeros(active.n_dofs)
    else:
        rhs = assemble_load(active, cells, f_extended)
    return SparseSystem(A, rhs, recipe, surface_weights(active, cells))


def export_coo(matrix: sp.spmatrix, path) -> None:
    """Write ``i j value`` lines, 0-based, sorted by (i, j)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{i} {j} {v:.17g}\n")
