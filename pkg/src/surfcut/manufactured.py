"""Manufactured solutions, the surface Laplacian of ambient fields, and error norms."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .assembly import cell_quadrature
from .cut import SurfaceCells
from .level_set import DegenerateGradientError, ImplicitSurface, blob, extended_gradient, project, sphere
from .mesh import ActiveMesh


@dataclass(frozen=True)
class ManufacturedProblem:
    """Exact solution ``u`` of ``-Lap_G u + u = f`` on ``surface``.

    ``exact_u``, ``exact_grad_u`` and ``exact_hess_u`` are the analytic
    ambient expression and its first two derivatives, vectorized over
    ``(n, 3)`` points.
    """

    surface: ImplicitSurface
    exact_u: Callable
    exact_grad_u: Callable
    exact_hess_u: Callable
    name: str = "problem"


def _u1(x):
    s = np.sin(0.5 * np.pi * np.atleast_2d(x))
    return s.prod(axis=1)


def _u1_grad(x):
    a = 0.5 * np.pi * np.atleast_2d(x)
    s, c = np.sin(a), np.cos(a)
    k = 0.5 * np.pi
    return k * np.stack([c[:, 0] * s[:, 1] * s[:, 2],
                         s[:, 0] * c[:, 1] * s[:, 2],
                         s[:, 0] * s[:, 1] * c[:, 2]], axis=1)


def _u1_hess(x):
    a = 0.5 * np.pi * np.atleast_2d(x)
    s, c = np.sin(a), np.cos(a)
    k2 = 0.25 * np.pi ** 2
    H = np.empty((len(a), 3, 3))
    prod = s.prod(axis=1)
    for i in range(3):
        H[:, i, i] = -k2 * prod
        for j in range(i + 1, 3):
            m = 3 - i - j
            H[:, i, j] = H[:, j, i] = k2 * c[:, i] * c[:, j] * s[:, m]
    return H


def _u2(x):
    x, y, z = np.atleast_2d(x).T
    return x * y - 5 * y + z + x * z


def _u2_grad(x):
    x, y, z = np.atleast_2d(x).T
    return np.stack([y + z, x - 5, 1 + x], axis=1)


def _u2_hess(x):
    H = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    return np.broadcast_to(H, (len(np.atleast_2d(x)), 3, 3)).copy()


def example1() -> ManufacturedProblem:
    return ManufacturedProblem(sphere(), _u1, _u1_grad, _u1_hess, name="example1")


def example2() -> ManufacturedProblem:
    return ManufacturedProblem(blob(), _u2, _u2_grad, _u2_hess, name="example2")


PROBLEMS = {"sphere": example1, "blob": example2, "example1": example1, "example2": example2}


def coordinate_problem(axis: int, surface: Optional[ImplicitSurface] = None) -> ManufacturedProblem:
    """``u = x_axis``; on the unit sphere an eigenfunction with eigenvalue 2."""
    e = np.eye(3)[axis]
    return ManufacturedProblem(
        surface if surface is not None else sphere(),
        lambda x: np.atleast_2d(x)[:, axis],
        lambda x: np.broadcast_to(e, np.atleast_2d(x).shape).copy(),
        lambda x: np.zeros((len(np.atleast_2d(x)), 3, 3)),
        name=f"coordinate{axis}",
    )


def constant_problem(surface: Optional[ImplicitSurface] = None, value: float = 1.0) -> ManufacturedProblem:
    return ManufacturedProblem(
        surface if surface is not None else sphere(),
        lambda x: np.full(len(np.atleast_2d(x)), value),
        lambda x: np.zeros_like(np.atleast_2d(x), dtype=float),
        lambda x: np.zeros((len(np.atleast_2d(x)), 3, 3)),
        name="constant",
    )


def mean_curvature(surface: ImplicitSurface, x, fd_step: Optional[float] = None) -> np.ndarray:
    """``div n`` for ``n = grad phi / |grad phi|`` (sum of principal curvatures)."""
    x = np.atleast_2d(x)
    g = surface.gradient(x)
    gnorm = np.linalg.norm(g, axis=1)
    if np.any(gnorm < 0.5 * surface.g_min):
        raise DegenerateGradientError("level-set gradient vanishes", x[np.argmin(gnorm)])
    if surface.hessian is not None and fd_step is None:
        n = g / gnorm[:, None]
        H = surface.hessian(x)
        return (np.trace(H, axis1=1, axis2=2) - np.einsum("ni,nij,nj->n", n, H, n)) / gnorm
    if fd_step is None:
        fd_step = np.cbrt(np.finfo(float).eps) * surface.diam
    div = np.zeros(len(x))
    for i in range(3):
        e = np.zeros(3)
        e[i] = fd_step
        div += (surface.normal(x + e)[:, i] - surface.normal(x - e)[:, i]) / (2 * fd_step)
    return div


def laplace_beltrami_at(problem: ManufacturedProblem, x, fd_step: Optional[float] = None) -> np.ndarray:
    """Surface Laplacian of ``exact_u`` at points on the surface.

    Uses ``Lap u - n.(Hess u) n - (div n)(grad u . n)``. The curvature term
    comes from the level-set hessian when available and ``fd_step`` is None,
    otherwise from central differences of the normal field.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    surf = problem.surface
    n = surf.normal(x)
    Hu = problem.exact_hess_u(x)
    gu = problem.exact_grad_u(x)
    lap = np.trace(Hu, axis1=1, axis2=2)
    nHn = np.einsum("ni,nij,nj->n", n, Hu, n)
    return lap - nHn - mean_curvature(surf, x, fd_step) * np.einsum("ni,ni->n", gu, n)


def rhs(problem: ManufacturedProblem, x) -> np.ndarray:
    """Extended right-hand side ``f(p(x))`` for ``-Lap_G u + u = f``."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    p = project(problem.surface, pts)
    f = -laplace_beltrami_at(problem, p) + problem.exact_u(p)
    return f[0] if np.ndim(x) == 1 else f


def extended_u(problem: ManufacturedProblem, x) -> np.ndarray:
    return problem.exact_u(project(problem.surface, np.atleast_2d(x)))


def interpolate(active: ActiveMesh, problem: ManufacturedProblem) -> np.ndarray:
    """Nodal interpolant of the extended exact solution."""
    return extended_u(problem, active.dof_coords)


def _uh_at_quadrature(active, cells, coefficients, degree):
    pts, w, lam, dofs = cell_quadrature(active, cells, degree)
    uh = np.einsum("tqa,ta->tq", lam, np.asarray(coefficients)[dofs])
    return pts, w, uh


def l2_error(active: ActiveMesh, cells: SurfaceCells, coefficients, problem: ManufacturedProblem,
             degree: int = 4) -> float:
    pts, w, uh = _uh_at_quadrature(active, cells, coefficients, degree)
    ue = extended_u(problem, pts.reshape(-1, 3)).reshape(w.shape)
    return float(np.sqrt(np.sum(w * (uh - ue) ** 2)))


def h1_error(active: ActiveMesh, cells: SurfaceCells, coefficients, problem: ManufacturedProblem,
             degree: int = 4, full_gradient: bool = False, l2: Optional[float] = None) -> float:
    """L2 error plus the gradient seminorm of the difference on the surface cells.

    The seminorm uses the tangential part (w.r.t. the cell normal) of the
    gradient difference unless ``full_gradient`` is set.
    """
    if l2 is None:
        l2 = l2_error(active, cells, coefficients, problem, degree)
    pts, w, _, _ = cell_quadrature(active, cells, degree)
    grads, _ = active.tet_gradients
    c = np.asarray(coefficients)[active.tet_dofs[cells.parent]]
    grad_uh = np.einsum("ea,eaj->ej", c, grads[cells.parent])[cells.tri_cell]
    grad_ue = extended_gradient(problem.exact_u, problem.surface, pts.reshape(-1, 3)).reshape(pts.shape)
    d = grad_uh[:, None, :] - grad_ue
    if not full_gradient:
        n = cells.normal[cells.tri_cell][:, None, :]
        d = d - np.sum(d * n, axis=-1, keepdims=True) * n
    semi2 = np.sum(w * np.sum(d * d, axis=-1))
    return float(np.sqrt(l2 ** 2 + semi2))


def eoc(errors) -> list:
    """Rates ``log2(E_{k-1} / E_k)``; accepts plain errors or ``(level, E)`` pairs."""
    E = [e[1] if isinstance(e, (tuple, list)) else e for e in errors]
    return [float(np.log(E[k - 1] / E[k]) / np.log(2.0)) for k in range(1, len(E))]
