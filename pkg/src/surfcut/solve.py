"""Preconditioned conjugate gradients with deflation of the constant kernel."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .assembly import SparseSystem


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float, coefficients: np.ndarray):
        super().__init__(message)
        self.residual = residual
        self.coefficients = coefficients


class NotPSDError(RuntimeError):
    pass


@dataclass
class SolveReport:
    coefficients: np.ndarray
    iterations: int
    relative_residual: float
    deflated: bool
    rhs_projected: bool = False
    residual_history: list = field(default_factory=list)


def enforce_zero_mean(coefficients: np.ndarray, surface_weights: np.ndarray) -> np.ndarray:
    """Shift by a constant so that the surface-weighted mean vanishes."""
    v = np.asarray(coefficients, dtype=float)
    w = np.asarray(surface_weights, dtype=float)
    return v - (w @ v) / w.sum()


def _center(v):
    return v - v.mean()


def has_constant_kernel(system: SparseSystem) -> bool:
    return not system.recipe.include_mass


def pcg(A, b, tol: float = 1e-10, max_iter: Optional[int] = None, deflate: bool = False,
        callback: Optional[Callable[[np.ndarray], None]] = None):
    """Jacobi-preconditioned CG. With ``deflate`` the iteration stays in ``{v : sum(v) = 0}``.

    Returns ``(x, iterations, relative_residual, history)``.
    """
    n = A.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    proj = _center if deflate else (lambda v: v)
    d = A.diagonal()
    dinv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
    b = proj(np.asarray(b, dtype=float))
    bnorm = np.linalg.norm(b)
    x = np.zeros(n)
    if bnorm == 0:
        return x, 0, 0.0, [0.0]
    r = b.copy()
    z = proj(dinv * r)
    p = z.copy()
    rz = r @ z
    history = [1.0]
    scale = np.abs(d).max()
    for it in range(1, max_iter + 1):
        Ap = proj(A @ p)
        pAp = p @ Ap
        if pAp <= 0:
            if pAp < -1e-12 * scale * (p @ p):
                raise NotPSDError(f"negative curvature p^T A p = {pAp:.3e} at iteration {it}")
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if callback is not None:
            callback(x)
        rel = np.linalg.norm(r) / bnorm
        history.append(rel)
        if rel <= tol:
            break
        z = proj(dinv * r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    true_rel = np.linalg.norm(proj(b - A @ x)) / bnorm
    if true_rel > tol:
        # recurrence residual may drift; one more look at the true residual
        raise NonConvergenceError(
            f"CG did not reach tol {tol:.1e} in {it} iterations (residual {true_rel:.3e})",
            true_rel, x)
    return x, it, true_rel, history


def solve(system: SparseSystem, tol: float = 1e-10, max_iter: Optional[int] = None,
          callback=None) -> SolveReport:
    deflate = has_constant_kernel(system)
    b = system.rhs
    projected = False
    if deflate:
        bnorm = np.linalg.norm(b)
        if bnorm > 0 and abs(b.sum()) > tol * bnorm * np.sqrt(len(b)):
            projected = True
    x, it, rel, hist = pcg(system.matrix, b, tol, max_iter, deflate, callback)
    if deflate:
        x = enforce_zero_mean(x, system.surface_weights)
    return SolveReport(x, it, rel, deflate, projected, hist)


def solve_dense(system: SparseSystem, max_n: int = 4000, rcond: float = 1e-10) -> np.ndarray:
    """Direct oracle: symmetric eigendecomposition, inverting only nonzero modes."""
    if system.n > max_n:
        raise ValueError(f"dense solve limited to {max_n} unknowns")
    A = system.matrix.toarray()
    lam, Q = sla.eigh(A)
    keep = np.abs(lam) > rcond * np.abs(lam).max()
    b = system.rhs
    if has_constant_kernel(system):
        b = _center(b)
    x = Q[:, keep] @ ((Q[:, keep].T @ b) / lam[keep])
    if has_constant_kernel(system):
        x = enforce_zero_mean(x, system.surface_weights)
    return x
