"""Condition numbers of assembled operators, with kernel deflation."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import FormRecipe, stiffness
from .cut import extract_surface_cells
from .level_set import ImplicitSurface, sphere
from .mesh import BoxMesh, extract_active_mesh, interpolate_levelset

log = logging.getLogger(__name__)


class ZeroMatrixError(ValueError):
    pass


class KernelMismatchError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectrumReport:
    lambda_max: float
    lambda_min_nonzero: float
    kernel_dim_detected: int
    kappa: float
    n: int = 0
    lambda_second: float = float("nan")


def diagonal_scaling(A) -> sp.csr_matrix:
    """``D^{-1/2} A D^{-1/2}``; rows with zero diagonal are left unscaled."""
    A = sp.csr_matrix(A)
    d = A.diagonal()
    s = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 1.0)
    S = sp.diags(s)
    return (S @ A @ S).tocsr()


def condition_number(matrix, known_kernel: Optional[np.ndarray] = None,
                     zero_threshold_rel: float = 1e-9, strict: bool = False) -> SpectrumReport:
    """Ratio of the largest to the smallest nonzero eigenvalue modulus.

    Eigenvalues with ``|lambda| <= zero_threshold_rel * |lambda|_max`` count
    as kernel. A ``known_kernel`` vector is deflated first (its eigenvalue is
    removed from the spectrum); any further detected kernel is then a
    mismatch, logged or raised when ``strict``.
    """
    A = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    if known_kernel is not None:
        q = np.asarray(known_kernel, dtype=float)
        q = q / np.linalg.norm(q)
        Q = sla.null_space(q[None, :])  # orthonormal basis of the complement
        A = Q.T @ A @ Q
    lam = sla.eigh(A, eigvals_only=True)
    mod = np.abs(lam)
    top = mod.max() if len(mod) else 0.0
    if top == 0:
        raise ZeroMatrixError("all eigenvalues vanish")
    zero = mod <= zero_threshold_rel * top
    nonzero = np.sort(mod[~zero])
    if len(nonzero) == 0:
        raise ZeroMatrixError("all eigenvalues below the kernel threshold")
    kdim = int(zero.sum())
    if known_kernel is not None and kdim:
        msg = f"{kdim} kernel eigenvalue(s) beyond the supplied kernel vector"
        if strict:
            raise KernelMismatchError(msg)
        log.warning(msg)
    lam_min = float(nonzero[0])
    return SpectrumReport(
        lambda_max=float(top), lambda_min_nonzero=lam_min, kernel_dim_detected=kdim,
        kappa=float(top / lam_min), n=n,
        lambda_second=float(nonzero[1]) if len(nonzero) > 1 else float("nan"),
    )


def translated_sphere(offset) -> ImplicitSurface:
    return sphere(center=offset, name="translated_sphere")


@dataclass(frozen=True)
class SweepRow:
    delta: float
    n_dofs: int
    lambda_max: float
    lambda_min_nonzero: float
    kappa: float
    h2_kappa: float
    kernel_dim: int
    error: str = ""


def sweep_summary(rows: Sequence[SweepRow]) -> dict:
    vals = np.array([r.h2_kappa for r in rows if not r.error])
    if len(vals) == 0:
        return {"min": np.nan, "max": np.nan, "mean": np.nan}
    return {"min": float(vals.min()), "max": float(vals.max()), "mean": float(vals.mean())}


def operator_spectrum(surface: ImplicitSurface, mesh: BoxMesh, recipe: FormRecipe,
                      diag_scale: bool = False, zero_threshold_rel: float = 1e-9) -> SpectrumReport:
    """Assemble the pure surface operator (no mass) for ``surface`` and analyse it."""
    values = interpolate_levelset(mesh, surface)
    active = extract_active_mesh(mesh, values)
    cells = extract_surface_cells(active)
    if recipe.include_mass:
        recipe = FormRecipe(recipe.gradient_variant, recipe.stabilization, recipe.tau, False,
                            recipe.stab_power, recipe.face_power)
    A = stiffness(recipe, active, cells)
    if diag_scale:
        A = diagonal_scaling(A)
    return condition_number(A, zero_threshold_rel=zero_threshold_rel)


def condition_sweep(surface_family: Callable[[float], ImplicitSurface], mesh: BoxMesh,
                    recipe: FormRecipe, deltas: Sequence[float], diag_scale: bool = False,
                    zero_threshold_rel: float = 1e-9) -> list:
    """Condition numbers of the surface operator for each member of a surface family.

    A failing ``delta`` is recorded with its error message and the sweep
    continues. Rows come back sorted by ``delta``.
    """
    rows = []
    h2 = mesh.h ** 2
    for delta in sorted(float(d) for d in deltas):
        try:
            rep = operator_spectrum(surface_family(delta), mesh, recipe, diag_scale, zero_threshold_rel)
        except Exception as exc:  # noqa: BLE001 - recorded per row
            log.warning("delta=%g failed: %s", delta, exc)
            rows.append(SweepRow(delta, 0, np.nan, np.nan, np.nan, np.nan, -1, f"{type(exc).__name__}: {exc}"))
            continue
        rows.append(SweepRow(delta, rep.n, rep.lambda_max, rep.lambda_min_nonzero,
                             rep.kappa, h2 * rep.kappa, rep.kernel_dim_detected))
    return rows
