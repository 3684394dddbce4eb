"""Stabilized cut finite elements for the Laplace-Beltrami operator on implicit surfaces."""
from .assembly import FormRecipe, SparseSystem, combine
from .cut import extract_surface_cells
from .level_set import ImplicitSurface, blob, get_surface, sphere
from .mesh import build_box_mesh, extract_active_mesh, interpolate_levelset
from .solve import SolveReport, enforce_zero_mean, solve
from .spectrum import condition_number, condition_sweep

__all__ = [
    "FormRecipe", "SparseSystem", "combine", "extract_surface_cells", "ImplicitSurface", "blob",
    "get_surface", "sphere", "build_box_mesh", "extract_active_mesh", "interpolate_levelset",
    "SolveReport", "enforce_zero_mean", "solve", "condition_number", "condition_sweep",
]
__version__ = "0.1.0"
