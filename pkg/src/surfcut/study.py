"""Convergence and condition-number studies, CSV output."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .assembly import FormRecipe, combine
from .cut import extract_surface_cells
from .manufactured import PROBLEMS, eoc, h1_error, l2_error, rhs
from .mesh import build_box_mesh, extract_active_mesh, interpolate_levelset
from .solve import solve
from .spectrum import condition_sweep, sweep_summary, translated_sphere

log = logging.getLogger(__name__)

DEFAULT_BOXES = {"sphere": 1.6, "blob": 2.4}
# the blob needs h < 0.7 before every surface cell lies in its projection band
DEFAULT_BASE_CELLS = {"sphere": 5, "blob": 7}
STAB_ALIASES = {"none": "none", "fullgrad": "full_gradient", "full_gradient": "full_gradient", "face": "face"}

CONVERGENCE_HEADER = ["level", "h", "n_dofs", "E_L2", "E_H1", "EOC_L2", "EOC_H1", "solve_iters"]
SWEEP_HEADER = ["delta", "n_dofs", "lambda_max", "lambda_min_nonzero", "kappa", "h2_kappa"]


class StudyError(RuntimeError):
    def __init__(self, stage: str, message: str, level: Optional[int] = None):
        where = f"[{stage}]" if level is None else f"[level {level}: {stage}]"
        super().__init__(f"{where} {message}")
        self.stage = stage
        self.level = level


@dataclass
class StudyConfig:
    study: str = "convergence"
    surface_name: str = "sphere"
    gradient_variant: str = "tangential"
    stabilization: str = "none"
    tau: float = 0.0
    stab_power: float = 1.0
    face_power: float = 0.0
    levels: int = 5
    base_cells: Optional[int] = None
    box_half_width: Optional[float] = None
    h1_full_gradient: bool = False
    mesh_level: int = 2
    n_deltas: int = 101
    diag_scale: bool = False
    solver_tol: float = 1e-10
    output: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.stabilization = STAB_ALIASES.get(self.stabilization, self.stabilization)
        if self.study not in ("convergence", "condition_sweep"):
            raise ValueError("study must be 'convergence' or 'condition_sweep'")
        if self.study == "convergence" and self.levels < 2:
            raise ValueError("a convergence study needs at least 2 levels")
        if self.study == "condition_sweep" and self.n_deltas < 2:
            raise ValueError("a sweep needs at least 2 delta samples")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.base_cells is None:
            self.base_cells = DEFAULT_BASE_CELLS.get(self.surface_name, 5)
        if self.base_cells < 1:
            raise ValueError("base_cells must be positive")
        if self.box_half_width is None:
            self.box_half_width = DEFAULT_BOXES.get(self.surface_name, 1.6)

    def recipe(self, include_mass: bool) -> FormRecipe:
        return FormRecipe(self.gradient_variant, self.stabilization, self.tau, include_mass,
                          self.stab_power, self.face_power)

    @property
    def bounds(self):
        a = self.box_half_width
        return [[-a, a]] * 3


@dataclass
class ConvergenceRow:
    level: int
    h: float
    n_dofs: int
    E_L2: float
    E_H1: float
    EOC_L2: float
    EOC_H1: float
    solve_iters: int


@dataclass
class SweepRecord:
    delta: float
    n_dofs: int
    lambda_max: float
    lambda_min_nonzero: float
    kappa: float
    h2_kappa: float


def run_convergence(config: StudyConfig) -> list:
    try:
        problem = PROBLEMS[config.surface_name]()
    except KeyError:
        raise StudyError("setup", f"unknown surface {config.surface_name!r}") from None
    recipe = config.recipe(include_mass=True)
    rows: list = []
    l2s, h1s = [], []
    for k in range(config.levels):
        t0 = time.perf_counter()
        stage = "mesh"
        try:
            mesh = build_box_mesh(config.bounds, config.base_cells * 2 ** k)
            values = interpolate_levelset(mesh, problem.surface)
            active = extract_active_mesh(mesh, values)
            stage = "cut"
            cells = extract_surface_cells(active)
            stage = "assembly"
            system = combine(recipe, active, cells, lambda x: rhs(problem, x))
            stage = "solve"
            report = solve(system, tol=config.solver_tol)
            stage = "error"
            l2 = l2_error(active, cells, report.coefficients, problem)
            h1 = h1_error(active, cells, report.coefficients, problem,
                          full_gradient=config.h1_full_gradient, l2=l2)
        except StudyError:
            raise
        except Exception as exc:
            raise StudyError(stage, f"{type(exc).__name__}: {exc}", level=k) from exc
        l2s.append(l2)
        h1s.append(h1)
        rows.append(ConvergenceRow(
            k, mesh.h, active.n_dofs, l2, h1,
            eoc(l2s)[-1] if k else float("nan"),
            eoc(h1s)[-1] if k else float("nan"),
            report.iterations,
        ))
        log.info("level %d: %d dofs, L2 %.3e, H1 %.3e (%.1fs)", k, active.n_dofs, l2, h1,
                 time.perf_counter() - t0)
    return rows


def sweep_cells(mesh_level: int) -> int:
    """Cells per axis giving mesh size ``3.2/5 * 2**(-k/2)`` on [-1.6, 1.6]^3 (rounded)."""
    return int(round(5 * 2 ** (mesh_level / 2)))


def run_condition_sweep(config: StudyConfig):
    """Sweep a unit sphere along the cell diagonal; returns ``(rows, summary)``."""
    try:
        mesh = build_box_mesh([[-1.6, 1.6]] * 3, sweep_cells(config.mesh_level))
    except Exception as exc:
        raise StudyError("mesh", str(exc)) from exc
    h = mesh.h
    deltas = np.linspace(0.0, 1.0, config.n_deltas)
    raw = condition_sweep(lambda d: translated_sphere(d * h * np.ones(3)), mesh,
                          config.recipe(include_mass=False), deltas, diag_scale=config.diag_scale)
    failed = [r for r in raw if r.error]
    if len(failed) == len(raw):
        raise StudyError("spectrum", f"every delta failed, first: {failed[0].error}")
    rows = [SweepRecord(r.delta, r.n_dofs, r.lambda_max, r.lambda_min_nonzero, r.kappa, r.h2_kappa)
            for r in raw]
    summary = sweep_summary(raw)
    summary.update(h=h, n_cells=mesh.n_cells[0], failed=len(failed),
                   kernel_dims=sorted({r.kernel_dim for r in raw if not r.error}))
    return rows, summary


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.5e}"


def config_block(config: StudyConfig) -> list:
    return [f"# {k} = {v}" for k, v in asdict(config).items() if k != "extra"]


def write_csv(path, config: StudyConfig, rows: list, footer: Optional[list] = None) -> None:
    """Comment block with the resolved config, a fixed header row, one line per row."""
    header = [f.name for f in fields(rows[0])] if rows else []
    lines = config_block(config)
    lines.append(",".join(header))
    for r in rows:
        lines.append(",".join(_fmt(getattr(r, name)) for name in header))
    for line in footer or []:
        lines.append(f"# {line}")
    Path(path).write_text("\n".join(lines) + "\n")


def format_table(rows: list) -> str:
    """Aligned text table with errors in 3 significant digits and rates to 2 decimals."""
    if not rows:
        return ""
    header = [f.name for f in fields(rows[0])]
    cells = []
    for r in rows:
        line = []
        for name in header:
            v = getattr(r, name)
            if isinstance(v, (int, np.integer)):
                line.append(str(int(v)))
            elif name.startswith("EOC"):
                line.append("--" if np.isnan(v) else f"{v:.2f}")
            else:
                line.append(f"{v:.3e}")
        cells.append(line)
    widths = [max(len(h), *(len(c[i]) for c in cells)) for i, h in enumerate(header)]
    out = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    out += ["  ".join(c.rjust(w) for c, w in zip(line, widths)) for line in cells]
    return "\n".join(out)
