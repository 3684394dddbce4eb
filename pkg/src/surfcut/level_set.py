"""Implicit surfaces, closest point projection and extension of surface fields.

All point arguments accept either a single point of shape ``(3,)`` or a batch
of shape ``(n, 3)``; results follow the same convention.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Array = np.ndarray


class ProjectionError(RuntimeError):
    """Base class for closest point projection failures."""


class DivergedProjectionError(ProjectionError):
    def __init__(self, message: str, last_iterate: Array):
        super().__init__(message)
        self.last_iterate = last_iterate


class DegenerateGradientError(ProjectionError):
    def __init__(self, message: str, position: Array):
        super().__init__(message)
        self.position = position


@dataclass(frozen=True)
class ImplicitSurface:
    """Closed surface given as the zero set of a smooth level-set function.

    Parameters
    ----------
    value, gradient, hessian : callable
        Vectorized maps from ``(n, 3)`` points to ``(n,)``, ``(n, 3)`` and
        ``(n, 3, 3)`` arrays. ``hessian`` may be None.
    name : str
        Registry key.
    bounding_box : (3, 2) array
        Box guaranteed to contain the surface.
    g_min : float
        Lower bound of ``|grad phi|`` on the band ``|phi| < band``.
    band : float
        Half-width (in level-set units) of that band.
    radial_center : (3,) array, optional
        Set for spheres of radius ``radius``; enables the analytic projection.
    """

    value: Callable[[Array], Array]
    gradient: Callable[[Array], Array]
    hessian: Optional[Callable[[Array], Array]] = None
    name: str = "surface"
    bounding_box: Array = field(default_factory=lambda: np.array([[-1.0, 1.0]] * 3))
    g_min: float = 1.0
    band: float = 0.5
    radial_center: Optional[Array] = None
    radius: float = 1.0

    @property
    def diam(self) -> float:
        box = np.asarray(self.bounding_box, dtype=float)
        return float(np.linalg.norm(box[:, 1] - box[:, 0]))

    def normal(self, x: Array) -> Array:
        g = self.gradient(np.atleast_2d(x))
        n = g / np.linalg.norm(g, axis=1, keepdims=True)
        return n.reshape(np.shape(x))


@dataclass(frozen=True)
class SurfacePoint:
    position: Array
    normal: Array


def sphere(center=(0.0, 0.0, 0.0), radius: float = 1.0, name: str = "sphere") -> ImplicitSurface:
    """Sphere ``|x - c|^2 - r^2 = 0``."""
    c = np.asarray(center, dtype=float)
    r2 = radius * radius

    def value(x):
        d = np.atleast_2d(x) - c
        return np.einsum("ij,ij->i", d, d) - r2

    def gradient(x):
        return 2.0 * (np.atleast_2d(x) - c)

    def hessian(x):
        n = np.atleast_2d(x).shape[0]
        return np.broadcast_to(2.0 * np.eye(3), (n, 3, 3)).copy()

    box = np.stack([c - radius, c + radius], axis=1)
    # |grad| = 2|x - c| >= 2 r sqrt(1 - 1/2) on |phi| < r^2 / 2
    return ImplicitSurface(
        value, gradient, hessian, name=name, bounding_box=box,
        g_min=2.0 * radius * np.sqrt(0.5), band=0.5 * r2,
        radial_center=c, radius=radius,
    )


def blob() -> ImplicitSurface:
    """Sextic surface of the second manufactured example."""

    def value(x):
        x, y, z = np.atleast_2d(x).T
        x2, y2, z2 = x * x, y * y, z * z
        return ((x2 - 1) ** 2 + (y2 - 1) ** 2 + (z2 - 1) ** 2
                + (x2 + y2 - 4) ** 2 + (x2 + z2 - 4) ** 2 + (y2 + z2 - 4) ** 2 - 16)

    def gradient(x):
        p = np.atleast_2d(x)
        x2 = p * p
        s = x2.sum(axis=1, keepdims=True)
        # d/dx_i: 4 x_i (x_i^2 - 1) + 4 x_i sum_{j != i} (x_i^2 + x_j^2 - 4)
        return 4.0 * p * ((x2 - 1) + (x2 + s - 8.0))

    def hessian(x):
        p = np.atleast_2d(x)
        x2 = p * p
        s = x2.sum(axis=1, keepdims=True)
        diag = 4.0 * ((x2 - 1) + (x2 + s - 8.0)) + 24.0 * x2
        H = 8.0 * p[:, :, None] * p[:, None, :]
        idx = np.arange(3)
        H[:, idx, idx] = diag
        return H

    box = np.array([[-2.0, 2.0]] * 3)
    # phi has saddles near (1.5, 1.5, 0) at phi ~ -5.5; sampled min |grad phi| on the band is ~4.2
    return ImplicitSurface(value, gradient, hessian, name="blob", bounding_box=box,
                           g_min=3.5, band=5.25)


SURFACES: dict[str, Callable[[], ImplicitSurface]] = {
    "sphere": sphere,
    "blob": blob,
}


def get_surface(name: str) -> ImplicitSurface:
    try:
        return SURFACES[name]()
    except KeyError:
        raise KeyError(f"unknown surface {name!r}; choose from {sorted(SURFACES)}") from None


def _project_to_zero(surface, x, tol, max_iter, history=None):
    """Damped gradient-direction Newton steps onto ``phi = 0``.

    If ``history`` is a list, ``|phi|`` of all points is appended after each sweep.
    """
    x = x.copy()
    f = surface.value(x)
    if history is not None:
        history.append(np.abs(f))
    for _ in range(max_iter):
        active = np.abs(f) > tol
        if not active.any():
            return x, f
        xa, fa = x[active], f[active]
        g = surface.gradient(xa)
        g2 = np.einsum("ij,ij->i", g, g)
        bad = g2 < (0.5 * surface.g_min) ** 2
        if bad.any():
            raise DegenerateGradientError("level-set gradient vanishes near iterate", xa[bad][0])
        step = (fa / g2)[:, None] * g
        lam = np.ones(len(xa))
        xn = xa - step
        fn = surface.value(xn)
        for _ in range(30):
            worse = np.abs(fn) >= np.abs(fa)
            if not worse.any():
                break
            lam[worse] *= 0.5
            xn[worse] = xa[worse] - lam[worse, None] * step[worse]
            fn[worse] = surface.value(xn[worse])
        x[active], f[active] = xn, fn
        if history is not None:
            history.append(np.abs(f))
    if np.any(np.abs(f) > tol):
        raise DivergedProjectionError("projection onto phi = 0 did not converge", x[np.abs(f) > tol][0])
    return x, f


def project(surface: ImplicitSurface, x: Array, proj_tol: Optional[float] = None,
            max_iter: int = 50, angle_tol: float = 1e-9) -> Array:
    """Vectorized closest point map. Returns positions with the shape of ``x``."""
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    x0 = np.atleast_2d(np.asarray(x, dtype=float))
    if surface.radial_center is not None:
        d = x0 - surface.radial_center
        r = np.linalg.norm(d, axis=1, keepdims=True)
        if np.any(r == 0):
            raise DegenerateGradientError("projection undefined at sphere center", surface.radial_center)
        p = surface.radial_center + surface.radius * d / r
        return p.reshape(np.shape(x))

    if proj_tol is None:
        proj_tol = 1e-12 * surface.diam
    p, _ = _project_to_zero(surface, x0, proj_tol, max_iter)
    floor = 1e-13 * surface.diam

    def misaligned(p):
        n = surface.normal(p)
        d = x0_ - p
        t = d - np.einsum("ij,ij->i", d, n)[:, None] * n
        return np.linalg.norm(t, axis=1) > angle_tol * np.linalg.norm(d, axis=1) + floor

    x0_ = x0
    off = misaligned(p)
    if not off.any():
        return p.reshape(np.shape(x))
    idx = np.flatnonzero(off)
    p[idx] = _tangential_descent(surface, x0[idx], p[idx], proj_tol, max_iter)
    off = misaligned(p)
    if off.any() and surface.hessian is not None:
        idx = np.flatnonzero(off)
        p[idx] = _kkt_newton(surface, x0[idx], p[idx], proj_tol, max_iter)
        off = misaligned(p)
    if off.any():
        raise DivergedProjectionError("closest point iteration did not converge", p[off][0])
    return p.reshape(np.shape(x))


def _tangential_descent(surface, x0, p, tol, max_iter, rel_tol=1e-6):
    """Move along the tangential part of ``x0 - p`` and re-project onto ``phi = 0``.

    The step length is halved until the distance to ``x0`` decreases, so the
    distance is monotone. Converges linearly; used to get close enough for
    the Newton polish.
    """
    dist = np.linalg.norm(x0 - p, axis=1)
    alpha = np.ones(len(p))
    for _ in range(20 * max_iter):
        n = surface.normal(p)
        d = x0 - p
        t = d - np.einsum("ij,ij->i", d, n)[:, None] * n
        tn = np.linalg.norm(t, axis=1)
        todo = tn > rel_tol * np.maximum(np.linalg.norm(d, axis=1), surface.diam * 1e-3)
        if not todo.any():
            break
        i = np.flatnonzero(todo)
        trial, _ = _project_to_zero(surface, p[i] + alpha[i, None] * t[i], tol, max_iter)
        dn = np.linalg.norm(x0[i] - trial, axis=1)
        ok = dn < dist[i]
        p[i[ok]], dist[i[ok]] = trial[ok], dn[ok]
        alpha[i[ok]] = np.minimum(1.0, 1.5 * alpha[i[ok]])
        alpha[i[~ok]] *= 0.5
        if np.all(alpha[i] < 1e-12):
            break
    return p


def _kkt_newton(surface, x0, p, tol, max_iter):
    """Newton on ``p - x0 + mu grad phi(p) = 0, phi(p) = 0`` with backtracking.

    Iterates until the residual drops below ``1e-3 * tol`` or stops decreasing.
    """
    g = surface.gradient(p)
    mu = np.einsum("ij,ij->i", x0 - p, g) / np.einsum("ij,ij->i", g, g)

    def residual(p, mu, x0):
        g = surface.gradient(p)
        return np.concatenate([p - x0 + mu[:, None] * g, surface.value(p)[:, None]], axis=1), g

    F, g = residual(p, mu, x0)
    merit = np.linalg.norm(F, axis=1)
    stalled = np.zeros(len(p), dtype=bool)
    for _ in range(max_iter):
        todo = (merit > 1e-3 * tol) & ~stalled
        if not todo.any():
            break
        idx = np.flatnonzero(todo)
        H = surface.hessian(p[idx])
        J = np.zeros((len(idx), 4, 4))
        J[:, :3, :3] = np.eye(3) + mu[idx, None, None] * H
        J[:, :3, 3] = g[idx]
        J[:, 3, :3] = g[idx]
        step = np.linalg.solve(J, -F[idx][:, :, None])[:, :, 0]
        lam = np.ones(len(idx))
        for _ in range(30):
            pn = p[idx] + lam[:, None] * step[:, :3]
            mn = mu[idx] + lam * step[:, 3]
            Fn, gn = residual(pn, mn, x0[idx])
            mn_merit = np.linalg.norm(Fn, axis=1)
            worse = mn_merit >= merit[idx]
            if not worse.any():
                break
            lam[worse] *= 0.5
        keep = ~worse
        stalled[idx[worse]] = True
        j = idx[keep]
        p[j], mu[j], F[j], g[j], merit[j] = pn[keep], mn[keep], Fn[keep], gn[keep], mn_merit[keep]
    return p


def closest_point(surface: ImplicitSurface, x: Array, proj_tol: Optional[float] = None,
                  max_iter: int = 50) -> SurfacePoint:
    p = project(surface, x, proj_tol, max_iter)
    return SurfacePoint(position=p, normal=surface.normal(p))


def extend_scalar(u: Callable[[Array], Array], surface: ImplicitSurface, x: Array, **kw) -> Array:
    """Evaluate the normal extension ``u(p(x))``."""
    p = project(surface, x, **kw)
    out = np.asarray(u(np.atleast_2d(p)), dtype=float)
    if np.ndim(x) == 1:
        return out.reshape(-1)[0] if out.size == 1 else out
    return out


def extended_gradient(u, surface: ImplicitSurface, x: Array, fd_step: Optional[float] = None, **kw) -> Array:
    """Ambient gradient of the extension ``u o p`` by central differences."""
    if fd_step is None:
        fd_step = np.cbrt(np.finfo(float).eps) * surface.diam
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    grad = np.empty_like(pts)
    for i in range(3):
        e = np.zeros(3)
        e[i] = fd_step
        up = np.asarray(u(project(surface, pts + e, **kw)), dtype=float)
        um = np.asarray(u(project(surface, pts - e, **kw)), dtype=float)
        grad[:, i] = (up - um) / (2 * fd_step)
    return grad.reshape(np.shape(x))
