import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import sphere_setup
from surfcut.assembly import FormRecipe, combine
from surfcut.level_set import blob, project, sphere
from surfcut.manufactured import (constant_problem, coordinate_problem, eoc, example1, example2,
                                  h1_error, interpolate, l2_error, laplace_beltrami_at,
                                  mean_curvature, rhs)
from surfcut.solve import solve


def _surface_points(surface, n, seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return project(surface, 1.7 * d)


def chart_laplacian(problem, p, step=2e-3):
    """Surface Laplacian from a normal-graph chart centered at ``p``.

    With X(s, t) = p + s t1 + t t2 + g(s, t) n and g solving phi(X) = 0, the
    chart is orthonormal with vanishing Christoffel symbols at the origin,
    so the operator reduces to U_ss + U_tt there.
    """
    surf = problem.surface
    n = surf.normal(p)
    t1 = np.cross(n, [0.3, 0.5, 0.8])
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)

    def U(s, t):
        base = p + s * t1 + t * t2
        g = brentq(lambda g: surf.value(base + g * n)[0], -0.1, 0.1, xtol=1e-15, rtol=1e-15)
        return problem.exact_u(base + g * n)[0]

    u0 = U(0, 0)
    # fourth-order central differences
    c = np.array([-1, 16, -30, 16, -1]) / 12.0
    k = np.arange(-2, 3)
    uss = sum(ci * U(ki * step, 0) for ci, ki in zip(c, k)) / step ** 2
    utt = sum(ci * U(0, ki * step) for ci, ki in zip(c, k)) / step ** 2
    return uss + utt, u0


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_eigenfunction_battery(axis):
    prob = coordinate_problem(axis)
    pts = _surface_points(prob.surface, 100, axis)
    np.testing.assert_allclose(laplace_beltrami_at(prob, pts), -2 * pts[:, axis], atol=1e-8)
    fd = laplace_beltrami_at(prob, pts, fd_step=1e-5)
    np.testing.assert_allclose(fd, -2 * pts[:, axis], atol=1e-5)


def test_coordinate_examples():
    prob = coordinate_problem(0)
    assert laplace_beltrami_at(prob, [0.0, 1.0, 0.0])[0] == pytest.approx(0.0, abs=1e-14)
    assert laplace_beltrami_at(prob, [1.0, 0.0, 0.0])[0] == pytest.approx(-2.0, rel=1e-14)
    assert rhs(prob, np.array([1.0, 0.0, 0.0])) == pytest.approx(3.0, rel=1e-14)


def test_sphere_mean_curvature():
    pts = _surface_points(sphere(), 20, 3)
    np.testing.assert_allclose(mean_curvature(sphere(), pts), 2.0, rtol=1e-12)
    np.testing.assert_allclose(mean_curvature(sphere(), pts, fd_step=1e-5), 2.0, rtol=1e-6)


def test_example1_against_chart():
    prob = example1()
    p = np.array([1.0, 0.0, 0.0])
    oracle, _ = chart_laplacian(prob, p)
    assert laplace_beltrami_at(prob, p)[0] == pytest.approx(oracle, abs=1e-5)
    for q in _surface_points(prob.surface, 5, 11):
        oracle, _ = chart_laplacian(prob, q)
        assert laplace_beltrami_at(prob, q)[0] == pytest.approx(oracle, abs=1e-5)


def test_example2_rhs_against_chart():
    prob = example2()
    for q in _surface_points(prob.surface, 5, 12):
        lap, u0 = chart_laplacian(prob, q)
        assert rhs(prob, q) == pytest.approx(-lap + u0, abs=1e-4)


@pytest.mark.parametrize("make", [example1, example2])
def test_rhs_is_constant_along_normals(make):
    prob = make()
    q = _surface_points(prob.surface, 10, 13)
    off = q + 0.05 * prob.surface.normal(q)
    np.testing.assert_allclose(rhs(prob, off), rhs(prob, q), rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("make", [example1, example2])
def test_exact_gradient_and_hessian(make):
    prob = make()
    rng = np.random.default_rng(14)
    x = rng.uniform(-1.5, 1.5, size=(30, 3))
    step = 1e-5
    E = np.eye(3) * step
    fd = np.stack([(prob.exact_u(x + e) - prob.exact_u(x - e)) / (2 * step) for e in E], axis=1)
    g = prob.exact_grad_u(x)
    assert np.abs(fd - g).max() <= 1e-6 * max(1.0, np.abs(g).max())
    fdH = np.stack([(prob.exact_grad_u(x + e) - prob.exact_grad_u(x - e)) / (2 * step) for e in E], axis=2)
    assert np.abs(fdH - prob.exact_hess_u(x)).max() <= 1e-6 * max(1.0, np.abs(fdH).max())


def test_interpolation_rates():
    prob = example1()
    l2, h1 = [], []
    for n in (10, 20, 40):
        active, cells = sphere_setup(n)
        c = interpolate(active, prob)
        l2.append(l2_error(active, cells, c, prob))
        h1.append(h1_error(active, cells, c, prob, l2=l2[-1]))
    assert all(b >= a for a, b in zip(l2, h1))
    assert all(1.8 <= r <= 2.2 for r in eoc(l2))
    assert all(0.85 <= r <= 1.15 for r in eoc(h1))


def test_constant_problem_errors(sphere10):
    active, cells = sphere10
    prob = constant_problem()
    system = combine(FormRecipe("tangential", "full_gradient", 1.0, True), active, cells,
                     lambda x: rhs(prob, x))
    c = solve(system).coefficients
    assert l2_error(active, cells, c, prob) <= 1e-9
    assert h1_error(active, cells, c, prob) <= 1e-9


def test_error_of_zero_function(sphere10):
    active, cells = sphere10
    prob = example1()
    assert l2_error(active, cells, np.zeros(active.n_dofs), prob) > 0.1


def test_full_gradient_h1_is_larger(sphere10):
    active, cells = sphere10
    prob = example1()
    c = interpolate(active, prob)
    assert h1_error(active, cells, c, prob, full_gradient=True) >= h1_error(active, cells, c, prob)


def test_errors_invariant_under_relabeling(sphere10):
    # same function, cells visited in a different order
    active, cells = sphere10
    prob = example1()
    c = interpolate(active, prob)
    ref = l2_error(active, cells, c, prob)
    perm = np.random.default_rng(15).permutation(len(cells.area))
    from surfcut.cut import cut_tets
    shuffled = cut_tets(active.tet_coords[perm], active.vertex_values[active.tet_vertices][perm])
    shuffled = type(shuffled)(perm[shuffled.parent], *[getattr(shuffled, f) for f in
                              ("polygon", "n_vertices", "tri_index", "tri_points", "tri_cell", "area", "normal")])
    assert l2_error(active, shuffled, c, prob) == pytest.approx(ref, rel=1e-12)


def test_eoc_values():
    assert eoc([0.4, 0.1]) == [2.0]
    assert round(eoc([9.59e-2, 4.80e-2])[0], 2) == 1.00
    assert round(eoc([1.13e-3, 2.83e-4])[0], 2) == 2.00
    assert eoc([(3, 0.4), (4, 0.1)]) == [2.0]


def test_blob_surface_points_valid():
    pts = _surface_points(blob(), 50, 16)
    assert np.abs(blob().value(pts)).max() <= 1e-11
