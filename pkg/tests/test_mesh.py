import numpy as np
import pytest

from surfcut.level_set import sphere
from surfcut.mesh import (DegenerateTetError, SurfaceOutsideMeshError, build_box_mesh,
                          extract_active_mesh, interpolate_levelset, p1_gradients, snap_values,
                          write_vtk)


def test_unit_cube_single_cell():
    mesh = build_box_mesh([[0, 1]] * 3, 1)
    assert mesh.n_vertices == 8 and mesh.n_tets == 6
    _, vol = p1_gradients(mesh.vertices[mesh.tets])
    assert np.all(vol > 0)
    assert vol.sum() == pytest.approx(1.0, rel=1e-12)


def test_counts_and_volume():
    mesh = build_box_mesh([[-1.6, 1.6]] * 3, 10)
    assert mesh.n_vertices == 11 ** 3 and mesh.n_tets == 6000
    _, vol = p1_gradients(mesh.vertices[mesh.tets])
    assert np.all(vol > 0)
    assert vol.sum() == pytest.approx(3.2 ** 3, rel=1e-12)


def test_anisotropic_box_volume():
    mesh = build_box_mesh([[0, 1], [-2, 1], [0.5, 0.7]], (3, 4, 2))
    _, vol = p1_gradients(mesh.vertices[mesh.tets])
    assert vol.sum() == pytest.approx(1 * 3 * 0.2, rel=1e-12)


def test_conforming():
    # each interior face is shared by exactly two tets, boundary faces by one
    mesh = build_box_mesh([[0, 1]] * 3, 3)
    faces = np.sort(np.concatenate([np.delete(mesh.tets, i, axis=1) for i in range(4)]), axis=1)
    _, counts = np.unique(faces, axis=0, return_counts=True)
    assert set(counts) == {1, 2}
    # boundary faces: 6 sides * 9 squares * 2 triangles
    assert np.sum(counts == 1) == 6 * 9 * 2


def test_quasi_uniform():
    mesh = build_box_mesh([[-1, 1]] * 3, 4)
    x = mesh.vertices[mesh.tets]
    edges = np.array([np.linalg.norm(x[:, i] - x[:, j], axis=1) for i in range(4) for j in range(i + 1, 4)])
    assert edges.max() / edges.min() <= 2
    assert edges.max() == pytest.approx(mesh.longest_edge)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        build_box_mesh([[0, 1]] * 3, 0)
    with pytest.raises(ValueError):
        build_box_mesh([[0, 0]] * 3, 2)
    with pytest.raises(DegenerateTetError):
        p1_gradients(np.zeros((1, 4, 3)))


def test_interpolation_examples():
    mesh = build_box_mesh([[-2, 2]] * 3, 4)
    vals = interpolate_levelset(mesh, sphere())
    coords = mesh.vertices
    at = lambda p: vals[np.flatnonzero(np.all(coords == p, axis=1))[0]]
    assert at([0, 0, 0]) == -1.0
    assert at([1, 0, 0]) == 1e-10 * mesh.h
    assert at([2, 0, 0]) == 3.0


def test_snapping_keeps_sign():
    v = snap_values(np.array([-1e-20, 0.0, 1e-20, -0.5]), 1e-8)
    np.testing.assert_array_equal(v, [-1e-8, 1e-8, 1e-8, -0.5])


def test_active_tets_change_sign(sphere10):
    active, _ = sphere10
    tv = active.vertex_values[active.tet_vertices]
    assert np.all(tv.min(axis=1) < 0) and np.all(tv.max(axis=1) > 0)
    # and no other tet does
    mesh = active.parent
    all_vals = active.vertex_values[mesh.tets]
    cut = np.flatnonzero((all_vals.min(axis=1) < 0) & (all_vals.max(axis=1) > 0))
    np.testing.assert_array_equal(cut, active.active_tets)


def test_single_negative_vertex():
    mesh = build_box_mesh([[0, 2]] * 3, 2)
    values = np.ones(mesh.n_vertices)
    center = 13  # vertex (1, 1, 1)
    values[center] = -1
    active = extract_active_mesh(mesh, values)
    expected = np.flatnonzero(np.any(mesh.tets == center, axis=1))
    np.testing.assert_array_equal(active.active_tets, expected)
    assert np.all(np.sum(values[active.tet_vertices] < 0, axis=1) == 1)


def test_dof_map(sphere10):
    active, _ = sphere10
    assert np.all(np.diff(active.active_vertices) > 0)
    np.testing.assert_array_equal(np.unique(active.tet_dofs), np.arange(active.n_dofs))
    np.testing.assert_array_equal(active.dof_of_vertex(active.active_vertices), np.arange(active.n_dofs))
    with pytest.raises(KeyError):
        active.dof_of_vertex([0])


def test_interior_faces(sphere10):
    active, _ = sphere10
    f = active.interior_faces
    assert np.all(f[:, 0] < f[:, 1])
    assert len(np.unique(f, axis=0)) == len(f)
    assert len(np.unique(active.face_vertices, axis=0)) == len(f)
    for k in (0, 1):
        tv = active.parent.tets[f[:, k]]
        assert np.all([set(fv) <= set(t) for fv, t in zip(active.face_vertices, tv)])
    # brute force: faces shared by two active tets
    tv = np.sort(active.tet_vertices, axis=1)
    faces = np.concatenate([np.delete(tv, i, axis=1) for i in range(4)])
    _, counts = np.unique(faces, axis=0, return_counts=True)
    assert np.sum(counts == 2) == len(f)


def test_every_active_tet_has_neighbor(sphere10):
    active, _ = sphere10
    touched = np.unique(active.interior_faces)
    np.testing.assert_array_equal(touched, active.active_tets)


def test_active_count_scales_like_surface():
    counts = []
    for n in (20, 40, 80):
        mesh = build_box_mesh([[-1.6, 1.6]] * 3, n)
        counts.append(len(extract_active_mesh(mesh, interpolate_levelset(mesh, sphere())).active_tets))
    ratios = np.array(counts[1:]) / np.array(counts[:-1])
    assert np.all((ratios >= 3.4) & (ratios <= 4.6))


def test_surface_outside_mesh():
    mesh = build_box_mesh([[2, 3]] * 3, 3)
    with pytest.raises(SurfaceOutsideMeshError):
        extract_active_mesh(mesh, interpolate_levelset(mesh, sphere()))
    mesh = build_box_mesh([[0, 1.6]] * 3, 4)
    with pytest.raises(SurfaceOutsideMeshError):
        extract_active_mesh(mesh, interpolate_levelset(mesh, sphere()))


def test_unsnapped_values_rejected():
    mesh = build_box_mesh([[-2, 2]] * 3, 4)
    vals = sphere().value(mesh.vertices)
    with pytest.raises(ValueError):
        extract_active_mesh(mesh, vals)


def test_determinism(tmp_path):
    paths = []
    for k in range(2):
        mesh = build_box_mesh([[-1.6, 1.6]] * 3, 7)
        active = extract_active_mesh(mesh, interpolate_levelset(mesh, sphere(center=(0.1, 0, 0))))
        paths.append(tmp_path / f"a{k}.vtk")
        write_vtk(active, paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()
    text = paths[0].read_text().splitlines()
    assert text[0].startswith("# vtk") and "UNSTRUCTURED_GRID" in text[3]
