"""Icosphere construction, adjacency, smoothness and OBJ round trips."""

import numpy as np
import pytest

from silmesh import autodiff as ad
from silmesh import mesh as m
from silmesh.errors import DegenerateGeometryError, NonManifoldError

from conftest import make_cube


class TestIcosphere:
    @pytest.mark.parametrize("level,nv,nf", [
        (0, 12, 20), (1, 42, 80), (2, 162, 320), (3, 642, 1280),
    ])
    def test_counts(self, level, nv, nf):
        sphere = m.make_icosphere(level)
        assert sphere.vertices.shape == (nv, 3)
        assert sphere.faces.shape == (nf, 3)

    def test_unit_radius(self):
        sphere = m.make_icosphere(3)
        r = np.linalg.norm(sphere.vertices, axis=1)
        assert np.abs(r - 1.0).max() < 1e-6

    def test_outward_winding(self):
        sphere = m.make_icosphere(2)
        n = m.face_normals(sphere)
        centroids = sphere.vertices[sphere.faces].mean(axis=1)
        assert ((n * centroids).sum(axis=1) > 0).all()

    def test_level_guard(self):
        with pytest.raises(ValueError):
            m.make_icosphere(7)
        with pytest.raises(ValueError):
            m.make_icosphere(-1)

    def test_deterministic(self):
        a, b = m.make_icosphere(2), m.make_icosphere(2)
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.faces, b.faces)

    def test_edge_count_level3(self):
        adj = m.build_edge_adjacency(m.make_icosphere(3))
        assert len(adj.vertex_pairs) == 1920  # 3F/2


class TestAdjacency:
    def test_closed_mesh_counts(self, cube):
        adj = m.build_edge_adjacency(cube)
        assert len(adj.vertex_pairs) == 18
        assert adj.face_pairs.shape == (18, 2)
        # rows sorted lexicographically
        order = np.lexsort(adj.vertex_pairs.T[::-1])
        assert np.array_equal(order, np.arange(18))

    def test_open_mesh_rejected(self, cube):
        broken = m.TriMesh(cube.vertices, cube.faces[:-1])
        with pytest.raises(NonManifoldError):
            m.build_edge_adjacency(broken)


class TestSmoothness:
    def test_cube_energy_exact(self, cube):
        # 12 perpendicular cube edges contribute (1+0)^2 each, the 6
        # coplanar diagonal edges contribute (1-1)^2 = 0
        assert m.smoothness_loss(cube) == pytest.approx(12.0, abs=1e-4)

    def test_scale_invariant(self, cube):
        assert m.smoothness_loss(make_cube(0.37)) == pytest.approx(
            m.smoothness_loss(cube), abs=1e-4)

    def test_rotation_invariant(self):
        sphere = m.make_icosphere(1)
        base = m.smoothness_loss(sphere)
        th = 0.7
        rot = np.array([[np.cos(th), 0, np.sin(th)],
                        [0, 1, 0],
                        [-np.sin(th), 0, np.cos(th)]], np.float32)
        turned = m.TriMesh(sphere.vertices @ rot.T, sphere.faces)
        assert m.smoothness_loss(turned) == pytest.approx(base, rel=1e-3)

    def test_sphere_flattens_with_level(self):
        # finer icospheres approach flat dihedrals, energy per edge shrinks
        per_edge = []
        for level in (0, 1, 2):
            sphere = m.make_icosphere(level)
            adj = m.build_edge_adjacency(sphere)
            per_edge.append(m.smoothness_loss(sphere, adj) / len(adj.vertex_pairs))
        assert per_edge[0] > per_edge[1] > per_edge[2]

    def test_degenerate_face_rejected(self, cube):
        bad = cube.vertices.copy()
        bad[1] = bad[0]  # collapses two faces
        with pytest.raises(DegenerateGeometryError):
            m.smoothness_loss(m.TriMesh(bad, cube.faces))

    def test_gradient_matches_finite_differences(self):
        sphere = m.make_icosphere(1)
        adj = m.build_edge_adjacency(sphere)
        rng = np.random.default_rng(3)
        verts = sphere.vertices + 0.05 * rng.standard_normal(
            sphere.vertices.shape).astype(np.float32)

        def f(t):
            return m.smoothness_energy(t, sphere.faces, adj.face_pairs)

        coords = rng.choice(verts.size, size=24, replace=False)
        err = ad.finite_difference_check(f, verts, h=1e-3, coords=coords)
        assert err < 1e-2

    def test_batched_tiling_matches_sum(self, cube):
        adj = m.build_edge_adjacency(cube)
        faces3, edges3 = m.tile_mesh_indices(cube.faces, adj.face_pairs,
                                             copies=3, n_vertices=8)
        stacked = np.concatenate([cube.vertices] * 3)
        total = m.smoothness_energy(ad.Tensor(stacked), faces3, edges3).item()
        assert total == pytest.approx(3 * 12.0, abs=1e-3)


class TestDisplacements:
    def test_flat_and_matrix_forms_agree(self):
        sphere = m.make_icosphere(0)
        rng = np.random.default_rng(4)
        d = rng.standard_normal((12, 3)).astype(np.float32) * 0.1
        a = m.apply_displacements(sphere, d)
        b = m.apply_displacements(sphere, d.reshape(-1))
        assert np.array_equal(a.vertices, b.vertices)
        assert np.allclose(a.vertices - sphere.vertices, d, atol=1e-7)

    def test_wrong_size_rejected(self):
        sphere = m.make_icosphere(0)
        with pytest.raises(ValueError):
            m.apply_displacements(sphere, np.zeros(35, np.float32))


class TestObjIO:
    def test_round_trip(self, tmp_path, cube):
        path = tmp_path / "cube.obj"
        m.export_obj(cube, str(path))
        back = m.read_obj(str(path))
        assert np.abs(back.vertices - cube.vertices).max() < 1e-5
        assert np.array_equal(back.faces, cube.faces)

    def test_sphere_round_trip_tolerance(self, tmp_path):
        sphere = m.make_icosphere(2)
        path = tmp_path / "s.obj"
        m.export_obj(sphere, str(path))
        back = m.read_obj(str(path))
        assert np.abs(back.vertices - sphere.vertices).max() < 1e-5

    def test_missing_file(self):
        with pytest.raises(OSError):
            m.read_obj("")

    def test_non_triangle_rejected(self, tmp_path):
        p = tmp_path / "quad.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        with pytest.raises(ValueError, match="triangle"):
            m.read_obj(str(p))

    def test_face_index_out_of_range(self, tmp_path):
        p = tmp_path / "bad.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
        with pytest.raises(ValueError):
            m.read_obj(str(p))
