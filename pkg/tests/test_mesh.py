"""Structured mesh construction, refinement, and point location."""

import numpy as np
import pytest

from fdlm.mesh import (AffineMap, Triangulation, element_map, locate_point,
                       midpoint_refine, uniform_mesh)


class TestUniformMesh:
    def test_minimal_mesh(self):
        """One cell gives 4 vertices and 2 triangles."""
        mesh = uniform_mesh((0, 0), (1, 1), 1, orientation="right")
        assert mesh.n_vertices == 4
        assert mesh.n_triangles == 2

    def test_fluid_box_counts(self):
        """16 cells per side on side 4: 289 vertices, 512 triangles, h=0.25."""
        mesh = uniform_mesh((-2, -2), (2, 2), 16, orientation="right")
        assert mesh.n_vertices == 289
        assert mesh.n_triangles == 512
        assert mesh.h == pytest.approx(0.25)

    def test_solid_spacing_ratio(self):
        """8 cells on the unit square gives h=0.125, half the fluid spacing."""
        solid = uniform_mesh((0, 0), (1, 1), 8, orientation="left")
        assert solid.h == pytest.approx(0.125)
        fluid = uniform_mesh((-2, -2), (2, 2), 16)
        assert solid.h / fluid.h == pytest.approx(0.5)

    def test_area_sums_both_orientations(self):
        for n in (1, 2, 3, 7, 16, 64):
            for orientation in ("right", "left"):
                mesh = uniform_mesh((-2, -2), (2, 2), n, orientation=orientation)
                np.testing.assert_allclose(mesh.areas.sum(), 16.0, rtol=1e-12)

    def test_positive_areas(self):
        for orientation in ("right", "left"):
            mesh = uniform_mesh((0, 0), (1, 1), 5, orientation=orientation)
            assert np.all(mesh.areas > 0)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            uniform_mesh((0, 0), (1, 1), 0)
        with pytest.raises(ValueError):
            uniform_mesh((0, 0), (0, 1), 4)
        with pytest.raises(ValueError):
            uniform_mesh((0, 0), (1, 1), 4, orientation="diagonal")

    def test_vertices_lexicographic(self):
        """Vertices are numbered row-major, x fastest."""
        mesh = uniform_mesh((0, 0), (1, 1), 2)
        np.testing.assert_allclose(mesh.vertices[0], [0.0, 0.0])
        np.testing.assert_allclose(mesh.vertices[1], [0.5, 0.0])
        np.testing.assert_allclose(mesh.vertices[3], [0.0, 0.5])

    def test_orientation_diagonals(self):
        """Right orientation uses the lower-left to upper-right diagonal."""
        right = uniform_mesh((0, 0), (1, 1), 1, orientation="right")
        left = uniform_mesh((0, 0), (1, 1), 1, orientation="left")
        # the shared diagonal edge appears in both triangles of the cell
        def diagonal(mesh):
            t0 = set(mesh.triangles[0]) & set(mesh.triangles[1])
            return sorted(t0)
        assert diagonal(right) == [0, 3]   # (0,0)-(1,1)
        assert diagonal(left) == [1, 2]    # (1,0)-(0,1)


class TestMidpointRefine:
    def test_counts(self):
        mesh = uniform_mesh((0, 0), (1, 1), 1)
        refined = midpoint_refine(mesh)
        assert refined.n_triangles == 8
        twice = midpoint_refine(refined)
        assert twice.n_triangles == 32

    def test_fluid_mesh_refinement(self):
        mesh = uniform_mesh((-2, -2), (2, 2), 16)
        refined = midpoint_refine(mesh)
        assert refined.n_triangles == 2048
        assert refined.h == pytest.approx(0.125)

    def test_area_preserved(self):
        mesh = uniform_mesh((-2, -2), (2, 2), 7, orientation="left")
        refined = midpoint_refine(mesh)
        np.testing.assert_allclose(refined.areas.sum(), 16.0, rtol=1e-13)

    def test_children_consecutive_in_parent_order(self):
        """Children of parent t occupy slots 4t..4t+3 and tile the parent."""
        mesh = uniform_mesh((0, 0), (1, 1), 2)
        refined = midpoint_refine(mesh)
        for t in range(mesh.n_triangles):
            child_area = refined.areas[4 * t:4 * t + 4].sum()
            np.testing.assert_allclose(child_area, mesh.areas[t], rtol=1e-13)
            # child centroids lie in the parent triangle
            parent = mesh.vertices[mesh.triangles[t]]
            mat = np.column_stack([parent[1] - parent[0], parent[2] - parent[0]])
            for c in range(4):
                cen = refined.centroids[4 * t + c]
                bary = np.linalg.solve(mat, cen - parent[0])
                assert bary.min() > -1e-12 and bary.sum() < 1 + 1e-12

    def test_refined_mesh_matches_direct(self):
        """Refining n=4 gives the same vertex set as building n=8 directly."""
        refined = midpoint_refine(uniform_mesh((0, 0), (1, 1), 4))
        direct = uniform_mesh((0, 0), (1, 1), 8)
        assert refined.n_vertices == direct.n_vertices
        got = set(map(tuple, np.round(refined.vertices, 12)))
        want = set(map(tuple, np.round(direct.vertices, 12)))
        assert got == want


class TestElementMap:
    def test_reference_corners_map_to_element_vertices(self):
        mesh = uniform_mesh((0, 0), (1, 1), 1)
        amap = element_map(mesh, 0)
        ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(amap.apply(ref),
                                   mesh.vertices[mesh.triangles[0]],
                                   atol=1e-14)

    def test_determinant_is_twice_area(self):
        mesh = uniform_mesh((-2, -2), (2, 2), 16)
        for t in (0, 5, 100, 511):
            amap = element_map(mesh, t)
            assert abs(amap.det) == pytest.approx(0.0625, rel=1e-13)
            assert abs(amap.det) == pytest.approx(2 * mesh.areas[t], rel=1e-13)

    def test_scaling_map(self):
        h = 0.25
        mesh = uniform_mesh((0, 0), (h, h), 1)
        amap = element_map(mesh, 0)
        assert abs(amap.det) == pytest.approx(h * h, rel=1e-13)

    def test_out_of_range(self):
        mesh = uniform_mesh((0, 0), (1, 1), 2)
        with pytest.raises(IndexError):
            element_map(mesh, mesh.n_triangles)

    def test_apply_inverse_roundtrip(self):
        mesh = uniform_mesh((-1, 0), (3, 2), 3, orientation="left")
        amap = element_map(mesh, 7)
        rng = np.random.default_rng(3)
        pts = rng.random((20, 2)) * 0.5
        np.testing.assert_allclose(amap.apply_inverse(amap.apply(pts)), pts,
                                   atol=1e-13)


class TestLocatePoint:
    def test_centroids_exhaustive(self):
        for n in (1, 4, 32):
            for orientation in ("right", "left"):
                mesh = uniform_mesh((-2, -2), (2, 2), n, orientation=orientation)
                for t in range(mesh.n_triangles):
                    assert mesh.locate_point(mesh.centroids[t]) == t

    def test_outside(self):
        mesh = uniform_mesh((-2, -2), (2, 2), 4)
        assert mesh.locate_point((5.0, 5.0)) is None
        assert mesh.locate_point((0.0, -2.5)) is None

    def test_shared_edge_tie_break(self):
        """A point on the edge shared by triangles 4 and 5 resolves to 4."""
        mesh = uniform_mesh((-2, -2), (2, 2), 16)
        shared = sorted(set(mesh.triangles[4]) & set(mesh.triangles[5]))
        assert len(shared) == 2
        mid = mesh.vertices[shared].mean(axis=0)
        assert mesh.locate_point(mid) == 4

    def test_vertex_tie_break_smallest_index(self):
        mesh = uniform_mesh((0, 0), (1, 1), 4)
        v = mesh.vertices[6]
        candidates = [t for t in range(mesh.n_triangles)
                      if 6 in mesh.triangles[t]]
        assert mesh.locate_point(v) == min(candidates)

    def test_locate_points_matches_scalar(self):
        mesh = uniform_mesh((-2, -2), (2, 2), 8, orientation="left")
        rng = np.random.default_rng(11)
        pts = rng.uniform(-2.2, 2.2, size=(500, 2))
        bulk = mesh.locate_points(pts)
        for p, t in zip(pts, bulk):
            scalar = mesh.locate_point(p)
            assert (scalar is None and t == -1) or scalar == t

    def test_locate_points_on_edges_matches_scalar(self):
        mesh = uniform_mesh((0, 0), (1, 1), 4)
        # edge midpoints of every triangle sit exactly on element borders
        v = mesh.vertices[mesh.triangles]
        mids = np.concatenate([(v[:, 0] + v[:, 1]) / 2,
                               (v[:, 1] + v[:, 2]) / 2,
                               (v[:, 2] + v[:, 0]) / 2])
        bulk = mesh.locate_points(mids)
        for p, t in zip(mids, bulk):
            assert mesh.locate_point(p) == t


def test_mesh_dump_format(tmp_path):
    mesh = uniform_mesh((0, 0), (1, 1), 1)
    path = tmp_path / "mesh.txt"
    mesh.dump(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "vertices 4 triangles 2"
    assert len(lines) == 1 + 4 + 2
    first = [float(tok) for tok in lines[1].split()]
    np.testing.assert_allclose(first, mesh.vertices[0])
    tri = [int(tok) for tok in lines[5].split()]
    assert tri == list(mesh.triangles[0])


def test_boundary_vertex_flags():
    mesh = uniform_mesh((-2, -2), (2, 2), 8)
    flags = mesh.boundary_vertex_flags
    assert flags.sum() == 4 * 8
    on_boundary = (np.abs(np.abs(mesh.vertices) - 2.0) < 1e-12).any(axis=1)
    np.testing.assert_array_equal(flags, on_boundary)


def test_affine_map_singular_rejected():
    with pytest.raises(ValueError):
        AffineMap(np.zeros((2, 2)), (0.0, 0.0))
