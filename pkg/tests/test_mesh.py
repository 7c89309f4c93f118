import numpy as np
import pytest

from pampa2d import mesh as M
from pampa2d import layout as L


def test_unit_square_split_counts():
    m = M.build_structured_tri(1, 1, (0, 0, 1, 1))
    edges, _, _ = m.edge_table()
    assert m.n_cells == 2
    assert m.n_vertices == 4
    assert len(edges) == 5


def test_structured_tri_area_partition():
    m = M.build_structured_tri(2, 2, (0, 0, 1, 1))
    assert m.n_cells == 8
    assert abs(m.cell_areas().sum() - 1.0) < 1e-14


def test_generator_h_matches_refinement_ladder_scale():
    m = M.build_structured_tri(100, 100, (-2, -2, 2, 2))
    h = m.cell_diameters().max()
    assert abs(h - 0.0566) < 5e-4


def test_degenerate_bbox_raises():
    with pytest.raises(M.MeshError):
        M.build_structured_tri(2, 2, (0, 0, 0, 1))


def test_refine_uniform_counts_and_area():
    m = M.build_structured_tri(1, 1, (0, 0, 1, 1))
    r = M.refine_uniform(m)
    assert r.n_cells == 8
    assert abs(r.cell_areas().sum() - m.cell_areas().sum()) < 1e-12
    with pytest.raises(M.MeshError):
        M.refine_uniform(M.build_structured_quad(2, 2, (0, 0, 1, 1)))


def test_refinement_ladder_h_halves():
    m = M.build_structured_tri(25, 25, (-2, -2, 2, 2))
    hs = []
    for _ in range(4):
        hs.append(m.cell_diameters().max())
        m = M.refine_uniform(m)
    hs.append(m.cell_diameters().max())
    # ladder scale of the reference study: 0.224 / 2^j within a few percent
    for j, h in enumerate(hs):
        assert abs(h - 0.2263 / 2 ** j) < 0.02 * 0.2263 / 2 ** j
    for j in range(1, 5):
        assert abs(hs[j - 1] / hs[j] - 2.0) < 1e-12


def test_dual_hexagon_of_regular_fan():
    # six equilateral triangles around the origin
    ang = np.linspace(0, 2 * np.pi, 7)[:-1]
    verts = np.vstack([[0.0, 0.0], np.column_stack([np.cos(ang), np.sin(ang)])])
    cells = [[0, 1 + i, 1 + (i + 1) % 6] for i in range(6)]
    m = M.Mesh(verts, cells)
    dual = M.build_polygonal_dual(m)
    centre_poly = [c for c in dual.cells if len(c) == 6]
    assert len(centre_poly) == 1
    pts = dual.vertices[centre_poly[0]]
    r = np.linalg.norm(pts, axis=1)
    assert np.allclose(r, r[0], atol=1e-12)


def test_dual_area_partition():
    tri = M.build_structured_tri(5, 4, (0, 0, 2, 1))
    dual = M.build_polygonal_dual(tri)
    assert abs(dual.cell_areas().sum() - 2.0) < 1e-12


def test_dual_mesh_statistics_match_reference_family():
    # triangular mesh of the nonconvex-scalar benchmark family and its dual
    tri = M.build_structured_tri(86, 86, (-2, -2, 2, 2))
    edges, edge_cells, _ = tri.edge_table()
    n_pdofs_tri = tri.n_vertices + len(edges)
    assert abs(tri.n_cells - 14794) / 14794 < 0.15
    assert abs(len(edges) - 22351) / 22351 < 0.15
    assert abs(n_pdofs_tri - 29909) / 29909 < 0.15
    dual = M.build_polygonal_dual(tri)
    dedges, _, _ = dual.edge_table()
    n_pdofs = dual.n_vertices + len(dedges)
    assert abs(dual.n_cells - 7558) / 7558 < 0.15
    assert abs(len(dedges) - 22991) / 22991 < 0.15
    assert abs(n_pdofs - 38425) / 38425 < 0.15


def test_mesh_json_roundtrip_byte_identical(tmp_path):
    m = M.build_polygonal_dual(M.build_structured_tri(4, 3, (0, 0, 1, 1)))
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    M.save_mesh(m, p1)
    M.save_mesh(M.load_mesh(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_dof_normals_unit_square():
    m = M.build_structured_quad(1, 1, (0, 0, 1, 1))
    d = L.build_discretization(m)
    # vertex at (1,1): sum of right edge (1,0) and top edge (0,1) normals
    vid = int(np.argmin(np.linalg.norm(m.vertices - [1, 1], axis=1)))
    o = d.slot_ptr[0]
    loc = [b for b in range(o, d.slot_ptr[1]) if d.slot_pdof[b] == vid]
    assert np.allclose(d.slot_normal[loc[0]], [1.0, 1.0], atol=1e-14)
    # edge-interior DoF of the right edge: |e| n_e = (1, 0)
    eidx = [ei for ei, (a, b) in enumerate(d.edge_verts)
            if np.allclose(d.points[d.edge_dofs[ei, 1]], [1.0, 0.5])][0]
    mid = d.edge_dofs[eidx, 1]
    loc = [b for b in range(o, d.slot_ptr[1]) if d.slot_pdof[b] == mid]
    assert np.allclose(np.abs(d.slot_normal[loc[0]]), [1.0, 0.0], atol=1e-14)


@pytest.mark.parametrize("make", [
    lambda: M.build_structured_tri(4, 5, (0, 0, 1, 1)),
    lambda: M.build_structured_quad(3, 3, (-1, 0, 2, 2)),
    lambda: M.build_polygonal_dual(M.build_structured_tri(5, 5, (-1, -1, 1, 1))),
])
def test_geometric_invariants(make):
    d = L.build_discretization(make())
    L.check_geometric_invariants(d)


def test_interior_dof_normals_telescope():
    d = L.build_discretization(M.build_structured_tri(4, 4, (0, 0, 1, 1)))
    interior = np.ones(d.n_pdofs, dtype=bool)
    for ei in d.boundary_edges:
        interior[d.edge_dofs[ei]] = False
    sums = np.zeros((d.n_pdofs, 2))
    for k in range(len(d.pt_slot)):
        s = d.pt_slot[k]
        if d.slot_cell[s] < d.n_cells:
            sums[d.slot_target[s]] += d.slot_normal[s]
    assert np.abs(sums[interior]).max() < 1e-13


def test_nonstar_dual_raises_with_vertex_id():
    # distorted fan whose dual polygon fails the star-shape requirement
    verts = np.array([
        [0.0, 0.0],
        [-0.04287573284010088, 0.09631386710050399],
        [-2.8439434767776115, 1.6903521564169706],
        [-0.259083135142503, 0.06092765307149191],
        [0.2918475299593205, -0.25886168694794176]])
    cells = [[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]]
    m = M.Mesh(verts, cells)
    with pytest.raises(M.MeshError, match="vertex 1"):
        M.build_polygonal_dual(m)
