import numpy as np
import pytest

from pampa2d import bc, cases, layout as L, mesh as M, physics as P
from pampa2d import scheme_ho as H
from pampa2d import timeloop as T


def make_setup(mesh, model, seed=0, boundary=None):
    rules = None
    if boundary:
        resolved = bc.resolve_rules(boundary, model)
        tags = sorted({t for t in mesh.boundary_tags.values()})
        rules = bc.rules_for_layout(resolved, tags)
    disc = L.build_discretization(mesh, bc_rules=rules, n_comp=model.m)
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((disc.n_pdofs, model.m))
    avg = rng.standard_normal((disc.n_cells, model.m))
    if model.name == "euler":
        pts = model.from_primitive(
            np.column_stack([rng.uniform(0.5, 2, disc.n_pdofs),
                             rng.uniform(-1, 1, (disc.n_pdofs, 2)),
                             rng.uniform(0.5, 2, disc.n_pdofs)]))
        avg = model.from_primitive(
            np.column_stack([rng.uniform(0.5, 2, disc.n_cells),
                             rng.uniform(-1, 1, (disc.n_cells, 2)),
                             rng.uniform(0.5, 2, disc.n_cells)]))
    cfg = T.RunConfig(model={}, t_final=1.0, limiter="none")
    sol = T.Solver(disc, model, cfg)
    return disc, sol, pts, avg


def test_gauss_lobatto_edge_flux_basics():
    model = P.make_model({"type": "advection", "field": "constant", "a": (1.0, 0.0)})
    n = np.array([1.0, 0.0])
    x = np.zeros((3, 2))
    const = np.full((3, 1), 2.0)
    f = H.ho_average_flux(const, n, model, x=x)
    assert abs(float(f) - 2.0) < 1e-14
    lin = np.array([[0.0], [0.5], [1.0]])
    f = H.ho_average_flux(lin, n, model, x=x)
    assert abs(float(f) - 0.5) < 1e-14


def test_gauss_lobatto_exact_for_cubic_integrand():
    # quadratic values times a linear flux profile: degree-3 integrand
    s = np.array([0.0, 0.5, 1.0])
    vals = (3 * s ** 2 - s + 1)[:, None]
    model = P.make_model({"type": "advection", "field": "constant", "a": (1.0, 0.0)})
    f = H.ho_average_flux(vals, np.array([1.0, 0.0]), model, x=np.zeros((3, 2)))
    exact = 3 / 3 - 1 / 2 + 1
    assert abs(float(f) - exact) < 1e-14


@pytest.mark.parametrize("mesh_kind", ["quad", "tri", "poly"])
def test_consistency_identity_linear_data(mesh_kind):
    # constant-coefficient advection, linear field: sum of residuals equals
    # a . grad u at every interior DoF
    model = P.make_model({"type": "advection", "field": "constant", "a": (0.7, -0.4)})
    if mesh_kind == "poly":
        mesh = M.build_polygonal_dual(M.build_structured_tri(5, 5, (0, 0, 1, 1)))
    elif mesh_kind == "tri":
        mesh = M.build_structured_tri(4, 4, (0, 0, 1, 1))
    else:
        mesh = M.build_structured_quad(4, 4, (0, 0, 1, 1))
    disc = L.build_discretization(mesh, n_comp=1)
    grad = np.array([1.3, -2.1])
    f = lambda x: (x @ grad)[..., None]
    pts, avg = T.init_state(disc, f)
    cfg = T.RunConfig(model={}, t_final=1.0, limiter="none")
    sol = T.Solver(disc, model, cfg)
    U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
    ho = H.assemble_ho(disc, model, U_pts, U_avg, sol.adv, stab_on=True,
                       static=sol.ho_static)
    interior = np.ones(disc.n_pdofs, dtype=bool)
    for ei in disc.boundary_edges:
        interior[disc.edge_dofs[ei]] = False
    target = float(grad @ np.array([0.7, -0.4]))
    sums = np.zeros(disc.n_pdofs)
    for k in range(len(disc.pt_slot)):
        s = disc.pt_slot[k]
        sums[disc.slot_target[s]] += ho.phi[s, 0]
    assert np.abs(sums[interior] - target).max() < 1e-12 * max(1.0, abs(target))


def test_consistency_identity_acoustics_at_spanning_dofs():
    model = P.AcousticsModel(1.0)
    mesh = M.build_structured_quad(4, 4, (0, 0, 1, 1))
    disc = L.build_discretization(mesh, n_comp=3)
    G = np.array([[0.3, -0.2], [0.1, 0.5], [-0.4, 0.2]])   # grad of each comp

    def f(x):
        return x @ G.T
    pts, avg = T.init_state(disc, f)
    cfg = T.RunConfig(model=model.__dict__.get("spec", {}), t_final=1.0, limiter="none")
    sol = T.Solver(disc, model, cfg)
    U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
    ho = H.assemble_ho(disc, model, U_pts, U_avg, sol.adv, stab_on=True)
    interior = np.ones(disc.n_pdofs, dtype=bool)
    for ei in disc.boundary_edges:
        interior[disc.edge_dofs[ei]] = False
    # vertices (normal fans span); edge midpoints carry degenerate directions
    is_vertex = np.zeros(disc.n_pdofs, dtype=bool)
    is_vertex[:disc.mesh.n_vertices] = True
    target = model.jac_dot(np.zeros(3), G[:, 0], G[:, 1])
    sums = np.zeros((disc.n_pdofs, 3))
    for k in range(len(disc.pt_slot)):
        s = disc.pt_slot[k]
        sums[disc.slot_target[s]] += ho.phi[s]
    sel = interior & is_vertex
    assert np.abs(sums[sel] - target).max() < 1e-11 * max(1.0, np.abs(target).max())


def test_constant_state_zero_residual():
    model = P.make_model({"type": "kpp"})
    mesh = M.build_polygonal_dual(M.build_structured_tri(4, 4, (0, 0, 1, 1)))
    disc = L.build_discretization(mesh, n_comp=1)
    pts = np.full((disc.n_pdofs, 1), 1.7)
    avg = np.full((disc.n_cells, 1), 1.7)
    cfg = T.RunConfig(model={}, t_final=1.0, limiter="none")
    sol = T.Solver(disc, model, cfg)
    U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
    ho = H.assemble_ho(disc, model, U_pts, U_avg, sol.adv, stab_on=True)
    assert np.abs(ho.phi[disc.pt_slot]).max() < 1e-12


@pytest.mark.parametrize("spec,mesh_kind", [
    ({"type": "kpp"}, "tri"),
    ({"type": "kpp"}, "poly"),
    ({"type": "acoustics", "c": 1.3}, "tri"),
    ({"type": "acoustics", "c": 1.3}, "poly"),
    ({"type": "euler", "gamma": 1.4}, "quad"),
    ({"type": "euler", "gamma": 1.4}, "poly"),
])
def test_kernel_matches_reference(spec, mesh_kind):
    model = P.make_model(spec)
    if mesh_kind == "poly":
        mesh = M.build_polygonal_dual(M.build_structured_tri(3, 3, (0, 0, 1, 1)))
    elif mesh_kind == "tri":
        mesh = M.build_structured_tri(3, 3, (0, 0, 1, 1))
    else:
        mesh = M.build_structured_quad(3, 3, (0, 0, 1, 1))
    disc, sol, pts, avg = make_setup(mesh, model, seed=3)
    U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
    ho = H.assemble_ho(disc, model, U_pts, U_avg, sol.adv, stab_on=True,
                       out=sol.ho)
    scale = np.abs(ho.phi[disc.pt_slot]).max()
    for dof in range(disc.n_pdofs):
        ref, _, _ = H._point_residuals_at(dof, disc, model, U_pts, U_avg,
                                          sol.adv[0], True, False)
        for (cell, s), val in ref.items():
            assert np.abs(ho.phi[s] - val).max() < 5e-6 * scale


def test_advection_fast_path_matches_kernel_path():
    model = P.make_model({"type": "advection", "field": "rotation"})
    mesh = M.build_polygonal_dual(M.build_structured_tri(4, 4, (-1, -1, 1, 1)))
    disc, sol, pts, avg = make_setup(mesh, model, seed=4)
    U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
    o1 = H.assemble_ho(disc, model, U_pts, U_avg, sol.adv, static=sol.ho_static)
    o2 = H.assemble_ho(disc, model, U_pts, U_avg, sol.adv)
    sl = disc.pt_slot
    assert np.abs(o1.phi[sl] - o2.phi[sl]).max() < 1e-12
    assert np.abs(o1.edge_flux - o2.edge_flux).max() < 1e-12


def test_average_update_conserves():
    case = cases.get_case("rotation")
    model = case.make_model()
    mesh = case.default_mesh("tri", 12)
    disc = L.build_discretization(mesh, n_comp=1)
    pts, avg = T.init_state(disc, case.ic)
    cfg = T.RunConfig(model=case.model_spec, t_final=1.0, cfl=0.2, limiter="none")
    sol = T.Solver(disc, model, cfg)
    area = disc.cell_area[:disc.n_cells]
    m0 = float(area @ avg)
    p2, a2, bflux = sol._stage(pts, avg, 1e-4, "none")
    m1 = float(area @ a2)
    assert abs(m1 - m0 + 1e-4 * float(bflux)) < 1e-13 * max(1.0, abs(m0))


def test_damping_reduces_projection_deviation_energy():
    # the vortex run with damping must shrink the spurious-mode energy
    # relative to the run without it
    case = cases.get_case("vortex")
    model = case.make_model()
    mesh = case.default_mesh("poly", 16)
    disc = L.build_discretization(mesh, n_comp=4)
    pts0, avg0 = T.init_state(disc, case.ic)

    def deviation_energy(pts, avg):
        U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
        tot = 0.0
        for g in disc.groups:
            real = g.cells < disc.n_cells
            cells = g.cells[real]
            dofs = np.concatenate([U_pts[g.bdof[real]],
                                   U_avg[cells][:, None, :]], axis=1)
            dev = dofs - np.einsum("crs,csm->crm", g.Dpi[real], dofs)
            tot += float((dev ** 2).sum())
        return tot

    res = {}
    for stab in (True, False):
        cfg = T.RunConfig(model=case.model_spec, t_final=0.4, cfl=0.2,
                          limiter="none", stabilization=stab)
        out = T.run(disc, model, cfg, pts0.copy(), avg0.copy())
        res[stab] = deviation_energy(out.pts, out.avg)
    assert res[True] < res[False]


def test_singular_upwind_reports_dof():
    # identically-degenerate directions are absorbed by the shift; a matrix
    # sum that cannot be factored (NaN states) must fail loudly
    model = P.EulerModel(1.4)
    mesh = M.build_structured_quad(2, 2, (0, 0, 1, 1))
    disc, sol, pts, avg = make_setup(mesh, model)
    pts[:] = np.nan
    U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
    with pytest.raises(H.SingularUpwindError):
        H.assemble_ho(disc, model, U_pts, U_avg, sol.adv)
