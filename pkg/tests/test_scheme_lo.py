import numpy as np
import pytest

from pampa2d import bc, layout as L, mesh as M, physics as P
from pampa2d import scheme_lo as LO
from pampa2d import timeloop as T


def test_rusanov_consistency():
    model = P.make_model({"type": "kpp"})
    u = np.array([0.8])
    f, a = LO.lo_average_flux(u, u, np.array([0.6, 0.8]), model)
    ref = np.sin(0.8) * 0.6 + np.cos(0.8) * 0.8
    assert abs(float(f) - ref) < 1e-14


def test_rusanov_pure_upwind_scalar():
    model = P.make_model({"type": "advection", "field": "constant", "a": (1.0, 0.0)})
    f, a = LO.lo_average_flux(np.array([1.0]), np.array([0.0]),
                              np.array([1.0, 0.0]), model, x=np.zeros(2))
    assert abs(float(f) - 1.0) < 1e-14
    assert abs(a - 1.0) < 1e-14


def test_riemann_intermediate_state_admissible_for_random_euler_pairs():
    model = P.EulerModel(1.4)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        wl = np.array([rng.uniform(0.05, 5), rng.uniform(-4, 4),
                       rng.uniform(-4, 4), rng.uniform(0.05, 5)])
        wr = np.array([rng.uniform(0.05, 5), rng.uniform(-4, 4),
                       rng.uniform(-4, 4), rng.uniform(0.05, 5)])
        ul, ur = model.from_primitive(wl), model.from_primitive(wr)
        n = rng.standard_normal(2)
        n /= np.linalg.norm(n)
        alpha = float(model.max_speed_states([ul, ur], n))
        fl = np.einsum("dm,d->m", model.flux(ul), n)
        fr = np.einsum("dm,d->m", model.flux(ur), n)
        ustar = 0.5 * (ul + ur) - (fr - fl) / (2 * alpha)
        assert model.in_domain(ustar)


def test_lo_residual_constant_state_vanishes():
    model = P.make_model({"type": "kpp"})
    mesh = M.build_polygonal_dual(M.build_structured_tri(4, 4, (0, 0, 1, 1)))
    disc = L.build_discretization(mesh, n_comp=1)
    pts = np.full((disc.n_pdofs, 1), 0.9)
    avg = np.full((disc.n_cells, 1), 0.9)
    cfg = T.RunConfig(model={}, t_final=1.0, limiter="convex")
    model.set_bounds(0.9, 0.9)
    sol = T.Solver(disc, model, cfg, bounds=(0.9, 0.9))
    U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
    lo = LO.assemble_lo(disc, model, U_pts, U_avg, sol.adv, out=sol.lo)
    assert np.abs(lo.phi[disc.pt_slot]).max() < 1e-13


@pytest.mark.parametrize("spec,mesh_kind", [
    ({"type": "kpp"}, "tri"),
    ({"type": "acoustics", "c": 1.0}, "poly"),
    ({"type": "euler", "gamma": 1.4}, "quad"),
])
def test_lo_kernel_matches_reference(spec, mesh_kind):
    model = P.make_model(spec)
    if mesh_kind == "poly":
        mesh = M.build_polygonal_dual(M.build_structured_tri(3, 3, (0, 0, 1, 1)))
    elif mesh_kind == "tri":
        mesh = M.build_structured_tri(3, 3, (0, 0, 1, 1))
    else:
        mesh = M.build_structured_quad(3, 3, (0, 0, 1, 1))
    disc = L.build_discretization(mesh, n_comp=model.m)
    rng = np.random.default_rng(7)
    if model.name == "euler":
        pts = model.from_primitive(np.column_stack(
            [rng.uniform(0.5, 2, disc.n_pdofs),
             rng.uniform(-1, 1, (disc.n_pdofs, 2)),
             rng.uniform(0.5, 2, disc.n_pdofs)]))
        avg = model.from_primitive(np.column_stack(
            [rng.uniform(0.5, 2, disc.n_cells),
             rng.uniform(-1, 1, (disc.n_cells, 2)),
             rng.uniform(0.5, 2, disc.n_cells)]))
    else:
        pts = rng.standard_normal((disc.n_pdofs, model.m))
        avg = rng.standard_normal((disc.n_cells, model.m))
    cfg = T.RunConfig(model={}, t_final=1.0, limiter="none")
    sol = T.Solver(disc, model, cfg)
    U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
    lo = LO.assemble_lo(disc, model, U_pts, U_avg, sol.adv, out=sol.lo)
    # reference evaluation of every (DoF, real cell) pair
    for cell in range(disc.n_cells):
        o, e = disc.slot_ptr[cell], disc.slot_ptr[cell + 1]
        for s in range(o, e):
            dof = disc.slot_target[s]
            ref = LO.lo_point_residual(dof, cell, disc, model, U_pts, U_avg)
            assert np.abs(lo.phi[s] - ref).max() < 1e-11 * max(
                1.0, np.abs(ref).max())


def test_lo_hand_assembled_formula_single_triangle():
    # independent transcription of the sub-triangle residual on one triangle
    model = P.make_model({"type": "kpp"})
    mesh = M.Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.3, 0.9]]), [[0, 1, 2]])
    disc = L.build_discretization(mesh, n_comp=1)
    rng = np.random.default_rng(1)
    pts = rng.uniform(0.5, 2.5, (disc.n_pdofs, 1))
    avg = rng.uniform(0.5, 2.5, (1, 1))
    cfg = T.RunConfig(model={}, t_final=1.0, limiter="none")
    sol = T.Solver(disc, model, cfg)
    U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
    lo = LO.assemble_lo(disc, model, U_pts, U_avg, sol.adv, out=sol.lo)

    def flux(u):
        return np.array([np.sin(u), np.cos(u)])

    cell = 0
    o = disc.slot_ptr[cell]
    nbd = 6
    for i in range(nbd):
        s = o + i
        sp = o + (i - 1) % nbd
        di = disc.slot_pdof[s]
        dp = disc.slot_pdof[o + (i - 1) % nbd]
        dn = disc.slot_pdof[o + (i + 1) % nbd]
        ui, up, un = float(U_pts[di, 0]), float(U_pts[dp, 0]), float(U_pts[dn, 0])
        ub = float(U_avg[cell, 0])
        a_sig = lo.alpha_slot[s]
        acc = 0.0
        acc += (flux(up) - flux(ub)) @ disc.subtri_n[sp, 0] / 6.0
        acc += (flux(ui) - flux(ub)) @ disc.subtri_n[sp, 1] / 6.0
        acc += a_sig / 3.0 * ((ui - up) + (ui - ub))
        acc += (flux(ui) - flux(ub)) @ disc.subtri_n[s, 0] / 6.0
        acc += (flux(un) - flux(ub)) @ disc.subtri_n[s, 1] / 6.0
        acc += a_sig / 3.0 * ((ui - un) + (ui - ub))
        acc /= disc.slot_dual_area[s]
        assert abs(acc - lo.phi[s, 0]) < 1e-13 * max(1.0, abs(acc))


def test_low_order_point_update_is_convex_combination():
    # one forward-Euler low-order step stays in the hull of the stencil values
    model = P.make_model({"type": "kpp"})
    mesh = M.build_polygonal_dual(M.build_structured_tri(4, 4, (0, 0, 1, 1)))
    disc = L.build_discretization(mesh, n_comp=1)
    rng = np.random.default_rng(2)
    cfg = T.RunConfig(model={}, t_final=1.0, cfl=0.4, limiter="none")
    sol = T.Solver(disc, model, cfg)
    for _ in range(25):
        pts = rng.uniform(-1.0, 3.0, (disc.n_pdofs, 1))
        avg = rng.uniform(-1.0, 3.0, (disc.n_cells, 1))
        U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
        lo = LO.assemble_lo(disc, model, U_pts, U_avg, sol.adv, out=sol.lo)
        dt = LO.compute_dt(disc, lo, 0.4)
        for p in rng.integers(0, disc.n_pdofs, 40):
            sl = disc.pt_slot[disc.pt_ptr[p]:disc.pt_ptr[p + 1]]
            tot = lo.phi[sl, 0].sum()
            new = pts[p, 0] - dt * tot
            stoff = []
            for s in sl:
                cell = disc.slot_cell[s]
                o, e = disc.slot_ptr[cell], disc.slot_ptr[cell + 1]
                nbd = e - o
                i = int(s - o)
                for j in (i - 1, i, i + 1):
                    stoff.append(float(U_pts[disc.slot_pdof[o + j % nbd], 0]))
                stoff.append(float(U_avg[cell, 0]))
            lohull, hihull = min(stoff), max(stoff)
            assert lohull - 1e-11 <= new <= hihull + 1e-11


def test_compute_dt_scalings():
    model = P.make_model({"type": "advection", "field": "constant", "a": (1.0, 0.0)})
    mesh = M.build_structured_quad(8, 8, (0, 0, 1, 1))
    disc = L.build_discretization(mesh, n_comp=1)
    pts = np.zeros((disc.n_pdofs, 1))
    avg = np.zeros((disc.n_cells, 1))
    cfg = T.RunConfig(model={}, t_final=1.0, cfl=0.3, limiter="none")
    sol = T.Solver(disc, model, cfg)
    U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
    lo = LO.assemble_lo(disc, model, U_pts, U_avg, sol.adv, out=sol.lo)
    dt1 = LO.compute_dt(disc, lo, 0.3)
    # doubling all wave speeds halves dt
    model2 = P.make_model({"type": "advection", "field": "constant", "a": (2.0, 0.0)})
    sol2 = T.Solver(disc, model2, cfg)
    lo2 = LO.assemble_lo(disc, model2, U_pts, U_avg, sol2.adv)
    dt2 = LO.compute_dt(disc, lo2, 0.3)
    assert abs(dt1 / dt2 - 2.0) < 1e-12
    # refining the mesh by 2 halves dt
    mesh_f = M.build_structured_quad(16, 16, (0, 0, 1, 1))
    disc_f = L.build_discretization(mesh_f, n_comp=1)
    sol_f = T.Solver(disc_f, model, cfg)
    U_pts_f, U_avg_f = bc.ghost_values(disc_f, model,
                                       np.zeros((disc_f.n_pdofs, 1)),
                                       np.zeros((disc_f.n_cells, 1)))
    lo_f = LO.assemble_lo(disc_f, model, U_pts_f, U_avg_f, sol_f.adv)
    dt_f = LO.compute_dt(disc_f, lo_f, 0.3)
    assert abs(dt1 / dt_f - 2.0) < 1e-12


def test_compute_dt_matches_independent_recomputation():
    # standalone re-evaluation of the two printed bounds
    from pampa2d import cases
    case = cases.get_case("kpp")
    model = case.make_model()
    mesh = case.default_mesh("tri", 16)
    disc = L.build_discretization(mesh, n_comp=1)
    pts, avg = T.init_state(disc, case.ic)
    cfg = T.RunConfig(model={}, t_final=1.0, cfl=0.3, limiter="none")
    sol = T.Solver(disc, model, cfg)
    U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
    lo = LO.assemble_lo(disc, model, U_pts, U_avg, sol.adv, out=sol.lo)
    dt = LO.compute_dt(disc, lo, 0.3)

    bound_pt = np.inf
    for p in range(disc.n_pdofs):
        sl = disc.pt_slot[disc.pt_ptr[p]:disc.pt_ptr[p + 1]]
        a = lo.alpha_speed[sl].max()
        if a > 0:
            bound_pt = min(bound_pt,
                           disc.dual_area_bc[p] / (disc.dual_perim_bc[p] * a))
    bound_avg = np.inf
    for c in range(disc.n_cells):
        tot = 0.0
        for k in range(disc.cedge_ptr[c], disc.cedge_ptr[c + 1]):
            e = disc.cedge_idx[k]
            tot += disc.edge_len[e] * lo.alpha_e[e]
        if tot > 0:
            bound_avg = min(bound_avg, disc.cell_area[c] / tot)
    assert abs(dt - 0.3 * min(bound_pt, bound_avg)) < 1e-14 * dt
