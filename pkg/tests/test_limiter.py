import numpy as np
import pytest

from pampa2d import bc, cases, layout as L, limiter as LIM, mesh as M
from pampa2d import physics as P
from pampa2d import scheme_ho as H
from pampa2d import scheme_lo as LO
from pampa2d import timeloop as T


def eig_oracle(b0, bv, bE, c0, cv, cE):
    B = np.array([[b0, 0, -bv[0]], [0, b0, -bv[1]], [-bv[0], -bv[1], 2 * bE]])
    C = np.array([[c0, 0, -cv[0]], [0, c0, -cv[1]], [-cv[0], -cv[1], 2 * cE]])
    w, V = np.linalg.eigh(C)
    Cih = V @ np.diag(1.0 / np.sqrt(w)) @ V.T
    return np.abs(np.linalg.eigvalsh(Cih @ B @ Cih)).max()


def random_admissible_triple(rng):
    """(c0, cv, cE) with c0 > 0 and kappa0 < 0 (an admissible reference)."""
    c0 = rng.uniform(0.05, 5.0)
    cv = rng.uniform(-3, 3, 2)
    cE = (cv ** 2).sum() / (2 * c0) + rng.uniform(0.05, 5.0)
    return c0, cv, cE


def test_gql_eigen_identity_cases():
    rng = np.random.default_rng(0)
    c0, cv, cE = random_admissible_triple(rng)
    lam = LIM.gql_max_eigen((c0, cv, cE), (c0, cv, cE))
    assert abs(float(lam) - 1.0) < 1e-12
    lam = LIM.gql_max_eigen((0.0, np.zeros(2), 0.0), (c0, cv, cE))
    assert float(lam) == 0.0


def test_gql_eigen_matches_oracle_many_pairs():
    rng = np.random.default_rng(1)
    for _ in range(10 ** 4):
        c0, cv, cE = random_admissible_triple(rng)
        b0 = rng.uniform(-4, 4)
        bv = rng.uniform(-4, 4, 2)
        bE = rng.uniform(-4, 4)
        got = float(LIM.gql_max_eigen((b0, bv, bE), (c0, cv, cE)))
        ref = eig_oracle(b0, bv, bE, c0, cv, cE)
        assert abs(got - ref) <= 1e-10 * max(1.0, ref)


def test_gql_eigen_rejects_inadmissible_reference():
    with pytest.raises(LIM.LimiterError):
        LIM.gql_max_eigen((1.0, np.zeros(2), 1.0), (1.0, np.array([3.0, 0.0]), 1.0))


def test_eta_scalar_cases():
    model = P.make_model({"type": "advection", "field": "constant", "a": (1.0, 0.0)})
    n = np.array([1.0, 0.0])
    x = np.zeros(2)
    # no high/low difference: eta = 1
    assert LIM.convex_eta_scalar(1.0, 1.0, 0.3, 0.7, n, 1.0, (0.0, 1.0),
                                 model, x=x) == 1.0
    # intermediate state exactly at the upper bound with adverse flux: eta = 0
    eta = LIM.convex_eta_scalar(1.5, 1.0, 1.0, 1.0, n, 1.0, (0.0, 1.0),
                                model, x=x)
    assert eta == 0.0


def test_theta_scalar_cases():
    assert LIM.convex_theta_scalar(0.0, 0.5, 1.0, 0.1, (0.0, 1.0)) == 1.0
    assert LIM.convex_theta_scalar(3.0, 1.0, 1.0, 0.1, (0.0, 1.0)) == 0.0
    th = LIM.convex_theta_scalar(0.2, 0.5, 1.0, 0.1, (0.0, 1.0))
    assert 0.0 < th <= 1.0


def kpp_setup(nx=8, kind="tri", seed=0):
    case = cases.get_case("kpp")
    model = case.make_model()
    model.set_bounds(*case.bounds)
    mesh = case.default_mesh(kind, nx)
    disc = L.build_discretization(mesh, n_comp=1)
    cfg = T.RunConfig(model=case.model_spec, t_final=1.0, cfl=0.3, limiter="convex")
    sol = T.Solver(disc, model, cfg, bounds=case.bounds)
    return case, model, disc, sol


def test_blended_scalar_states_stay_in_bounds_random_draws():
    case, model, disc, sol = kpp_setup()
    rng = np.random.default_rng(2)
    lo_b, hi_b = case.bounds
    for _ in range(40):
        pts = rng.uniform(lo_b, hi_b, (disc.n_pdofs, 1))
        avg = rng.uniform(lo_b, hi_b, (disc.n_cells, 1))
        U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
        ho = H.assemble_ho(disc, model, U_pts, U_avg, sol.adv, out=sol.ho)
        lo = LO.assemble_lo(disc, model, U_pts, U_avg, sol.adv, out=sol.lo)
        fac = LIM.compute_blend_factors(disc, model, ho, lo, U_avg, sol.adv,
                                        bounds=case.bounds, out=sol.factors)
        # edge check: blended intermediate state within the global bounds
        for e in rng.integers(0, len(disc.edge_len), 60):
            a = lo.alpha_e[e]
            if a <= 0:
                continue
            cl, cr = disc.edge_cells[e]
            if cr < 0:
                cr = disc.bedge_ghost[e]
            fl = float(model.flux(U_avg[cl])[0, 0] * disc.edge_normal[e, 0]
                       + model.flux(U_avg[cl])[1, 0] * disc.edge_normal[e, 1])
            fr = float(model.flux(U_avg[cr])[0, 0] * disc.edge_normal[e, 0]
                       + model.flux(U_avg[cr])[1, 0] * disc.edge_normal[e, 1])
            ustar = 0.5 * float(U_avg[cl, 0] + U_avg[cr, 0]) - (fr - fl) / (2 * a)
            df = float(ho.edge_flux[e, 0] - lo.edge_flux[e, 0])
            blended = ustar - fac.eta[e] * df / a
            assert lo_b - 1e-11 <= blended <= hi_b + 1e-11
        # point check on the slot data
        sl = disc.pt_slot
        good = lo.alpha_slot[sl] > 0
        s = sl[good]
        dphi = (ho.phi[s, 0] - lo.phi[s, 0])
        blended = lo.ustar[s, 0] - fac.theta[s] * disc.slot_dual_area[s] \
            * dphi / (2.0 * lo.alpha_slot[s])
        assert blended.min() >= lo_b - 1e-11
        assert blended.max() <= hi_b + 1e-11


def test_blended_euler_states_stay_admissible_random_draws():
    case = cases.get_case("lax_liu_13")
    model = case.make_model()
    mesh = case.default_mesh("quad", 6)
    disc = L.build_discretization(mesh, n_comp=4)
    cfg = T.RunConfig(model=case.model_spec, t_final=1.0, limiter="convex")
    sol = T.Solver(disc, model, cfg)
    rng = np.random.default_rng(3)
    for _ in range(30):
        pts = model.from_primitive(np.column_stack(
            [rng.uniform(0.1, 3, disc.n_pdofs),
             rng.uniform(-2, 2, (disc.n_pdofs, 2)),
             rng.uniform(0.1, 3, disc.n_pdofs)]))
        avg = model.from_primitive(np.column_stack(
            [rng.uniform(0.1, 3, disc.n_cells),
             rng.uniform(-2, 2, (disc.n_cells, 2)),
             rng.uniform(0.1, 3, disc.n_cells)]))
        U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
        ho = H.assemble_ho(disc, model, U_pts, U_avg, sol.adv, out=sol.ho)
        lo = LO.assemble_lo(disc, model, U_pts, U_avg, sol.adv, out=sol.lo)
        fac = LIM.compute_blend_factors(disc, model, ho, lo, U_avg, sol.adv,
                                        out=sol.factors)
        sl = disc.pt_slot
        good = lo.alpha_slot[sl] > 0
        s = sl[good]
        dphi = disc.slot_dual_area[s, None] * (ho.phi[s] - lo.phi[s])
        blended = lo.ustar[s] - fac.theta[s, None] * dphi \
            / (2.0 * lo.alpha_slot[s, None])
        assert np.all(model.in_domain(blended + 0.0))
        assert np.all(fac.eta >= 0) and np.all(fac.eta <= 1)
        assert np.all(fac.theta[s] >= 0) and np.all(fac.theta[s] <= 1)


def test_factor_continuity_as_slack_shrinks():
    rng = np.random.default_rng(4)
    c0, cv, cE = 1.0, np.array([0.3, -0.2]), 2.0
    df = np.array([0.5, -0.2, 0.1, 0.4])
    etas = []
    for scale in (1.0, 1e-2, 1e-4, 1e-6):
        ustar = np.array([c0 * scale, cv[0] * scale, cv[1] * scale, cE * scale])
        etas.append(LIM.convex_factors_euler_edge(df, ustar, alpha_e=1.0))
    assert all(a >= b - 1e-15 for a, b in zip(etas, etas[1:]))
    assert etas[-1] < 1e-4


def test_mood_detector_smooth_and_nan():
    case, model, disc, sol = kpp_setup(nx=6)
    adj = LIM.build_mood_adjacency(disc)
    x = disc.points[:disc.n_pdofs]
    pts = (0.1 * x[:, 0] + 0.05 * x[:, 1])[:, None] + 2.0
    avg = (0.1 * disc.cell_centroid[:disc.n_cells, 0]
           + 0.05 * disc.cell_centroid[:disc.n_cells, 1])[:, None] + 2.0
    # smooth monotone candidate close to the previous state: no flags
    flags = LIM.mood_detect(disc, model, pts * 1.0001, avg * 1.0001, pts, avg, adj)
    assert flags.n_flagged_cells == 0 and flags.n_flagged_points == 0
    # NaN injected into one cell average: exactly that cell and its faces
    cand = avg.copy()
    cand[5, 0] = np.nan
    flags = LIM.mood_detect(disc, model, pts, cand, pts, avg, adj)
    assert flags.cells[5] and flags.n_flagged_cells == 1
    flagged_edges = set(np.nonzero(flags.edges)[0])
    own = {int(disc.cedge_idx[k]) for k in
           range(disc.cedge_ptr[5], disc.cedge_ptr[6])}
    assert flagged_edges == own


def test_mood_plateau_skips_constant_regions():
    case, model, disc, sol = kpp_setup(nx=6)
    adj = LIM.build_mood_adjacency(disc)
    pts = np.full((disc.n_pdofs, 1), 1.0)
    avg = np.full((disc.n_cells, 1), 1.0)
    cand = avg + 5e-11   # tiny jump above the stencil but inside plateau
    flags = LIM.mood_detect(disc, model, pts, cand, pts, avg, adj)
    assert flags.n_flagged_cells == 0


def test_mood_selection_factors_recover_pure_schemes():
    case, model, disc, sol = kpp_setup(nx=6)
    pts, avg = T.init_state(disc, case.ic)
    dt = 1e-3
    none_flags = LIM.MoodFlags(cells=np.zeros(disc.n_cells, bool),
                               edges=np.zeros(len(disc.edge_len), bool),
                               points=np.zeros(disc.n_pdofs, bool))
    all_flags = LIM.MoodFlags(cells=np.ones(disc.n_cells, bool),
                              edges=np.ones(len(disc.edge_len), bool),
                              points=np.ones(disc.n_pdofs, bool))
    p_sel0, a_sel0, _ = sol._stage(pts, avg, dt, "selection", none_flags)
    p_ho, a_ho, _ = sol._stage(pts, avg, dt, "none")
    assert np.array_equal(p_sel0, p_ho) and np.array_equal(a_sel0, a_ho)

    p_sel1, a_sel1, _ = sol._stage(pts, avg, dt, "selection", all_flags)
    # pure low order: rebuild by zeroing the blend by hand
    U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
    lo = LO.assemble_lo(disc, model, U_pts, U_avg, sol.adv)
    from pampa2d.kernels import update_avg, update_points
    a_lo = avg.copy()
    p_lo = pts.copy()
    eta0 = np.zeros(len(disc.edge_len))
    th0 = np.zeros(len(disc.slot_pdof))
    update_avg(disc.cedge_ptr, disc.cedge_idx, disc.cedge_sign, disc.edge_len,
               disc.cell_area, lo.edge_flux, lo.edge_flux, eta0, dt, True, a_lo)
    update_points(disc.pt_ptr, disc.pt_slot, lo.phi, lo.phi, th0, dt, True, p_lo)
    assert np.abs(p_sel1 - p_lo).max() < 1e-15
    assert np.abs(a_sel1 - a_lo).max() < 1e-15


def test_mixed_selection_conserves():
    case, model, disc, sol = kpp_setup(nx=6)
    pts, avg = T.init_state(disc, case.ic)
    rng = np.random.default_rng(5)
    flags = LIM.MoodFlags(cells=rng.random(disc.n_cells) < 0.3,
                          edges=np.zeros(len(disc.edge_len), bool),
                          points=rng.random(disc.n_pdofs) < 0.3)
    flags.edges = flags.cells[disc.edge_cells[:, 0]].copy()
    right = disc.edge_cells[:, 1]
    flags.edges[right >= 0] |= flags.cells[right[right >= 0]]
    dt = 5e-4
    p2, a2, bflux = sol._stage(pts, avg, dt, "selection", flags)
    area = disc.cell_area[:disc.n_cells]
    m0 = float(area @ avg)
    m1 = float(area @ a2)
    assert abs(m1 - m0 + dt * float(bflux)) < 1e-13 * max(abs(m0), 1.0)
