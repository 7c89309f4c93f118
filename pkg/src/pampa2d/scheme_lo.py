"""First-order invariant-domain-preserving operator: Rusanov edge fluxes for
the averages and sub-triangle residuals (with the average pinned to the star
point) for the point values, plus the CFL time-step bound.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass
class LoOutput:
    edge_flux: np.ndarray     # (ne, m)
    alpha_e: np.ndarray       # (ne,) edge wave speeds
    phi: np.ndarray           # (n_slots, m)
    alpha_slot: np.ndarray    # (n_slots,) residual-scale wave speed (speed*|n|)
    alpha_speed: np.ndarray   # (n_slots,) plain speed bound for the CFL
    ustar: np.ndarray         # (n_slots, m) first-order intermediate states


def lo_average_flux(u_left, u_right, n_e, model, x=None, alpha=None):
    """Rusanov flux and the wave speed used, for unit normal n_e."""
    u_left = np.asarray(u_left, dtype=float)
    u_right = np.asarray(u_right, dtype=float)
    n_e = np.asarray(n_e, dtype=float)
    if alpha is None:
        alpha = float(model.max_speed_states([u_left, u_right], n_e, x=x))
    fl = np.einsum("dm,d->m", model.flux(u_left, x=x), n_e)
    fr = np.einsum("dm,d->m", model.flux(u_right, x=x), n_e)
    return 0.5 * (fl + fr) - 0.5 * alpha * (u_right - u_left), alpha


def lo_point_residual(dof, cell, disc, model, U_pts, U_avg):
    """Reference evaluation of the low-order residual of one (DoF, cell) pair
    (sum of its two sub-triangle pieces divided by the dual area)."""
    o = disc.slot_ptr[cell]
    nbd = disc.slot_ptr[cell + 1] - o
    loc = [b for b in range(nbd) if disc.slot_target[o + b] == dof]
    if not loc:
        raise KeyError(f"dof {dof} not on cell {cell}")
    i = loc[0]
    s = o + i
    sprev = o + (i - 1) % nbd
    dof_i = disc.slot_pdof[s]
    dof_p = disc.slot_pdof[o + (i - 1) % nbd]
    dof_n = disc.slot_pdof[o + (i + 1) % nbd]
    ui, up, un = U_pts[dof_i], U_pts[dof_p], U_pts[dof_n]
    ubar = U_avg[cell]
    xs = disc.cell_centroid[cell]

    def fdotn(u, x, n):
        return np.einsum("dm,d->m", model.flux(u, x=x), n)

    alphaT = []
    for idx, (ua, ub) in (((i - 1) % nbd, (up, ui)), (i, (ui, un))):
        st = o + idx
        aT = 0.0
        for v in range(3):
            n = disc.subtri_n[st, v]
            nrm = np.linalg.norm(n)
            if nrm == 0:
                continue
            sp = max(float(model.max_speed_states([ua, ub], n / nrm, x=xs)),
                     float(model.max_speed_states([ua, ubar], n / nrm, x=xs)),
                     float(model.max_speed_states([ub, ubar], n / nrm, x=xs)))
            aT = max(aT, sp * nrm)
        alphaT.append(aT)
    a_sig = max(alphaT)

    xi, xp, xn = disc.points[dof_i], disc.points[dof_p], disc.points[dof_n]
    acc = np.zeros(model.m)
    acc += (fdotn(up, xp, disc.subtri_n[sprev, 0]) - fdotn(ubar, xs, disc.subtri_n[sprev, 0])) / 6.0
    acc += (fdotn(ui, xi, disc.subtri_n[sprev, 1]) - fdotn(ubar, xs, disc.subtri_n[sprev, 1])) / 6.0
    acc += (a_sig / 3.0) * ((ui - up) + (ui - ubar))
    acc += (fdotn(ui, xi, disc.subtri_n[s, 0]) - fdotn(ubar, xs, disc.subtri_n[s, 0])) / 6.0
    acc += (fdotn(un, xn, disc.subtri_n[s, 1]) - fdotn(ubar, xs, disc.subtri_n[s, 1])) / 6.0
    acc += (a_sig / 3.0) * ((ui - un) + (ui - ubar))
    return acc / disc.slot_dual_area[s]


def assemble_lo(disc, model, U_pts, U_avg, adv, out=None):
    m = model.m
    mid = model.kernel_id()
    par = model.kernel_params()
    adv_pts, adv_edge, adv_star = adv
    n_slots = len(disc.slot_pdof)
    ne = len(disc.edge_len)
    if out is None:
        out = LoOutput(edge_flux=np.empty((ne, m)), alpha_e=np.empty(ne),
                       phi=np.empty((n_slots, m)), alpha_slot=np.empty(n_slots),
                       alpha_speed=np.empty(n_slots), ustar=np.empty((n_slots, m)))
    kernels.edge_flux_lo(mid, par, m, disc.edge_cells, disc.bedge_ghost,
                         disc.edge_normal, adv_edge, U_avg, out.edge_flux,
                         out.alpha_e)
    for g in disc.groups:
        kernels.element_pass_lo(mid, par, m, g.cells, g.bdof, disc.slot_ptr,
                                disc.subtri_n, disc.slot_dual_area, U_pts,
                                U_avg, adv_pts, adv_star, out.phi,
                                out.alpha_slot, out.alpha_speed, out.ustar)
    return out


def compute_dt(disc, lo_out, cfl, dt_max=np.inf):
    """CFL bound: the dual-cell point condition |C|/(|dC| alpha) and the
    average convex-combination condition |P| / sum(|e| alpha_e)."""
    if not 0.0 < cfl < 1.0:
        raise ValueError("cfl must lie in (0, 1)")
    # point bound: max incident wave speed per real point DoF
    alpha_pt = np.zeros(disc.n_pdofs)
    np.maximum.at(alpha_pt, disc.slot_target[disc.pt_slot],
                  lo_out.alpha_speed[disc.pt_slot])
    with np.errstate(divide="ignore"):
        bound_pt = np.where(alpha_pt > 0.0,
                            disc.dual_area_bc / (disc.dual_perim_bc * alpha_pt),
                            np.inf).min()
    # average bound over real cells
    per_cell = np.zeros(disc.n_cells)
    contrib = disc.edge_len[disc.cedge_idx] * lo_out.alpha_e[disc.cedge_idx]
    cell_of = np.repeat(np.arange(disc.n_cells),
                        np.diff(disc.cedge_ptr))
    np.add.at(per_cell, cell_of, contrib)
    with np.errstate(divide="ignore"):
        bound_avg = np.where(per_cell > 0.0,
                             disc.cell_area[:disc.n_cells] / per_cell,
                             np.inf).min()
    dt = cfl * min(bound_pt, bound_avg)
    if not np.isfinite(dt):
        dt = dt_max
    return min(dt, dt_max)
