"""Nonlinear stabilizations.

Two interchangeable strategies:

* a-posteriori detection (NaN / domain exit / relaxed discrete maximum
  principle) with per-entity rollback to the first-order scheme, applied to a
  completed Runge-Kutta cycle;
* monolithic convex blending with per-edge factors eta and per-(DoF, polygon)
  factors theta chosen so the blended Riemann intermediate states stay in the
  invariant domain (scalar bounds, or Euler density/internal-energy positivity
  through the closed-form generalized eigenvalue).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels


class LimiterError(Exception):
    pass


# -------------------------------------------------------------- convex part ---


def gql_max_eigen(b_data, c_data):
    """Largest |eigenvalue| of C^{-1/2} B C^{-1/2} where B, C are the 3x3
    (d=2) blocks built from (scalar, vector, scalar) data triples.

    b_data = (db0, dbv, dbE) with dbv of shape (..., 2); c_data likewise,
    with c the admissible reference state: c0 > 0 and kappa0 < 0.
    """
    b0, bv, bE = (np.asarray(x, dtype=float) for x in b_data)
    c0, cv, cE = (np.asarray(x, dtype=float) for x in c_data)
    kappa0 = (cv ** 2).sum(-1) - 2.0 * c0 * cE
    if np.any(c0 <= 0.0) or np.any(kappa0 >= 0.0):
        raise LimiterError("reference state not in the invariant domain")
    kappa1 = (cv * bv).sum(-1) - c0 * bE - cE * b0
    disc = kappa1 ** 2 - kappa0 * ((bv ** 2).sum(-1) - 2.0 * b0 * bE)
    lam = (np.abs(kappa1) + np.sqrt(np.maximum(disc, 0.0))) / (-kappa0)
    return np.maximum(np.abs(b0) / c0, lam)


def convex_eta_scalar(f_ho, f_lo, u_left, u_right, n_e, alpha_e, bounds,
                      model, x=None):
    """Blending factor for one edge of a scalar problem."""
    umin, umax = bounds
    df = float(f_ho - f_lo)
    if alpha_e <= 0.0 or abs(df) <= 1e-300:
        return 1.0
    fl = float(np.einsum("dm,d->m", model.flux(np.atleast_1d(u_left), x=x), n_e))
    fr = float(np.einsum("dm,d->m", model.flux(np.atleast_1d(u_right), x=x), n_e))
    ustar = 0.5 * (float(u_left) + float(u_right)) - (fr - fl) / (2.0 * alpha_e)
    if ustar > umax + 1e-12 * (abs(umax) + 1.0) or \
       ustar < umin - 1e-12 * (abs(umin) + 1.0):
        raise LimiterError("first-order intermediate state escapes the bounds "
                           "(wave-speed bound violated)")
    slack = min(umax - ustar, ustar - umin)
    return min(1.0, alpha_e / abs(df) * max(slack, 0.0))


def convex_theta_scalar(dphi, ustar, alpha_sigma, dual_area, bounds):
    """Blending factor for one (DoF, polygon) pair of a scalar problem."""
    umin, umax = bounds
    if alpha_sigma <= 0.0 or dual_area * abs(dphi) <= 1e-300:
        return 1.0
    slack = min(umax - ustar, ustar - umin)
    return min(1.0, alpha_sigma / (dual_area * abs(dphi)) * max(slack, 0.0))


def convex_factors_euler_edge(df, ustar, alpha_e):
    """eta for one edge: min of the density bound and the GQL energy bound."""
    df = np.asarray(df, dtype=float)
    ustar = np.asarray(ustar, dtype=float)
    if alpha_e <= 0.0 or np.abs(df).sum() <= 1e-300:
        return 1.0
    eta_rho = 1.0
    if abs(df[0]) > 1e-300:
        eta_rho = min(1.0, alpha_e * ustar[0] / abs(df[0]))
    lam = float(gql_max_eigen((df[0], df[1:3], df[3]),
                              (ustar[0], ustar[1:3], ustar[3])))
    eta_eps = 1.0 if lam <= 1e-300 else min(1.0, alpha_e / lam)
    return min(eta_rho, eta_eps)


@dataclass
class BlendFactors:
    eta: np.ndarray      # (ne,)
    theta: np.ndarray    # (n_slots,)


def compute_blend_factors(disc, model, ho_out, lo_out, U_avg_comb, adv,
                          bounds=None, out=None):
    """Per-edge eta and per-slot theta for the convex limiter."""
    ne = len(disc.edge_len)
    ns = len(disc.slot_pdof)
    if out is None:
        out = BlendFactors(eta=np.empty(ne), theta=np.empty(ns))
    fail = np.zeros(1, dtype=np.int64)
    if model.m == 1:
        umin, umax = bounds
        kernels.blend_eta_scalar(model.kernel_id(), model.kernel_params(),
                                 disc.edge_cells, disc.bedge_ghost,
                                 disc.edge_normal, adv[1], ho_out.edge_flux,
                                 lo_out.edge_flux, lo_out.alpha_e, U_avg_comb,
                                 umin, umax, out.eta, fail)
        if fail[0]:
            raise LimiterError(f"intermediate state out of bounds at edge {fail[0] - 1}")
        kernels.blend_theta_scalar(ho_out.phi, lo_out.phi, lo_out.ustar,
                                   lo_out.alpha_slot, disc.slot_dual_area,
                                   disc.slot_target, umin, umax, out.theta)
    elif model.name == "euler":
        kernels.blend_eta_euler(model.kernel_params(), disc.edge_cells,
                                disc.bedge_ghost, disc.edge_normal,
                                ho_out.edge_flux, lo_out.edge_flux,
                                lo_out.alpha_e, U_avg_comb, out.eta, fail)
        if fail[0]:
            raise LimiterError(f"intermediate state not admissible at edge {fail[0] - 1}")
        kernels.blend_theta_euler(ho_out.phi, lo_out.phi, lo_out.ustar,
                                  lo_out.alpha_slot, disc.slot_dual_area,
                                  disc.slot_target, out.theta, fail)
        if fail[0]:
            raise LimiterError(f"intermediate state not admissible at slot {fail[0] - 1}")
    else:
        # no invariant-domain description for plain acoustics: blending
        # degenerates to the high-order scheme
        out.eta[:] = 1.0
        out.theta[:] = 1.0
    return out


# ---------------------------------------------------------------- MOOD part ---


@dataclass
class MoodFlags:
    cells: np.ndarray         # bool per real cell
    edges: np.ndarray         # bool per edge
    points: np.ndarray        # bool per real point DoF
    n_flagged_cells: int = 0
    n_flagged_points: int = 0


def build_mood_adjacency(disc):
    """Neighbor sets used by the detector: face-or-vertex cell neighbors and
    the point DoFs of every cell's face neighborhood."""
    mesh = disc.mesh
    ncell = disc.n_cells
    vert_cells = {}
    for ci, cell in enumerate(mesh.cells):
        for v in cell:
            vert_cells.setdefault(int(v), []).append(ci)
    nbr = [set() for _ in range(ncell)]
    for cells in vert_cells.values():
        for a in cells:
            for b in cells:
                if a != b:
                    nbr[a].add(b)
    face_nbr = [set() for _ in range(ncell)]
    for (cl, cr) in disc.edge_cells:
        if cr >= 0:
            face_nbr[cl].add(int(cr))
            face_nbr[int(cr)].add(int(cl))
    ptr = np.zeros(ncell + 1, dtype=np.int64)
    idx = []
    fptr = np.zeros(ncell + 1, dtype=np.int64)
    fidx = []
    for ci in range(ncell):
        ids = sorted(nbr[ci])
        idx.extend(ids)
        ptr[ci + 1] = len(idx)
        fds = sorted(face_nbr[ci])
        fidx.extend(fds)
        fptr[ci + 1] = len(fidx)
    return (ptr, np.array(idx, dtype=np.int64)), (fptr, np.array(fidx, dtype=np.int64))


def _detect_quantity(model, U):
    """Detector variables: the solution itself for scalars, density and
    pressure for Euler."""
    if model.m == 1:
        return U[..., 0:1]
    if model.name == "euler":
        return np.stack([U[..., 0], model.pressure(U)], axis=-1)
    return U


def _segment_minmax(n, idx, vals):
    lo = np.full((n,) + vals.shape[1:], np.inf)
    hi = np.full((n,) + vals.shape[1:], -np.inf)
    np.minimum.at(lo, idx, vals)
    np.maximum.at(hi, idx, vals)
    return lo, hi


def mood_detect(disc, model, cand_pts, cand_avg, prev_pts, prev_avg,
                adjacency, eps_abs=1e-4, eps_rel=1e-3, plateau_tol=1e-10):
    """Flag cells and point DoFs whose candidate update fails the admissibility
    chain (finite values, invariant domain, relaxed maximum principle)."""
    (vptr, vidx), (fptr, fidx) = adjacency
    ncell = disc.n_cells
    npd = disc.n_pdofs
    flag_c = ~np.all(np.isfinite(cand_avg), axis=-1) | ~model.in_domain(cand_avg)
    flag_p = ~np.all(np.isfinite(cand_pts), axis=-1) | ~model.in_domain(cand_pts)

    xi_c = _detect_quantity(model, np.where(np.isfinite(prev_avg), prev_avg, 0.0))
    xi_p = _detect_quantity(model, np.where(np.isfinite(prev_pts), prev_pts, 0.0))
    with np.errstate(invalid="ignore"):
        xi_cand_c = _detect_quantity(model, np.where(np.isfinite(cand_avg), cand_avg, np.nan))
        xi_cand_p = _detect_quantity(model, np.where(np.isfinite(cand_pts), cand_pts, np.nan))
    eps = np.maximum(eps_abs, eps_rel * (xi_c.max(axis=0) - xi_c.min(axis=0)))

    # per-cell extremes over the cell's own DoFs (points and average)
    real = (disc.slot_cell < ncell) & (disc.slot_target >= 0)
    sc = disc.slot_cell[real]
    sp = disc.slot_target[real]
    own_lo, own_hi = _segment_minmax(ncell, sc, xi_p[sp])
    own_lo = np.minimum(own_lo, xi_c)
    own_hi = np.maximum(own_hi, xi_c)

    # cell test: plateau over (self + face neighbors), bounds over
    # face-or-vertex neighbor averages
    rep_f = np.repeat(np.arange(ncell), np.diff(fptr))
    pl_lo = own_lo.copy()
    pl_hi = own_hi.copy()
    np.minimum.at(pl_lo, rep_f, own_lo[fidx])
    np.maximum.at(pl_hi, rep_f, own_hi[fidx])
    plateau_c = (pl_hi - pl_lo).max(axis=-1) < plateau_tol

    rep_v = np.repeat(np.arange(ncell), np.diff(vptr))
    dmp_lo, dmp_hi = _segment_minmax(ncell, rep_v, xi_c[vidx])
    with np.errstate(invalid="ignore"):
        viol_c = np.any((xi_cand_c < dmp_lo - eps) | (xi_cand_c > dmp_hi + eps)
                        | ~np.isfinite(xi_cand_c), axis=-1)
    flag_c |= viol_c & ~plateau_c

    # point test: stencil = all DoFs and averages of the incident polygons
    slots = disc.pt_slot
    pts_of = disc.slot_target[slots]
    cells_of = disc.slot_cell[slots]
    mask = cells_of < ncell
    p_lo = np.full((npd,) + xi_p.shape[1:], np.inf)
    p_hi = np.full((npd,) + xi_p.shape[1:], -np.inf)
    np.minimum.at(p_lo, pts_of[mask], own_lo[cells_of[mask]])
    np.maximum.at(p_hi, pts_of[mask], own_hi[cells_of[mask]])
    plateau_p = (p_hi - p_lo).max(axis=-1) < plateau_tol
    with np.errstate(invalid="ignore"):
        viol_p = np.any((xi_cand_p < p_lo - eps) | (xi_cand_p > p_hi + eps)
                        | ~np.isfinite(xi_cand_p), axis=-1)
    flag_p |= viol_p & ~plateau_p

    flag_e = flag_c[disc.edge_cells[:, 0]].copy()
    right = disc.edge_cells[:, 1]
    has_r = right >= 0
    flag_e[has_r] |= flag_c[right[has_r]]
    return MoodFlags(cells=flag_c, edges=flag_e, points=flag_p,
                     n_flagged_cells=int(flag_c.sum()),
                     n_flagged_points=int(flag_p.sum()))


def selection_factors(disc, flags, out=None):
    """Blend factors realizing a MOOD selection: 0 on flagged entities
    (first-order), 1 elsewhere (high-order)."""
    ne = len(disc.edge_len)
    ns = len(disc.slot_pdof)
    if out is None:
        out = BlendFactors(eta=np.empty(ne), theta=np.empty(ns))
    out.eta[:] = np.where(flags.edges, 0.0, 1.0)
    tgt = disc.slot_target
    theta_p = np.where(flags.points, 0.0, 1.0)
    out.theta[:] = np.where(tgt >= 0, theta_p[np.maximum(tgt, 0)], 1.0)
    return out
