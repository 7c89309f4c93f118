"""High-order spatial operator: Gauss-Lobatto edge fluxes for the averages and
upwind-weighted gradient-projection residuals for the point values.

assemble_ho drives the compiled kernels over the full mesh; the *_reference
functions are direct transcriptions used as independent checks in the tests.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .quadrature import GL3_WEIGHTS


class SingularUpwindError(Exception):
    pass


@dataclass
class HoOutput:
    edge_flux: np.ndarray    # (ne, m)
    phi: np.ndarray          # (n_slots, m) residual per (DoF, polygon) pair
    grad: np.ndarray         # (n_slots, 2, m) projected gradients
    stab: np.ndarray         # (n_slots, m) damping term


def ho_average_flux(edge_values, n_e, model, x=None):
    """Gauss-Lobatto flux through one edge: edge_values is (3, m) ordered
    endpoint, midpoint, endpoint; n_e is the unit normal scaled by 1 (the |e|
    factor belongs to the caller)."""
    edge_values = np.asarray(edge_values, dtype=float)
    f = model.flux(edge_values, x=x)                       # (3, 2, m)
    fn = np.einsum("qdm,d->qm", f, np.asarray(n_e, float))
    return GL3_WEIGHTS @ fn


def ho_point_residual(dof, cell, disc, model, U_pts, U_avg, adv_pts=None,
                      stab_on=True, sign_variant=False):
    """Residual of one (point DoF, polygon) pair, assembled from scratch.

    Slow reference path: gathers all polygons incident to `dof`, builds the
    upwind weight matrix and returns the contribution of `cell`.
    """
    phi, grad, stab = _point_residuals_at(dof, disc, model, U_pts, U_avg,
                                          adv_pts, stab_on, sign_variant)
    for (c, s), val in phi.items():
        if c == cell:
            return val
    raise KeyError(f"cell {cell} not incident to dof {dof}")


def _point_residuals_at(dof, disc, model, U_pts, U_avg, adv_pts, stab_on,
                        sign_variant):
    m = model.m
    slots = disc.pt_slot[disc.pt_ptr[dof]:disc.pt_ptr[dof + 1]]
    M = np.zeros((m, m))
    entries = []
    for s in slots:
        cell = disc.slot_cell[s]
        pd = disc.slot_pdof[s]
        u = U_pts[pd]
        x = disc.points[pd]
        n = disc.slot_normal[s]
        Kp = model.K_plus(u, n, x=x)
        Kn = model.K_sign(u, n, x=x) if sign_variant else Kp
        M += Kn
        g = _element_gradient(disc, cell, s, model, U_pts, U_avg)
        a_dot = model.jac_dot(u, g[0], g[1], x=x)
        st = _element_stab(disc, cell, s, model, U_pts, U_avg, adv_pts) \
            if stab_on else np.zeros(m)
        entries.append((cell, s, Kp @ a_dot, st, a_dot))
    if not np.all(np.isfinite(M)):
        raise SingularUpwindError(f"non-finite upwind matrix at dof {dof}")
    if m > 1 and not sign_variant and not np.abs(M).sum() > 0.0:
        raise SingularUpwindError(
            f"vanishing upwind matrix sum at dof {dof} (broken normals?)")
    out = {}
    deg = len(entries)
    if sign_variant and m > 1:
        F = M.T @ M + np.eye(m) * (1e-10 * np.trace(M.T @ M) / m + 1e-300)
        for cell, s, rhs, st, g in entries:
            out[(cell, s)] = np.linalg.solve(F, M.T @ rhs) + st
    elif m == 1:
        # scalar upwind ratios with the equal-weight limit for vanishing
        # denominators; the weights sum to one exactly
        den = float(M[0, 0])
        if sign_variant:
            for cell, s, rhs, st, g in entries:
                w_den = den if abs(den) >= 0.5 else None
                out[(cell, s)] = (rhs / w_den if w_den is not None
                                  else g / deg) + st
        else:
            shift = 1e-9 * abs(den) + 1e-300
            for cell, s, rhs, st, g in entries:
                out[(cell, s)] = (rhs + (shift / deg) * g) / (den + shift) + st
    else:
        # relative shift; where the normal fan spans the plane, degenerate
        # state directions get the equal-weight average (the weights then sum
        # to the identity exactly); parallel normals stay untransported
        nh = np.array([disc.slot_unit_normal[s] for s in slots])
        cov = nh.T @ nh
        eigs = np.linalg.eigvalsh(cov)
        spanning = eigs[0] > 1e-6 * max(cov.trace(), 1e-300)
        shift = 1e-9 * np.abs(M).sum() / m + 1e-300
        wsh = shift / deg if spanning else 0.0
        F = M + shift * np.eye(m)
        for cell, s, rhs, st, g in entries:
            out[(cell, s)] = np.linalg.solve(F, rhs + wsh * g) + st
    return out, None, None


def _element_gradient(disc, cell, slot, model, U_pts, U_avg):
    for g in disc.groups:
        idx = np.nonzero(g.cells == cell)[0]
        if len(idx):
            ci = idx[0]
            b = slot - disc.slot_ptr[cell]
            dofs = np.concatenate([U_pts[g.bdof[ci]], U_avg[cell][None]])
            return np.stack([g.Gx[ci, b] @ dofs, g.Gy[ci, b] @ dofs])
    raise KeyError(cell)


def _element_stab(disc, cell, slot, model, U_pts, U_avg, adv_pts):
    for g in disc.groups:
        idx = np.nonzero(g.cells == cell)[0]
        if len(idx):
            ci = idx[0]
            o = disc.slot_ptr[cell]
            nbd = 2 * g.nv
            pdofs = g.bdof[ci]
            alpha = 0.0
            for b in range(nbd):
                n = disc.slot_unit_normal[o + b]
                sp = model.max_speed(U_pts[pdofs[b]], n, x=disc.points[pdofs[b]])
                alpha = max(alpha, float(sp))
            dofs = np.concatenate([U_pts[pdofs], U_avg[cell][None]])
            b = slot - o
            return (disc.stab_scale[cell] * alpha / np.sqrt(disc.cell_h[cell])) \
                * (g.S[ci, b] @ dofs)
    raise KeyError(cell)


class AdvectionStatic:
    """State-independent pieces of the high-order operator for linear
    advection: upwind weights per slot, damping speed per cell and the edge
    quadrature gathers. Built once, reused every stage."""

    def __init__(self, disc, model, adv, sign_variant):
        adv_pts = adv[0]
        a_slot = adv_pts[disc.slot_pdof]
        k_slot = (a_slot * disc.slot_normal).sum(-1)
        kp = np.maximum(k_slot, 0.0)
        base = np.sign(k_slot) if sign_variant else kp
        den = np.zeros(disc.n_pdofs)
        np.add.at(den, disc.slot_target[disc.pt_slot], base[disc.pt_slot])
        deg = np.maximum(np.diff(disc.pt_ptr).astype(float), 1.0)
        tgt_ok = disc.slot_target >= 0
        tgt = np.maximum(disc.slot_target, 0)
        if sign_variant:
            den_t = den[tgt]
            small = np.abs(den_t) < 0.5
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(small, 1.0 / deg[tgt],
                             kp / np.where(small, 1.0, den_t))
        else:
            shift = 1e-9 * np.abs(den) + 1e-300
            w = (kp + (shift / deg)[tgt]) / (den + shift)[tgt]
        self.weights = np.where(tgt_ok, w, 0.0)
        self.a_slot = a_slot
        # damping speed: per cell, max |a . nhat| over the boundary DoFs
        sp = np.abs((a_slot * disc.slot_unit_normal).sum(-1))
        alpha = np.zeros(disc.n_cells_total)
        np.maximum.at(alpha, disc.slot_cell, sp)
        self.alpha_cell = disc.stab_scale * alpha / np.sqrt(disc.cell_h)
        # edge quadrature: (a . n_e) per GL node times weights
        an = np.einsum("eqd,ed->eq", adv_pts[disc.edge_dofs], disc.edge_normal)
        self.edge_w = an * np.array([1.0, 4.0, 1.0]) / 6.0


def assemble_ho(disc, model, U_pts, U_avg, adv, stab_on=True,
                sign_variant=False, out=None, static=None):
    """Assemble edge fluxes and per-slot point residuals with the kernels.

    U_pts/U_avg are the combined (real + ghost) state arrays; adv is the
    (adv_pts, adv_edge, adv_star) triple of precomputed velocities. For linear
    advection a prebuilt AdvectionStatic shortcuts the state-independent work.
    """
    m = model.m
    mid = model.kernel_id()
    par = model.kernel_params()
    adv_pts, adv_edge, adv_star = adv
    n_slots = len(disc.slot_pdof)
    ne = len(disc.edge_len)
    if out is None:
        out = HoOutput(edge_flux=np.empty((ne, m)), phi=np.empty((n_slots, m)),
                       grad=np.empty((n_slots, 2, m)), stab=np.empty((n_slots, m)))

    if static is not None:
        np.einsum("eq,eq->e", static.edge_w, U_pts[disc.edge_dofs, 0],
                  out=out.edge_flux[:, 0])
        if not stab_on:
            out.stab[:] = 0.0
        for g in disc.groups:
            kernels.element_pass_grad(m, g.cells, g.bdof, g.Gx, g.Gy, g.S,
                                      disc.slot_ptr, U_pts, U_avg,
                                      static.alpha_cell, out.grad, out.stab,
                                      stab_on)
        gdot = (static.a_slot[:, 0] * out.grad[:, 0, 0]
                + static.a_slot[:, 1] * out.grad[:, 1, 0])
        np.multiply(static.weights, gdot, out=out.phi[:, 0])
        out.phi[:, 0] += out.stab[:, 0]
        return out

    kernels.edge_flux_ho(mid, par, m, disc.edge_dofs, disc.edge_normal,
                         disc.bedge_rule, disc.bedge_outflow, disc.bedge_state,
                         U_pts, adv_pts, out.edge_flux)
    for g in disc.groups:
        kernels.element_pass_ho(mid, par, m, g.cells, g.bdof, g.Gx, g.Gy, g.S,
                                disc.cell_h, disc.slot_ptr,
                                disc.slot_unit_normal, U_pts, U_avg, adv_pts,
                                stab_on, disc.stab_scale, out.grad, out.stab)
    if m == 1:
        kernels.point_pass_scalar(mid, par, disc.pt_ptr, disc.pt_slot,
                                  disc.slot_normal, disc.slot_pdof, out.grad,
                                  out.stab, U_pts, adv_pts, sign_variant,
                                  out.phi)
    else:
        fail = np.zeros(1, dtype=np.int64)
        kernels.point_pass_system(mid, par, m, disc.pt_ptr, disc.pt_slot,
                                  disc.slot_normal, disc.slot_pdof, out.grad,
                                  out.stab, U_pts, adv_pts, sign_variant,
                                  out.phi, fail)
        if fail[0]:
            raise SingularUpwindError(
                f"singular upwind matrix sum at point DoF {fail[0] - 1}")
    return out
