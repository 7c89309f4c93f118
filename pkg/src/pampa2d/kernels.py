"""Compiled assembly kernels for the time-stepping hot path.

All kernels are sequential with fixed loop order, so results are bitwise
reproducible regardless of worker configuration. Models are dispatched by an
integer id; variable-coefficient advection receives precomputed velocity
arrays at the DoF / edge / star positions.

Slot layout, incidence and group arrays are documented in layout.py.
"""

import numpy as np
from numba import njit

MID_ADVECTION = 0
MID_KPP = 1
MID_ACOUSTICS = 2
MID_EULER = 3

RULE_WALL = 0
RULE_FARFIELD = 1
RULE_NEUMANN = 2

GL_W0 = 1.0 / 6.0
GL_W1 = 4.0 / 6.0


# ------------------------------------------------------------ model closures


@njit(cache=True, inline="always")
def _flux_dot_n(mid, par, u, ax, ay, nx, ny, out):
    """f(u) . n -> out (m,), with (ax, ay) the advection velocity if needed."""
    if mid == MID_ADVECTION:
        out[0] = (ax * nx + ay * ny) * u[0]
    elif mid == MID_KPP:
        out[0] = np.sin(u[0]) * nx + np.cos(u[0]) * ny
    elif mid == MID_ACOUSTICS:
        c2 = par[0] * par[0]
        out[0] = u[2] * nx
        out[1] = u[2] * ny
        out[2] = c2 * (u[0] * nx + u[1] * ny)
    else:
        g = par[0]
        rho = u[0]
        vx = u[1] / rho
        vy = u[2] / rho
        p = (g - 1.0) * (u[3] - 0.5 * rho * (vx * vx + vy * vy))
        qn = vx * nx + vy * ny
        out[0] = rho * qn
        out[1] = u[1] * qn + p * nx
        out[2] = u[2] * qn + p * ny
        out[3] = (u[3] + p) * qn


@njit(cache=True, inline="always")
def _max_speed(mid, par, u, ax, ay, nx, ny):
    """Bound on the spectral radius of A(u).n (scales with |n|)."""
    if mid == MID_ADVECTION:
        return abs(ax * nx + ay * ny)
    elif mid == MID_KPP:
        return abs(np.cos(u[0]) * nx - np.sin(u[0]) * ny)
    elif mid == MID_ACOUSTICS:
        return par[0] * np.sqrt(nx * nx + ny * ny)
    else:
        g = par[0]
        rho = u[0]
        vx = u[1] / rho
        vy = u[2] / rho
        p = (g - 1.0) * (u[3] - 0.5 * rho * (vx * vx + vy * vy))
        c = np.sqrt(g * p / rho)
        return abs(vx * nx + vy * ny) + c * np.sqrt(nx * nx + ny * ny)


@njit(cache=True, inline="always")
def _pair_speed(mid, par, ua, ub, axe, aye, nx, ny):
    """Wave-speed bound for the two-state Riemann fan in direction n.

    Scalar models bound |f'(w).n| over the interval hull of (ua, ub); systems
    use the max of the two one-state bounds.
    """
    if mid == MID_ADVECTION:
        return abs(axe * nx + aye * ny)
    elif mid == MID_KPP:
        lo = min(ua[0], ub[0])
        hi = max(ua[0], ub[0])
        best = max(abs(np.cos(lo) * nx - np.sin(lo) * ny),
                   abs(np.cos(hi) * nx - np.sin(hi) * ny))
        nrm = np.sqrt(nx * nx + ny * ny)
        phase = np.arctan2(ny, nx)
        k = int(np.floor((lo + phase) / np.pi))
        for kk in range(k, k + 8):
            w = -phase + kk * np.pi
            if lo <= w <= hi:
                best = nrm
                break
        return best
    else:
        sa = _max_speed(mid, par, ua, axe, aye, nx, ny)
        sb = _max_speed(mid, par, ub, axe, aye, nx, ny)
        return max(sa, sb)


@njit(cache=True, inline="always")
def _jac_dot(mid, par, u, ax, ay, gx, gy, out):
    """(A_x(u) gx + A_y(u) gy) -> out (m,)."""
    if mid == MID_ADVECTION:
        out[0] = ax * gx[0] + ay * gy[0]
    elif mid == MID_KPP:
        out[0] = np.cos(u[0]) * gx[0] - np.sin(u[0]) * gy[0]
    elif mid == MID_ACOUSTICS:
        c2 = par[0] * par[0]
        out[0] = gx[2]
        out[1] = gy[2]
        out[2] = c2 * (gx[0] + gy[1])
    else:
        g = par[0]
        gm1 = g - 1.0
        rho = u[0]
        vx = u[1] / rho
        vy = u[2] / rho
        q2 = vx * vx + vy * vy
        p = gm1 * (u[3] - 0.5 * rho * q2)
        H = (u[3] + p) / rho
        out[0] = gx[1] + gy[2]
        out[1] = (gx[0] * (0.5 * gm1 * q2 - vx * vx) + gx[1] * (3.0 - g) * vx
                  - gx[2] * gm1 * vy + gx[3] * gm1
                  - gy[0] * vx * vy + gy[1] * vy + gy[2] * vx)
        out[2] = (-gx[0] * vx * vy + gx[1] * vy + gx[2] * vx
                  + gy[0] * (0.5 * gm1 * q2 - vy * vy) - gy[1] * gm1 * vx
                  + gy[2] * (3.0 - g) * vy + gy[3] * gm1)
        out[3] = (gx[0] * vx * (0.5 * gm1 * q2 - H) + gx[1] * (H - gm1 * vx * vx)
                  - gx[2] * gm1 * vx * vy + gx[3] * g * vx
                  + gy[0] * vy * (0.5 * gm1 * q2 - H) - gy[1] * gm1 * vx * vy
                  + gy[2] * (H - gm1 * vy * vy) + gy[3] * g * vy)


@njit(cache=True, inline="always")
def _k_matrix(mid, par, u, nx, ny, mode, K):
    """K+ (mode 0), sign(K) (mode 1) or K (mode 2) of A(u).n -> K (m, m)."""
    if mid == MID_ACOUSTICS:
        c = par[0]
        nrm = np.sqrt(nx * nx + ny * ny)
        for i in range(3):
            for j in range(3):
                K[i, j] = 0.0
        if nrm <= 0.0:
            return
        hx = nx / nrm
        hy = ny / nrm
        for s in range(2):
            sgn = 1.0 if s == 0 else -1.0
            lam = sgn * c * nrm
            if mode == 0:
                w = lam if lam > 0.0 else 0.0
            elif mode == 1:
                w = 1.0 if lam > 0.0 else (-1.0 if lam < 0.0 else 0.0)
            else:
                w = lam
            if w == 0.0:
                continue
            r0, r1, r2 = hx, hy, sgn * c
            l0, l1, l2 = 0.5 * hx, 0.5 * hy, sgn * 0.5 / c
            K[0, 0] += w * r0 * l0
            K[0, 1] += w * r0 * l1
            K[0, 2] += w * r0 * l2
            K[1, 0] += w * r1 * l0
            K[1, 1] += w * r1 * l1
            K[1, 2] += w * r1 * l2
            K[2, 0] += w * r2 * l0
            K[2, 1] += w * r2 * l1
            K[2, 2] += w * r2 * l2
    else:
        g = par[0]
        nrm = np.sqrt(nx * nx + ny * ny)
        for i in range(4):
            for j in range(4):
                K[i, j] = 0.0
        if nrm <= 0.0:
            return
        hx = nx / nrm
        hy = ny / nrm
        rho = u[0]
        vx = u[1] / rho
        vy = u[2] / rho
        q2 = vx * vx + vy * vy
        p = (g - 1.0) * (u[3] - 0.5 * rho * q2)
        c = np.sqrt(g * p / rho)
        H = (u[3] + p) / rho
        qn = vx * hx + vy * hy
        qt = -vx * hy + vy * hx
        gm1 = g - 1.0
        b1 = gm1 / (c * c)
        b2 = 0.5 * b1 * q2
        for k in range(4):
            if k == 0:
                lam = (qn - c) * nrm
            elif k == 3:
                lam = (qn + c) * nrm
            else:
                lam = qn * nrm
            if mode == 0:
                w = lam if lam > 0.0 else 0.0
            elif mode == 1:
                w = 1.0 if lam > 0.0 else (-1.0 if lam < 0.0 else 0.0)
            else:
                w = lam
            if w == 0.0:
                continue
            if k == 0:
                r0, r1, r2, r3 = 1.0, vx - c * hx, vy - c * hy, H - c * qn
                l0 = 0.5 * (b2 + qn / c)
                l1 = 0.5 * (-b1 * vx - hx / c)
                l2 = 0.5 * (-b1 * vy - hy / c)
                l3 = 0.5 * b1
            elif k == 1:
                r0, r1, r2, r3 = 1.0, vx, vy, 0.5 * q2
                l0, l1, l2, l3 = 1.0 - b2, b1 * vx, b1 * vy, -b1
            elif k == 2:
                r0, r1, r2, r3 = 0.0, -hy, hx, qt
                l0, l1, l2, l3 = -qt, -hy, hx, 0.0
            else:
                r0, r1, r2, r3 = 1.0, vx + c * hx, vy + c * hy, H + c * qn
                l0 = 0.5 * (b2 - qn / c)
                l1 = 0.5 * (-b1 * vx + hx / c)
                l2 = 0.5 * (-b1 * vy + hy / c)
                l3 = 0.5 * b1
            K[0, 0] += w * r0 * l0
            K[0, 1] += w * r0 * l1
            K[0, 2] += w * r0 * l2
            K[0, 3] += w * r0 * l3
            K[1, 0] += w * r1 * l0
            K[1, 1] += w * r1 * l1
            K[1, 2] += w * r1 * l2
            K[1, 3] += w * r1 * l3
            K[2, 0] += w * r2 * l0
            K[2, 1] += w * r2 * l1
            K[2, 2] += w * r2 * l2
            K[2, 3] += w * r2 * l3
            K[3, 0] += w * r3 * l0
            K[3, 1] += w * r3 * l1
            K[3, 2] += w * r3 * l2
            K[3, 3] += w * r3 * l3


@njit(cache=True, inline="always")
def _lu_factor(A, piv, m):
    """In-place LU with partial pivoting; returns False on a zero pivot."""
    for k in range(m):
        p = k
        big = abs(A[k, k])
        for i in range(k + 1, m):
            if abs(A[i, k]) > big:
                big = abs(A[i, k])
                p = i
        if not (big > 0.0):
            return False
        piv[k] = p
        if p != k:
            for j in range(m):
                t = A[k, j]
                A[k, j] = A[p, j]
                A[p, j] = t
        inv = 1.0 / A[k, k]
        for i in range(k + 1, m):
            A[i, k] *= inv
            f = A[i, k]
            if f != 0.0:
                for j in range(k + 1, m):
                    A[i, j] -= f * A[k, j]
    return True


@njit(cache=True, inline="always")
def _lu_solve(A, piv, b, x, m):
    # full rows are interchanged during factorization, so apply the whole
    # permutation to the right-hand side before the triangular solves
    for i in range(m):
        x[i] = b[i]
    for k in range(m):
        p = piv[k]
        if p != k:
            t = x[k]
            x[k] = x[p]
            x[p] = t
    for k in range(m):
        for i in range(k + 1, m):
            x[i] -= A[i, k] * x[k]
    for i in range(m - 1, -1, -1):
        s = x[i]
        for j in range(i + 1, m):
            s -= A[i, j] * x[j]
        x[i] = s / A[i, i]
    return True


# ------------------------------------------------------------- edge fluxes ---


@njit(cache=True)
def edge_flux_ho(mid, par, m, edge_dofs, edge_normal, bedge_rule,
                 bedge_outflow, bedge_state, U_pts, adv_pts, f_out):
    """Gauss-Lobatto edge flux; boundary edges apply their rule pointwise."""
    ne = edge_dofs.shape[0]
    fa = np.empty(m)
    fb = np.empty(m)
    us = np.empty(m)
    Ka = np.empty((4, 4))
    Kb = np.empty((4, 4))
    for e in range(ne):
        nx = edge_normal[e, 0]
        ny = edge_normal[e, 1]
        rule = bedge_rule[e]
        for j in range(m):
            f_out[e, j] = 0.0
        for q in range(3):
            dof = edge_dofs[e, q]
            w = GL_W1 if q == 1 else GL_W0
            u = U_pts[dof]
            ax = adv_pts[dof, 0]
            ay = adv_pts[dof, 1]
            if rule == RULE_WALL and mid == MID_EULER:
                # symmetric-average wall flux: the normal mass flux cancels
                _flux_dot_n(mid, par, u, ax, ay, nx, ny, fa)
                vn = u[1] * nx + u[2] * ny
                us[0] = u[0]
                us[1] = u[1] - 2.0 * vn * nx
                us[2] = u[2] - 2.0 * vn * ny
                us[3] = u[3]
                _flux_dot_n(mid, par, us, ax, ay, nx, ny, fb)
                for j in range(m):
                    f_out[e, j] += w * 0.5 * (fa[j] + fb[j])
            elif rule == RULE_FARFIELD and mid == MID_EULER:
                uinf = bedge_state[e]
                if bedge_outflow[e]:
                    # (A(u).n)- u + (A(uinf).n)+ uinf
                    _k_matrix(mid, par, u, nx, ny, 2, Ka)
                    _k_matrix(mid, par, u, nx, ny, 0, Kb)
                    for i in range(m):
                        s = 0.0
                        for j in range(m):
                            s += (Ka[i, j] - Kb[i, j]) * u[j]
                        fa[i] = s
                    _k_matrix(mid, par, uinf, nx, ny, 0, Ka)
                    for i in range(m):
                        s = 0.0
                        for j in range(m):
                            s += Ka[i, j] * uinf[j]
                        fa[i] += s
                else:
                    # (A(u).n)+ u + (A(uinf).n)- uinf
                    _k_matrix(mid, par, u, nx, ny, 0, Ka)
                    for i in range(m):
                        s = 0.0
                        for j in range(m):
                            s += Ka[i, j] * u[j]
                        fa[i] = s
                    _k_matrix(mid, par, uinf, nx, ny, 2, Ka)
                    _k_matrix(mid, par, uinf, nx, ny, 0, Kb)
                    for i in range(m):
                        s = 0.0
                        for j in range(m):
                            s += (Ka[i, j] - Kb[i, j]) * uinf[j]
                        fa[i] += s
                for j in range(m):
                    f_out[e, j] += w * fa[j]
            else:
                _flux_dot_n(mid, par, u, ax, ay, nx, ny, fa)
                for j in range(m):
                    f_out[e, j] += w * fa[j]


@njit(cache=True)
def edge_flux_lo(mid, par, m, edge_cells, bedge_ghost, edge_normal,
                 adv_edge, U_avg, f_out, alpha_out):
    """Rusanov flux per edge from the adjacent averages (ghost average on the
    boundary); also returns the edge wave speed."""
    ne = edge_cells.shape[0]
    fa = np.empty(m)
    fb = np.empty(m)
    for e in range(ne):
        cl = edge_cells[e, 0]
        cr = edge_cells[e, 1]
        if cr < 0:
            cr = bedge_ghost[e]
        nx = edge_normal[e, 0]
        ny = edge_normal[e, 1]
        ax = adv_edge[e, 0]
        ay = adv_edge[e, 1]
        ul = U_avg[cl]
        ur = U_avg[cr]
        alpha = _pair_speed(mid, par, ul, ur, ax, ay, nx, ny)
        alpha_out[e] = alpha
        _flux_dot_n(mid, par, ul, ax, ay, nx, ny, fa)
        _flux_dot_n(mid, par, ur, ax, ay, nx, ny, fb)
        for j in range(m):
            f_out[e, j] = 0.5 * (fa[j] + fb[j]) - 0.5 * alpha * (ur[j] - ul[j])


# ----------------------------------------------------------- element passes ---


@njit(cache=True)
def element_pass_ho(mid, par, m, cells, bdof, Gx, Gy, S, cell_h, slot_ptr,
                    slot_unit_normal, U_pts, U_avg, adv_pts, stab_on,
                    stab_scale, grad_out, stab_out):
    """Per element: gradients of the projection at the boundary DoFs and the
    spurious-mode damping, written to the flat slot arrays."""
    nc = cells.shape[0]
    nbd = Gx.shape[1]
    ndof = Gx.shape[2]
    uloc = np.empty((ndof, 4))
    for ci in range(nc):
        cell = cells[ci]
        o = slot_ptr[cell]
        for b in range(nbd):
            dof = bdof[ci, b]
            for j in range(m):
                uloc[b, j] = U_pts[dof, j]
        for j in range(m):
            uloc[nbd, j] = U_avg[cell, j]
        for b in range(nbd):
            for j in range(m):
                gx = 0.0
                gy = 0.0
                for r in range(ndof):
                    gx += Gx[ci, b, r] * uloc[r, j]
                    gy += Gy[ci, b, r] * uloc[r, j]
                grad_out[o + b, 0, j] = gx
                grad_out[o + b, 1, j] = gy
        if stab_on:
            alpha = 0.0
            for b in range(nbd):
                dof = bdof[ci, b]
                sp = _max_speed(mid, par, U_pts[dof], adv_pts[dof, 0],
                                adv_pts[dof, 1], slot_unit_normal[o + b, 0],
                                slot_unit_normal[o + b, 1])
                if sp > alpha:
                    alpha = sp
            fac = stab_scale[cell] * alpha / np.sqrt(cell_h[cell])
            for b in range(nbd):
                for j in range(m):
                    s = 0.0
                    for r in range(ndof):
                        s += S[ci, b, r] * uloc[r, j]
                    stab_out[o + b, j] = fac * s
        else:
            for b in range(nbd):
                for j in range(m):
                    stab_out[o + b, j] = 0.0


@njit(cache=True)
def element_pass_lo(mid, par, m, cells, bdof, slot_ptr, subtri_n,
                    slot_dual_area, U_pts, U_avg, adv_pts, adv_star,
                    phi_out, alpha_out, alpha_speed_out, ustar_out):
    """Low-order sub-triangle residuals, per-slot wave speeds and the
    (normalized) first-order Riemann intermediate states for the limiter."""
    nc = cells.shape[0]
    nbd = bdof.shape[1]
    fi = np.empty(m)
    fn = np.empty(m)
    fm = np.empty(m)
    fP = np.empty(m)
    acc = np.empty(m)
    alphaT = np.empty(nbd)
    alphaTs = np.empty(nbd)
    for ci in range(nc):
        cell = cells[ci]
        o = slot_ptr[cell]
        axs = adv_star[cell, 0]
        ays = adv_star[cell, 1]
        ubar = U_avg[cell]
        # per-sub-triangle wave speeds: states hull x scaled-normal bound
        for i in range(nbd):
            s = o + i
            ui = U_pts[bdof[ci, i]]
            un = U_pts[bdof[ci, (i + 1) % nbd]]
            aT = 0.0
            aTs = 0.0
            if mid == MID_EULER:
                g = par[0]
                v0x = ui[1] / ui[0]
                v0y = ui[2] / ui[0]
                c0 = np.sqrt(g * (g - 1.0) * (ui[3] - 0.5 * ui[0] * (v0x * v0x + v0y * v0y)) / ui[0])
                v1x = un[1] / un[0]
                v1y = un[2] / un[0]
                c1 = np.sqrt(g * (g - 1.0) * (un[3] - 0.5 * un[0] * (v1x * v1x + v1y * v1y)) / un[0])
                v2x = ubar[1] / ubar[0]
                v2y = ubar[2] / ubar[0]
                c2 = np.sqrt(g * (g - 1.0) * (ubar[3] - 0.5 * ubar[0] * (v2x * v2x + v2y * v2y)) / ubar[0])
                for v in range(3):
                    nx = subtri_n[s, v, 0]
                    ny = subtri_n[s, v, 1]
                    nrm = np.sqrt(nx * nx + ny * ny)
                    if nrm <= 0.0:
                        continue
                    hx = nx / nrm
                    hy = ny / nrm
                    sp = abs(v0x * hx + v0y * hy) + c0
                    s1 = abs(v1x * hx + v1y * hy) + c1
                    s2 = abs(v2x * hx + v2y * hy) + c2
                    if s1 > sp:
                        sp = s1
                    if s2 > sp:
                        sp = s2
                    if sp > aTs:
                        aTs = sp
                    if sp * nrm > aT:
                        aT = sp * nrm
            elif mid == MID_ACOUSTICS:
                c = par[0]
                aTs = c
                for v in range(3):
                    nx = subtri_n[s, v, 0]
                    ny = subtri_n[s, v, 1]
                    nrm = np.sqrt(nx * nx + ny * ny)
                    if c * nrm > aT:
                        aT = c * nrm
            else:
                for v in range(3):
                    nx = subtri_n[s, v, 0]
                    ny = subtri_n[s, v, 1]
                    nrm = np.sqrt(nx * nx + ny * ny)
                    if nrm <= 0.0:
                        continue
                    sp1 = _pair_speed(mid, par, ui, un, axs, ays, nx / nrm, ny / nrm)
                    sp2 = _pair_speed(mid, par, ui, ubar, axs, ays, nx / nrm, ny / nrm)
                    sp3 = _pair_speed(mid, par, un, ubar, axs, ays, nx / nrm, ny / nrm)
                    sp = max(sp1, max(sp2, sp3))
                    if sp > aTs:
                        aTs = sp
                    if sp * nrm > aT:
                        aT = sp * nrm
            alphaT[i] = aT
            alphaTs[i] = aTs
        for i in range(nbd):
            s = o + i
            iprev = (i - 1) % nbd
            sprev = o + iprev
            dof_i = bdof[ci, i]
            dof_p = bdof[ci, iprev]
            dof_n = bdof[ci, (i + 1) % nbd]
            ui = U_pts[dof_i]
            up = U_pts[dof_p]
            un = U_pts[dof_n]
            a_sig = max(alphaT[iprev], alphaT[i])
            alpha_out[s] = a_sig
            alpha_speed_out[s] = max(alphaTs[iprev], alphaTs[i])
            ca = slot_dual_area[s]

            for j in range(m):
                acc[j] = 0.0
            # T_{i-1} = (sigma_{i-1}, sigma_i, star) stored at slot sprev:
            # inward normals [0] at sigma_{i-1}, [1] at sigma_i, [2] at star
            _flux_dot_n(mid, par, up, adv_pts[dof_p, 0], adv_pts[dof_p, 1],
                        subtri_n[sprev, 0, 0], subtri_n[sprev, 0, 1], fi)
            _flux_dot_n(mid, par, ubar, axs, ays,
                        subtri_n[sprev, 0, 0], subtri_n[sprev, 0, 1], fm)
            for j in range(m):
                acc[j] += (fi[j] - fm[j]) / 6.0
            _flux_dot_n(mid, par, ui, adv_pts[dof_i, 0], adv_pts[dof_i, 1],
                        subtri_n[sprev, 1, 0], subtri_n[sprev, 1, 1], fi)
            _flux_dot_n(mid, par, ubar, axs, ays,
                        subtri_n[sprev, 1, 0], subtri_n[sprev, 1, 1], fm)
            for j in range(m):
                acc[j] += (fi[j] - fm[j]) / 6.0
                acc[j] += (a_sig / 3.0) * (2.0 * ui[j] - up[j] - ubar[j])
            # T_i = (sigma_i, sigma_{i+1}, star) at slot s
            _flux_dot_n(mid, par, ui, adv_pts[dof_i, 0], adv_pts[dof_i, 1],
                        subtri_n[s, 0, 0], subtri_n[s, 0, 1], fi)
            _flux_dot_n(mid, par, ubar, axs, ays,
                        subtri_n[s, 0, 0], subtri_n[s, 0, 1], fm)
            for j in range(m):
                acc[j] += (fi[j] - fm[j]) / 6.0
            _flux_dot_n(mid, par, un, adv_pts[dof_n, 0], adv_pts[dof_n, 1],
                        subtri_n[s, 1, 0], subtri_n[s, 1, 1], fi)
            _flux_dot_n(mid, par, ubar, axs, ays,
                        subtri_n[s, 1, 0], subtri_n[s, 1, 1], fm)
            for j in range(m):
                acc[j] += (fi[j] - fm[j]) / 6.0
                acc[j] += (a_sig / 3.0) * (2.0 * ui[j] - un[j] - ubar[j])
                phi_out[s, j] = acc[j] / ca

            # first-order intermediate state, normalized to unit state mass
            if a_sig > 0.0:
                nax = subtri_n[sprev, 0, 0]
                nay = subtri_n[sprev, 0, 1]
                _flux_dot_n(mid, par, up, adv_pts[dof_p, 0], adv_pts[dof_p, 1],
                            nax, nay, fi)
                _flux_dot_n(mid, par, un, adv_pts[dof_n, 0], adv_pts[dof_n, 1],
                            nax, nay, fn)
                nbx = subtri_n[sprev, 1, 0] + subtri_n[s, 0, 0]
                nby = subtri_n[sprev, 1, 1] + subtri_n[s, 0, 1]
                _flux_dot_n(mid, par, ui, adv_pts[dof_i, 0], adv_pts[dof_i, 1],
                            nbx, nby, fm)
                _flux_dot_n(mid, par, ubar, axs, ays, nbx, nby, fP)
                for j in range(m):
                    raw = ((up[j] + un[j]) / 2.0 - (fi[j] - fn[j]) / (2.0 * a_sig)
                           + ui[j] + ubar[j] - (fm[j] - fP[j]) / (2.0 * a_sig)) / 3.0 \
                        + (up[j] + 2.0 * ui[j] + 2.0 * ubar[j] + un[j]) / 6.0
                    ustar_out[s, j] = 0.5 * raw
            else:
                for j in range(m):
                    ustar_out[s, j] = (up[j] + un[j]) / 6.0 \
                        + (ui[j] + ubar[j]) / 3.0


@njit(cache=True)
def element_pass_grad(m, cells, bdof, Gx, Gy, S, slot_ptr, U_pts, U_avg,
                      alpha_cell, grad_out, stab_out, stab_on):
    """Scalar fast path: projected gradients plus damping with a precomputed
    per-cell speed factor (state-independent models)."""
    nc = cells.shape[0]
    nbd = Gx.shape[1]
    ndof = Gx.shape[2]
    uloc = np.empty(ndof)
    for ci in range(nc):
        cell = cells[ci]
        o = slot_ptr[cell]
        for b in range(nbd):
            uloc[b] = U_pts[bdof[ci, b], 0]
        uloc[nbd] = U_avg[cell, 0]
        for b in range(nbd):
            gx = 0.0
            gy = 0.0
            for r in range(ndof):
                gx += Gx[ci, b, r] * uloc[r]
                gy += Gy[ci, b, r] * uloc[r]
            grad_out[o + b, 0, 0] = gx
            grad_out[o + b, 1, 0] = gy
        if stab_on:
            fac = alpha_cell[cell]
            for b in range(nbd):
                s = 0.0
                for r in range(ndof):
                    s += S[ci, b, r] * uloc[r]
                stab_out[o + b, 0] = fac * s


# -------------------------------------------------------------- point passes ---


@njit(cache=True)
def point_pass_scalar(mid, par, pt_ptr, pt_slot, slot_normal, slot_pdof,
                      grad, stab, U_pts, adv_pts, sign_variant, phi_out):
    """Upwind-weighted high-order point residuals for scalar models."""
    npt = pt_ptr.shape[0] - 1
    for p in range(npt):
        k0 = pt_ptr[p]
        k1 = pt_ptr[p + 1]
        den = 0.0
        for k in range(k0, k1):
            s = pt_slot[k]
            dof = slot_pdof[s]
            u0 = U_pts[dof, 0]
            if mid == MID_ADVECTION:
                kk = (adv_pts[dof, 0] * slot_normal[s, 0]
                      + adv_pts[dof, 1] * slot_normal[s, 1])
            else:
                kk = (np.cos(u0) * slot_normal[s, 0]
                      - np.sin(u0) * slot_normal[s, 1])
            if sign_variant:
                den += 1.0 if kk > 0.0 else (-1.0 if kk < 0.0 else 0.0)
            else:
                den += kk if kk > 0.0 else 0.0
        deg = k1 - k0
        # relative shift: vanishing upwind weights fall back to equal weights
        # while the weights still sum to one exactly
        shift = 1e-9 * abs(den) + 1e-300
        for k in range(k0, k1):
            s = pt_slot[k]
            dof = slot_pdof[s]
            u0 = U_pts[dof, 0]
            if mid == MID_ADVECTION:
                g = (adv_pts[dof, 0] * grad[s, 0, 0]
                     + adv_pts[dof, 1] * grad[s, 1, 0])
                kk = (adv_pts[dof, 0] * slot_normal[s, 0]
                      + adv_pts[dof, 1] * slot_normal[s, 1])
            else:
                g = np.cos(u0) * grad[s, 0, 0] - np.sin(u0) * grad[s, 1, 0]
                kk = (np.cos(u0) * slot_normal[s, 0]
                      - np.sin(u0) * slot_normal[s, 1])
            kp = kk if kk > 0.0 else 0.0
            if sign_variant:
                # the sign sum is integer-valued: zero means full cancellation
                w = kp / den if abs(den) >= 0.5 else 1.0 / deg
            else:
                w = (kp + shift / deg) / (den + shift)
            phi_out[s, 0] = w * g + stab[s, 0]


@njit(cache=True)
def point_pass_system(mid, par, m, pt_ptr, pt_slot, slot_normal, slot_pdof,
                      grad, stab, U_pts, adv_pts, sign_variant, phi_out,
                      fail_out):
    """High-order point residuals N K+ (A . grad) + damping for systems.

    The per-point matrix sum gets a relative diagonal shift: directions in
    which every incident upwind eigenvalue vanishes (parallel normals at
    edge midpoints, stagnation states) carry no upwind information and stay
    untransported, which keeps the semi-discrete operator neutral there.
    The shift is large enough that rounding noise in the singular solves is
    not amplified. The sign variant solves regularized normal equations
    since its matrix sum can cancel.
    """
    npt = pt_ptr.shape[0] - 1
    maxdeg = 0
    for p in range(npt):
        d = pt_ptr[p + 1] - pt_ptr[p]
        if d > maxdeg:
            maxdeg = d
    Kst = np.empty((maxdeg, 4, 4))
    K = np.empty((4, 4))
    M = np.empty((4, 4))
    F = np.empty((4, 4))
    piv = np.empty(4, dtype=np.int64)
    rhs = np.empty(4)
    rhs2 = np.empty(4)
    g = np.empty(4)
    gx = np.empty(4)
    gy = np.empty(4)
    y = np.empty(4)
    for p in range(npt):
        k0 = pt_ptr[p]
        k1 = pt_ptr[p + 1]
        deg = k1 - k0
        if deg == 0:
            continue
        wsh = 0.0
        for i in range(m):
            for j in range(m):
                M[i, j] = 0.0
        for k in range(k0, k1):
            s = pt_slot[k]
            dof = slot_pdof[s]
            _k_matrix(mid, par, U_pts[dof], slot_normal[s, 0],
                      slot_normal[s, 1], 0, Kst[k - k0])
            if sign_variant:
                _k_matrix(mid, par, U_pts[dof], slot_normal[s, 0],
                          slot_normal[s, 1], 1, K)
                for i in range(m):
                    for j in range(m):
                        M[i, j] += K[i, j]
            else:
                for i in range(m):
                    for j in range(m):
                        M[i, j] += Kst[k - k0, i, j]
        if sign_variant:
            # F = M^T M + eps I
            for i in range(m):
                for j in range(m):
                    acc = 0.0
                    for r in range(m):
                        acc += M[r, i] * M[r, j]
                    F[i, j] = acc
            tr = 0.0
            for i in range(m):
                tr += F[i, i]
            for i in range(m):
                F[i, i] += 1e-10 * tr / m + 1e-300
        else:
            # where the incident normal fan spans the plane, state-degenerate
            # directions (stagnation) get the exact equal-weight average and
            # sum_P N K+ = I holds exactly; with parallel normals (edge
            # midpoints) the zero-speed families carry no upwind information
            # and stay untransported
            sxx = 0.0
            sxy = 0.0
            syy = 0.0
            for k in range(k0, k1):
                s = pt_slot[k]
                nx = slot_normal[s, 0]
                ny = slot_normal[s, 1]
                nn = nx * nx + ny * ny
                if nn > 0.0:
                    sxx += nx * nx / nn
                    sxy += nx * ny / nn
                    syy += ny * ny / nn
            trn = sxx + syy
            det2 = max(trn * trn - 4.0 * (sxx * syy - sxy * sxy), 0.0)
            mineig = 0.5 * (trn - np.sqrt(det2))
            tr = 0.0
            for i in range(m):
                for j in range(m):
                    tr += abs(M[i, j])
            if not (tr > 0.0):
                # an exactly-vanishing upwind sum for a system means broken
                # normals or poisoned states
                fail_out[0] = p + 1
                return
            shift = 1e-9 * tr / m + 1e-300
            if mineig > 1e-6 * max(trn, 1e-300):
                wsh = shift / deg
            for i in range(m):
                for j in range(m):
                    F[i, j] = M[i, j]
                F[i, i] += shift
        ok = _lu_factor(F, piv, m)
        if not ok:
            fail_out[0] = p + 1
            return
        for k in range(k0, k1):
            s = pt_slot[k]
            dof = slot_pdof[s]
            u = U_pts[dof]
            for j in range(m):
                gx[j] = grad[s, 0, j]
                gy[j] = grad[s, 1, j]
            _jac_dot(mid, par, u, adv_pts[dof, 0], adv_pts[dof, 1], gx, gy, g)
            for i in range(m):
                ss = wsh * g[i]
                for j in range(m):
                    ss += Kst[k - k0, i, j] * g[j]
                rhs[i] = ss
            if sign_variant:
                for i in range(m):
                    ss = 0.0
                    for j in range(m):
                        ss += M[j, i] * rhs[j]
                    rhs2[i] = ss
                _lu_solve(F, piv, rhs2, y, m)
            else:
                _lu_solve(F, piv, rhs, y, m)
            for j in range(m):
                phi_out[s, j] = y[j] + stab[s, j]


# ------------------------------------------------------------------ blending ---


@njit(cache=True, inline="always")
def _gql_max_abs_eigen(b0, bx, by, bE, c0, cx, cy, cE):
    """Largest |eigenvalue| of C^{-1/2} B C^{-1/2} for the block structure
    B = [[b0 I, -b], [-b^T, 2 bE]], C likewise, via the closed form."""
    kappa0 = cx * cx + cy * cy - 2.0 * c0 * cE
    kappa1 = (cx * bx + cy * by) - c0 * bE - cE * b0
    disc = kappa1 * kappa1 - kappa0 * (bx * bx + by * by - 2.0 * b0 * bE)
    if disc < 0.0:
        disc = 0.0
    lam = (abs(kappa1) + np.sqrt(disc)) / (-kappa0)
    lam0 = abs(b0) / c0
    return lam if lam > lam0 else lam0


@njit(cache=True)
def blend_theta_scalar(phi_ho, phi_lo, ustar, alpha_slot, slot_dual_area,
                       slot_target, umin, umax, theta_out):
    ns = phi_ho.shape[0]
    for s in range(ns):
        if slot_target[s] < 0:
            theta_out[s] = 1.0
            continue
        dphi = phi_ho[s, 0] - phi_lo[s, 0]
        a = alpha_slot[s]
        ca = slot_dual_area[s]
        if ca * abs(dphi) <= 1e-300 or a <= 0.0:
            theta_out[s] = 1.0
            continue
        slack_hi = umax - ustar[s, 0]
        slack_lo = ustar[s, 0] - umin
        slack = slack_hi if slack_hi < slack_lo else slack_lo
        if slack < 0.0:
            slack = 0.0
        t = a / (ca * abs(dphi)) * slack
        theta_out[s] = t if t < 1.0 else 1.0


@njit(cache=True)
def blend_theta_euler(phi_ho, phi_lo, ustar, alpha_slot, slot_dual_area,
                      slot_target, theta_out, fail_out):
    """theta per slot: min of the density bound and the internal-energy bound
    from the closed-form largest generalized eigenvalue."""
    ns = phi_ho.shape[0]
    for s in range(ns):
        if slot_target[s] < 0:
            theta_out[s] = 1.0
            continue
        a = alpha_slot[s]
        ca = slot_dual_area[s]
        r0 = ustar[s, 0]
        rx = ustar[s, 1]
        ry = ustar[s, 2]
        rE = ustar[s, 3]
        if r0 <= 0.0 or rx * rx + ry * ry - 2.0 * r0 * rE >= 0.0:
            fail_out[0] = s + 1
            return
        d0 = ca * (phi_ho[s, 0] - phi_lo[s, 0])
        dx = ca * (phi_ho[s, 1] - phi_lo[s, 1])
        dy = ca * (phi_ho[s, 2] - phi_lo[s, 2])
        dE = ca * (phi_ho[s, 3] - phi_lo[s, 3])
        if abs(d0) + abs(dx) + abs(dy) + abs(dE) <= 1e-300 or a <= 0.0:
            theta_out[s] = 1.0
            continue
        t_rho = 1.0
        if abs(d0) > 1e-300:
            t = a * r0 / abs(d0)
            t_rho = t if t < 1.0 else 1.0
        lam = _gql_max_abs_eigen(d0, dx, dy, dE, r0, rx, ry, rE)
        t_eps = 1.0
        if lam > 1e-300:
            t = a / lam
            t_eps = t if t < 1.0 else 1.0
        theta_out[s] = t_rho if t_rho < t_eps else t_eps


@njit(cache=True)
def blend_eta_scalar(mid, par, edge_cells, bedge_ghost, edge_normal, adv_edge,
                     f_ho, f_lo, alpha_e, U_avg, umin, umax, eta_out, fail_out):
    """Per-edge blending factor for scalar models; the Riemann intermediate
    state is symmetric in the two cells so one evaluation bounds both sides."""
    ne = edge_cells.shape[0]
    fl = np.empty(1)
    fr = np.empty(1)
    for e in range(ne):
        a = alpha_e[e]
        df = f_ho[e, 0] - f_lo[e, 0]
        if a <= 0.0 or abs(df) <= 1e-300:
            eta_out[e] = 1.0
            continue
        cl = edge_cells[e, 0]
        cr = edge_cells[e, 1]
        if cr < 0:
            cr = bedge_ghost[e]
        nx = edge_normal[e, 0]
        ny = edge_normal[e, 1]
        _flux_dot_n(mid, par, U_avg[cl], adv_edge[e, 0], adv_edge[e, 1], nx, ny, fl)
        _flux_dot_n(mid, par, U_avg[cr], adv_edge[e, 0], adv_edge[e, 1], nx, ny, fr)
        ustar = 0.5 * (U_avg[cl, 0] + U_avg[cr, 0]) - (fr[0] - fl[0]) / (2.0 * a)
        if ustar > umax + 1e-12 * (abs(umax) + 1.0) or \
           ustar < umin - 1e-12 * (abs(umin) + 1.0):
            fail_out[0] = e + 1
            return
        slack_hi = umax - ustar
        slack_lo = ustar - umin
        slack = slack_hi if slack_hi < slack_lo else slack_lo
        if slack < 0.0:
            slack = 0.0
        t = a / abs(df) * slack
        eta_out[e] = t if t < 1.0 else 1.0


@njit(cache=True)
def blend_eta_euler(par, edge_cells, bedge_ghost, edge_normal,
                    f_ho, f_lo, alpha_e, U_avg, eta_out, fail_out):
    """Per-edge blending factor for Euler: density bound plus the GQL
    internal-energy bound on the Riemann intermediate state."""
    m = 4
    ne = edge_cells.shape[0]
    fl = np.empty(m)
    fr = np.empty(m)
    par_dummy = par
    for e in range(ne):
        a = alpha_e[e]
        d0 = f_ho[e, 0] - f_lo[e, 0]
        dx = f_ho[e, 1] - f_lo[e, 1]
        dy = f_ho[e, 2] - f_lo[e, 2]
        dE = f_ho[e, 3] - f_lo[e, 3]
        if a <= 0.0 or abs(d0) + abs(dx) + abs(dy) + abs(dE) <= 1e-300:
            eta_out[e] = 1.0
            continue
        cl = edge_cells[e, 0]
        cr = edge_cells[e, 1]
        if cr < 0:
            cr = bedge_ghost[e]
        nx = edge_normal[e, 0]
        ny = edge_normal[e, 1]
        _flux_dot_n(MID_EULER, par_dummy, U_avg[cl], 0.0, 0.0, nx, ny, fl)
        _flux_dot_n(MID_EULER, par_dummy, U_avg[cr], 0.0, 0.0, nx, ny, fr)
        r0 = 0.5 * (U_avg[cl, 0] + U_avg[cr, 0]) - (fr[0] - fl[0]) / (2.0 * a)
        rx = 0.5 * (U_avg[cl, 1] + U_avg[cr, 1]) - (fr[1] - fl[1]) / (2.0 * a)
        ry = 0.5 * (U_avg[cl, 2] + U_avg[cr, 2]) - (fr[2] - fl[2]) / (2.0 * a)
        rE = 0.5 * (U_avg[cl, 3] + U_avg[cr, 3]) - (fr[3] - fl[3]) / (2.0 * a)
        if r0 <= 0.0 or rx * rx + ry * ry - 2.0 * r0 * rE >= 0.0:
            fail_out[0] = e + 1
            return
        t_rho = 1.0
        if abs(d0) > 1e-300:
            t = a * r0 / abs(d0)
            t_rho = t if t < 1.0 else 1.0
        lam = _gql_max_abs_eigen(d0, dx, dy, dE, r0, rx, ry, rE)
        t_eps = 1.0
        if lam > 1e-300:
            t = a / lam
            t_eps = t if t < 1.0 else 1.0
        eta_out[e] = t_rho if t_rho < t_eps else t_eps


# ------------------------------------------------------------------- updates ---


@njit(cache=True)
def update_avg(cedge_ptr, cedge_idx, cedge_sign, edge_len, cell_area,
               f_lo, f_ho, eta, dt, use_blend, U_avg):
    """Forward-Euler average update with the blended single-valued edge flux."""
    nc = cedge_ptr.shape[0] - 1
    m = U_avg.shape[1]
    for c in range(nc):
        inv = dt / cell_area[c]
        for k in range(cedge_ptr[c], cedge_ptr[c + 1]):
            e = cedge_idx[k]
            sgn = cedge_sign[k]
            le = edge_len[e]
            for j in range(m):
                if use_blend:
                    f = f_lo[e, j] + eta[e] * (f_ho[e, j] - f_lo[e, j])
                else:
                    f = f_ho[e, j]
                U_avg[c, j] -= inv * sgn * le * f


@njit(cache=True)
def update_points(pt_ptr, pt_slot, phi_lo, phi_ho, theta, dt, use_blend, U_pts):
    npt = pt_ptr.shape[0] - 1
    m = U_pts.shape[1]
    for p in range(npt):
        for j in range(m):
            acc = 0.0
            for k in range(pt_ptr[p], pt_ptr[p + 1]):
                s = pt_slot[k]
                if use_blend:
                    acc += phi_lo[s, j] + theta[s] * (phi_ho[s, j] - phi_lo[s, j])
                else:
                    acc += phi_ho[s, j]
            U_pts[p, j] -= dt * acc
