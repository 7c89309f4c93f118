"""Per-polygon virtual-element machinery for quadratic (k=2) approximation.

Everything is expressed through the element DoF vector
[u(sigma_1), ..., u(sigma_{2Nv}), cell average], with the boundary DoFs in CCW
order alternating vertex / edge-midpoint. The gradient projector is obtained
from the orthogonality conditions on gradients plus the mean-value constraint;
the resulting linear system is assembled and solved per element in batch.

Scaled monomial ordering (fixed everywhere): 1, xi, eta, xi^2, xi*eta, eta^2
with xi = (x - x_c)/h, eta = (y - y_c)/h.
"""

from dataclasses import dataclass

import numpy as np

from .quadrature import GL3_WEIGHTS, triangle_rule

MONO_EXP = np.array([[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]])
N_MONO = 6
K_ORDER = 2


class ElementError(Exception):
    pass


def monomial_values(xy, centre, h):
    """Scaled monomial values, shape (..., 6)."""
    xy, centre, h = np.asarray(xy, float), np.asarray(centre, float), np.asarray(h, float)
    xi = (xy[..., 0] - centre[..., 0]) / h
    eta = (xy[..., 1] - centre[..., 1]) / h
    one = np.ones_like(xi)
    return np.stack([one, xi, eta, xi * xi, xi * eta, eta * eta], axis=-1)


def monomial_gradients(xy, centre, h):
    """Scaled monomial gradients, shape (..., 6, 2)."""
    xy, centre, h = np.asarray(xy, float), np.asarray(centre, float), np.asarray(h, float)
    xi = (xy[..., 0] - centre[..., 0]) / h
    eta = (xy[..., 1] - centre[..., 1]) / h
    z = np.zeros_like(xi)
    one = np.ones_like(xi)
    gx = np.stack([z, one, z, 2 * xi, eta, z], axis=-1)
    gy = np.stack([z, z, one, z, xi, 2 * eta], axis=-1)
    return np.stack([gx, gy], axis=-1) / h[..., None, None]


@dataclass
class ElementVem:
    """Precomputed projector data for one polygon (see assemble_projector)."""
    centre: np.ndarray        # (2,)
    h: float
    area: float
    dof_pos: np.ndarray       # (2Nv, 2) boundary DoF positions, CCW
    Pi: np.ndarray            # (6, ndof): DoF vector -> monomial coefficients
    Dpi: np.ndarray           # (ndof, ndof): DoF vector -> DoFs of projection
    S: np.ndarray             # (ndof, ndof): stabilization core (avg row removed)
    Gx: np.ndarray            # (2Nv, ndof): d/dx of projection at boundary DoFs
    Gy: np.ndarray            # (2Nv, ndof)
    L2: np.ndarray            # (6, ndof): DoF vector -> L2-projection coefficients
    moments: np.ndarray       # (nmono4,) integrals of monomials up to degree 4


def _mono_exponents(max_deg):
    out = []
    for d in range(max_deg + 1):
        for ax in range(d, -1, -1):
            out.append((ax, d - ax))
    return out


_EXP4 = _mono_exponents(4)
_EXP4_INDEX = {e: i for i, e in enumerate(_EXP4)}


def subtri_monomial_integrals(verts, star, centre, h, max_deg=4):
    """Integrals of all scaled monomials up to max_deg over a batch of polygons.

    verts: (nc, nv, 2), star/centre: (nc, 2), h: (nc,). Uses the fan
    sub-triangulation from `star` and a triangle rule exact to max_deg.
    Returns (nc, nmono).
    """
    nc, nv, _ = verts.shape
    bary, w = triangle_rule(max_deg)
    exps = _mono_exponents(max_deg)
    out = np.zeros((nc, len(exps)))
    for i in range(nv):
        a = verts[:, i]
        b = verts[:, (i + 1) % nv]
        tri_area = 0.5 * ((b[:, 0] - a[:, 0]) * (star[:, 1] - a[:, 1])
                          - (star[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))
        # quad points: (nc, nq, 2)
        pts = (bary[None, :, 0, None] * a[:, None, :]
               + bary[None, :, 1, None] * b[:, None, :]
               + bary[None, :, 2, None] * star[:, None, :])
        xi = (pts[..., 0] - centre[:, None, 0]) / h[:, None]
        eta = (pts[..., 1] - centre[:, None, 1]) / h[:, None]
        for k, (p, q) in enumerate(exps):
            vals = xi ** p * eta ** q
            out[:, k] += tri_area * (vals @ w)
    return out


def _moment(moments, p, q):
    return moments[:, _EXP4_INDEX[(p, q)]]


def assemble_group(verts, dof_pos, star=None, centre=None, h=None, area=None):
    """Assemble projector data for a batch of same-size polygons.

    verts: (nc, nv, 2) CCW; dof_pos: (nc, 2nv, 2) boundary DoFs CCW
    (vertex, midpoint, vertex, ...). Returns dict of batched arrays matching
    the ElementVem fields.
    """
    verts = np.asarray(verts, dtype=float)
    dof_pos = np.asarray(dof_pos, dtype=float)
    nc, nv, _ = verts.shape
    nbd = 2 * nv
    ndof = nbd + 1

    if centre is None or area is None:
        x, y = verts[..., 0], verts[..., 1]
        xr, yr = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
        cross = x * yr - xr * y
        area = 0.5 * cross.sum(axis=1)
        cx = ((x + xr) * cross).sum(axis=1) / (6 * area)
        cy = ((y + yr) * cross).sum(axis=1) / (6 * area)
        centre = np.column_stack([cx, cy])
    if h is None:
        d = verts[:, :, None, :] - verts[:, None, :, :]
        h = np.sqrt((d ** 2).sum(-1)).max(axis=(1, 2))
    tiny = area <= 1e-14 * h ** 2
    if tiny.any() or not np.all(np.isfinite(centre)):
        raise ElementError(
            f"degenerate polygon(s) {np.nonzero(tiny)[0].tolist()}")
    if star is None:
        star = centre

    moments = subtri_monomial_integrals(verts, star, centre, h, max_deg=4)

    # G rows: mean-value constraint, then <grad m_a, grad m_b> for |b| >= 1
    G = np.zeros((nc, N_MONO, N_MONO))
    for a in range(N_MONO):
        p, q = MONO_EXP[a]
        G[:, 0, a] = _moment(moments, p, q) / area
    h2 = h * h
    m00 = _moment(moments, 0, 0)
    m10 = _moment(moments, 1, 0)
    m01 = _moment(moments, 0, 1)
    m20 = _moment(moments, 2, 0)
    m11 = _moment(moments, 1, 1)
    m02 = _moment(moments, 0, 2)
    # gradients in scaled coordinates carry 1/h each; products integrate monomials <= deg 2
    G[:, 1, 1] = m00 / h2
    G[:, 1, 3] = 2 * m10 / h2
    G[:, 1, 4] = m01 / h2
    G[:, 2, 2] = m00 / h2
    G[:, 2, 4] = m10 / h2
    G[:, 2, 5] = 2 * m01 / h2
    G[:, 3, 1] = 2 * m10 / h2
    G[:, 3, 3] = 4 * m20 / h2
    G[:, 3, 4] = 2 * m11 / h2
    G[:, 4, 1] = m01 / h2
    G[:, 4, 2] = m10 / h2
    G[:, 4, 3] = 2 * m11 / h2
    G[:, 4, 4] = (m20 + m02) / h2
    G[:, 4, 5] = 2 * m11 / h2
    G[:, 5, 2] = 2 * m01 / h2
    G[:, 5, 4] = 2 * m11 / h2
    G[:, 5, 5] = 4 * m02 / h2

    # right-hand sides per unit DoF vector: boundary Gauss-Lobatto term minus
    # the volume term (Laplacians of xi^2 and eta^2 are constant)
    C = np.zeros((nc, N_MONO, ndof))
    C[:, 0, nbd] = 1.0
    grads = monomial_gradients(dof_pos, centre[:, None, :], h[:, None])  # (nc,nbd,6,2)
    for i in range(nv):
        ia, iq, ib = 2 * i, 2 * i + 1, (2 * i + 2) % nbd
        ea = dof_pos[:, ib] - dof_pos[:, ia]
        elen = np.sqrt((ea ** 2).sum(-1))
        nhat = np.column_stack([ea[:, 1], -ea[:, 0]]) / elen[:, None]
        for wgt, idx in zip(GL3_WEIGHTS, (ia, iq, ib)):
            gdotn = (grads[:, idx, 1:, 0] * nhat[:, None, 0]
                     + grads[:, idx, 1:, 1] * nhat[:, None, 1])
            C[:, 1:, idx] += wgt * elen[:, None] * gdotn
    C[:, 3, nbd] -= 2.0 * area / h2
    C[:, 5, nbd] -= 2.0 * area / h2

    sv = np.linalg.svd(G, compute_uv=False)
    bad = sv[:, -1] <= 1e-12 * sv[:, 0]
    if bad.any():
        raise ElementError(f"singular projector system for element(s) {np.nonzero(bad)[0].tolist()}")
    Pi = np.linalg.solve(G, C)  # (nc, 6, ndof)

    mono_at_dofs = monomial_values(dof_pos, centre[:, None, :], h[:, None])  # (nc,nbd,6)
    mono_avg = G[:, 0, :]  # averages of monomials
    Dpi = np.empty((nc, ndof, ndof))
    Dpi[:, :nbd] = mono_at_dofs @ Pi
    Dpi[:, nbd] = np.einsum("ca,cad->cd", mono_avg, Pi)

    A = -Dpi
    A[:, np.arange(ndof), np.arange(ndof)] += 1.0
    A[:, nbd, :] = 0.0  # the projection preserves the average exactly
    S = np.einsum("crs,crt->cst", A, A)

    Gx = np.einsum("cba,can->cbn", grads[..., 0], Pi)
    Gy = np.einsum("cba,can->cbn", grads[..., 1], Pi)

    # L2 projection: mass system with moments up to degree 4
    H = np.empty((nc, N_MONO, N_MONO))
    for a in range(N_MONO):
        for b in range(N_MONO):
            p = MONO_EXP[a] + MONO_EXP[b]
            H[:, a, b] = _moment(moments, p[0], p[1])
    rhs = np.empty((nc, N_MONO, ndof))
    rhs[:, 0, :] = 0.0
    rhs[:, 0, nbd] = area
    rhs[:, 1:, :] = H[:, 1:, :] @ Pi
    svh = np.linalg.svd(H, compute_uv=False)
    badh = svh[:, -1] <= 1e-12 * svh[:, 0]
    if badh.any():
        raise ElementError(f"singular mass system for element(s) {np.nonzero(badh)[0].tolist()}")
    L2 = np.linalg.solve(H, rhs)

    return {
        "centre": centre, "h": h, "area": area, "dof_pos": dof_pos,
        "Pi": Pi, "Dpi": Dpi, "S": S, "Gx": Gx, "Gy": Gy, "L2": L2,
        "moments": moments,
    }


def assemble_projector(verts, dof_pos=None, star=None):
    """Single-polygon convenience wrapper around assemble_group."""
    verts = np.asarray(verts, dtype=float)
    if dof_pos is None:
        mids = 0.5 * (verts + np.roll(verts, -1, axis=0))
        dof_pos = np.empty((2 * len(verts), 2))
        dof_pos[0::2] = verts
        dof_pos[1::2] = mids
    star_b = None if star is None else np.asarray(star, float)[None, :]
    out = assemble_group(verts[None], np.asarray(dof_pos, float)[None], star=star_b)
    return ElementVem(
        centre=out["centre"][0], h=float(out["h"][0]), area=float(out["area"][0]),
        dof_pos=out["dof_pos"][0], Pi=out["Pi"][0], Dpi=out["Dpi"][0], S=out["S"][0],
        Gx=out["Gx"][0], Gy=out["Gy"][0], L2=out["L2"][0], moments=out["moments"][0],
    )


def polygon_monomial_integrals(verts, max_degree=2, star=None):
    """Integrals of scaled monomials over one polygon, as {(p, q): value}."""
    verts = np.asarray(verts, dtype=float)[None]
    x, y = verts[..., 0], verts[..., 1]
    xr, yr = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
    cross = x * yr - xr * y
    area = 0.5 * cross.sum(axis=1)
    cx = ((x + xr) * cross).sum(axis=1) / (6 * area)
    cy = ((y + yr) * cross).sum(axis=1) / (6 * area)
    centre = np.column_stack([cx, cy])
    d = verts[:, :, None, :] - verts[:, None, :, :]
    h = np.sqrt((d ** 2).sum(-1)).max(axis=(1, 2))
    star_b = centre if star is None else np.asarray(star, float)[None, :]
    mom = subtri_monomial_integrals(verts, star_b, centre, h, max_deg=max(2, max_degree))
    return {e: float(mom[0, i]) for i, e in enumerate(_mono_exponents(max_degree))}


def stabilization_term(elem, dof_values, alpha, h=None):
    """Spurious-mode damping for the boundary DoFs: (alpha / sqrt(h)) * S u.

    dof_values has shape (ndof,) or (ndof, m); vanishes on quadratic data.
    """
    if h is None:
        h = elem.h
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    su = elem.S @ np.asarray(dof_values, dtype=float)
    nbd = elem.S.shape[0] - 1
    return (alpha / np.sqrt(h)) * su[:nbd]


def project_l2_k2(elem, dof_values):
    """Coefficients of the computable L2 projection (equals the gradient
    projection on quadratics; preserves the cell average exactly)."""
    return elem.L2 @ np.asarray(dof_values, dtype=float)


def project_nabla(elem, dof_values):
    """Coefficients of the gradient projection for given element DoF values."""
    return elem.Pi @ np.asarray(dof_values, dtype=float)
