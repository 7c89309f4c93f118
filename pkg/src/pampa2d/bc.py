"""Boundary treatments via ghost elements.

Ghost geometry (mirrored polygons) is built by the layout; this module owns
the state rules: wall (mirrored velocity), inflow/outflow (far-field state
with a Steger-Warming average flux) and homogeneous Neumann (copy). Ghost DoF
values are rematerialized from the interior state before every stage.
"""

import numpy as np

from .layout import RULE_FARFIELD, RULE_NEUMANN, RULE_WALL


def mirror_velocity(v, n):
    """Reflect the velocity across the plane with (not necessarily unit)
    normal n: s_n(v) = v - 2 <v,n> n / |n|^2."""
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    n2 = (n ** 2).sum(-1)
    if np.any(n2 <= 0.0):
        raise ValueError("zero normal")
    return v - 2.0 * ((v * n).sum(-1) / n2)[..., None] * n


def mirror_state(u, n, model):
    """Ghost state for a wall: velocity components reflected, rest copied."""
    u = np.asarray(u, dtype=float)
    out = u.copy()
    if model.name == "euler":
        out[..., 1:3] = mirror_velocity(u[..., 1:3], n)
    elif model.name == "acoustics":
        out[..., 0:2] = mirror_velocity(u[..., 0:2], n)
    return out


def wall_flux_ho(edge_values, n_e, model):
    """Gauss-Lobatto quadrature of the symmetric-average wall flux
    (f(u) + f(u^s))/2 . n; the mass-flux component vanishes identically."""
    from .quadrature import GL3_WEIGHTS
    edge_values = np.asarray(edge_values, dtype=float)
    n_e = np.asarray(n_e, dtype=float)
    model.require_domain(edge_values)
    mirrored = mirror_state(edge_values, n_e, model)
    f = model.flux(edge_values)
    fs = model.flux(mirrored)
    fn = 0.5 * np.einsum("qdm,d->qm", f + fs, n_e)
    return GL3_WEIGHTS @ fn


def steger_warming_flux(u_in, u_inf, n, direction, model):
    """Modified Steger-Warming boundary flux.

    inflow:  (A(u_in).n)+ u_in + (A(u_inf).n)- u_inf
    outflow: (A(u_in).n)- u_in + (A(u_inf).n)+ u_inf
    """
    u_in = np.asarray(u_in, dtype=float)
    u_inf = np.asarray(u_inf, dtype=float)
    model.require_domain(u_in)
    model.require_domain(u_inf)
    Kin_p = model.K_plus(u_in, n)
    Kin_m = model.K(u_in, n) - Kin_p
    Kinf_p = model.K_plus(u_inf, n)
    Kinf_m = model.K(u_inf, n) - Kinf_p
    if direction == "inflow":
        return Kin_p @ u_in + Kinf_m @ u_inf
    if direction == "outflow":
        return Kin_m @ u_in + Kinf_p @ u_inf
    raise ValueError(f"direction must be inflow or outflow, got {direction}")


def resolve_rules(boundary_cfg, model):
    """Normalize the config mapping tag -> rule dict, converting primitive
    far-field states to conserved variables for Euler."""
    out = {}
    boundary_cfg = boundary_cfg or {}
    default = boundary_cfg.get("default", {"type": "neumann"})
    if isinstance(default, str):
        default = {"type": default}
    for tag, rule in boundary_cfg.items():
        if tag == "default":
            continue
        if isinstance(rule, str):
            rule = {"type": rule}
        rule = dict(rule)
        if rule.get("type") in ("inflow", "outflow"):
            st = np.asarray(rule["state"], dtype=float)
            if rule.pop("primitive", False):
                st = model.from_primitive(st)
            rule["state"] = st
        if rule.get("type") == "wall" and model.name not in ("euler", "acoustics"):
            raise ValueError("wall boundaries require a model with a velocity")
        out[tag] = rule
    out["__default__"] = default
    return out


def rules_for_layout(resolved, tags):
    """Per-tag dict for layout construction (fills in the default rule)."""
    default = resolved.get("__default__", {"type": "neumann"})
    return {tag: resolved.get(tag, default) for tag in tags}


def ghost_values(disc, model, U_pts, U_avg):
    """Combined (real + ghost) point and average state arrays.

    Wall ghosts mirror the velocity across their boundary edge, far-field
    ghosts hold the prescribed state, Neumann ghosts copy the source values.
    """
    ng = disc.n_ghost_cells
    m = U_pts.shape[1]
    pts = np.empty((len(disc.points), m))
    pts[:disc.n_pdofs] = U_pts
    avg = np.empty((disc.n_cells_total, m))
    avg[:disc.n_cells] = U_avg
    if ng == 0:
        return pts, avg

    src_vals = U_pts[disc.gpt_src]
    grule = disc.ghost_rule[disc.gpt_ghost]
    gvals = src_vals.copy()
    gavg = U_avg[disc.ghost_src_cell].copy()

    wall_pts = grule == RULE_WALL
    if wall_pts.any():
        normals = disc.edge_normal[disc.ghost_edge[disc.gpt_ghost[wall_pts]]]
        gvals[wall_pts] = mirror_state(src_vals[wall_pts], normals, model)
    wall_g = disc.ghost_rule == RULE_WALL
    if wall_g.any():
        normals = disc.edge_normal[disc.ghost_edge[wall_g]]
        gavg[wall_g] = mirror_state(gavg[wall_g], normals, model)

    far_pts = grule == RULE_FARFIELD
    if far_pts.any():
        gvals[far_pts] = disc.ghost_state[disc.gpt_ghost[far_pts]]
    far_g = disc.ghost_rule == RULE_FARFIELD
    if far_g.any():
        gavg[far_g] = disc.ghost_state[far_g]

    pts[disc.n_pdofs:] = gvals
    avg[disc.n_cells:] = gavg
    return pts, avg
