"""Benchmark definitions: initial data, exact solutions where available,
invariant-domain bounds, boundary rules and default run parameters."""

import numpy as np

from . import physics
from .mesh import (Mesh, build_polygonal_dual, build_structured_quad,
                   build_structured_tri, refine_uniform)

GAMMA = 1.4


class Case:
    name = None
    bbox = None
    model_spec = None
    t_final = 1.0
    cfl = 0.3
    limiter = "convex"
    boundary = {"default": "neumann"}
    bounds = None        # scalar invariant-domain bounds

    def ic(self, x):
        raise NotImplementedError

    def exact(self, x, t):
        return None

    def make_model(self):
        return physics.make_model(self.model_spec)

    def default_mesh(self, kind="tri", n=32):
        x0, y0, x1, y1 = self.bbox
        ny = max(1, round(n * (y1 - y0) / (x1 - x0)))
        if kind == "tri":
            return build_structured_tri(n, ny, self.bbox)
        if kind == "quad":
            return build_structured_quad(n, ny, self.bbox)
        if kind == "poly":
            return build_polygonal_dual(build_structured_tri(n, ny, self.bbox))
        raise ValueError(f"unknown mesh kind {kind}")


class Rotation(Case):
    """Solid-body rotation of a Gaussian bump, one revolution per time unit."""

    name = "rotation"
    bbox = (-2.0, -2.0, 2.0, 2.0)
    model_spec = {"type": "advection", "field": "rotation"}
    t_final = 1.0
    cfl = 0.2
    limiter = "none"
    x0 = np.array([0.0, 1.0])

    def ic(self, x):
        d2 = ((x - self.x0) ** 2).sum(-1)
        return np.exp(-20.0 * d2)[..., None]

    def exact(self, x, t):
        c, s = np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)
        xr = np.stack([c * x[..., 0] + s * x[..., 1],
                       -s * x[..., 0] + c * x[..., 1]], axis=-1)
        return self.ic(xr)

    @property
    def bounds(self):
        return (0.0, 1.0)


class KPP(Case):
    """Non-convex scalar problem with a rotating compound-wave structure."""

    name = "kpp"
    bbox = (-2.0, -2.0, 2.0, 2.0)
    model_spec = {"type": "kpp"}
    t_final = 1.0
    cfl = 0.3
    centre = np.array([0.0, 0.5])
    bounds = (np.pi / 4.0, 3.5 * np.pi)

    def ic(self, x):
        d2 = ((x - self.centre) ** 2).sum(-1)
        return np.where(d2 <= 1.0, 3.5 * np.pi, 0.25 * np.pi)[..., None]


class AcousticsSteady(Case):
    """Stationary vortex of the acoustics system: the solution must not move."""

    name = "acoustics_steady"
    bbox = (-1.0, -1.0, 1.0, 1.0)
    model_spec = {"type": "acoustics", "c": 1.0}
    t_final = 10.0
    cfl = 0.4
    limiter = "none"

    def ic(self, x):
        r = np.linalg.norm(x, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            tang = np.stack([-x[..., 1], x[..., 0]], axis=-1) / np.maximum(r, 1e-300)[..., None]
        mag = np.where(r >= 0.4, 0.0, np.where(r <= 0.2, 5.0 * r, 2.0 - 5.0 * r))
        v = mag[..., None] * tang
        p = np.zeros_like(r)
        return np.concatenate([v, p[..., None]], axis=-1)

    def exact(self, x, t):
        return self.ic(x)


class EulerVortex(Case):
    """Isentropic vortex advected by a constant background flow."""

    name = "vortex"
    bbox = (-20.0, -20.0, 20.0, 20.0)
    model_spec = {"type": "euler", "gamma": GAMMA}
    t_final = 20.0
    cfl = 0.2
    limiter = "none"
    x0 = np.array([-10.0, -10.0])
    v_inf = np.array([1.0, np.sqrt(2.0) / 2.0])
    strength = 5.0 / (2.0 * np.pi)

    def _fields(self, x):
        rel = x - self.x0
        xhat = 0.5 * np.stack([-rel[..., 1], rel[..., 0]], axis=-1)
        R = (xhat ** 2).sum(-1)
        M = self.strength
        dv = M * np.exp(0.5 * (1.0 - R))[..., None] * xhat
        dT = -(GAMMA - 1.0) / (2.0 * GAMMA) * M ** 2 * np.exp(1.0 - R)
        T = 1.0 + dT
        rho = T ** (1.0 / (GAMMA - 1.0))
        p = rho ** GAMMA
        v = self.v_inf + dv
        return rho, v, p

    def ic(self, x):
        rho, v, p = self._fields(x)
        E = p / (GAMMA - 1.0) + 0.5 * rho * (v ** 2).sum(-1)
        return np.stack([rho, rho * v[..., 0], rho * v[..., 1], E], axis=-1)

    def exact(self, x, t):
        return self.ic(x - t * self.v_inf)


def _quadrant_ic(centre, states, gamma=GAMMA):
    """Four-state Riemann data in primitive variables (rho, u, v, p):
    states = (ne, nw, sw, se)."""
    model = physics.EulerModel(gamma)
    prims = [np.asarray(s, dtype=float) for s in states]

    def ic(x):
        east = x[..., 0] >= centre[0]
        north = x[..., 1] >= centre[1]
        sel = np.where(east & north, 0,
                       np.where(~east & north, 1, np.where(~east, 2, 3)))
        w = np.stack([prims[k] for k in range(4)])[sel]
        return model.from_primitive(w)

    return ic


class LaxLiu13(Case):
    """Two-dimensional Riemann problem, configuration 13 (shocks and slip
    lines meeting at the quadrant point)."""

    name = "lax_liu_13"
    bbox = (-2.0, -2.0, 2.0, 2.0)
    model_spec = {"type": "euler", "gamma": GAMMA}
    t_final = 1.0
    cfl = 0.3

    def ic(self, x):
        return _quadrant_ic((0.0, 0.0), (
            (0.5313, 0.0, 0.0, 0.4),
            (1.0, 0.7276, 0.0, 1.0),
            (0.8, 0.0, 0.0, 1.0),
            (1.0, 0.0, 0.7276, 1.0)))(x)


class KurganovTadmor3(Case):
    """Two-dimensional Riemann problem, configuration 3 (four shocks)."""

    name = "kt3"
    bbox = (-2.0, -2.0, 2.0, 2.0)
    model_spec = {"type": "euler", "gamma": GAMMA}
    t_final = 3.0
    cfl = 0.3

    def ic(self, x):
        return _quadrant_ic((1.0, 1.0), (
            (1.5, 0.0, 0.0, 1.5),
            (0.5323, 1.206, 0.0, 0.3),
            (0.138, 1.206, 1.206, 0.029),
            (0.5323, 0.0, 1.206, 0.3)))(x)


def _dmr_post_shock(gamma=GAMMA, mach=10.0):
    """State behind a Mach `mach` shock moving into (rho=gamma, p=1, v=0)."""
    rho1, p1 = gamma, 1.0
    c1 = np.sqrt(gamma * p1 / rho1)
    ms = mach * c1
    rho2 = rho1 * (gamma + 1.0) * mach ** 2 / ((gamma - 1.0) * mach ** 2 + 2.0)
    p2 = p1 * (2.0 * gamma * mach ** 2 - (gamma - 1.0)) / (gamma + 1.0)
    u2 = ms * (1.0 - rho1 / rho2)
    return np.array([rho2, u2, 0.0, p2])


class DoubleMachRamp(Case):
    """Mach 10 shock hitting a 30-degree ramp (smoke-test scale).

    The ramp domain is meshed by shearing a structured grid; the top boundary
    uses zero-order extrapolation as a deliberate simplification of the
    time-dependent exact-shock condition.
    """

    name = "dmr"
    bbox = (-0.25, 0.0, 3.0, 2.0)
    model_spec = {"type": "euler", "gamma": GAMMA}
    t_final = 0.05
    cfl = 0.3
    ramp_angle = np.deg2rad(30.0)

    @property
    def boundary(self):
        post = _dmr_post_shock()
        model = physics.EulerModel(GAMMA)
        state = model.from_primitive(post).tolist()
        # the lead shock stays well away from the right boundary at smoke
        # scale, so zero-order extrapolation is enough there
        return {"left": {"type": "inflow", "state": state},
                "right": {"type": "neumann"},
                "bottom": {"type": "wall"},
                "top": {"type": "neumann"},
                "default": "neumann"}

    def ramp_height(self, x):
        return np.maximum(0.0, x) * np.tan(self.ramp_angle)

    def default_mesh(self, kind="tri", n=96):
        x0, y0, x1, y1 = self.bbox
        ny = max(4, round(n * (y1 - y0) / (x1 - x0)))
        base = build_structured_tri(n, ny, self.bbox) if kind == "tri" \
            else build_structured_quad(n, ny, self.bbox)
        v = base.vertices.copy()
        yr = self.ramp_height(v[:, 0])
        v[:, 1] = yr + (v[:, 1] - y0) / (y1 - y0) * (y1 - yr)
        out = Mesh(v, base.cells)
        out.boundary_tags = base.boundary_tags
        return out

    def ic(self, x):
        model = physics.EulerModel(GAMMA)
        post = model.from_primitive(_dmr_post_shock())
        pre = model.from_primitive(np.array([GAMMA, 0.0, 0.0, 1.0]))
        return np.where((x[..., 0] < 0.0)[..., None], post, pre)


class Constant(Case):
    """Uniform state: exact preservation probe for any model and limiter."""

    name = "constant"
    bbox = (0.0, 0.0, 1.0, 1.0)
    t_final = 0.1
    cfl = 0.3

    def __init__(self, model_spec=None, state=None):
        self.model_spec = model_spec or {"type": "advection", "field": "rotation"}
        model = physics.make_model(self.model_spec)
        if state is None:
            state = {1: [1.0], 3: [0.4, -0.2, 1.0],
                     4: [1.0, 0.3, -0.2, 2.5]}[model.m]
        self.state = np.asarray(state, dtype=float)
        if model.m == 1:
            self.bounds = (float(self.state[0]), float(self.state[0]))

    def ic(self, x):
        return np.broadcast_to(self.state, x.shape[:-1] + self.state.shape).copy()

    def exact(self, x, t):
        return self.ic(x)


CASES = {c.name: c for c in (Rotation, KPP, AcousticsSteady, EulerVortex,
                             LaxLiu13, KurganovTadmor3, DoubleMachRamp)}


def get_case(name, **kw):
    if name == "constant":
        return Constant(**kw)
    if name not in CASES:
        raise KeyError(f"unknown case '{name}' (have {sorted(CASES)})")
    return CASES[name]()


def rotation_mesh_ladder(levels, kind="tri", nx0=25):
    """Meshes for the rotation convergence study: a coarse triangulation
    (h ~ 0.226 for nx0=25) refined by edge-midpoint splitting so h halves
    exactly; polygonal meshes are the barycentric duals of each level."""
    base = build_structured_tri(nx0, nx0, Rotation.bbox)
    out = []
    tri = base
    for _ in range(levels):
        out.append(build_polygonal_dual(tri) if kind == "poly" else tri)
        tri = refine_uniform(tri)
    return out
