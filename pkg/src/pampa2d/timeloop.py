"""SSP-RK3 time integration driving assembly, limiting and boundary handling.

The third-order Shu-Osher scheme is a convex combination of forward-Euler
stages, so every stage applies the same blending (convex limiting) or the
frozen per-entity scheme selection (a-posteriori limiting, applied per
Runge-Kutta cycle). A stage that leaves the invariant domain triggers a
restart of the cycle with a time step recomputed from the current solution.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import bc, limiter, scheme_ho, scheme_lo
from .quadrature import triangle_rule


class StepError(Exception):
    pass


@dataclass
class RunConfig:
    model: dict
    mesh: dict = None
    case: str = None
    t_final: float = 1.0
    cfl: float = 0.3
    limiter: str = "convex"            # none | mood | convex
    nsigma: str = "kplus"              # kplus | sign
    stabilization: bool = True
    boundary: dict = None
    mood_eps_abs: float = 1e-4
    mood_eps_rel: float = 1e-3
    dt_max: float = 1.0
    max_steps: int = 10 ** 9
    max_restarts: int = 3
    output: dict = None
    threads: int = 1

    @staticmethod
    def from_dict(doc):
        known = {f for f in RunConfig.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return RunConfig(**doc)


@dataclass
class Diagnostics:
    steps: int = 0
    t: float = 0.0
    restarts: int = 0
    mood_flagged_cells: int = 0
    mood_flagged_points: int = 0
    mood_pad_failures_after_rollback: int = 0
    mass0: np.ndarray = None
    boundary_accum: np.ndarray = None
    min_point: np.ndarray = None
    max_point: np.ndarray = None
    min_avg: np.ndarray = None
    max_avg: np.ndarray = None
    wall_time: float = 0.0

    def conservation_error(self, disc, avg):
        """Relative closure of Sum |P| ubar against the accumulated boundary
        flux, per component."""
        area = disc.cell_area[:disc.n_cells]
        mass = area @ avg
        scale = np.maximum.reduce([np.abs(self.mass0), np.abs(mass),
                                   np.abs(self.boundary_accum),
                                   np.full_like(mass, 1e-30)])
        return np.abs(mass - self.mass0 + self.boundary_accum) / scale


@dataclass
class RunResult:
    pts: np.ndarray
    avg: np.ndarray
    diagnostics: Diagnostics
    disc: object = None
    model: object = None


def cell_averages(disc, f, degree=4):
    """Cell averages of f(x) by sub-triangle quadrature (real cells)."""
    bary, w = triangle_rule(degree)
    probe = np.atleast_2d(f(np.zeros((1, 2))))
    m = probe.shape[-1]
    out = np.zeros((disc.n_cells, m))
    for g in disc.groups:
        real = g.cells < disc.n_cells
        if not real.any():
            continue
        cells = g.cells[real]
        pos = disc.points[g.bdof[real]][:, 0::2]      # vertices only
        star = disc.cell_centroid[cells]
        nv = g.nv
        acc = np.zeros((len(cells), m))
        for i in range(nv):
            a = pos[:, i]
            b_ = pos[:, (i + 1) % nv]
            area = 0.5 * ((b_[:, 0] - a[:, 0]) * (star[:, 1] - a[:, 1])
                          - (star[:, 0] - a[:, 0]) * (b_[:, 1] - a[:, 1]))
            pts = (bary[None, :, 0, None] * a[:, None, :]
                   + bary[None, :, 1, None] * b_[:, None, :]
                   + bary[None, :, 2, None] * star[:, None, :])
            vals = np.asarray(f(pts.reshape(-1, 2))).reshape(len(cells), len(w), m)
            acc += area[:, None] * np.einsum("cqm,q->cm", vals, w)
        out[cells] = acc / disc.cell_area[cells, None]
    return out


def init_state(disc, f):
    """Point values sampled at the DoFs, averages by quadrature."""
    pts = np.atleast_2d(f(disc.points[:disc.n_pdofs]))
    return pts.astype(float), cell_averages(disc, f)


class Solver:
    """Owns the discretization, model, work buffers and the stepping logic."""

    def __init__(self, disc, model, config, bounds=None):
        self.disc = disc
        self.model = model
        self.config = config
        self.bounds = bounds
        self.sign_variant = config.nsigma == "sign"
        if config.nsigma not in ("kplus", "sign"):
            raise ValueError(f"unknown nsigma variant {config.nsigma}")
        if config.limiter not in ("none", "mood", "convex"):
            raise ValueError(f"unknown limiter {config.limiter}")
        if model.m == 1 and config.limiter == "convex" and bounds is None:
            raise ValueError("scalar convex limiting needs global bounds")
        self.adv = self._advection_arrays()
        ns = len(disc.slot_pdof)
        ne = len(disc.edge_len)
        m = model.m
        self.ho = scheme_ho.HoOutput(np.empty((ne, m)), np.empty((ns, m)),
                                     np.empty((ns, 2, m)), np.empty((ns, m)))
        self.lo = scheme_lo.LoOutput(np.empty((ne, m)), np.empty(ne),
                                     np.empty((ns, m)), np.empty(ns),
                                     np.empty(ns), np.empty((ns, m)))
        self.factors = limiter.BlendFactors(np.ones(ne), np.ones(ns))
        self.mood_adj = (limiter.build_mood_adjacency(disc)
                         if config.limiter == "mood" else None)
        self._static_dt = None
        self.ho_static = (scheme_ho.AdvectionStatic(disc, model, self.adv,
                                                    self.sign_variant)
                          if model.has_x_flux else None)

    def _advection_arrays(self):
        disc = self.disc
        if self.model.has_x_flux:
            a_pts = self.model.a(disc.points)
            mids = 0.5 * (disc.points[disc.edge_dofs[:, 0]]
                          + disc.points[disc.edge_dofs[:, 2]])
            a_edge = self.model.a(mids)
            a_star = self.model.a(disc.cell_centroid)
            return (np.ascontiguousarray(a_pts), np.ascontiguousarray(a_edge),
                    np.ascontiguousarray(a_star))
        z = np.zeros((len(disc.points), 2))
        return (z, np.zeros((len(disc.edge_len), 2)),
                np.zeros((disc.n_cells_total, 2)))

    # ------------------------------------------------------------- stages ---

    def _stage(self, pts, avg, dt, mode, selection=None):
        """One forward-Euler stage; returns (pts, avg, boundary_flux_sum)."""
        disc = self.disc
        model = self.model
        U_pts, U_avg = bc.ghost_values(disc, model, pts, avg)
        scheme_ho.assemble_ho(disc, model, U_pts, U_avg, self.adv,
                              stab_on=self.config.stabilization,
                              sign_variant=self.sign_variant, out=self.ho,
                              static=self.ho_static)
        use_blend = mode != "none"
        if use_blend:
            scheme_lo.assemble_lo(disc, model, U_pts, U_avg, self.adv, out=self.lo)
        if mode == "convex":
            limiter.compute_blend_factors(disc, model, self.ho, self.lo,
                                          U_avg, self.adv, bounds=self.bounds,
                                          out=self.factors)
        elif mode == "selection":
            limiter.selection_factors(disc, selection, out=self.factors)

        new_pts = pts.copy()
        new_avg = avg.copy()
        from .kernels import update_avg, update_points
        update_avg(disc.cedge_ptr, disc.cedge_idx, disc.cedge_sign,
                   disc.edge_len, disc.cell_area, self.lo.edge_flux,
                   self.ho.edge_flux, self.factors.eta, dt, use_blend, new_avg)
        update_points(disc.pt_ptr, disc.pt_slot, self.lo.phi, self.ho.phi,
                      self.factors.theta, dt, use_blend, new_pts)

        b = disc.boundary_edges
        if use_blend:
            fb = (self.lo.edge_flux[b]
                  + self.factors.eta[b, None]
                  * (self.ho.edge_flux[b] - self.lo.edge_flux[b]))
        else:
            fb = self.ho.edge_flux[b]
        bflux = disc.edge_len[b] @ fb
        return new_pts, new_avg, bflux

    def _in_domain(self, pts, avg, tol=1e-11):
        model = self.model
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(avg))):
            return False
        if model.m == 1:
            if self.bounds is None:
                return True
            lo, hi = self.bounds
            sl = tol * max(1.0, abs(lo), abs(hi))
            return (pts.min() >= lo - sl and pts.max() <= hi + sl
                    and avg.min() >= lo - sl and avg.max() <= hi + sl)
        if model.name == "euler":
            return bool(np.all(model.in_domain(pts)) and np.all(model.in_domain(avg)))
        return True

    def compute_dt(self, pts, avg):
        if self._static_dt is not None:
            return self._static_dt
        U_pts, U_avg = bc.ghost_values(self.disc, self.model, pts, avg)
        scheme_lo.assemble_lo(self.disc, self.model, U_pts, U_avg, self.adv,
                              out=self.lo)
        dt = scheme_lo.compute_dt(self.disc, self.lo, self.config.cfl,
                                  dt_max=self.config.dt_max)
        if self.model.has_x_flux:
            self._static_dt = dt     # advection speeds do not depend on u
        return dt

    def _rk_cycle(self, pts, avg, dt, mode, selection=None):
        """Full SSP-RK3 cycle; returns (pts, avg, boundary_flux, ok)."""
        check = self.config.limiter == "convex"
        p1, a1, b0 = self._stage(pts, avg, dt, mode, selection)
        if check and not self._in_domain(p1, a1):
            return None, None, None, False
        p2, a2, b1 = self._stage(p1, a1, dt, mode, selection)
        p2 = 0.75 * pts + 0.25 * p2
        a2 = 0.75 * avg + 0.25 * a2
        if check and not self._in_domain(p2, a2):
            return None, None, None, False
        p3, a3, b2 = self._stage(p2, a2, dt, mode, selection)
        p3 = pts / 3.0 + 2.0 / 3.0 * p3
        a3 = avg / 3.0 + 2.0 / 3.0 * a3
        if check and not self._in_domain(p3, a3):
            return None, None, None, False
        bflux = dt * (b0 / 6.0 + b1 / 6.0 + 2.0 * b2 / 3.0)
        return p3, a3, bflux, True

    def step(self, pts, avg, dt, diag):
        """One step with the configured limiter; returns (pts, avg, dt_used)."""
        cfg = self.config
        if cfg.limiter in ("none", "convex"):
            mode = "convex" if cfg.limiter == "convex" else "none"
            attempts = 0
            while True:
                out_pts, out_avg, bflux, ok = self._rk_cycle(pts, avg, dt, mode)
                if ok:
                    break
                attempts += 1
                diag.restarts += 1
                if attempts > cfg.max_restarts:
                    raise StepError(f"step {diag.steps}: more than "
                                    f"{cfg.max_restarts} restarts")
                new_dt = self.compute_dt(pts, avg)
                dt = min(new_dt, 0.5 * dt)
            diag.boundary_accum += bflux
            return out_pts, out_avg, dt

        # a-posteriori limiting: high-order candidate, detect, one rollback
        cand_pts, cand_avg, bflux, _ = self._rk_cycle(pts, avg, dt, "none")
        flags = limiter.mood_detect(self.disc, self.model, cand_pts, cand_avg,
                                    pts, avg, self.mood_adj,
                                    eps_abs=cfg.mood_eps_abs,
                                    eps_rel=cfg.mood_eps_rel)
        if flags.n_flagged_cells or flags.n_flagged_points:
            diag.mood_flagged_cells += flags.n_flagged_cells
            diag.mood_flagged_points += flags.n_flagged_points
            cand_pts, cand_avg, bflux, _ = self._rk_cycle(
                pts, avg, dt, "selection", selection=flags)
            bad = (~self.model.in_domain(cand_avg)).sum() \
                + (~self.model.in_domain(cand_pts)).sum()
            if bad:
                diag.mood_pad_failures_after_rollback += int(bad)
                raise StepError(
                    f"step {diag.steps}: {bad} entities outside the invariant "
                    "domain after first-order rollback")
        diag.boundary_accum += bflux
        return cand_pts, cand_avg, dt


def run(disc, model, config, pts, avg, bounds=None, on_step=None):
    """March the state to config.t_final; returns RunResult with diagnostics."""
    solver = Solver(disc, model, config, bounds=bounds)
    diag = Diagnostics()
    area = disc.cell_area[:disc.n_cells]
    diag.mass0 = area @ avg
    diag.boundary_accum = np.zeros(model.m)
    diag.min_point = pts.min(axis=0)
    diag.max_point = pts.max(axis=0)
    diag.min_avg = avg.min(axis=0)
    diag.max_avg = avg.max(axis=0)
    t0 = time.perf_counter()
    t = 0.0
    while t < config.t_final - 1e-14 and diag.steps < config.max_steps:
        dt = solver.compute_dt(pts, avg)
        dt = min(dt, config.t_final - t)
        pts, avg, dt = solver.step(pts, avg, dt, diag)
        t += dt
        diag.steps += 1
        diag.t = t
        np.minimum(diag.min_point, pts.min(axis=0), out=diag.min_point)
        np.maximum(diag.max_point, pts.max(axis=0), out=diag.max_point)
        np.minimum(diag.min_avg, avg.min(axis=0), out=diag.min_avg)
        np.maximum(diag.max_avg, avg.max(axis=0), out=diag.max_avg)
        if on_step is not None:
            on_step(diag.steps, t, pts, avg)
    diag.wall_time = time.perf_counter() - t0
    return RunResult(pts=pts, avg=avg, diagnostics=diag, disc=disc, model=model)
