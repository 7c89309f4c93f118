"""Hyperbolic models: fluxes, Jacobian contractions K = A(u).n with their
positive/sign spectral parts, wave-speed bounds and invariant-domain tests.

All operations broadcast over leading axes; states have shape (..., m) and
normals (..., 2). Normals need not be unit vectors: K and the speed bounds
scale linearly with |n|.
"""

import numpy as np


class DomainError(Exception):
    pass


class Model:
    m = 1
    name = "model"
    has_x_flux = False     # flux depends on position (variable-coefficient advection)

    def flux(self, u, x=None):
        raise NotImplementedError

    def jac_dot(self, u, gx, gy, x=None):
        """A_x(u) gx + A_y(u) gy for gradient vectors gx, gy of shape (..., m)."""
        raise NotImplementedError

    def K(self, u, n, x=None):
        raise NotImplementedError

    def K_plus(self, u, n, x=None):
        raise NotImplementedError

    def K_sign(self, u, n, x=None):
        raise NotImplementedError

    def max_speed(self, u, n, x=None):
        """Upper bound on the spectral radius of A(u).n (scales with |n|)."""
        raise NotImplementedError

    def max_speed_states(self, us, n, x=None):
        """Wave-speed bound valid for all states in `us` (list/stack along axis 0).

        For scalar models the bound covers the whole interval hull of the
        states (needed for monotone fluxes with non-convex fluxes); for
        systems it is the max over the given states.
        """
        return np.max(np.stack([self.max_speed(u, n, x=x) for u in us]), axis=0)

    def in_domain(self, u):
        raise NotImplementedError

    def primitive(self, u):
        return u

    def kernel_id(self):
        raise NotImplementedError

    def kernel_params(self):
        return np.zeros(1)


# ----------------------------------------------------------------- scalar ---

class ScalarModel(Model):
    m = 1

    def __init__(self, u_min=-np.inf, u_max=np.inf):
        self.u_min = float(u_min)
        self.u_max = float(u_max)

    def set_bounds(self, u_min, u_max):
        if u_min > u_max:
            raise ValueError("u_min > u_max")
        self.u_min, self.u_max = float(u_min), float(u_max)

    def in_domain(self, u):
        v = u[..., 0]
        return (v >= self.u_min) & (v <= self.u_max)

    def K_plus(self, u, n, x=None):
        return np.maximum(self.K(u, n, x=x), 0.0)

    def K_sign(self, u, n, x=None):
        return np.sign(self.K(u, n, x=x))


class AdvectionModel(ScalarModel):
    """f(u, x) = a(x) u with a prescribed velocity field a."""

    name = "advection"
    has_x_flux = True

    def __init__(self, velocity, **kw):
        super().__init__(**kw)
        self.velocity = velocity

    def a(self, x):
        return np.asarray(self.velocity(np.asarray(x, dtype=float)), dtype=float)

    def flux(self, u, x=None):
        a = self.a(x)
        return a[..., :, None] * u[..., None, :]

    def jac_dot(self, u, gx, gy, x=None):
        a = self.a(x)
        return a[..., 0, None] * gx + a[..., 1, None] * gy

    def K(self, u, n, x=None):
        a = self.a(x)
        return (a * n).sum(-1)[..., None, None]

    def max_speed(self, u, n, x=None):
        a = self.a(x)
        return np.abs((a * n).sum(-1))

    def max_speed_states(self, us, n, x=None):
        return self.max_speed(us[0], n, x=x)

    def kernel_id(self):
        return 0


class KPPModel(ScalarModel):
    """Non-convex scalar flux f(u) = (sin u, cos u)."""

    name = "kpp"

    def flux(self, u, x=None):
        return np.stack([np.sin(u), np.cos(u)], axis=-2)

    def jac_dot(self, u, gx, gy, x=None):
        return np.cos(u) * gx - np.sin(u) * gy

    def K(self, u, n, x=None):
        return (np.cos(u) * n[..., 0, None] - np.sin(u) * n[..., 1, None])[..., None]

    def max_speed(self, u, n, x=None):
        return np.abs(np.cos(u[..., 0]) * n[..., 0] - np.sin(u[..., 0]) * n[..., 1])

    def max_speed_states(self, us, n, x=None):
        """Exact max of |f'(w).n| over the interval hull of the states."""
        lo = np.min(np.stack([u[..., 0] for u in us]), axis=0)
        hi = np.max(np.stack([u[..., 0] for u in us]), axis=0)
        nx, ny = n[..., 0], n[..., 1]
        best = np.maximum(np.abs(np.cos(lo) * nx - np.sin(lo) * ny),
                          np.abs(np.cos(hi) * nx - np.sin(hi) * ny))
        # |f'(w).n| = |n| |cos(w + phase)|, extremal at w* = -phase (mod pi)
        nrm = np.hypot(nx, ny)
        phase = np.arctan2(ny, nx)
        k0 = np.floor((lo + phase) / np.pi)
        for off in range(9):
            w = -phase + (k0 + off) * np.pi
            inside = (w >= lo) & (w <= hi)
            best = np.where(inside, nrm, best)
        return best

    def kernel_id(self):
        return 1


# --------------------------------------------------------------- acoustics ---

class AcousticsModel(Model):
    """Linear acoustics in (v_x, v_y, p): v_t + grad p = 0, p_t + c^2 div v = 0."""

    m = 3
    name = "acoustics"

    def __init__(self, c=1.0):
        if c <= 0:
            raise ValueError("sound speed must be positive")
        self.c = float(c)

    def flux(self, u, x=None):
        z = np.zeros_like(u[..., 0])
        c2 = self.c ** 2
        fx = np.stack([u[..., 2], z, c2 * u[..., 0]], axis=-1)
        fy = np.stack([z, u[..., 2], c2 * u[..., 1]], axis=-1)
        return np.stack([fx, fy], axis=-2)

    def jac_dot(self, u, gx, gy, x=None):
        c2 = self.c ** 2
        return np.stack([gx[..., 2], gy[..., 2],
                         c2 * (gx[..., 0] + gy[..., 1])], axis=-1)

    def K(self, u, n, x=None):
        shape = np.broadcast_shapes(u.shape[:-1], n.shape[:-1])
        K = np.zeros(shape + (3, 3))
        K[..., 0, 2] = n[..., 0]
        K[..., 1, 2] = n[..., 1]
        K[..., 2, 0] = self.c ** 2 * n[..., 0]
        K[..., 2, 1] = self.c ** 2 * n[..., 1]
        return K

    def _eig(self, n):
        nrm = np.linalg.norm(n, axis=-1)
        nhat = n / np.maximum(nrm, 1e-300)[..., None]
        c = self.c
        shape = n.shape[:-1]
        R = np.zeros(shape + (3, 3))
        L = np.zeros(shape + (3, 3))
        nx, ny = nhat[..., 0], nhat[..., 1]
        # columns: shear (lambda=0), +acoustic, -acoustic
        R[..., 0, 0] = -ny
        R[..., 1, 0] = nx
        R[..., 0, 1] = nx
        R[..., 1, 1] = ny
        R[..., 2, 1] = c
        R[..., 0, 2] = nx
        R[..., 1, 2] = ny
        R[..., 2, 2] = -c
        L[..., 0, 0] = -ny
        L[..., 0, 1] = nx
        L[..., 1, 0] = 0.5 * nx
        L[..., 1, 1] = 0.5 * ny
        L[..., 1, 2] = 0.5 / c
        L[..., 2, 0] = 0.5 * nx
        L[..., 2, 1] = 0.5 * ny
        L[..., 2, 2] = -0.5 / c
        lam = np.stack([np.zeros_like(nrm), c * nrm, -c * nrm], axis=-1)
        return R, lam, L

    def K_plus(self, u, n, x=None):
        R, lam, L = self._eig(np.asarray(n, dtype=float))
        return np.einsum("...ik,...k,...kj->...ij", R, np.maximum(lam, 0.0), L)

    def K_sign(self, u, n, x=None):
        R, lam, L = self._eig(np.asarray(n, dtype=float))
        return np.einsum("...ik,...k,...kj->...ij", R, np.sign(lam), L)

    def max_speed(self, u, n, x=None):
        return self.c * np.linalg.norm(np.asarray(n, dtype=float), axis=-1) \
            * np.ones_like(np.asarray(u)[..., 0])

    def in_domain(self, u):
        return np.all(np.isfinite(u), axis=-1)

    def kernel_id(self):
        return 2

    def kernel_params(self):
        return np.array([self.c])


# ------------------------------------------------------------------- euler ---

class EulerModel(Model):
    """2D compressible Euler with a perfect-gas law, u = (rho, rho v, E)."""

    m = 4
    name = "euler"

    def __init__(self, gamma=1.4):
        if gamma <= 1.0:
            raise ValueError("gamma must exceed 1")
        self.gamma = float(gamma)

    def pressure(self, u):
        rho = u[..., 0]
        ke = 0.5 * (u[..., 1] ** 2 + u[..., 2] ** 2) / rho
        return (self.gamma - 1.0) * (u[..., 3] - ke)

    def sound_speed(self, u):
        return np.sqrt(self.gamma * self.pressure(u) / u[..., 0])

    def internal_energy(self, u):
        return u[..., 3] - 0.5 * (u[..., 1] ** 2 + u[..., 2] ** 2) / u[..., 0]

    def in_domain(self, u):
        with np.errstate(invalid="ignore"):
            return (np.all(np.isfinite(u), axis=-1) & (u[..., 0] > 0.0)
                    & (self.internal_energy(np.where(np.isfinite(u), u, 1.0)) > 0.0))

    def require_domain(self, u):
        if not np.all(self.in_domain(u)):
            raise DomainError("state outside the invariant domain (rho > 0, eps > 0)")

    def primitive(self, u):
        rho = u[..., 0]
        return np.stack([rho, u[..., 1] / rho, u[..., 2] / rho, self.pressure(u)], axis=-1)

    def from_primitive(self, w):
        rho, vx, vy, p = w[..., 0], w[..., 1], w[..., 2], w[..., 3]
        E = p / (self.gamma - 1.0) + 0.5 * rho * (vx ** 2 + vy ** 2)
        return np.stack([rho, rho * vx, rho * vy, E], axis=-1)

    def flux(self, u, x=None):
        rho = u[..., 0]
        vx, vy = u[..., 1] / rho, u[..., 2] / rho
        p = self.pressure(u)
        fx = np.stack([u[..., 1], u[..., 1] * vx + p, u[..., 2] * vx,
                       (u[..., 3] + p) * vx], axis=-1)
        fy = np.stack([u[..., 2], u[..., 1] * vy, u[..., 2] * vy + p,
                       (u[..., 3] + p) * vy], axis=-1)
        return np.stack([fx, fy], axis=-2)

    def jac_dot(self, u, gx, gy, x=None):
        g = self.gamma
        rho = u[..., 0]
        vx, vy = u[..., 1] / rho, u[..., 2] / rho
        q2 = vx ** 2 + vy ** 2
        H = (u[..., 3] + self.pressure(u)) / rho
        out = np.empty_like(gx)
        gm1 = g - 1.0
        out[..., 0] = gx[..., 1] + gy[..., 2]
        out[..., 1] = (gx[..., 0] * (0.5 * gm1 * q2 - vx ** 2)
                       + gx[..., 1] * (3.0 - g) * vx
                       + gx[..., 2] * (-gm1 * vy) + gx[..., 3] * gm1
                       + gy[..., 0] * (-vx * vy) + gy[..., 1] * vy
                       + gy[..., 2] * vx)
        out[..., 2] = (gx[..., 0] * (-vx * vy) + gx[..., 1] * vy + gx[..., 2] * vx
                       + gy[..., 0] * (0.5 * gm1 * q2 - vy ** 2)
                       + gy[..., 1] * (-gm1 * vx)
                       + gy[..., 2] * (3.0 - g) * vy + gy[..., 3] * gm1)
        out[..., 3] = (gx[..., 0] * vx * (0.5 * gm1 * q2 - H)
                       + gx[..., 1] * (H - gm1 * vx ** 2)
                       + gx[..., 2] * (-gm1 * vx * vy) + gx[..., 3] * g * vx
                       + gy[..., 0] * vy * (0.5 * gm1 * q2 - H)
                       + gy[..., 1] * (-gm1 * vx * vy)
                       + gy[..., 2] * (H - gm1 * vy ** 2) + gy[..., 3] * g * vy)
        return out

    def _eig(self, u, n):
        """Right/left eigenvectors and eigenvalues of A(u).nhat (unit normal)."""
        nrm = np.linalg.norm(n, axis=-1)
        nhat = n / np.maximum(nrm, 1e-300)[..., None]
        nx, ny = nhat[..., 0], nhat[..., 1]
        rho = u[..., 0]
        vx, vy = u[..., 1] / rho, u[..., 2] / rho
        c = self.sound_speed(u)
        H = (u[..., 3] + self.pressure(u)) / rho
        qn = vx * nx + vy * ny
        qt = -vx * ny + vy * nx
        q2 = vx ** 2 + vy ** 2
        shape = qn.shape
        R = np.empty(shape + (4, 4))
        L = np.empty(shape + (4, 4))
        one = np.ones(shape)
        zero = np.zeros(shape)
        R[..., :, 0] = np.stack([one, vx - c * nx, vy - c * ny, H - c * qn], axis=-1)
        R[..., :, 1] = np.stack([one, vx, vy, 0.5 * q2], axis=-1)
        R[..., :, 2] = np.stack([zero, -ny, nx, qt], axis=-1)
        R[..., :, 3] = np.stack([one, vx + c * nx, vy + c * ny, H + c * qn], axis=-1)
        gm1 = self.gamma - 1.0
        b1 = gm1 / c ** 2
        b2 = 0.5 * b1 * q2
        L[..., 0, :] = 0.5 * np.stack([b2 + qn / c, -b1 * vx - nx / c,
                                       -b1 * vy - ny / c, b1 * one], axis=-1)
        L[..., 1, :] = np.stack([1.0 - b2, b1 * vx, b1 * vy, -b1 * one], axis=-1)
        L[..., 2, :] = np.stack([-qt, -ny, nx, zero], axis=-1)
        L[..., 3, :] = 0.5 * np.stack([b2 - qn / c, -b1 * vx + nx / c,
                                       -b1 * vy + ny / c, b1 * one], axis=-1)
        lam = np.stack([qn - c, qn, qn, qn + c], axis=-1) * nrm[..., None]
        return R, lam, L

    def K(self, u, n, x=None):
        R, lam, L = self._eig(u, np.asarray(n, dtype=float))
        return np.einsum("...ik,...k,...kj->...ij", R, lam, L)

    def K_plus(self, u, n, x=None):
        R, lam, L = self._eig(u, np.asarray(n, dtype=float))
        return np.einsum("...ik,...k,...kj->...ij", R, np.maximum(lam, 0.0), L)

    def K_sign(self, u, n, x=None):
        R, lam, L = self._eig(u, np.asarray(n, dtype=float))
        return np.einsum("...ik,...k,...kj->...ij", R, np.sign(lam), L)

    def max_speed(self, u, n, x=None):
        n = np.asarray(n, dtype=float)
        nrm = np.linalg.norm(n, axis=-1)
        nhat = n / np.maximum(nrm, 1e-300)[..., None]
        rho = u[..., 0]
        qn = (u[..., 1] * nhat[..., 0] + u[..., 2] * nhat[..., 1]) / rho
        return (np.abs(qn) + self.sound_speed(u)) * nrm

    def kernel_id(self):
        return 3

    def kernel_params(self):
        return np.array([self.gamma])


def gql_normal_dot(u, nu):
    """u . n_*(nu) with n_* = (|nu|^2/2, -nu, 1); equals the internal energy at
    nu = v and is positive for all nu iff the state is admissible (given rho>0)."""
    u = np.asarray(u, dtype=float)
    nu = np.asarray(nu, dtype=float)
    return (0.5 * (nu ** 2).sum(-1) * u[..., 0]
            - (nu * u[..., 1:3]).sum(-1) + u[..., 3])


def make_model(spec):
    """Build a model from a config dict {"type": ..., params...}."""
    kind = spec["type"]
    if kind == "advection":
        field = spec.get("field", "rotation")
        if field == "rotation":
            omega = spec.get("omega", 2.0 * np.pi)

            def velocity(x):
                return np.stack([-omega * x[..., 1], omega * x[..., 0]], axis=-1)
        elif field == "constant":
            ax, ay = spec.get("a", (1.0, 0.0))

            def velocity(x):
                out = np.empty_like(x)
                out[..., 0] = ax
                out[..., 1] = ay
                return out
        else:
            raise ValueError(f"unknown advection field '{field}'")
        return AdvectionModel(velocity)
    if kind == "kpp":
        return KPPModel()
    if kind == "acoustics":
        return AcousticsModel(c=spec.get("c", 1.0))
    if kind == "euler":
        return EulerModel(gamma=spec.get("gamma", 1.4))
    raise ValueError(f"unknown model '{kind}'")
