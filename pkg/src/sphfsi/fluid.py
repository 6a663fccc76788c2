"""Weakly compressible SPH fluid solver.

Density evolves through the continuity equation, pressure follows from the
stiff Tait equation of state, and momentum combines the symmetrised pressure
gradient, Monaghan artificial viscosity and a laminar viscous term.  Walls
are dynamic boundary particles: they keep their position and velocity but
take part in the continuity and pressure sums, which builds up the repulsion
that keeps fluid out of solids.

Time integration is symplectic Euler (kick-drift); all pair reductions run
in ascending (i, j) order so repeated runs are bit-identical regardless of
the worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailure
from .kernels import KernelKind, SmoothingKernel
from .neighbors import NeighborGrid
from .parallel import WorkerPool

try:
    import numba
    from numba import njit, prange

    # workqueue is always available and avoids noisy TBB version probing
    numba.config.THREADING_LAYER = "omp"

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional speed-up
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap

    prange = range

FLUID = 0
WALL = 1

TAG_NAMES = {FLUID: "fluid", WALL: "wall"}


@dataclass
class FluidParams:
    """Physical constants of one weakly compressible fluid."""

    rho0: float = 1000.0          # reference density, kg/m^3
    c0: float = 30.0              # numerical speed of sound, m/s
    gamma: float = 7.0            # Tait exponent
    alpha_av: float = 0.05        # artificial-viscosity coefficient
    nu0: float = 1.0e-6           # kinematic viscosity, m^2/s
    g: tuple = (0.0, -9.8)        # gravity vector
    h: float = 0.01               # smoothing length, m
    cfl: float = 0.25

    def __post_init__(self):
        if self.rho0 <= 0 or self.c0 <= 0:
            raise ValueError("rho0 and c0 must be positive")
        if self.gamma < 1.0:
            raise ValueError("EOS exponent must be >= 1")
        if self.alpha_av < 0 or self.nu0 < 0:
            raise ValueError("viscosity coefficients must be non-negative")
        if self.h <= 0:
            raise ValueError("smoothing length must be positive")

    @property
    def eta2(self) -> float:
        # regularisation of 1/r^2 terms
        return 0.01 * self.h * self.h

    def gravity(self, dim: int) -> np.ndarray:
        g = np.asarray(self.g, dtype=float)
        if len(g) != dim:
            raise ValueError(f"gravity vector has {len(g)} components, state has {dim}")
        return g

    def sound_speed(self, rho) -> np.ndarray:
        """Local sound speed of the Tait fluid, c0 * (rho/rho0)^((gamma-1)/2)."""
        return self.c0 * (np.asarray(rho, dtype=float) / self.rho0) ** (0.5 * (self.gamma - 1.0))


def eos_pressure(rho, params: FluidParams):
    """Tait pressure P = c0^2 rho0 / gamma * ((rho/rho0)^gamma - 1)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0.0):
        raise ValueError("density must be positive")
    b = params.c0 ** 2 * params.rho0 / params.gamma
    out = b * ((rho / params.rho0) ** params.gamma - 1.0)
    return float(out) if out.ndim == 0 else out


def eos_density(press, params: FluidParams):
    """Inverse of eos_pressure on rho > 0."""
    press = np.asarray(press, dtype=float)
    b = params.c0 ** 2 * params.rho0 / params.gamma
    arg = press / b + 1.0
    if np.any(arg <= 0.0):
        raise ValueError("pressure below the Tait branch limit")
    out = params.rho0 * arg ** (1.0 / params.gamma)
    return float(out) if out.ndim == 0 else out


@dataclass
class FluidState:
    """Structure-of-arrays particle storage.

    ``tag`` distinguishes fluid particles (integrated) from wall particles
    (fixed unless moved by the structure adapter).  ``acc`` holds the total
    acceleration including gravity; the pure interaction part is
    ``acc - g`` for fluid particles.
    """

    pos: np.ndarray
    vel: np.ndarray
    rho: np.ndarray
    press: np.ndarray
    mass: np.ndarray
    tag: np.ndarray
    acc: np.ndarray = None
    drho_dt: np.ndarray = None
    ids: np.ndarray = None
    t: float = 0.0

    def __post_init__(self):
        n, dim = self.pos.shape
        if self.acc is None:
            self.acc = np.zeros((n, dim))
        if self.drho_dt is None:
            self.drho_dt = np.zeros(n)
        if self.ids is None:
            self.ids = np.arange(n, dtype=np.int64)
        if np.any(self.mass <= 0) or np.any(self.rho <= 0):
            raise ValueError("mass and density must be positive")

    @property
    def n(self) -> int:
        return self.pos.shape[0]

    @property
    def dim(self) -> int:
        return self.pos.shape[1]

    @property
    def fluid_mask(self) -> np.ndarray:
        return self.tag == FLUID

    @property
    def wall_mask(self) -> np.ndarray:
        return self.tag == WALL

    def copy(self) -> "FluidState":
        return FluidState(
            pos=self.pos.copy(), vel=self.vel.copy(), rho=self.rho.copy(),
            press=self.press.copy(), mass=self.mass.copy(), tag=self.tag.copy(),
            acc=self.acc.copy(), drho_dt=self.drho_dt.copy(), ids=self.ids.copy(),
            t=self.t,
        )

    def restore(self, other: "FluidState") -> None:
        for name in ("pos", "vel", "rho", "press", "mass", "tag", "acc", "drho_dt", "ids"):
            getattr(self, name)[...] = getattr(other, name)
        self.t = other.t


def make_state(pos, vel=None, rho=None, mass=None, tag=None, params: FluidParams | None = None):
    pos = np.asarray(pos, dtype=float)
    n, dim = pos.shape
    params = params or FluidParams()
    vel = np.zeros((n, dim)) if vel is None else np.asarray(vel, dtype=float).copy()
    rho = np.full(n, params.rho0) if rho is None else np.asarray(rho, dtype=float).copy()
    mass = np.full(n, 1.0) if mass is None else np.asarray(mass, dtype=float)
    mass = np.full(n, float(mass)) if np.ndim(mass) == 0 else np.asarray(mass, dtype=float).copy()
    tag = np.zeros(n, dtype=np.int8) if tag is None else np.asarray(tag, dtype=np.int8).copy()
    press = eos_pressure(rho, params) if n else np.zeros(0)
    return FluidState(pos=pos.copy(), vel=vel, rho=rho, press=np.atleast_1d(press).astype(float),
                      mass=mass, tag=tag)


def build_grid(state: FluidState, kernel: SmoothingKernel, validate: bool = False) -> NeighborGrid:
    return NeighborGrid(kernel.support_radius, validate=validate).build(state.pos)


@njit(parallel=True, cache=True)
def _density_rate_2d_jit(starts, j_idx, pos, vel, mass, h, sig_over_h, kernel_kind):
    """Continuity-equation rate only; same traversal order as the full pass."""
    n = pos.shape[0]
    drho = np.zeros(n)
    support2 = 4.0 * h * h
    for i in prange(n):
        xi, yi = pos[i, 0], pos[i, 1]
        vxi, vyi = vel[i, 0], vel[i, 1]
        dr = 0.0
        for s in range(starts[i], starts[i + 1]):
            j = j_idx[s]
            dx = xi - pos[j, 0]
            dy = yi - pos[j, 1]
            r2 = dx * dx + dy * dy
            if r2 >= support2 or r2 <= 0.0:
                continue
            r = np.sqrt(r2)
            q = r / h
            if kernel_kind == 0:
                if q < 1.0:
                    dwdr = sig_over_h * (-3.0 * q + 2.25 * q * q)
                else:
                    dwdr = sig_over_h * (-0.75 * (2.0 - q) * (2.0 - q))
            else:
                t = 1.0 - 0.5 * q
                dwdr = sig_over_h * (-5.0 * q) * t * t * t
            scale = dwdr / r
            dr += mass[j] * ((vxi - vel[j, 0]) * dx * scale + (vyi - vel[j, 1]) * dy * scale)
        drho[i] = dr
    return drho


@njit(parallel=True, cache=True)
def _rates_2d_jit(starts, j_idx, pos, vel, rho, press, mass, c_all, tag,
                  h, eta2, alpha, nu0, gx, gy, sig_over_h, kernel_kind):
    """Gather-formulation rates; one thread per particle i, neighbours summed
    in ascending j order, so results are identical for any thread count."""
    n = pos.shape[0]
    acc = np.zeros((n, 2))
    drho = np.zeros(n)
    support2 = 4.0 * h * h
    for i in prange(n):
        xi, yi = pos[i, 0], pos[i, 1]
        vxi, vyi = vel[i, 0], vel[i, 1]
        pri = press[i] / (rho[i] * rho[i])
        ax = 0.0
        ay = 0.0
        dr = 0.0
        for s in range(starts[i], starts[i + 1]):
            j = j_idx[s]
            dx = xi - pos[j, 0]
            dy = yi - pos[j, 1]
            r2 = dx * dx + dy * dy
            if r2 >= support2 or r2 <= 0.0:
                continue
            r = np.sqrt(r2)
            q = r / h
            if kernel_kind == 0:
                if q < 1.0:
                    dwdr = sig_over_h * (-3.0 * q + 2.25 * q * q)
                else:
                    dwdr = sig_over_h * (-0.75 * (2.0 - q) * (2.0 - q))
            else:
                t = 1.0 - 0.5 * q
                dwdr = sig_over_h * (-5.0 * q) * t * t * t
            scale = dwdr / r
            gxx = dx * scale
            gyy = dy * scale
            vijx = vxi - vel[j, 0]
            vijy = vyi - vel[j, 1]
            dr += mass[j] * (vijx * gxx + vijy * gyy)
            pterm = press[j] / (rho[j] * rho[j]) + pri
            pi_ij = 0.0
            vdotr = vijx * dx + vijy * dy
            if vdotr < 0.0:
                mu = h * vdotr / (r2 + eta2)
                pi_ij = -alpha * 0.5 * (c_all[i] + c_all[j]) * mu / (0.5 * (rho[i] + rho[j]))
            coeff = -mass[j] * (pterm + pi_ij)
            lam = mass[j] * (4.0 * nu0 * (dx * gxx + dy * gyy)) / ((rho[i] + rho[j]) * (r2 + eta2))
            ax += coeff * gxx + lam * vijx
            ay += coeff * gyy + lam * vijy
        drho[i] = dr
        if tag[i] == 0:
            acc[i, 0] = ax + gx
            acc[i, 1] = ay + gy
        else:
            acc[i, 0] = 0.0
            acc[i, 1] = 0.0
    return acc, drho


def _pair_terms(state, params, kernel, i_idx, j_idx, pool):
    """Per-pair kernel gradient, velocity difference and geometry factors."""
    n_pairs = len(i_idx)
    dim = state.dim
    rvec = np.empty((n_pairs, dim))
    vij = np.empty((n_pairs, dim))
    grad = np.empty((n_pairs, dim))
    r2 = np.empty(n_pairs)

    pos, vel = state.pos, state.vel
    h = kernel.h

    def chunk(lo, hi):
        ii, jj = i_idx[lo:hi], j_idx[lo:hi]
        d = pos[ii] - pos[jj]
        rvec[lo:hi] = d
        vij[lo:hi] = vel[ii] - vel[jj]
        rr2 = np.einsum("ij,ij->i", d, d)
        r2[lo:hi] = rr2
        r = np.sqrt(rr2)
        safe = np.where(r > 1e-12 * h, r, 1.0)
        scale = np.where(r > 1e-12 * h, kernel.dw_dr(r) / safe, 0.0)
        grad[lo:hi] = d * scale[:, None]

    pool.map_chunks(chunk, n_pairs)
    return rvec, vij, grad, r2


def compute_rates(state: FluidState, params: FluidParams, kernel: SmoothingKernel,
                  grid: NeighborGrid | None = None, pairs=None,
                  pool: WorkerPool | None = None):
    """Fill state.acc and state.drho_dt from the current kinematic state.

    Continuity:  drho_i/dt = sum_j m_j (v_i - v_j) . grad_i W_ij
    Momentum:    dv_i/dt = -sum_j m_j (P_j/rho_j^2 + P_i/rho_i^2 + Pi_ij) grad_i W_ij
                           + g + laminar term.
    ``pairs`` may be any (i, j) superset of the interacting pairs sorted by
    (i, j) -- extra candidates contribute exactly zero since the kernel
    vanishes beyond its support.  Wall particles receive a density rate but
    zero acceleration.
    """
    own_pool = pool is None
    pool = pool or WorkerPool(1)
    try:
        if pairs is None:
            if grid is None:
                grid = build_grid(state, kernel)
            pairs = grid.pairs()
        i_idx, j_idx = pairs
        n = state.n
        dim = state.dim
        g = params.gravity(dim)

        if HAVE_NUMBA and dim == 2 and len(i_idx):
            starts = np.searchsorted(i_idx, np.arange(n + 1))
            c_all = params.sound_speed(state.rho)
            kind = 0 if kernel.kind is KernelKind.CUBIC_SPLINE else 1
            acc, drho = _rates_2d_jit(
                starts, j_idx, state.pos, state.vel, state.rho, state.press,
                state.mass, c_all, state.tag, params.h, params.eta2,
                params.alpha_av, params.nu0, g[0], g[1],
                kernel.sigma / kernel.h, kind)
            state.acc[...] = acc
            state.drho_dt[...] = drho
            return acc, drho

        if len(i_idx) == 0:
            state.drho_dt[...] = 0.0
            state.acc[...] = 0.0
            state.acc[state.fluid_mask] = g
            return state.acc, state.drho_dt

        rvec, vij, grad, r2 = _pair_terms(state, params, kernel, i_idx, j_idx, pool)

        rho_i, rho_j = state.rho[i_idx], state.rho[j_idx]
        m_j = state.mass[j_idx]

        vdotr = np.einsum("ij,ij->i", vij, rvec)
        rdotg = np.einsum("ij,ij->i", rvec, grad)

        # continuity
        vdotgrad = np.einsum("ij,ij->i", vij, grad)
        drho = np.bincount(i_idx, weights=m_j * vdotgrad, minlength=n)

        # pressure + artificial viscosity; sound speed per particle, gathered
        press_over_rho2 = state.press / (state.rho * state.rho)
        pterm = press_over_rho2[j_idx] + press_over_rho2[i_idx]
        approaching = vdotr < 0.0
        mu = params.h * vdotr / (r2 + params.eta2)
        c_all = params.sound_speed(state.rho)
        cbar = 0.5 * (c_all[i_idx] + c_all[j_idx])
        rhobar = 0.5 * (rho_i + rho_j)
        pi_ij = np.where(approaching, -params.alpha_av * cbar * mu / rhobar, 0.0)

        coeff = -m_j * (pterm + pi_ij)

        # laminar viscosity
        lam = m_j * (4.0 * params.nu0 * rdotg) / ((rho_i + rho_j) * (r2 + params.eta2))

        acc = np.empty((n, dim))
        for d in range(dim):
            contrib = coeff * grad[:, d] + lam * vij[:, d]
            acc[:, d] = np.bincount(i_idx, weights=contrib, minlength=n)

        fluid = state.fluid_mask
        acc[fluid] += g
        acc[~fluid] = 0.0
        state.acc[...] = acc
        state.drho_dt[...] = drho
        return acc, drho
    finally:
        if own_pool:
            pool.close()


def compute_density_rates(state: FluidState, params: FluidParams, kernel: SmoothingKernel,
                          grid: NeighborGrid | None = None, pairs=None) -> np.ndarray:
    """Continuity rates for the current velocity field (all particles)."""
    if pairs is None:
        if grid is None:
            grid = build_grid(state, kernel)
        pairs = grid.pairs()
    i_idx, j_idx = pairs
    n = state.n
    if len(i_idx) == 0:
        state.drho_dt[...] = 0.0
        return state.drho_dt
    if HAVE_NUMBA and state.dim == 2:
        starts = np.searchsorted(i_idx, np.arange(n + 1))
        kind = 0 if kernel.kind is KernelKind.CUBIC_SPLINE else 1
        drho = _density_rate_2d_jit(starts, j_idx, state.pos, state.vel, state.mass,
                                    params.h, kernel.sigma / kernel.h, kind)
    else:
        d = state.pos[i_idx] - state.pos[j_idx]
        r = np.linalg.norm(d, axis=1)
        safe = np.where(r > 1e-12 * kernel.h, r, 1.0)
        scale = np.where(r > 1e-12 * kernel.h, kernel.dw_dr(r) / safe, 0.0)
        grad = d * scale[:, None]
        vij = state.vel[i_idx] - state.vel[j_idx]
        weights = state.mass[j_idx] * np.einsum("ij,ij->i", vij, grad)
        drho = np.bincount(i_idx, weights=weights, minlength=n)
    state.drho_dt[...] = drho
    return state.drho_dt


def continuity_rate(state: FluidState, kernel: SmoothingKernel, i: int,
                    neighbors: np.ndarray) -> float:
    """Density rate of a single particle from an explicit neighbour list."""
    if len(neighbors) == 0:
        return 0.0
    rvec = state.pos[i] - state.pos[neighbors]
    grad = kernel.grad(rvec)
    vij = state.vel[i] - state.vel[neighbors]
    return float(np.sum(state.mass[neighbors] * np.einsum("ij,ij->i", vij, grad)))


def momentum_rate(state: FluidState, params: FluidParams, kernel: SmoothingKernel,
                  i: int, neighbors: np.ndarray) -> np.ndarray:
    """Acceleration of a single particle from an explicit neighbour list."""
    dim = state.dim
    g = params.gravity(dim)
    if len(neighbors) == 0:
        return g.copy()
    rvec = state.pos[i] - state.pos[neighbors]
    r2 = np.einsum("ij,ij->i", rvec, rvec)
    grad = kernel.grad(rvec)
    vij = state.vel[i] - state.vel[neighbors]
    vdotr = np.einsum("ij,ij->i", vij, rvec)

    rho_j = state.rho[neighbors]
    m_j = state.mass[neighbors]
    pterm = state.press[neighbors] / rho_j ** 2 + state.press[i] / state.rho[i] ** 2
    mu = params.h * vdotr / (r2 + params.eta2)
    cbar = 0.5 * (params.sound_speed(state.rho[i]) + params.sound_speed(rho_j))
    rhobar = 0.5 * (state.rho[i] + rho_j)
    pi_ij = np.where(vdotr < 0.0, -params.alpha_av * cbar * mu / rhobar, 0.0)

    acc = -np.sum((m_j * (pterm + pi_ij))[:, None] * grad, axis=0)
    lam = m_j * (4.0 * params.nu0 * np.einsum("ij,ij->i", rvec, grad)) / (
        (state.rho[i] + rho_j) * (r2 + params.eta2))
    acc += np.sum(lam[:, None] * vij, axis=0)
    return acc + g


def compute_dt(state: FluidState, params: FluidParams) -> float:
    """Stable step: cfl * min(acoustic, body-force, viscous) limits."""
    vmax = float(np.max(np.linalg.norm(state.vel, axis=1))) if state.n else 0.0
    amax = float(np.max(np.linalg.norm(state.acc, axis=1))) if state.n else 0.0
    dt_acoustic = params.h / (params.c0 + vmax)
    dt_accel = np.sqrt(params.h / amax) if amax > 0 else np.inf
    dt_visc = params.h ** 2 / params.nu0 if params.nu0 > 0 else np.inf
    return params.cfl * min(dt_acoustic, dt_accel, dt_visc)


def step(state: FluidState, params: FluidParams, kernel: SmoothingKernel, dt: float,
         grid: NeighborGrid | None = None, pairs=None,
         pool: WorkerPool | None = None) -> FluidState:
    """One symplectic Euler step (kick-drift).  Walls never move.

    The continuity rate is evaluated with the kicked velocities: advancing
    density with the old divergence field makes the acoustic subsystem a
    forward-Euler oscillator whose modes grow every step, while the
    post-kick evaluation keeps it neutrally stable under the usual CFL.
    """
    if pairs is None:
        if grid is None:
            grid = build_grid(state, kernel)
        pairs = grid.pairs()
    compute_rates(state, params, kernel, pairs=pairs, pool=pool)
    fluid = state.fluid_mask
    state.vel[fluid] += state.acc[fluid] * dt
    compute_density_rates(state, params, kernel, pairs=pairs)
    state.pos[fluid] += state.vel[fluid] * dt
    state.rho += state.drho_dt * dt
    # boundary particles must never fall into tension: their density is
    # floored at the reference value so walls only ever push
    wall = ~fluid
    np.maximum(state.rho, params.rho0, where=wall, out=state.rho)
    if np.any(state.rho <= 0.0):
        bad = int(np.argwhere(state.rho <= 0.0)[0][0])
        raise NumericalFailure(f"non-positive density at particle {bad} (t={state.t:.6g})")
    state.press = np.atleast_1d(eos_pressure(state.rho, params))
    state.t += dt
    _check_finite(state)
    return state


def _check_finite(state: FluidState) -> None:
    for name in ("pos", "vel", "rho", "press"):
        arr = getattr(state, name)
        if not np.all(np.isfinite(arr)):
            bad = int(np.argwhere(~np.isfinite(arr))[0][0])
            raise NumericalFailure(
                f"non-finite {name} at particle {bad} (t={state.t:.6g})")
