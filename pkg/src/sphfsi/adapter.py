"""Two-way data interpolation between SPH particles and the interface mesh.

Forces travel particle -> patch (stage one), displacements travel
vertex -> particle (stage two):

* ``interpolate_forces`` sums each patch's contact-particle loads, either
  from the particles' interaction acceleration (mass times acceleration
  minus gravity) or by integrating the mean contact pressure over the patch
  along the inward normal.
* ``interpolate_displacements`` shifts contact particles by their patch's
  relative displacement for the window and removes any remaining approach
  velocity along the patch normal, which is what keeps particles from
  punching through the interface.

The structure is also materialised to the fluid as a row of boundary
particles sampled along the interface; they follow the displaced geometry
exactly and build up the pressure that supports sustained loads (a velocity
constraint alone cannot resist a steady hydrostatic push).

``adapter_loop`` drives the whole coupled run: read displacements, advance
the fluid to the window end in stable sub-steps, detect contacts, write
patch forces, and let the coupling scheme decide whether to repeat the
window from the checkpoints.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .contact import ContactMap, ContactParams, particle_contact
from .coupling import CoupledSystem, Outcome
from .critical_mesh import CriticalMesh
from .fluid import WALL, FluidParams, FluidState, compute_dt, compute_rates, step
from .kernels import SmoothingKernel
from .neighbors import PairCache
from .parallel import WorkerPool


class ForceMode(enum.Enum):
    NEWTON_SECOND_LAW = "newton"
    PRESSURE_INTEGRAL = "pressure"


def interpolate_forces(state: FluidState, contact: ContactMap, mesh: CriticalMesh,
                       mode: ForceMode, params: FluidParams) -> np.ndarray:
    """Per-patch force exerted by the contact particles; patches without
    contacts carry zero force.  The result is also stored on the mesh."""
    n_patches = mesh.n_patches
    dim = mesh.dim
    forces = np.zeros((n_patches, dim))
    ids = contact.particle_ids
    if len(ids):
        if mode is ForceMode.NEWTON_SECOND_LAW:
            g = params.gravity(dim)
            load = state.mass[ids, None] * (state.acc[ids] - g)
            for d in range(dim):
                forces[:, d] = np.bincount(contact.patch_ids, weights=load[:, d],
                                           minlength=n_patches)
        else:
            counts = contact.contact_counts()
            # free-surface tension artifacts make particle pressure dip below
            # zero; water cannot pull on the interface, so floor it at zero
            psum = np.bincount(contact.patch_ids,
                               weights=np.maximum(state.press[ids], 0.0),
                               minlength=n_patches)
            occupied = counts > 0
            mean_p = np.zeros(n_patches)
            mean_p[occupied] = psum[occupied] / counts[occupied]
            # force acts along the inward normal (towards the structure)
            forces = -mean_p[:, None] * mesh.patch_areas()[:, None] * mesh.patch_normals()
            forces[~occupied] = 0.0
    mesh.patch_force[...] = forces
    return forces


def patch_forces_to_vertices(mesh: CriticalMesh, forces: np.ndarray) -> np.ndarray:
    """Split each patch force evenly between its vertices (conserves the sum)."""
    nv = mesh.patches.shape[1]
    out = np.zeros((mesh.n_vertices, mesh.dim))
    for k in range(nv):
        for d in range(mesh.dim):
            out[:, d] += np.bincount(mesh.patches[:, k], weights=forces[:, d] / nv,
                                     minlength=mesh.n_vertices)
    return out


def interpolate_displacements(state: FluidState, contact: ContactMap, mesh: CriticalMesh,
                              new_displacement: np.ndarray, window_dt: float) -> None:
    """Carry contact particles along with the interface for one window.

    The relative motion is the new vertex displacement minus the currently
    applied one (zero on the very first window).  Each contact particle is
    shifted by its patch's mean relative displacement, then its velocity is
    corrected so the normal component never approaches the solid faster
    than the patch itself moves; the tangential component is untouched.
    """
    new_displacement = np.asarray(new_displacement, dtype=float)
    relative = new_displacement - mesh.vertex_displacement
    patch_rel = relative[mesh.patches].mean(axis=1)
    patch_vel = patch_rel / window_dt if window_dt > 0 else np.zeros_like(patch_rel)

    ids = contact.particle_ids
    if len(ids):
        patches = contact.patch_ids
        state.pos[ids] += patch_rel[patches]
        # update applied displacement before evaluating the current normals
        mesh.set_applied_displacement(new_displacement)
        normals = mesh.patch_normals()[patches]
        rel_vel = state.vel[ids] - patch_vel[patches]
        approach = np.einsum("ij,ij->i", rel_vel, normals)
        closing = approach < 0.0   # moving against the fluid-side normal
        state.vel[ids[closing]] -= approach[closing, None] * normals[closing]
    else:
        mesh.set_applied_displacement(new_displacement)


# ------------------------------------------------------------- wall binding

@dataclass
class InterfaceWalls:
    """Boundary particles sampled along the interface patches.

    Each particle remembers its patch and parametric coordinate, so its
    position on the displaced geometry is exact linear interpolation of the
    patch vertices.  Only 2D segment meshes are supported.
    """

    particle_ids: np.ndarray     # ids into the fluid state
    patch_ids: np.ndarray
    params_t: np.ndarray         # parametric position along the patch

    def positions(self, mesh: CriticalMesh) -> np.ndarray:
        cur = mesh.current_vertices()
        a = cur[mesh.patches[self.patch_ids, 0]]
        b = cur[mesh.patches[self.patch_ids, 1]]
        return a + self.params_t[:, None] * (b - a)

    def apply_motion(self, state: FluidState, mesh: CriticalMesh, window_dt: float) -> None:
        """Move bound wall particles onto the displaced interface and give
        them the patch velocity for the coming window."""
        new_pos = self.positions(mesh)
        if window_dt > 0:
            state.vel[self.particle_ids] = (new_pos - state.pos[self.particle_ids]) / window_dt
        state.pos[self.particle_ids] = new_pos


def sample_interface_walls(mesh: CriticalMesh, spacing: float):
    """Arc-length sampling of the patch chain at roughly one particle per
    ``spacing``; returns (points, patch_ids, params_t)."""
    if mesh.patches.shape[1] != 2:
        raise NotImplementedError("interface wall sampling is 2D-only")
    cur = mesh.current_vertices()
    a = cur[mesh.patches[:, 0]]
    b = cur[mesh.patches[:, 1]]
    lengths = np.linalg.norm(b - a, axis=1)
    total = float(lengths.sum())
    n = max(1, int(round(total / spacing)))
    ds = total / n
    targets = (np.arange(n) + 0.5) * ds
    ends = np.cumsum(lengths)
    starts = ends - lengths
    patch_of = np.searchsorted(ends, targets, side="right").clip(max=len(lengths) - 1)
    t = (targets - starts[patch_of]) / lengths[patch_of]
    points = a[patch_of] + t[:, None] * (b[patch_of] - a[patch_of])
    return points, patch_of.astype(np.int64), t


# ------------------------------------------------------------- adapter

class FluidAdapter:
    """Fluid-side participant: owns the interface mesh, the contact map and
    the checkpointing needed for implicit coupling."""

    def __init__(self, state: FluidState, params: FluidParams, kernel: SmoothingKernel,
                 mesh: CriticalMesh, contact_params: ContactParams,
                 force_mode: ForceMode = ForceMode.PRESSURE_INTEGRAL,
                 walls: InterfaceWalls | None = None, pool: WorkerPool | None = None):
        self.state = state
        self.params = params
        self.kernel = kernel
        self.mesh = mesh
        self.contact_params = contact_params
        self.force_mode = force_mode
        self.walls = walls
        self.pool = pool
        self.contact = particle_contact(state, mesh, contact_params)
        self.steps_taken = 0
        self._pair_cache = PairCache(kernel.support_radius)

    def apply_displacements(self, new_displacement: np.ndarray, window_dt: float) -> None:
        interpolate_displacements(self.state, self.contact, self.mesh,
                                  new_displacement, window_dt)
        if self.walls is not None:
            self.walls.apply_motion(self.state, self.mesh, window_dt)

    def subcycle(self, window_dt: float) -> int:
        """Advance the fluid to the window end in stable sub-steps."""
        remaining = window_dt
        steps = 0
        while remaining > 1e-12 * window_dt:
            dt = min(compute_dt(self.state, self.params), remaining)
            pairs = self._pair_cache.pairs_for(self.state.pos)
            step(self.state, self.params, self.kernel, dt, pairs=pairs, pool=self.pool)
            remaining -= dt
            steps += 1
        self.steps_taken += steps
        return steps

    def refresh_contact(self) -> ContactMap:
        self.contact = particle_contact(self.state, self.mesh, self.contact_params)
        return self.contact

    def vertex_forces(self) -> np.ndarray:
        forces = interpolate_forces(self.state, self.contact, self.mesh,
                                    self.force_mode, self.params)
        return patch_forces_to_vertices(self.mesh, forces)

    def save_checkpoint(self):
        return (self.state.copy(), self.mesh.copy_motion_state(), self.steps_taken)

    def load_checkpoint(self, cp) -> None:
        self.state.restore(cp[0])
        self.mesh.restore_motion_state(cp[1])
        self.steps_taken = cp[2]
        self.contact = particle_contact(self.state, self.mesh, self.contact_params)


def adapter_loop(adapter: FluidAdapter, system: CoupledSystem, participant: str = "Fluid",
                 displacement_field: str = "Displacements", force_field: str = "Forces",
                 on_window=None) -> int:
    """Run the coupled simulation until the coupling clock stops.

    Per window iteration: read interface displacements, carry particles and
    bound walls along, sub-step the fluid to the window end, rebuild the
    contact map, interpolate and write forces, then advance the coupling.
    A non-converged implicit window reloads the fluid checkpoint and
    repeats; a converged one fires ``on_window`` and moves on.
    """
    windows = 0
    window_dt = system.scheme.window_dt
    # prime accelerations so the first dt estimate sees real dynamics
    compute_rates(adapter.state, adapter.params, adapter.kernel, pool=adapter.pool)
    checkpoint = None
    while system.ongoing:
        if system.requires_checkpoint():
            checkpoint = adapter.save_checkpoint()
        displacements = system.read_field(participant, displacement_field)
        adapter.apply_displacements(displacements, window_dt)
        adapter.subcycle(window_dt)
        adapter.refresh_contact()
        system.write_field(participant, force_field, adapter.vertex_forces())
        outcome = system.advance(window_dt)
        if outcome is Outcome.ITERATE_AGAIN:
            adapter.load_checkpoint(checkpoint)
            continue
        windows += 1
        if on_window is not None:
            on_window(system, adapter)
    return windows
