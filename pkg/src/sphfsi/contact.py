"""Nearest-patch assignment of fluid particles to the interface mesh.

A fluid particle is a contact particle when its distance to the closest
interface patch falls below the threshold theta; each contact particle is
assigned to exactly that one patch (ties break to the lowest patch id), so
a patch can own many particles while every particle serves a single patch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .critical_mesh import CriticalMesh, point_patch_distances
from .fluid import FluidState


@dataclass(frozen=True)
class ContactParams:
    theta: float               # contact threshold, m

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("contact threshold must be positive")

    @classmethod
    def from_h(cls, h: float, multiple: float = 2.0) -> "ContactParams":
        return cls(theta=multiple * h)


@dataclass
class ContactMap:
    """Forward map particle -> (patch, distance) with a per-patch inverse."""

    particle_ids: np.ndarray       # ascending fluid particle ids
    patch_ids: np.ndarray
    distances: np.ndarray
    signed_distances: np.ndarray
    n_patches: int
    foot_interior: np.ndarray = None   # projection lands inside the patch

    def __post_init__(self):
        if self.foot_interior is None:
            self.foot_interior = np.ones(len(self.particle_ids), dtype=bool)
        order = np.argsort(self.particle_ids, kind="stable")
        for name in ("particle_ids", "patch_ids", "distances", "signed_distances",
                     "foot_interior"):
            setattr(self, name, np.asarray(getattr(self, name))[order])
        # CSR-style inverse sorted by (patch, particle)
        inv_order = np.lexsort((self.particle_ids, self.patch_ids))
        self._inv_particles = self.particle_ids[inv_order]
        self._inv_patches = self.patch_ids[inv_order]
        self._inv_starts = np.searchsorted(self._inv_patches, np.arange(self.n_patches + 1))

    @property
    def n_contacts(self) -> int:
        return len(self.particle_ids)

    def particles_on_patch(self, patch: int) -> np.ndarray:
        lo, hi = self._inv_starts[patch], self._inv_starts[patch + 1]
        return self._inv_particles[lo:hi]

    def contact_counts(self) -> np.ndarray:
        return np.diff(self._inv_starts)

    def max_penetration(self) -> float:
        """Deepest interior-foot incursion behind the interface; corner-wedge
        assignments carry an unreliable sign and are excluded."""
        if self.n_contacts == 0:
            return 0.0
        trusted = self.signed_distances[self.foot_interior]
        if len(trusted) == 0:
            return 0.0
        return float(max(0.0, -np.min(trusted)))


def particle_contact(state: FluidState, mesh: CriticalMesh,
                     params: ContactParams) -> ContactMap:
    """Assign every fluid particle within theta of the mesh to its nearest patch.

    Candidates are pre-filtered with the mesh's inflated bounding box; the
    assignment itself is the exact argmin over all patches.
    """
    fluid_ids = np.where(state.fluid_mask)[0]
    if len(fluid_ids) == 0 or mesh.n_patches == 0:
        empty = np.empty(0, dtype=np.int64)
        return ContactMap(empty, empty.copy(), np.empty(0), np.empty(0), mesh.n_patches)

    cur = mesh.current_vertices()
    lo = cur.min(axis=0) - params.theta
    hi = cur.max(axis=0) + params.theta
    pos = state.pos[fluid_ids]
    near = np.all((pos >= lo) & (pos <= hi), axis=1)
    cand_ids = fluid_ids[near]
    if len(cand_ids) == 0:
        empty = np.empty(0, dtype=np.int64)
        return ContactMap(empty, empty.copy(), np.empty(0), np.empty(0), mesh.n_patches)

    dist, signed, interior = point_patch_distances(state.pos[cand_ids], mesh)
    nearest = np.argmin(dist, axis=1)            # ties -> lowest patch id
    rows = np.arange(len(cand_ids))
    dmin = dist[rows, nearest]
    keep = dmin < params.theta
    return ContactMap(
        particle_ids=cand_ids[keep],
        patch_ids=nearest[keep].astype(np.int64),
        distances=dmin[keep],
        signed_distances=signed[rows, nearest][keep],
        n_patches=mesh.n_patches,
        foot_interior=interior[rows, nearest][keep],
    )
