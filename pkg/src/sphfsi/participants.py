"""Coupling-callback wrapper around the structure solver.

The structure's coupling mesh lists its wet-boundary vertices in ascending
node-id order; incoming per-vertex forces are applied directly as nodal
loads and the window is advanced by one Newmark step.
"""

from __future__ import annotations

import numpy as np

from .coupling import CouplingMeshData, ParticipantSolver
from .structure import StructureSolver, surface_displacements


class StructureParticipant(ParticipantSolver):
    def __init__(self, solver: StructureSolver,
                 force_field: str = "Forces", displacement_field: str = "Displacements"):
        self.solver = solver
        self.node_ids = solver.mesh.surface_vertex_ids()
        self.force_field = force_field
        self.displacement_field = displacement_field

    def coupling_mesh(self, mesh_id: str = "Solid-Mesh") -> CouplingMeshData:
        fem = self.solver.mesh
        local = {int(n): k for k, n in enumerate(self.node_ids)}
        edges = np.array([[local[int(a)], local[int(b)]] for a, b in fem.surface_faces],
                         dtype=np.int64)
        return CouplingMeshData(mesh_id, fem.nodes[self.node_ids].copy(), edges=edges)

    def solve_window(self, t: float, dt: float, mesh: CouplingMeshData) -> None:
        forces = mesh.get_field(self.force_field)
        loads = np.zeros(self.solver.mesh.n_dof)
        loads[2 * self.node_ids] = forces[:, 0]
        loads[2 * self.node_ids + 1] = forces[:, 1]
        self.solver.step(loads, dt)
        mesh.set_field(self.displacement_field,
                       surface_displacements(self.solver.state, self.solver.mesh))

    def save_checkpoint(self):
        return self.solver.save_checkpoint()

    def load_checkpoint(self, checkpoint) -> None:
        self.solver.load_checkpoint(checkpoint)
