"""World assembly and the top-level run loop for the benchmark scenarios."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adapter import (FluidAdapter, ForceMode, InterfaceWalls, adapter_loop,
                      sample_interface_walls)
from .config import RunConfig
from .contact import ContactParams
from .coupling import (CoupledSystem, CouplingMeshData, ExchangeSpec, SchemeConfig,
                       initialize)
from .critical_mesh import mesh_from_structure_surface
from .errors import NumericalFailure
from .fluid import WALL, FluidState, make_state
from .kernels import SmoothingKernel
from .outputs import (diagnostics_writer, marker_writer, write_critical_mesh_vtk,
                      write_manifest, write_particle_csv, write_particle_vtk)
from .parallel import WorkerPool
from .participants import StructureParticipant
from .scenarios import (Scenario, assemble_particles, build_scenario,
                        build_structure_mesh, fluid_params_for)
from .structure import StructureSolver


@dataclass
class World:
    """Everything a coupled benchmark run needs, fully wired."""

    scenario: Scenario
    config: RunConfig
    adapter: FluidAdapter
    system: CoupledSystem
    structure: StructureSolver
    marker_node: int
    n_fluid: int
    pool: WorkerPool

    @property
    def state(self) -> FluidState:
        return self.adapter.state

    def marker_displacement(self) -> np.ndarray:
        return self.structure.state.u[2 * self.marker_node: 2 * self.marker_node + 2].copy()


def build_world(config: RunConfig) -> World:
    scenario = build_scenario(config.scenario)
    spacing = config.spacing if config.spacing is not None else scenario.spacing
    params = fluid_params_for(
        scenario, spacing, alpha_av=config.fluid.alpha_av, nu0=config.fluid.nu0,
        gamma=config.fluid.gamma, c0=config.fluid.c0, h_factor=config.fluid.h_factor,
        cfl=config.fluid.cfl)
    kernel = SmoothingKernel(h=params.h, dim=2)
    state, n_fluid = assemble_particles(
        scenario, spacing, params, hydrostatic_init=config.fluid.hydrostatic_init,
        seed=config.seed, wall_layers=config.wall_layers)

    fem = build_structure_mesh(scenario.structure)
    structure = StructureSolver(fem, scenario.structure.material,
                                rayleigh_stiffness=scenario.structure.rayleigh_stiffness)
    participant = StructureParticipant(structure)
    cmesh, node_ids = mesh_from_structure_surface(fem)

    # materialise the interface to the fluid as bound boundary particles;
    # half-spacing sampling keeps thin members tight against squeeze-through
    points, patch_ids, params_t = sample_interface_walls(cmesh, 0.5 * spacing)
    first_wall_id = state.n
    wall_state = make_state(points, mass=np.full(len(points), params.rho0 * spacing ** 2),
                            tag=np.full(len(points), WALL, dtype=np.int8), params=params)
    merged = FluidState(
        pos=np.vstack([state.pos, wall_state.pos]),
        vel=np.vstack([state.vel, wall_state.vel]),
        rho=np.concatenate([state.rho, wall_state.rho]),
        press=np.concatenate([state.press, wall_state.press]),
        mass=np.concatenate([state.mass, wall_state.mass]),
        tag=np.concatenate([state.tag, wall_state.tag]),
    )
    walls = InterfaceWalls(first_wall_id + np.arange(len(points)), patch_ids, params_t)

    theta = config.contact.resolve(scenario.theta, params.h)
    pool = WorkerPool(config.workers)
    if config.workers is not None:
        try:
            import numba

            numba.set_num_threads(max(1, min(config.workers, numba.config.NUMBA_NUM_THREADS)))
        except ImportError:
            pass
    adapter = FluidAdapter(merged, params, kernel, cmesh, ContactParams(theta),
                           force_mode=config.force_mode, walls=walls, pool=pool)

    window_dt = config.coupling.window_dt or scenario.window_dt
    scheme = SchemeConfig(
        kind=config.coupling.scheme, window_dt=window_dt,
        tolerance=config.coupling.tolerance, max_iterations=config.coupling.max_iterations,
        accelerator=config.coupling.accelerator, omega0=config.coupling.omega0,
        residual_field=config.coupling.residual_field)
    fluid_coupling_mesh = CouplingMeshData("Fluid-Mesh", cmesh.vertices.copy(),
                                           edges=cmesh.edges)
    solid_coupling_mesh = participant.coupling_mesh("Solid-Mesh")
    exchanges = [
        ExchangeSpec("Forces", "Fluid", "Solid", config.coupling.mappings["Forces"]),
        ExchangeSpec("Displacements", "Solid", "Fluid", config.coupling.mappings["Displacements"]),
    ]
    system, _ = initialize({"Fluid": fluid_coupling_mesh, "Solid": solid_coupling_mesh},
                           exchanges, scheme, solvers={"Solid": participant})

    marker = np.argmin(np.linalg.norm(fem.nodes - np.asarray(scenario.marker_point), axis=1))
    return World(scenario=scenario, config=config, adapter=adapter, system=system,
                 structure=structure, marker_node=int(marker), n_fluid=n_fluid, pool=pool)


@dataclass
class RunResult:
    exit_code: int
    status: str
    output_dir: Path
    windows: int = 0
    steps: int = 0
    wall_time: float = 0.0
    marker_path: Path | None = None
    diagnostics_path: Path | None = None


def run(config: RunConfig, on_window=None) -> RunResult:
    """Execute one configured benchmark and write all artifacts.

    Exit codes follow the CLI contract: 0 success, 3 numerical failure (the
    last good snapshot is retained).  ``on_window(world)`` is invoked after
    each converged window, before output cadence handling.
    """
    out_dir = Path(config.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    world = build_world(config)
    scenario = world.scenario
    end_time = config.end_time if config.end_time is not None else scenario.end_time
    window_dt = world.system.scheme.window_dt

    marker = marker_writer(out_dir / "marker.csv")
    diagnostics = diagnostics_writer(out_dir / "diagnostics.csv")
    start = time.perf_counter()
    snapshot_counter = [0]
    next_write = [0.0]

    def write_snapshots():
        k = snapshot_counter[0]
        write_particle_csv(out_dir / f"particles_{k:05d}.csv", world.state)
        write_particle_vtk(out_dir / f"particles_{k:05d}.vtk", world.state)
        write_critical_mesh_vtk(out_dir / f"interface_{k:05d}.vtk", world.adapter.mesh)
        snapshot_counter[0] += 1
        next_write[0] += config.output.write_interval

    write_snapshots()  # initial state
    status, exit_code = "completed", 0
    windows = 0
    try:
        world.system.initialize(end_time=end_time)
        if end_time <= 0:
            world.system.ongoing = False

        def per_window(system, adapter):
            nonlocal windows
            windows += 1
            u = world.marker_displacement()
            marker.append(float(system.time), float(u[0]), float(u[1]))
            force = adapter.mesh.patch_force.sum(axis=0)
            diagnostics.append(float(system.time), system.window,
                               system.iterations_last_window,
                               adapter.contact.n_contacts,
                               float(adapter.contact.max_penetration()),
                               float(force[0]), float(force[1]))
            if on_window is not None:
                on_window(world)
            if system.time + 1e-9 * window_dt >= next_write[0]:
                write_snapshots()

        adapter_loop(world.adapter, world.system, on_window=per_window)
    except NumericalFailure as exc:
        status, exit_code = f"numerical-failure: {exc}", 3
    finally:
        marker.close()
        diagnostics.close()
        world.pool.close()
    wall = time.perf_counter() - start
    write_manifest(out_dir / "manifest.json", config.to_dict(), status, wall,
                   windows, world.adapter.steps_taken,
                   extra={"n_fluid_particles": world.n_fluid,
                          "n_particles": world.state.n,
                          "end_time": end_time,
                          "window_dt": window_dt})
    return RunResult(exit_code=exit_code, status=status, output_dir=out_dir,
                     windows=windows, steps=world.adapter.steps_taken, wall_time=wall,
                     marker_path=out_dir / "marker.csv",
                     diagnostics_path=out_dir / "diagnostics.csv")
