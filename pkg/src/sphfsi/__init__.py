"""Partitioned SPH/FEM fluid-structure interaction through a one-layer
interface mesh: weakly compressible SPH fluid, small quad-element
elastodynamics, preCICE-style coupling schemes and mesh-to-mesh mapping."""

from .adapter import FluidAdapter, ForceMode, adapter_loop
from .config import RunConfig
from .contact import ContactMap, ContactParams, particle_contact
from .coupling import (Accelerator, AcceleratorKind, CoupledSystem, CouplingMeshData,
                       ExchangeSpec, Outcome, SchemeConfig, SchemeKind, residual)
from .critical_mesh import CriticalMesh, build_critical_mesh
from .fluid import FluidParams, FluidState, compute_dt, eos_pressure, make_state, step
from .kernels import KernelKind, SmoothingKernel
from .mapping import (MappingConstraint, MappingMethod, MappingSpec, build_mapping,
                      map_conservative, map_consistent)
from .neighbors import NeighborGrid, find_neighbors
from .runner import RunResult, build_world, run
from .scenarios import Scenario, build_scenario, scenario_names
from .structure import FemMesh, Material, StructureSolver

__version__ = "0.1.0"
