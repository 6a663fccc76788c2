"""Benchmark scenario construction: tank, water column, structure, walls.

Three named scenarios are built in 2D elevation view:

* ``dam-break-elastic-plate``: a 0.2 x 0.4 m water column collapses in a
  0.8 x 0.6 m tank and impacts a bottom-clamped rubber plate (0.004 m thick,
  0.1 m tall) standing 0.2 m from the right wall; a marker 0.087 m up the
  plate records deflection.
* ``elastic-sluice-gate``: a 4 x 6 m water column held on the right side of
  a 12 x 8 m tank by a top-clamped rubber gate (0.1 m thick, 3 m tall);
  outflow escapes under the deflecting gate bottom.
* ``dam-break-baffle``: free-surface dam break against a hanging baffle
  whose top is clamped and bottom swings freely.

Particle spacing, end time and solver knobs have scenario defaults and can
all be overridden through the run configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .fluid import FLUID, WALL, FluidParams, eos_pressure, make_state
from .structure import FemMesh, Material, rect_mesh

GRAVITY = 9.8


@dataclass(frozen=True)
class StructureSpec:
    origin: tuple          # lower-left corner (x, y)
    width: float           # thickness for the thin members used here
    height: float
    nx: int
    ny: int
    fixed_edge: str
    wet_edges: tuple
    material: Material
    solid_interior_hint: tuple
    # stiffness-proportional damping ~ 2 zeta / omega_1; rubber members carry
    # a few percent material damping, and leaving it out lets impact-excited
    # ringing feed back through the coupling
    rayleigh_stiffness: float = 0.0


@dataclass(frozen=True)
class Scenario:
    name: str
    tank: tuple                       # (width, height)
    water: tuple                      # (x0, y0, x1, y1)
    structure: StructureSpec
    marker_point: tuple
    spacing: float
    end_time: float
    window_dt: float
    theta: float                      # contact threshold, absolute metres
    gravity: tuple = (0.0, -GRAVITY)
    extra_wall_boxes: tuple = ()      # static internal walls (x0, y0, x1, y1)
    h_factor: float = 1.3

    @property
    def water_height(self) -> float:
        return self.water[3] - self.water[1]

    def reference_sound_speed(self) -> float:
        return 10.0 * math.sqrt(2.0 * GRAVITY * self.water_height)


_RUBBER_PLATE = Material(rho_s=1161.54, E=3.5e6, nu=0.45)
_RUBBER_GATE = Material(rho_s=1100.0, E=1.2e7, nu=0.45)


def scenario_names() -> list[str]:
    return ["dam-break-elastic-plate", "elastic-sluice-gate", "dam-break-baffle"]


def build_scenario(name: str) -> Scenario:
    if name == "dam-break-elastic-plate":
        # plate right face 0.2 m from the right wall of the 0.8 m tank
        thickness, height = 0.004, 0.1
        x_right = 0.8 - 0.2
        origin = (x_right - thickness, 0.0)
        return Scenario(
            name=name,
            tank=(0.8, 0.6),
            water=(0.0, 0.0, 0.2, 0.4),
            structure=StructureSpec(
                origin=origin, width=thickness, height=height, nx=2, ny=50,
                fixed_edge="bottom", wet_edges=("left", "top", "right"),
                material=_RUBBER_PLATE,
                solid_interior_hint=(x_right - thickness / 2, height / 2),
                rayleigh_stiffness=9.5e-3),
            marker_point=(x_right - thickness / 2, 0.087),
            spacing=0.005,
            end_time=1.0,
            window_dt=1.0e-4,
            theta=0.01,
        )
    if name == "elastic-sluice-gate":
        # water column against the right wall, gate clamped to the fixed
        # plate above it, free bottom edge at the floor
        thickness, height = 0.1, 3.0
        gate_right = 8.0
        origin = (gate_right - thickness, 0.0)
        return Scenario(
            name=name,
            tank=(12.0, 8.0),
            water=(gate_right, 0.0, gate_right + 4.0, 6.0),
            structure=StructureSpec(
                origin=origin, width=thickness, height=height, nx=2, ny=60,
                fixed_edge="top", wet_edges=("left", "bottom", "right"),
                material=_RUBBER_GATE,
                solid_interior_hint=(gate_right - thickness / 2, height / 2),
                rayleigh_stiffness=6.0e-2),
            marker_point=(gate_right - thickness / 2, 0.0),
            spacing=0.08,
            end_time=2.0,
            window_dt=1.0e-3,
            theta=0.21,
            extra_wall_boxes=((gate_right - thickness, 3.0, gate_right, 8.0),),
        )
    if name == "dam-break-baffle":
        thickness, height = 0.06, 0.8
        x_left = 1.5
        bottom = 0.2
        return Scenario(
            name=name,
            tank=(3.0, 2.0),
            water=(0.0, 0.0, 0.8, 1.2),
            structure=StructureSpec(
                origin=(x_left, bottom), width=thickness, height=height, nx=2, ny=40,
                fixed_edge="top", wet_edges=("left", "bottom", "right"),
                material=_RUBBER_GATE,
                solid_interior_hint=(x_left + thickness / 2, bottom + height / 2),
                rayleigh_stiffness=7.2e-3),
            marker_point=(x_left + thickness / 2, bottom),
            spacing=0.02,
            end_time=1.5,
            window_dt=5.0e-4,
            theta=0.06,
            extra_wall_boxes=((x_left, bottom + height, x_left + thickness, 2.0),),
        )
    raise ConfigurationError(
        f"unknown scenario {name!r}; known scenarios: {', '.join(scenario_names())}")


# ------------------------------------------------------------- particle fill

def lattice_fill(x0, y0, x1, y1, dx) -> np.ndarray:
    """Lattice points centred in dx-cells inside the box [x0,x1] x [y0,y1]."""
    nx = int(math.floor((x1 - x0) / dx + 1e-9))
    ny = int(math.floor((y1 - y0) / dx + 1e-9))
    if nx <= 0 or ny <= 0:
        return np.empty((0, 2))
    xs = x0 + dx * (np.arange(nx) + 0.5)
    ys = y0 + dx * (np.arange(ny) + 0.5)
    xx, yy = np.meshgrid(xs, ys)
    return np.column_stack([xx.ravel(), yy.ravel()])


def tank_wall_points(width, height, dx, layers=3) -> np.ndarray:
    """Static boundary particles outside the floor and the side walls."""
    pts = []
    span = layers * dx
    xs = np.arange(-span + dx / 2, width + span, dx)
    for k in range(layers):
        y = -dx / 2 - k * dx
        pts.append(np.column_stack([xs, np.full(len(xs), y)]))
    ys = np.arange(dx / 2, height + dx / 2, dx)
    for k in range(layers):
        for x in (-dx / 2 - k * dx, width + dx / 2 + k * dx):
            pts.append(np.column_stack([np.full(len(ys), x), ys]))
    return np.vstack(pts)


def hydrostatic_density(y, surface_y, params: FluidParams) -> np.ndarray:
    """Density profile in equilibrium with gravity under the stiff EOS."""
    g = abs(params.g[1])
    b = params.c0 ** 2 * params.rho0 / params.gamma
    depth = np.maximum(surface_y - np.asarray(y, dtype=float), 0.0)
    return params.rho0 * (1.0 + params.rho0 * g * depth / b) ** (1.0 / params.gamma)


def fluid_params_for(scenario: Scenario, spacing: float, alpha_av=0.05, nu0=1e-6,
                     gamma=7.0, c0=None, h_factor=None, cfl=0.25) -> FluidParams:
    h = (h_factor or scenario.h_factor) * spacing
    return FluidParams(
        rho0=1000.0,
        c0=c0 if c0 is not None else scenario.reference_sound_speed(),
        gamma=gamma, alpha_av=alpha_av, nu0=nu0,
        g=scenario.gravity, h=h, cfl=cfl)


def build_structure_mesh(spec: StructureSpec) -> FemMesh:
    return rect_mesh(spec.origin, spec.width, spec.height, spec.nx, spec.ny,
                     fixed_edge=spec.fixed_edge, wet_edges=spec.wet_edges)


def assemble_particles(scenario: Scenario, spacing: float, params: FluidParams,
                       hydrostatic_init: bool = False, seed: int | None = None,
                       wall_layers: int = 3):
    """Fluid column plus tank walls and internal static walls.

    Returns (state, n_fluid); interface wall particles are appended later by
    the runner once the structure mesh exists.
    """
    x0, y0, x1, y1 = scenario.water
    fluid_pts = lattice_fill(x0, y0, x1, y1, spacing)
    if seed is not None:
        rng = np.random.default_rng(seed)
        fluid_pts = fluid_pts + rng.uniform(-0.05, 0.05, fluid_pts.shape) * spacing
    wall_pts = [tank_wall_points(scenario.tank[0], scenario.tank[1], spacing,
                                 layers=wall_layers)]
    for bx0, by0, bx1, by1 in scenario.extra_wall_boxes:
        box = lattice_fill(bx0, by0, bx1, by1, spacing)
        if len(box):
            wall_pts.append(box)
    wall_pts = np.vstack(wall_pts)

    pos = np.vstack([fluid_pts, wall_pts])
    tag = np.concatenate([np.zeros(len(fluid_pts), dtype=np.int8),
                          np.full(len(wall_pts), WALL, dtype=np.int8)])
    mass = np.full(len(pos), params.rho0 * spacing ** 2)
    state = make_state(pos, mass=mass, tag=tag, params=params)
    if hydrostatic_init:
        surface = y1
        fluid_sel = state.fluid_mask
        state.rho[fluid_sel] = hydrostatic_density(pos[fluid_sel, 1], surface, params)
        wall_sel = ~fluid_sel
        below = wall_sel & (pos[:, 1] < surface) & (pos[:, 0] > x0 - 2 * spacing) \
            & (pos[:, 0] < x1 + 2 * spacing)
        state.rho[below] = hydrostatic_density(pos[below, 1], surface, params)
        state.press = np.atleast_1d(eos_pressure(state.rho, params))
    return state, len(fluid_pts)
