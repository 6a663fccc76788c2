"""Output writers: CSV snapshots, legacy VTK files, time series, manifest.

Column layouts are fixed so regression diffs stay meaningful:

* particle CSV: ``id,x,y[,z],vx,vy[,vz],rho,press,tag`` with tag names
  ``fluid``/``wall``; floats printed with ``repr`` (shortest round trip),
  so identical states produce byte-identical files.
* marker CSV: ``t,ux,uy``.
* diagnostics CSV: ``t,window,iterations,contacts,max_penetration,fx,fy``
  appended once per converged window.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from .critical_mesh import CriticalMesh
from .fluid import FluidState, TAG_NAMES

PACKAGE_VERSION = "0.1.0"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_particle_csv(path, state: FluidState) -> None:
    dim = state.dim
    coords = "x,y" if dim == 2 else "x,y,z"
    vels = "vx,vy" if dim == 2 else "vx,vy,vz"
    with open(path, "w") as fh:
        fh.write(f"id,{coords},{vels},rho,press,tag\n")
        for i in range(state.n):
            cells = [str(int(state.ids[i]))]
            cells += [_fmt(c) for c in state.pos[i]]
            cells += [_fmt(c) for c in state.vel[i]]
            cells += [_fmt(state.rho[i]), _fmt(state.press[i]), TAG_NAMES[int(state.tag[i])]]
            fh.write(",".join(cells) + "\n")


def _vtk_points(fh, coords: np.ndarray) -> None:
    fh.write(f"POINTS {len(coords)} double\n")
    for p in coords:
        x, y = p[0], p[1]
        z = p[2] if len(p) > 2 else 0.0
        fh.write(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}\n")


def write_particle_vtk(path, state: FluidState) -> None:
    """Legacy-VTK point cloud with velocity, density, pressure and tag."""
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("particle snapshot\nASCII\nDATASET POLYDATA\n")
        _vtk_points(fh, state.pos)
        fh.write(f"VERTICES {state.n} {2 * state.n}\n")
        for i in range(state.n):
            fh.write(f"1 {i}\n")
        fh.write(f"POINT_DATA {state.n}\n")
        fh.write("VECTORS velocity double\n")
        for v in state.vel:
            z = v[2] if state.dim > 2 else 0.0
            fh.write(f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(z)}\n")
        for name, arr in (("rho", state.rho), ("press", state.press)):
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            for val in arr:
                fh.write(f"{_fmt(val)}\n")
        fh.write("SCALARS tag int 1\nLOOKUP_TABLE default\n")
        for t in state.tag:
            fh.write(f"{int(t)}\n")


def write_critical_mesh_vtk(path, mesh: CriticalMesh) -> None:
    """Displaced interface geometry with patch forces and vertex displacements."""
    cur = mesh.current_vertices()
    nv_per_patch = mesh.patches.shape[1]
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("interface mesh\nASCII\nDATASET POLYDATA\n")
        _vtk_points(fh, cur)
        if nv_per_patch == 2:
            fh.write(f"LINES {mesh.n_patches} {3 * mesh.n_patches}\n")
            for a, b in mesh.patches:
                fh.write(f"2 {a} {b}\n")
        else:
            fh.write(f"POLYGONS {mesh.n_patches} {4 * mesh.n_patches}\n")
            for a, b, c in mesh.patches:
                fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_DATA {mesh.n_patches}\n")
        fh.write("VECTORS patch_force double\n")
        for f in mesh.patch_force:
            z = f[2] if mesh.dim > 2 else 0.0
            fh.write(f"{_fmt(f[0])} {_fmt(f[1])} {_fmt(z)}\n")
        fh.write(f"POINT_DATA {mesh.n_vertices}\n")
        fh.write("VECTORS displacement double\n")
        for d in mesh.vertex_displacement:
            z = d[2] if mesh.dim > 2 else 0.0
            fh.write(f"{_fmt(d[0])} {_fmt(d[1])} {_fmt(z)}\n")


class TimeSeriesWriter:
    """Line-per-sample CSV writer with a fixed header."""

    def __init__(self, path, header: str):
        self.path = Path(path)
        self._fh = open(self.path, "w")
        self._fh.write(header + "\n")

    def append(self, *values) -> None:
        cells = [v if isinstance(v, str) else (_fmt(v) if isinstance(v, float) else str(v))
                 for v in values]
        self._fh.write(",".join(cells) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def marker_writer(path) -> TimeSeriesWriter:
    return TimeSeriesWriter(path, "t,ux,uy")


def diagnostics_writer(path) -> TimeSeriesWriter:
    return TimeSeriesWriter(path, "t,window,iterations,contacts,max_penetration,fx,fy")


def write_manifest(path, config_dict: dict, status: str, wall_time: float,
                   windows: int, steps: int, extra: dict | None = None) -> None:
    manifest = {
        "config": config_dict,
        "version": PACKAGE_VERSION,
        "status": status,
        "wall_time_s": wall_time,
        "windows": windows,
        "fluid_steps": steps,
    }
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
