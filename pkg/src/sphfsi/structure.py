"""Small linear elastodynamics solver on 2D quadrilateral meshes.

Plane-strain, bilinear isoparametric elements with 2x2 Gauss quadrature,
consistent mass, optional Rayleigh damping and average-acceleration Newmark
time stepping (unconditionally stable).  Meshes stay small (a few thousand
degrees of freedom), so everything is dense and factorisations are cached.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import MeshError

# Gauss points / weights for the 2x2 rule on [-1, 1]^2
_GP = 1.0 / np.sqrt(3.0)
_GAUSS = [(-_GP, -_GP), (_GP, -_GP), (_GP, _GP), (-_GP, _GP)]


@dataclass(frozen=True)
class Material:
    rho_s: float   # density, kg/m^3
    E: float       # Young's modulus, Pa
    nu: float      # Poisson ratio

    def __post_init__(self):
        if self.rho_s <= 0 or self.E <= 0:
            raise ValueError("density and Young's modulus must be positive")
        if not 0.0 <= self.nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in [0, 0.5), got {self.nu}")

    def plane_strain_d(self) -> np.ndarray:
        e, nu = self.E, self.nu
        f = e / ((1 + nu) * (1 - 2 * nu))
        return f * np.array([
            [1 - nu, nu, 0.0],
            [nu, 1 - nu, 0.0],
            [0.0, 0.0, 0.5 - nu],
        ])


@dataclass
class FemMesh:
    """Quad mesh with clamped nodes and an oriented wet boundary.

    ``surface_faces`` are vertex pairs (a, b) walking the wet boundary with
    the solid on the left of a->b, so the outward normal is the right-hand
    perpendicular of the edge direction.
    """

    nodes: np.ndarray                # (N, 2)
    elements: np.ndarray             # (E, 4) counter-clockwise
    fixed_nodes: np.ndarray          # node ids
    surface_faces: np.ndarray        # (S, 2) node id pairs

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.elements = np.asarray(self.elements, dtype=np.int64)
        self.fixed_nodes = np.unique(np.asarray(self.fixed_nodes, dtype=np.int64))
        self.surface_faces = np.asarray(self.surface_faces, dtype=np.int64).reshape(-1, 2)
        n = len(self.nodes)
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= n):
            raise MeshError("element connectivity references unknown nodes")
        if self.fixed_nodes.size and (self.fixed_nodes.min() < 0 or self.fixed_nodes.max() >= n):
            raise MeshError("fixed node list references unknown nodes")
        if self.surface_faces.size and (self.surface_faces.min() < 0 or self.surface_faces.max() >= n):
            raise MeshError("surface face list references unknown nodes")
        seen = set()
        for a, b in self.surface_faces:
            key = (min(a, b), max(a, b))
            if key in seen:
                raise MeshError(f"surface face ({a}, {b}) listed twice")
            seen.add(key)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_dof(self) -> int:
        return 2 * self.n_nodes

    def surface_vertex_ids(self) -> np.ndarray:
        return np.unique(self.surface_faces)

    def face_normals(self) -> np.ndarray:
        """Unit outward normal per surface face."""
        a = self.nodes[self.surface_faces[:, 0]]
        b = self.nodes[self.surface_faces[:, 1]]
        t = b - a
        lengths = np.linalg.norm(t, axis=1, keepdims=True)
        if np.any(lengths == 0):
            raise MeshError("zero-length surface face")
        t = t / lengths
        return np.column_stack([t[:, 1], -t[:, 0]])

    def fixed_dofs(self) -> np.ndarray:
        return np.concatenate([2 * self.fixed_nodes, 2 * self.fixed_nodes + 1]) \
            if self.fixed_nodes.size else np.empty(0, dtype=np.int64)


@dataclass
class StructureState:
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    t: float = 0.0

    def copy(self) -> "StructureState":
        return StructureState(self.u.copy(), self.v.copy(), self.a.copy(), self.t)


def zero_state(mesh: FemMesh) -> StructureState:
    n = mesh.n_dof
    return StructureState(np.zeros(n), np.zeros(n), np.zeros(n))


def _shape_derivatives(xi, eta):
    # dN/dxi, dN/deta of the bilinear quad, nodes ordered CCW
    dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
    deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
    return dxi, deta


def _shapes(xi, eta):
    return 0.25 * np.array([
        (1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
        (1 + xi) * (1 + eta), (1 - xi) * (1 + eta),
    ])


def element_matrices(coords: np.ndarray, mat: Material, index: int | None = None):
    """Stiffness (8x8) and consistent mass (8x8) of one quad element."""
    d = mat.plane_strain_d()
    ke = np.zeros((8, 8))
    me = np.zeros((8, 8))
    for xi, eta in _GAUSS:
        dxi, deta = _shape_derivatives(xi, eta)
        jac = np.array([dxi, deta]) @ coords
        det = np.linalg.det(jac)
        if det <= 0:
            label = f"element {index}" if index is not None else "element"
            raise MeshError(f"degenerate {label}: non-positive Jacobian {det:.3e}")
        dn = np.linalg.solve(jac, np.array([dxi, deta]))
        b = np.zeros((3, 8))
        b[0, 0::2] = dn[0]
        b[1, 1::2] = dn[1]
        b[2, 0::2] = dn[1]
        b[2, 1::2] = dn[0]
        ke += b.T @ d @ b * det
        n = _shapes(xi, eta)
        nmat = np.zeros((2, 8))
        nmat[0, 0::2] = n
        nmat[1, 1::2] = n
        me += mat.rho_s * nmat.T @ nmat * det
    return ke, me


def assemble(mesh: FemMesh, mat: Material):
    """Global plane-strain stiffness and consistent mass (dense, symmetric)."""
    ndof = mesh.n_dof
    k = np.zeros((ndof, ndof))
    m = np.zeros((ndof, ndof))
    for e, conn in enumerate(mesh.elements):
        ke, me = element_matrices(mesh.nodes[conn], mat, index=e)
        dofs = np.column_stack([2 * conn, 2 * conn + 1]).ravel()
        k[np.ix_(dofs, dofs)] += ke
        m[np.ix_(dofs, dofs)] += me
    return k, m


def apply_traction(mesh: FemMesh, surface_forces: dict[int, np.ndarray]) -> np.ndarray:
    """Nodal load vector from per-face forces; each face splits its force
    equally between its two end nodes, so the nodal sum equals the input sum."""
    loads = np.zeros(mesh.n_dof)
    n_faces = len(mesh.surface_faces)
    for face_id, force in surface_forces.items():
        if not 0 <= face_id < n_faces:
            raise MeshError(f"unknown surface face id {face_id}")
        a, b = mesh.surface_faces[face_id]
        half = 0.5 * np.asarray(force, dtype=float)
        loads[2 * a:2 * a + 2] += half
        loads[2 * b:2 * b + 2] += half
    return loads


def surface_displacements(state: StructureState, mesh: FemMesh) -> np.ndarray:
    """Displacement vectors of the wet-boundary vertices, ordered by vertex id."""
    ids = mesh.surface_vertex_ids()
    return state.u.reshape(-1, 2)[ids].copy()


class StructureSolver:
    """Newmark (beta=1/4, gamma=1/2) integrator with pinned nodes.

    Rayleigh damping C = rayleigh_mass * M + rayleigh_stiffness * K is off by
    default.  The effective matrix is factorised once per step size.
    """

    def __init__(self, mesh: FemMesh, mat: Material,
                 rayleigh_mass: float = 0.0, rayleigh_stiffness: float = 0.0):
        self.mesh = mesh
        self.material = mat
        self.k, self.m = assemble(mesh, mat)
        self.c = rayleigh_mass * self.m + rayleigh_stiffness * self.k
        self.beta = 0.25
        self.gamma = 0.5
        fixed = mesh.fixed_dofs()
        self.free = np.setdiff1d(np.arange(mesh.n_dof), fixed)
        self.state = zero_state(mesh)
        f = self.free
        self._k_ff = self.k[np.ix_(f, f)]
        self._m_ff = self.m[np.ix_(f, f)]
        self._c_ff = self.c[np.ix_(f, f)]
        self._factor = None
        self._factor_dt = None
        self._mass_factor = None

    def _effective_factor(self, dt: float):
        if self._factor is None or self._factor_dt != dt:
            keff = (self._k_ff
                    + self._m_ff / (self.beta * dt * dt)
                    + self._c_ff * self.gamma / (self.beta * dt))
            try:
                self._factor = lu_factor(keff)
            except np.linalg.LinAlgError as exc:
                raise MeshError(f"singular constrained Newmark system: {exc}") from exc
            self._factor_dt = dt
        return self._factor

    def initialize_acceleration(self, loads: np.ndarray) -> None:
        """Consistent initial acceleration M a = F - C v - K u on free dofs."""
        f = self.free
        if self._mass_factor is None:
            self._mass_factor = lu_factor(self._m_ff)
        rhs = loads[f] - self._c_ff @ self.state.v[f] - self._k_ff @ self.state.u[f]
        self.state.a[:] = 0.0
        self.state.a[f] = lu_solve(self._mass_factor, rhs)

    def step(self, loads: np.ndarray, dt: float) -> StructureState:
        if dt <= 0:
            raise ValueError("Newmark step needs dt > 0")
        f = self.free
        beta, gamma = self.beta, self.gamma
        u0, v0, a0 = self.state.u[f], self.state.v[f], self.state.a[f]

        a_mass = u0 / (beta * dt * dt) + v0 / (beta * dt) + (0.5 / beta - 1.0) * a0
        a_damp = (gamma / (beta * dt) * u0 + (gamma / beta - 1.0) * v0
                  + dt * 0.5 * (gamma / beta - 2.0) * a0)
        rhs = loads[f] + self._m_ff @ a_mass + self._c_ff @ a_damp

        u1 = lu_solve(self._effective_factor(dt), rhs)
        a1 = (u1 - u0) / (beta * dt * dt) - v0 / (beta * dt) - (0.5 / beta - 1.0) * a0
        v1 = v0 + dt * ((1.0 - gamma) * a0 + gamma * a1)

        self.state.u[f], self.state.v[f], self.state.a[f] = u1, v1, a1
        self.state.t += dt
        return self.state

    def static_solve(self, loads: np.ndarray,
                     prescribed: dict[int, float] | None = None) -> np.ndarray:
        """Equilibrium displacements; ``prescribed`` maps dof -> value and is
        merged with the mesh's zero-pinned dofs."""
        values = {int(d): 0.0 for d in self.mesh.fixed_dofs()}
        if prescribed:
            values.update({int(k): float(v) for k, v in prescribed.items()})
        fixed = np.array(sorted(values), dtype=np.int64)
        free = np.setdiff1d(np.arange(self.mesh.n_dof), fixed)
        u = np.zeros(self.mesh.n_dof)
        u[fixed] = [values[int(d)] for d in fixed]
        rhs = loads[free] - self.k[np.ix_(free, fixed)] @ u[fixed]
        u[free] = np.linalg.solve(self.k[np.ix_(free, free)], rhs)
        return u

    def energy(self) -> float:
        """Kinetic plus strain energy of the current state."""
        u, v = self.state.u, self.state.v
        return 0.5 * float(v @ self.m @ v) + 0.5 * float(u @ self.k @ u)

    def save_checkpoint(self) -> StructureState:
        return self.state.copy()

    def load_checkpoint(self, cp: StructureState) -> None:
        self.state.u[:] = cp.u
        self.state.v[:] = cp.v
        self.state.a[:] = cp.a
        self.state.t = cp.t


def newmark_step(solver: StructureSolver, loads: np.ndarray, dt: float) -> StructureState:
    return solver.step(loads, dt)


# ------------------------------------------------------------------ meshing

def rect_mesh(origin, width, height, nx: int, ny: int,
              fixed_edge: str = "bottom", wet_edges: tuple = ("left", "top", "right")) -> FemMesh:
    """Structured quad mesh of a rectangle.

    ``fixed_edge`` pins one side; ``wet_edges`` lists the sides exposed to
    fluid, walked so the solid stays on the left (outward normals).
    """
    x0, y0 = origin
    xs = np.linspace(x0, x0 + width, nx + 1)
    ys = np.linspace(y0, y0 + height, ny + 1)
    nid = lambda i, j: j * (nx + 1) + i
    nodes = np.array([[xs[i], ys[j]] for j in range(ny + 1) for i in range(nx + 1)])
    elements = np.array([
        [nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)]
        for j in range(ny) for i in range(nx)
    ])
    edge_nodes = {
        "bottom": [nid(i, 0) for i in range(nx + 1)],
        "top": [nid(i, ny) for i in range(nx + 1)],
        "left": [nid(0, j) for j in range(ny + 1)],
        "right": [nid(nx, j) for j in range(ny + 1)],
    }
    if fixed_edge not in edge_nodes:
        raise ValueError(f"unknown edge {fixed_edge!r}")
    # walk each wet edge so the solid interior lies left of a->b
    walk = {
        "left": [(nid(0, j + 1), nid(0, j)) for j in reversed(range(ny))],
        "top": [(nid(i + 1, ny), nid(i, ny)) for i in reversed(range(nx))],
        "right": [(nid(nx, j), nid(nx, j + 1)) for j in range(ny)],
        "bottom": [(nid(i, 0), nid(i + 1, 0)) for i in range(nx)],
    }
    faces = []
    for edge in wet_edges:
        if edge not in walk:
            raise ValueError(f"unknown edge {edge!r}")
        faces.extend(walk[edge])
    return FemMesh(nodes=nodes, elements=elements,
                   fixed_nodes=np.array(edge_nodes[fixed_edge]),
                   surface_faces=np.array(faces))


# ------------------------------------------------------------------ file I/O
#
# Plain-text grammar ('#' starts a comment anywhere on a line):
#   nodes N elements E fixed F faces S
#   N lines:  x y
#   E lines:  n0 n1 n2 n3
#   F whitespace-separated node ids (any line wrapping)
#   S lines:  a b            (solid on the left of a->b)

def write_mesh_file(path, mesh: FemMesh) -> None:
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes} elements {len(mesh.elements)} "
                 f"fixed {len(mesh.fixed_nodes)} faces {len(mesh.surface_faces)}\n")
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for conn in mesh.elements:
            fh.write(" ".join(str(c) for c in conn) + "\n")
        fh.write(" ".join(str(i) for i in mesh.fixed_nodes) + "\n")
        for a, b in mesh.surface_faces:
            fh.write(f"{a} {b}\n")


def read_mesh_file(path) -> FemMesh:
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    it = iter(tokens)

    def expect(word):
        got = next(it, None)
        if got != word:
            raise MeshError(f"mesh file: expected {word!r}, got {got!r}")
        return int(next(it))

    try:
        n = expect("nodes")
        e = expect("elements")
        f = expect("fixed")
        s = expect("faces")
        nodes = np.array([[float(next(it)), float(next(it))] for _ in range(n)])
        elements = np.array([[int(next(it)) for _ in range(4)] for _ in range(e)],
                            dtype=np.int64).reshape(e, 4)
        fixed = np.array([int(next(it)) for _ in range(f)], dtype=np.int64)
        faces = np.array([[int(next(it)), int(next(it))] for _ in range(s)],
                         dtype=np.int64).reshape(s, 2)
    except StopIteration:
        raise MeshError("mesh file truncated") from None
    if next(it, None) is not None:
        raise MeshError("mesh file has trailing tokens")
    return FemMesh(nodes=nodes, elements=elements, fixed_nodes=fixed, surface_faces=faces)
