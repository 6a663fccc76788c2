import numpy as np
import pytest

from sphfsi.errors import MeshError
from sphfsi.structure import (FemMesh, Material, StructureSolver, apply_traction,
                              assemble, element_matrices, read_mesh_file, rect_mesh,
                              surface_displacements, write_mesh_file, zero_state)

RUBBER = Material(rho_s=1100.0, E=1.2e7, nu=0.45)


def unit_square_mesh():
    return rect_mesh((0, 0), 1.0, 1.0, 1, 1, fixed_edge="bottom")


# ---------------------------------------------------------------- assembly

def test_stiffness_kills_rigid_translations():
    mesh = rect_mesh((0, 0), 1.0, 0.5, 3, 2)
    k, _ = assemble(mesh, RUBBER)
    for direction in (np.array([1.0, 0.0]), np.array([0.0, 1.0])):
        u = np.tile(direction, mesh.n_nodes)
        assert np.max(np.abs(k @ u)) < 1e-6 * np.max(np.abs(k))


def test_mass_row_sums_give_mesh_mass_per_direction():
    mesh = rect_mesh((0, 0), 2.0, 0.5, 4, 2)
    _, m = assemble(mesh, RUBBER)
    total = RUBBER.rho_s * 2.0 * 0.5
    ux = np.tile([1.0, 0.0], mesh.n_nodes)
    uy = np.tile([0.0, 1.0], mesh.n_nodes)
    assert ux @ m @ ux == pytest.approx(total, rel=1e-12)
    assert uy @ m @ uy == pytest.approx(total, rel=1e-12)


def test_unit_square_stiffness_matches_symbolic_quadrature_oracle():
    # independent oracle: exact symbolic integration of B^T D B
    import sympy as sp

    xi, eta = sp.symbols("xi eta")
    shapes = [(1 - xi) * (1 - eta) / 4, (1 + xi) * (1 - eta) / 4,
              (1 + xi) * (1 + eta) / 4, (1 - xi) * (1 + eta) / 4]
    # unit square: x = (xi+1)/2, y = (eta+1)/2, so d/dx = 2 d/dxi, |J| = 1/4
    e_mod, nu = RUBBER.E, RUBBER.nu
    f = e_mod / ((1 + nu) * (1 - 2 * nu))
    d_mat = sp.Matrix([[f * (1 - nu), f * nu, 0],
                       [f * nu, f * (1 - nu), 0],
                       [0, 0, f * (1 - 2 * nu) / 2]])
    b = sp.zeros(3, 8)
    for a in range(4):
        dx = 2 * sp.diff(shapes[a], xi)
        dy = 2 * sp.diff(shapes[a], eta)
        b[0, 2 * a] = dx
        b[1, 2 * a + 1] = dy
        b[2, 2 * a] = dy
        b[2, 2 * a + 1] = dx
    integrand = b.T * d_mat * b / 4
    expected = np.array(
        sp.integrate(sp.integrate(integrand, (xi, -1, 1)), (eta, -1, 1))
    ).astype(float)

    coords = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    ke, _ = element_matrices(coords, RUBBER)
    np.testing.assert_allclose(ke, expected, rtol=1e-10, atol=1e-6)


def test_degenerate_element_is_reported():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    elements = np.array([[0, 3, 2, 1]])  # clockwise: negative Jacobian
    mesh = FemMesh(nodes=nodes, elements=elements, fixed_nodes=[0],
                   surface_faces=np.empty((0, 2), dtype=int))
    with pytest.raises(MeshError, match="element 0"):
        assemble(mesh, RUBBER)


# ---------------------------------------------------------------- patch test

@pytest.mark.parametrize("nx,ny", [(1, 1), (3, 2)])
def test_constant_strain_patch_test(nx, ny):
    mesh = rect_mesh((0, 0), 1.0, 1.0, nx, ny, fixed_edge="bottom")
    mesh.fixed_nodes = np.empty(0, dtype=np.int64)  # constrain via prescribed values
    solver = StructureSolver(mesh, RUBBER)
    # linear field u = (a x + b y, c x + d y) prescribed on the boundary
    a, b, c, d = 1e-3, -2e-3, 5e-4, 1.5e-3
    exact = np.column_stack([
        a * mesh.nodes[:, 0] + b * mesh.nodes[:, 1],
        c * mesh.nodes[:, 0] + d * mesh.nodes[:, 1],
    ]).ravel()
    on_boundary = (np.isclose(mesh.nodes[:, 0], 0) | np.isclose(mesh.nodes[:, 0], 1)
                   | np.isclose(mesh.nodes[:, 1], 0) | np.isclose(mesh.nodes[:, 1], 1))
    prescribed = {}
    for node in np.where(on_boundary)[0]:
        prescribed[2 * node] = exact[2 * node]
        prescribed[2 * node + 1] = exact[2 * node + 1]
    u = solver.static_solve(np.zeros(mesh.n_dof), prescribed=prescribed)
    np.testing.assert_allclose(u, exact, rtol=1e-10, atol=1e-14)


# ---------------------------------------------------------------- traction

def test_traction_zero_and_split():
    mesh = rect_mesh((0, 0), 1.0, 1.0, 2, 2)
    assert np.all(apply_traction(mesh, {}) == 0.0)
    loads = apply_traction(mesh, {0: np.array([4.0, 0.0])})
    a, b = mesh.surface_faces[0]
    assert loads[2 * a] == pytest.approx(2.0)
    assert loads[2 * b] == pytest.approx(2.0)
    assert loads.sum() == pytest.approx(4.0)


def test_traction_sum_is_conserved():
    rng = np.random.default_rng(2)
    mesh = rect_mesh((0, 0), 1.0, 2.0, 2, 4)
    forces = {i: rng.normal(size=2) for i in range(len(mesh.surface_faces))}
    loads = apply_traction(mesh, forces)
    total = np.sum([f for f in forces.values()], axis=0)
    np.testing.assert_allclose([loads[0::2].sum(), loads[1::2].sum()], total, rtol=1e-13)


def test_traction_unknown_face_rejected():
    mesh = rect_mesh((0, 0), 1.0, 1.0, 1, 1)
    with pytest.raises(MeshError):
        apply_traction(mesh, {99: np.array([1.0, 0.0])})


# ---------------------------------------------------------------- newmark

def test_zero_loads_zero_state_stays_zero():
    mesh = rect_mesh((0, 0), 1.0, 0.2, 5, 1)
    solver = StructureSolver(mesh, RUBBER)
    for _ in range(10):
        solver.step(np.zeros(mesh.n_dof), 1e-3)
    assert np.all(solver.state.u == 0.0)
    assert np.all(solver.state.v == 0.0)


def cantilever(length=1.0, thickness=0.1, nx=60, ny=6, e_mod=1.0e6):
    mat = Material(rho_s=1000.0, E=e_mod, nu=0.0)
    mesh = rect_mesh((0, 0), length, thickness, nx, ny, fixed_edge="left",
                     wet_edges=("top",))
    return mesh, mat


def tip_load_vector(mesh, p):
    """Total transverse force p spread over the free-end nodes."""
    tip_nodes = np.where(np.isclose(mesh.nodes[:, 0], mesh.nodes[:, 0].max()))[0]
    loads = np.zeros(mesh.n_dof)
    loads[2 * tip_nodes + 1] = p / len(tip_nodes)
    return loads


def test_cantilever_static_tip_deflection_matches_beam_theory():
    length, thickness, p = 1.0, 0.1, 5.0
    mesh, mat = cantilever(length, thickness)
    solver = StructureSolver(mesh, mat)
    u = solver.static_solve(tip_load_vector(mesh, p))
    inertia = thickness ** 3 / 12.0
    expected = p * length ** 3 / (3.0 * mat.E * inertia)
    tip = np.where(np.isclose(mesh.nodes[:, 0], length)
                   & np.isclose(mesh.nodes[:, 1], thickness / 2))[0][0]
    assert u[2 * tip + 1] == pytest.approx(expected, rel=0.10)


def test_newmark_dynamic_relaxation_reaches_static_limit():
    length, thickness, p = 1.0, 0.1, 5.0
    mesh, mat = cantilever(length, thickness, nx=30, ny=4)
    damped = StructureSolver(mesh, mat, rayleigh_stiffness=2e-3, rayleigh_mass=5.0)
    loads = tip_load_vector(mesh, p)
    static = damped.static_solve(loads)
    dt = 5e-3
    damped.initialize_acceleration(loads)
    for _ in range(4000):
        damped.step(loads, dt)
    tip = np.where(np.isclose(mesh.nodes[:, 0], length)
                   & np.isclose(mesh.nodes[:, 1], thickness / 2))[0][0]
    assert damped.state.u[2 * tip + 1] == pytest.approx(static[2 * tip + 1], rel=0.02)


def test_undamped_free_vibration_conserves_energy():
    mesh, mat = cantilever(nx=20, ny=2)
    solver = StructureSolver(mesh, mat)
    # release from the static shape under a tip load
    solver.state.u[:] = solver.static_solve(tip_load_vector(mesh, 2.0))
    solver.initialize_acceleration(np.zeros(mesh.n_dof))
    e0 = solver.energy()
    zeros = np.zeros(mesh.n_dof)
    for _ in range(1000):
        solver.step(zeros, 2e-4)
    assert solver.energy() == pytest.approx(e0, rel=1e-6)


def test_fixed_nodes_stay_pinned():
    mesh, mat = cantilever(nx=10, ny=2)
    solver = StructureSolver(mesh, mat)
    loads = tip_load_vector(mesh, 3.0)
    for _ in range(50):
        solver.step(loads, 1e-3)
    fixed_dofs = mesh.fixed_dofs()
    assert np.all(solver.state.u[fixed_dofs] == 0.0)
    assert np.all(solver.state.v[fixed_dofs] == 0.0)


def test_work_balance_per_step():
    # applied work tracks stored + kinetic energy (undamped)
    mesh, mat = cantilever(nx=16, ny=2)
    solver = StructureSolver(mesh, mat)
    loads = tip_load_vector(mesh, 1.0)
    solver.initialize_acceleration(loads)
    work = 0.0
    dt = 2e-4
    for _ in range(200):
        u_before = solver.state.u.copy()
        solver.step(loads, dt)
        work += loads @ (solver.state.u - u_before)
    assert solver.energy() == pytest.approx(work, rel=1e-4)


# ---------------------------------------------------------------- surfaces

def test_surface_displacements_restriction():
    mesh = rect_mesh((0, 0), 1.0, 0.5, 2, 1)
    state = zero_state(mesh)
    ids = mesh.surface_vertex_ids()
    assert np.all(surface_displacements(state, mesh) == 0.0)
    state.u[:] = np.arange(mesh.n_dof, dtype=float)
    got = surface_displacements(state, mesh)
    np.testing.assert_array_equal(got, state.u.reshape(-1, 2)[ids])


def test_surface_normals_point_outward():
    mesh = rect_mesh((0, 0), 1.0, 0.5, 2, 1, wet_edges=("left", "top", "right", "bottom"))
    normals = mesh.face_normals()
    centers = 0.5 * (mesh.nodes[mesh.surface_faces[:, 0]] + mesh.nodes[mesh.surface_faces[:, 1]])
    interior = np.array([0.5, 0.25])
    outward = centers - interior
    assert np.all(np.einsum("ij,ij->i", normals, outward) > 0)


# ---------------------------------------------------------------- file I/O

def test_mesh_file_round_trip(tmp_path):
    mesh = rect_mesh((0.1, -0.2), 0.8, 0.3, 3, 2)
    path = tmp_path / "plate.mesh"
    write_mesh_file(path, mesh)
    back = read_mesh_file(path)
    np.testing.assert_array_equal(back.nodes, mesh.nodes)
    np.testing.assert_array_equal(back.elements, mesh.elements)
    np.testing.assert_array_equal(back.fixed_nodes, mesh.fixed_nodes)
    np.testing.assert_array_equal(back.surface_faces, mesh.surface_faces)


def test_mesh_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("nodes 2 elements 0 fixed 0 faces 0\n0.0 0.0\n")
    with pytest.raises(MeshError):
        read_mesh_file(path)


def test_material_validation():
    with pytest.raises(ValueError):
        Material(rho_s=-1, E=1e6, nu=0.3)
    with pytest.raises(ValueError):
        Material(rho_s=1000, E=1e6, nu=0.5)
