"""One-layer interface mesh between the particle fluid and the mesh world.

The mesh is a single layer of surface patches (segments in 2D, triangles in
3D) whose vertices sit on the fluid-structure interface.  Topology never
changes after construction; motion enters purely through per-vertex
displacements, from which patch normals, centroids and areas are recomputed
on demand.  Normals are oriented towards the fluid side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MeshError


def _segments_properly_intersect(p1, p2, p3, p4) -> bool:
    """True when open segments (p1,p2) and (p3,p4) cross each other."""
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


@dataclass
class CriticalMesh:
    """Interface mesh carrying per-patch forces and per-vertex displacements.

    ``orientation`` flips the geometric perpendicular of each patch so the
    stored normal points into the fluid.  ``vertex_displacement`` is the
    displacement currently applied to the fluid side; the previous applied
    value is kept so relative motion of a window can be reconstructed.
    """

    vertices: np.ndarray                # reference coordinates (V, dim)
    patches: np.ndarray                 # (P, 2) segments or (P, 3) triangles
    orientation: np.ndarray             # (P,) +-1
    vertex_displacement: np.ndarray = None
    previous_vertex_displacement: np.ndarray = None
    patch_force: np.ndarray = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.patches = np.asarray(self.patches, dtype=np.int64)
        self.orientation = np.asarray(self.orientation, dtype=float)
        v, d = self.vertices.shape
        if self.patches.ndim != 2 or self.patches.shape[1] not in (2, 3):
            raise MeshError("patches must be (P, 2) segments or (P, 3) triangles")
        if self.patches.size and (self.patches.min() < 0 or self.patches.max() >= v):
            raise MeshError("patch connectivity references unknown vertices")
        if self.vertex_displacement is None:
            self.vertex_displacement = np.zeros((v, d))
        if self.previous_vertex_displacement is None:
            self.previous_vertex_displacement = np.zeros((v, d))
        if self.patch_force is None:
            self.patch_force = np.zeros((len(self.patches), d))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_patches(self) -> int:
        return len(self.patches)

    @property
    def edges(self) -> np.ndarray:
        """Edge list for mapping topology (the patches themselves in 2D)."""
        if self.patches.shape[1] == 2:
            return self.patches.copy()
        e = np.vstack([self.patches[:, [0, 1]], self.patches[:, [1, 2]],
                       self.patches[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def current_vertices(self) -> np.ndarray:
        return self.vertices + self.vertex_displacement

    def patch_centroids(self) -> np.ndarray:
        cur = self.current_vertices()
        return cur[self.patches].mean(axis=1)

    def patch_normals(self) -> np.ndarray:
        """Unit normals of the displaced patches, oriented towards the fluid."""
        cur = self.current_vertices()
        if self.patches.shape[1] == 2:
            a = cur[self.patches[:, 0]]
            b = cur[self.patches[:, 1]]
            t = b - a
            lengths = np.linalg.norm(t, axis=1, keepdims=True)
            if np.any(lengths == 0):
                raise MeshError("zero-length patch")
            t /= lengths
            n = np.column_stack([t[:, 1], -t[:, 0]])
        else:
            a, b, c = (cur[self.patches[:, k]] for k in range(3))
            n = np.cross(b - a, c - a)
            lengths = np.linalg.norm(n, axis=1, keepdims=True)
            if np.any(lengths == 0):
                raise MeshError("degenerate triangle patch")
            n = n / lengths
        return n * self.orientation[:, None]

    def patch_areas(self) -> np.ndarray:
        """Segment lengths (per unit width) in 2D, triangle areas in 3D."""
        cur = self.current_vertices()
        if self.patches.shape[1] == 2:
            a = cur[self.patches[:, 0]]
            b = cur[self.patches[:, 1]]
            return np.linalg.norm(b - a, axis=1)
        a, b, c = (cur[self.patches[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def mean_patch_displacement(self, displacement: np.ndarray | None = None) -> np.ndarray:
        d = self.vertex_displacement if displacement is None else np.asarray(displacement)
        return d[self.patches].mean(axis=1)

    def set_applied_displacement(self, displacement: np.ndarray) -> None:
        displacement = np.asarray(displacement, dtype=float)
        self.previous_vertex_displacement[...] = self.vertex_displacement
        self.vertex_displacement[...] = displacement

    def copy_motion_state(self):
        return (self.vertex_displacement.copy(), self.previous_vertex_displacement.copy(),
                self.patch_force.copy())

    def restore_motion_state(self, snapshot) -> None:
        self.vertex_displacement[...] = snapshot[0]
        self.previous_vertex_displacement[...] = snapshot[1]
        self.patch_force[...] = snapshot[2]


def _check_one_layer_2d(vertices: np.ndarray, patches: np.ndarray) -> None:
    # orientable one-layer chain: a vertex appears at most once as a start
    # and at most once as an end
    starts = patches[:, 0]
    ends = patches[:, 1]
    if len(np.unique(starts)) != len(starts) or len(np.unique(ends)) != len(ends):
        raise MeshError("surface is not an orientable one-layer chain")
    for i in range(len(patches)):
        for j in range(i + 1, len(patches)):
            if len(set(patches[i]) & set(patches[j])):
                continue  # adjacent patches share a vertex, never "cross"
            if _segments_properly_intersect(vertices[patches[i, 0]], vertices[patches[i, 1]],
                                            vertices[patches[j, 0]], vertices[patches[j, 1]]):
                raise MeshError(f"surface patches {i} and {j} intersect")


def build_critical_mesh(vertices, patches, fluid_side_point=None, flip: bool = False) -> CriticalMesh:
    """Assemble the interface mesh and orient patch normals towards the fluid.

    With ``fluid_side_point`` given, each patch normal is flipped to face
    that point (adequate for the convex, thin members used here); otherwise
    the geometric perpendicular of the stored vertex order is kept.  ``flip``
    inverts the final orientation globally.
    """
    vertices = np.asarray(vertices, dtype=float)
    patches = np.asarray(patches, dtype=np.int64)
    if patches.shape[1] == 2:
        _check_one_layer_2d(vertices, patches)
    orientation = np.ones(len(patches))
    mesh = CriticalMesh(vertices=vertices, patches=patches, orientation=orientation)
    if fluid_side_point is not None:
        toward = np.asarray(fluid_side_point, dtype=float) - mesh.patch_centroids()
        sign = np.sign(np.einsum("ij,ij->i", mesh.patch_normals(), toward))
        sign[sign == 0] = 1.0
        mesh.orientation *= sign
    if flip:
        mesh.orientation *= -1.0
    return mesh


def mesh_from_structure_surface(fem_mesh) -> tuple[CriticalMesh, np.ndarray]:
    """Interface mesh whose vertices coincide with the structure's wet nodes.

    Returns the mesh plus the structure node id per mesh vertex.  Structure
    faces carry the solid on their left, so the geometric perpendicular
    already points away from the solid into the fluid.
    """
    node_ids = np.unique(fem_mesh.surface_faces)
    local = {int(n): k for k, n in enumerate(node_ids)}
    patches = np.array([[local[int(a)], local[int(b)]] for a, b in fem_mesh.surface_faces],
                       dtype=np.int64)
    mesh = CriticalMesh(vertices=fem_mesh.nodes[node_ids].copy(), patches=patches,
                        orientation=np.ones(len(patches)))
    return mesh, node_ids


# ------------------------------------------------------------- distances

def point_segment_distances(points: np.ndarray, mesh: CriticalMesh):
    """Distance of every point to every segment patch of the current geometry.

    Returns (dist, signed, interior) with shape (n_points, n_patches);
    ``signed`` is positive on the fluid side of each patch, and ``interior``
    marks projections that land inside the segment -- the sign is only a
    trustworthy inside/outside statement there, not in the corner wedges
    past an endpoint.
    """
    cur = mesh.current_vertices()
    a = cur[mesh.patches[:, 0]]
    b = cur[mesh.patches[:, 1]]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    ap = points[:, None, :] - a[None, :, :]
    t_raw = np.einsum("kpd,pd->kp", ap, ab) / denom[None, :]
    t = np.clip(t_raw, 0.0, 1.0)
    foot = a[None, :, :] + t[..., None] * ab[None, :, :]
    diff = points[:, None, :] - foot
    dist = np.linalg.norm(diff, axis=2)
    signed = np.einsum("kpd,pd->kp", diff, mesh.patch_normals())
    interior = (t_raw > 0.0) & (t_raw < 1.0)
    return dist, signed, interior


def _point_triangle_distance(points, tri):
    """Unsigned distance of points (K, 3) to a single triangle (3, 3)."""
    a, b, c = tri
    ab, ac = b - a, c - a
    n = np.cross(ab, ac)
    nn = n / np.linalg.norm(n)
    ap = points - a
    # project onto the plane, then test barycentric coordinates
    dist_plane = ap @ nn
    proj = points - dist_plane[:, None] * nn
    d00, d01, d11 = ab @ ab, ab @ ac, ac @ ac
    vp = proj - a
    d20 = vp @ ab
    d21 = vp @ ac
    denom = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    inside = (v >= 0) & (w >= 0) & (v + w <= 1)
    out = np.empty(len(points))
    out[inside] = np.abs(dist_plane[inside])
    if np.any(~inside):
        rest = points[~inside]
        best = np.full(len(rest), np.inf)
        for p0, p1 in ((a, b), (b, c), (c, a)):
            e = p1 - p0
            t = np.clip((rest - p0) @ e / (e @ e), 0.0, 1.0)
            foot = p0 + t[:, None] * e
            best = np.minimum(best, np.linalg.norm(rest - foot, axis=1))
        out[~inside] = best
    return out


def point_patch_distances(points: np.ndarray, mesh: CriticalMesh):
    """Unsigned/signed point-to-patch distances plus the interior-foot flag."""
    points = np.asarray(points, dtype=float)
    if mesh.patches.shape[1] == 2:
        return point_segment_distances(points, mesh)
    cur = mesh.current_vertices()
    dist = np.empty((len(points), mesh.n_patches))
    for p in range(mesh.n_patches):
        dist[:, p] = _point_triangle_distance(points, cur[mesh.patches[p]])
    normals = mesh.patch_normals()
    centroids = mesh.patch_centroids()
    plane = np.einsum("kpd,pd->kp", points[:, None, :] - centroids[None, :, :], normals)
    signed = np.sign(plane) * dist
    interior = np.abs(np.abs(plane) - dist) < 1e-12 * np.maximum(dist, 1.0)
    return dist, signed, interior
