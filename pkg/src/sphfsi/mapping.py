"""Data mapping between non-matching interface meshes.

Three methods (nearest neighbour, nearest projection, radial basis
functions), each usable under two constraints:

* consistent - interpolation with partition-of-unity weights; constants map
  exactly.  Used for intensive data such as displacements.
* conservative - the transpose of the consistent operator built in the
  reverse direction, so the sum over the target equals the sum over the
  source exactly.  Used for extensive data such as forces.

Interfaces here are small one-layer meshes, so every operator is a dense
matrix factorised/precomputed at build time; applying a mapping is a single
matvec and safe to call concurrently.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve, qr

from .errors import ConfigurationError, MeshError


class MappingMethod(enum.Enum):
    NEAREST_NEIGHBOR = "nearest-neighbor"
    NEAREST_PROJECTION = "nearest-projection"
    RBF = "rbf"


class MappingConstraint(enum.Enum):
    CONSISTENT = "consistent"
    CONSERVATIVE = "conservative"


class RbfBasis(enum.Enum):
    GAUSSIAN = "gaussian"
    THIN_PLATE_SPLINE = "thin-plate-spline"


@dataclass(frozen=True)
class MappingSpec:
    method: MappingMethod = MappingMethod.NEAREST_NEIGHBOR
    constraint: MappingConstraint = MappingConstraint.CONSISTENT
    rbf_basis: RbfBasis = RbfBasis.GAUSSIAN
    # Gaussian is exp(-(s r)^2); the default width spans ~2 source spacings,
    # which keeps the system well conditioned yet genuinely interpolating.
    shape_parameter: float | None = None   # None: 1 / (2 * mean source spacing)

    def __post_init__(self):
        object.__setattr__(self, "method", MappingMethod(self.method))
        object.__setattr__(self, "constraint", MappingConstraint(self.constraint))
        object.__setattr__(self, "rbf_basis", RbfBasis(self.rbf_basis))


@dataclass(frozen=True)
class MappingPlan:
    spec: MappingSpec
    matrix: np.ndarray        # (n_target, n_source)
    n_source: int
    n_target: int

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.n_source:
            raise ValueError(
                f"mapping expects {self.n_source} source values, got {values.shape[0]}")
        return self.matrix @ values


def _nearest_assignment(targets: np.ndarray, sources: np.ndarray) -> np.ndarray:
    """Index of the closest source per target; ties go to the lowest id."""
    d2 = ((targets[:, None, :] - sources[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def _segment_projection_weights(targets, sources, edges):
    """Rows of the consistent nearest-projection operator.

    Each target point is projected orthogonally onto its closest source
    edge (clamped to the edge ends) and interpolated linearly; ties between
    equally distant edges go to the lowest edge id.
    """
    n_t = len(targets)
    rows = np.zeros((n_t, len(sources)))
    a = sources[edges[:, 0]]
    b = sources[edges[:, 1]]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    if np.any(denom == 0.0):
        raise MeshError("zero-length edge in projection mapping")
    for k, p in enumerate(targets):
        t = np.einsum("ij,ij->i", p - a, ab) / denom
        t = np.clip(t, 0.0, 1.0)
        foot = a + t[:, None] * ab
        dist2 = ((p - foot) ** 2).sum(axis=1)
        e = int(np.argmin(dist2))
        rows[k, edges[e, 0]] = 1.0 - t[e]
        rows[k, edges[e, 1]] = t[e]
    return rows


def _mean_spacing(points: np.ndarray) -> float:
    if len(points) < 2:
        return 1.0
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    return float(np.mean(np.sqrt(d2.min(axis=1))))


def _rbf_values(r: np.ndarray, basis: RbfBasis, shape: float) -> np.ndarray:
    if basis is RbfBasis.GAUSSIAN:
        return np.exp(-((shape * r) ** 2))
    # thin plate spline, r^2 log r with the removable singularity at 0
    out = np.zeros_like(r)
    mask = r > 0
    out[mask] = r[mask] ** 2 * np.log(r[mask])
    return out


def _polynomial_basis(points: np.ndarray) -> np.ndarray:
    """Constant plus the linearly independent coordinate columns.

    Interface meshes are often straight lines, which makes some coordinate
    columns linearly dependent; rank-revealing QR drops them.
    """
    cols = [np.ones(len(points))] + [points[:, d] for d in range(points.shape[1])]
    p = np.column_stack(cols)
    _, r, piv = qr(p, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    keep = piv[diag > 1e-10 * max(diag[0], 1.0)]
    return p[:, np.sort(keep)], np.sort(keep)


def _rbf_consistent_matrix(sources, targets, basis, shape_parameter):
    n_s = len(sources)
    shape = shape_parameter if shape_parameter is not None else 0.5 / _mean_spacing(sources)
    r_ss = np.linalg.norm(sources[:, None, :] - sources[None, :, :], axis=2)
    a = _rbf_values(r_ss, basis, shape)
    p, keep = _polynomial_basis(sources)
    n_p = p.shape[1]
    sys = np.zeros((n_s + n_p, n_s + n_p))
    sys[:n_s, :n_s] = a
    sys[:n_s, n_s:] = p
    sys[n_s:, :n_s] = p.T
    try:
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # exact singularity is caught below
            factor = lu_factor(sys)
            # solve against the identity to expose the full operator matrix
            inv_cols = lu_solve(factor, np.eye(n_s + n_p)[:, :n_s])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise MeshError(f"singular radial-basis system (duplicate source vertices?): {exc}") from exc
    if not np.all(np.isfinite(inv_cols)):
        raise MeshError("singular radial-basis system (duplicate source vertices?)")
    r_ts = np.linalg.norm(targets[:, None, :] - sources[None, :, :], axis=2)
    phi_t = _rbf_values(r_ts, basis, shape)
    cols = [np.ones(len(targets))] + [targets[:, d] for d in range(targets.shape[1])]
    p_t = np.column_stack(cols)[:, keep]
    return np.hstack([phi_t, p_t]) @ inv_cols


def _consistent_matrix(spec: MappingSpec, sources, targets, source_edges):
    method = spec.method
    if method is MappingMethod.NEAREST_NEIGHBOR:
        nearest = _nearest_assignment(targets, sources)
        m = np.zeros((len(targets), len(sources)))
        m[np.arange(len(targets)), nearest] = 1.0
        return m
    if method is MappingMethod.NEAREST_PROJECTION:
        if source_edges is None or len(source_edges) == 0:
            raise ConfigurationError("nearest-projection mapping needs source edge topology")
        return _segment_projection_weights(targets, sources, np.asarray(source_edges, dtype=int))
    return _rbf_consistent_matrix(sources, targets, spec.rbf_basis, spec.shape_parameter)


def build_mapping(spec: MappingSpec, source_coords, target_coords,
                  source_edges=None, target_edges=None) -> MappingPlan:
    """Precompute the mapping operator between two vertex sets.

    For the conservative constraint the consistent operator is built in the
    reverse direction (target -> source) and transposed, which preserves the
    total of the mapped quantity exactly.
    """
    sources = np.asarray(source_coords, dtype=float)
    targets = np.asarray(target_coords, dtype=float)
    if sources.ndim != 2 or targets.ndim != 2:
        raise ValueError("coordinates must be (n, dim) arrays")
    if spec.constraint is MappingConstraint.CONSISTENT:
        matrix = _consistent_matrix(spec, sources, targets, source_edges)
    else:
        matrix = _consistent_matrix(spec, targets, sources, target_edges).T
    return MappingPlan(spec=spec, matrix=matrix, n_source=len(sources), n_target=len(targets))


def map_consistent(plan: MappingPlan, source_values: np.ndarray) -> np.ndarray:
    if plan.spec.constraint is not MappingConstraint.CONSISTENT:
        raise ValueError("plan was built with the conservative constraint")
    return plan.apply(source_values)


def map_conservative(plan: MappingPlan, source_values: np.ndarray) -> np.ndarray:
    if plan.spec.constraint is not MappingConstraint.CONSERVATIVE:
        raise ValueError("plan was built with the consistent constraint")
    return plan.apply(source_values)
