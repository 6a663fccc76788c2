"""Uniform-grid neighbour search for particle clouds.

Cell size equals the interaction radius, so all true neighbours of a
particle live in its own cell or the adjacent ones.  Pair generation is
fully vectorised and returns pairs sorted by (i, j), which pins the
summation order of every downstream reduction.
"""

from __future__ import annotations

import numpy as np


def _multi_arange(starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    """Concatenation of arange(starts[k], stops[k]) without a Python loop."""
    lens = stops - starts
    keep = lens > 0
    starts, stops, lens = starts[keep], stops[keep], lens[keep]
    if len(lens) == 0:
        return np.empty(0, dtype=np.int64)
    total = int(lens.sum())
    out = np.ones(total, dtype=np.int64)
    out[0] = starts[0]
    heads = np.cumsum(lens)[:-1]
    out[heads] = starts[1:] - stops[:-1] + 1
    return np.cumsum(out)


class NeighborGrid:
    """Spatial hash over a snapshot of particle positions.

    The grid is immutable once built; positions must not change between
    ``build`` and queries.  ``validate=True`` re-checks that contract on
    every query (meant for tests, O(N) per call).
    """

    def __init__(self, cell_size: float, validate: bool = False):
        if cell_size <= 0.0:
            raise ValueError("cell size must be positive")
        self.cell_size = float(cell_size)
        self.validate = validate
        self._pos = None
        self._order = None           # particle ids sorted by cell
        self._sorted_cells = None    # linear cell index, same order
        self._cells_of = None        # linear cell index per particle id
        self._origin = None
        self._strides = None

    def build(self, positions: np.ndarray) -> "NeighborGrid":
        pos = np.asarray(positions, dtype=float)
        if pos.ndim != 2:
            raise ValueError("positions must be an (N, dim) array")
        self._pos = pos.copy()
        n, dim = pos.shape
        coords = np.floor(pos / self.cell_size).astype(np.int64)
        if n == 0:
            self._order = np.empty(0, dtype=np.int64)
            self._sorted_cells = np.empty(0, dtype=np.int64)
            self._cells_of = np.empty(0, dtype=np.int64)
            self._origin = np.zeros(dim, dtype=np.int64)
            self._strides = np.ones(dim, dtype=np.int64)
            return self
        self._origin = coords.min(axis=0) - 1
        shifted = coords - self._origin
        extent = shifted.max(axis=0) + 3
        strides = np.ones(dim, dtype=np.int64)
        for d in range(dim - 2, -1, -1):
            strides[d] = strides[d + 1] * extent[d + 1]
        self._strides = strides
        self._cells_of = shifted @ strides
        # stable sort keeps ascending particle id within each cell
        self._order = np.argsort(self._cells_of, kind="stable")
        self._sorted_cells = self._cells_of[self._order]
        return self

    @property
    def n_particles(self) -> int:
        return 0 if self._pos is None else len(self._pos)

    def _check_built(self):
        if self._pos is None:
            raise RuntimeError("grid queried before build()")

    def _check_current(self, positions: np.ndarray):
        if self.validate and not np.array_equal(self._pos, positions):
            raise RuntimeError("grid is stale: positions changed since build()")

    def _offsets(self, dim: int) -> np.ndarray:
        rng = np.array([-1, 0, 1], dtype=np.int64)
        grids = np.meshgrid(*([rng] * dim), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def neighbors_of(self, i: int, positions: np.ndarray | None = None) -> np.ndarray:
        """Ids j != i with |pos_i - pos_j| < cell_size, ascending."""
        self._check_built()
        if positions is not None:
            self._check_current(np.asarray(positions, dtype=float))
        pos = self._pos
        dim = pos.shape[1]
        cell = self._cells_of[i]
        cand = []
        for off in self._offsets(dim) @ self._strides:
            lo = np.searchsorted(self._sorted_cells, cell + off, side="left")
            hi = np.searchsorted(self._sorted_cells, cell + off, side="right")
            if hi > lo:
                cand.append(self._order[lo:hi])
        if not cand:
            return np.empty(0, dtype=np.int64)
        cand = np.concatenate(cand)
        d = np.linalg.norm(pos[cand] - pos[i], axis=1)
        keep = (d < self.cell_size) & (cand != i)
        return np.sort(cand[keep])

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """All directed interaction pairs (i, j), i != j, |r_ij| < cell_size.

        Sorted lexicographically by (i, j): deterministic reduction order.
        """
        self._check_built()
        pos = self._pos
        n, dim = pos.shape
        if n == 0:
            e = np.empty(0, dtype=np.int64)
            return e, e
        i_chunks, j_chunks = [], []
        cells = self._cells_of
        for off in self._offsets(dim) @ self._strides:
            target = cells + off
            lo = np.searchsorted(self._sorted_cells, target, side="left")
            hi = np.searchsorted(self._sorted_cells, target, side="right")
            slots = _multi_arange(lo, hi)
            if len(slots) == 0:
                continue
            i_chunks.append(np.repeat(np.arange(n, dtype=np.int64), hi - lo))
            j_chunks.append(self._order[slots])
        i_idx = np.concatenate(i_chunks)
        j_idx = np.concatenate(j_chunks)
        diff = pos[i_idx] - pos[j_idx]
        dist2 = np.einsum("ij,ij->i", diff, diff)
        keep = (dist2 < self.cell_size * self.cell_size) & (i_idx != j_idx)
        i_idx, j_idx = i_idx[keep], j_idx[keep]
        order = np.lexsort((j_idx, i_idx))
        return i_idx[order], j_idx[order]


def find_neighbors(grid: NeighborGrid, positions: np.ndarray, i: int) -> np.ndarray:
    """Neighbour ids of particle i, ascending; see NeighborGrid.neighbors_of."""
    return grid.neighbors_of(i, positions)


class PairCache:
    """Candidate pair list reused across steps via a skin margin.

    Candidates are all pairs closer than ``support + skin`` at rebuild time;
    the list stays a superset of the true interaction pairs as long as no
    particle has moved more than skin/2 since the rebuild, which this class
    tracks.  Out-of-support candidates are harmless downstream because the
    kernel vanishes beyond its support, so no per-step filtering is needed.
    """

    def __init__(self, support: float, skin_factor: float = 0.3):
        if support <= 0:
            raise ValueError("support radius must be positive")
        self.support = float(support)
        self.skin = skin_factor * support
        self._ref_pos = None
        self._pairs = None

    def pairs_for(self, positions: np.ndarray):
        pos = np.asarray(positions, dtype=float)
        if self._ref_pos is None or self._ref_pos.shape != pos.shape:
            stale = True
        else:
            moved2 = np.max(np.einsum("ij,ij->i", pos - self._ref_pos, pos - self._ref_pos))
            stale = moved2 > (0.5 * self.skin) ** 2
        if stale:
            grid = NeighborGrid(self.support + self.skin).build(pos)
            self._pairs = grid.pairs()
            self._ref_pos = pos.copy()
        return self._pairs
