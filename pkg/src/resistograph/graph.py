"""Landscape grid graph: nodes, 4-neighbor edges, per-edge features.

Edge features and weights are stored as arrays indexed by edge for
vectorized evaluation; :class:`Edge` / :class:`EdgeFeatures` give a
per-record view for small graphs and tests.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DataError
from .ingest import LandscapeGrid

# Edges given exact-zero model weight would disconnect the grid and make
# resistances infinite, so they are floored instead.
MIN_EDGE_WEIGHT = 1e-12


@dataclass(frozen=True)
class EdgeFeatures:
    """Environmental data attached to one edge.

    ``elevation`` is in scaled [0, 10] units; ``landcover`` holds one entry
    per type in {0, 0.5, 1} (absent / one endpoint / both endpoints).
    """

    elevation: float | None
    landcover: np.ndarray | None


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    features: EdgeFeatures
    weight: float | None


@dataclass(frozen=True)
class EdgeGraph:
    """Immutable graph over ``n`` nodes with ``m`` canonical (i < j) edges.

    ``elevation`` (m,) and ``landcover`` (m, q) are the per-edge feature
    blocks; either may be None. ``node_landcover`` (n, q) records per-node
    presence for rarity statistics, and ``cell_index`` maps node ids back to
    the originating grid cell (r * C + c) when built from a grid.
    """

    n: int
    edge_index: np.ndarray
    elevation: np.ndarray | None = None
    landcover: np.ndarray | None = None
    weights: np.ndarray | None = None
    node_landcover: np.ndarray | None = None
    edge_unclassified: np.ndarray | None = None
    cell_index: np.ndarray | None = None
    grid_shape: tuple[int, int] | None = None

    @property
    def m(self) -> int:
        return self.edge_index.shape[0]

    @property
    def n_landcover_types(self) -> int:
        return 0 if self.landcover is None else self.landcover.shape[1]

    def incidence(self) -> sp.csr_matrix:
        """Edge-vertex incidence B (m x n), row k = e_{i_k} - e_{j_k}."""
        cached = getattr(self, "_incidence", None)
        if cached is not None:
            return cached
        m = self.m
        rows = np.repeat(np.arange(m), 2)
        cols = self.edge_index.ravel()
        data = np.tile(np.array([1.0, -1.0]), m)
        B = sp.csr_matrix((data, (rows, cols)), shape=(m, self.n))
        object.__setattr__(self, "_incidence", B)
        return B

    def laplacian(self, weights: np.ndarray | None = None) -> sp.csr_matrix:
        indptr, indices, data = self.laplacian_arrays(weights)
        return sp.csr_matrix((data, indices, indptr), shape=(self.n, self.n))

    def laplacian_arrays(self, weights: np.ndarray | None = None):
        """CSR pieces (indptr, indices, data) of L = D - A.

        The sparsity pattern and the slot-to-edge weight map are built once
        per graph; subsequent calls only recompute the data vector.
        """
        if weights is None:
            weights = self.weights
        if weights is None:
            raise ValueError("graph has no weights; pass them explicitly")
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (self.m,):
            raise ValueError(f"expected {self.m} weights, got shape {weights.shape}")
        if self.m and weights.min() < 0:
            raise ValueError("negative edge weight")
        cached = getattr(self, "_lap_pattern", None)
        if cached is None:
            pattern = assemble_laplacian(self, np.arange(1, self.m + 1, dtype=np.float64))
            pattern.sort_indices()
            indptr = pattern.indptr.copy()
            indices = pattern.indices.copy()
            # map CSR slots to edge contributions: data = slot_map @ w
            i = self.edge_index[:, 0]
            j = self.edge_index[:, 1]
            eids = np.arange(self.m)
            slot_ij = _csr_slot(indptr, indices, i, j)
            slot_ji = _csr_slot(indptr, indices, j, i)
            slot_ii = _csr_slot(indptr, indices, i, i)
            slot_jj = _csr_slot(indptr, indices, j, j)
            rows = np.concatenate([slot_ij, slot_ji, slot_ii, slot_jj])
            cols = np.tile(eids, 4)
            vals = np.concatenate([-np.ones(self.m), -np.ones(self.m), np.ones(self.m), np.ones(self.m)])
            slot_map = sp.csr_matrix(
                (vals, (rows, cols)), shape=(indices.size, self.m)
            )
            cached = (indptr, indices, slot_map)
            object.__setattr__(self, "_lap_pattern", cached)
        indptr, indices, slot_map = cached
        return indptr, indices, slot_map @ weights

    def with_weights(self, weights: np.ndarray) -> EdgeGraph:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (self.m,):
            raise ValueError(f"expected {self.m} weights, got shape {weights.shape}")
        return replace(self, weights=weights)

    def edge_features(self, k: int) -> EdgeFeatures:
        return EdgeFeatures(
            elevation=None if self.elevation is None else float(self.elevation[k]),
            landcover=None if self.landcover is None else self.landcover[k].copy(),
        )

    @property
    def edges(self) -> list[Edge]:
        """Per-record edge view; intended for small graphs."""
        w = self.weights
        return [
            Edge(
                i=int(self.edge_index[k, 0]),
                j=int(self.edge_index[k, 1]),
                features=self.edge_features(k),
                weight=None if w is None else float(w[k]),
            )
            for k in range(self.m)
        ]

    @classmethod
    def from_edges(
        cls,
        n: int,
        pairs,
        elevation=None,
        landcover=None,
        weights=None,
        node_landcover=None,
    ) -> EdgeGraph:
        """Build a graph from an explicit edge list (tests, non-grid graphs)."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
            raise ValueError("edge endpoint out of range")
        lo = pairs.min(axis=1)
        hi = pairs.max(axis=1)
        if np.any(lo == hi):
            raise ValueError("self-loops are not allowed")
        canonical = np.column_stack([lo, hi])
        key = canonical[:, 0] * n + canonical[:, 1]
        if np.unique(key).size != key.size:
            raise ValueError("duplicate edges are not allowed")
        return cls(
            n=n,
            edge_index=canonical,
            elevation=None if elevation is None else np.asarray(elevation, dtype=np.float64),
            landcover=None if landcover is None else np.asarray(landcover, dtype=np.float64),
            weights=None if weights is None else np.asarray(weights, dtype=np.float64),
            node_landcover=node_landcover,
        )


def _csr_slot(indptr, indices, rows, cols):
    """Positions of (rows[t], cols[t]) entries inside a sorted CSR layout."""
    out = np.empty(rows.size, dtype=np.int64)
    for t in range(rows.size):
        lo, hi = indptr[rows[t]], indptr[rows[t] + 1]
        out[t] = lo + np.searchsorted(indices[lo:hi], cols[t])
    return out


def assemble_laplacian(graph: EdgeGraph, weights: np.ndarray) -> sp.csr_matrix:
    """Weighted graph Laplacian L = D - A as sparse CSR.

    Satisfies L = B^T diag(w) B; rows/columns follow node ids.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (graph.m,):
        raise ValueError(f"expected {graph.m} weights, got shape {weights.shape}")
    if graph.m and weights.min() < 0:
        raise ValueError("negative edge weight")
    i = graph.edge_index[:, 0]
    j = graph.edge_index[:, 1]
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([j, i, i, j])
    data = np.concatenate([-weights, -weights, weights, weights])
    lap = sp.coo_matrix((data, (rows, cols)), shape=(graph.n, graph.n))
    return lap.tocsr()


def derive_edge_features(grid: LandscapeGrid, i: int, j: int) -> EdgeFeatures:
    """Features for the edge between adjacent grid cells i and j.

    Cells are addressed as r * C + c over the full grid. Elevation is the
    mean of the two (already scaled) cell values; each landcover entry is
    0 / 0.5 / 1 for absent / one endpoint / both endpoints.
    """
    nrows, ncols = grid.shape
    ri, ci = divmod(int(i), ncols)
    rj, cj = divmod(int(j), ncols)
    if abs(ri - rj) + abs(ci - cj) != 1:
        raise ValueError(f"cells {i} and {j} are not 4-neighbors")

    elevation = None
    if grid.elevation is not None:
        elevation = float((grid.elevation[ri, ci] + grid.elevation[rj, cj]) / 2.0)

    landcover = None
    if grid.landcover_presence is not None:
        pi = grid.landcover_presence[ri, ci].astype(np.float64)
        pj = grid.landcover_presence[rj, cj].astype(np.float64)
        landcover = (pi + pj) / 2.0
    return EdgeFeatures(elevation=elevation, landcover=landcover)


def build_grid_graph(grid: LandscapeGrid) -> EdgeGraph:
    """Grid graph with one node per valid cell and 4-neighbor edges.

    Nodes with missing data are dropped with their incident edges and only
    the largest connected component is kept; remaining nodes are renumbered
    densely in row-major cell order. Weights are left unset.
    """
    nrows, ncols = grid.shape
    if nrows * ncols < 2:
        raise DataError("grid needs at least 2 cells")
    if grid.elevation is not None and grid.elevation.shape != (nrows, ncols):
        raise DataError("elevation layer shape does not match grid")
    if grid.landcover_presence is not None and grid.landcover_presence.shape[:2] != (nrows, ncols):
        raise DataError("landcover layer shape does not match grid")

    mask = grid.mask
    cell_id = np.arange(nrows * ncols).reshape(nrows, ncols)

    pairs = []
    # horizontal then vertical neighbors, row-major
    hmask = mask[:, :-1] & mask[:, 1:]
    pairs.append(np.column_stack([cell_id[:, :-1][hmask], cell_id[:, 1:][hmask]]))
    vmask = mask[:-1, :] & mask[1:, :]
    pairs.append(np.column_stack([cell_id[:-1, :][vmask], cell_id[1:, :][vmask]]))
    cell_pairs = np.vstack(pairs)

    valid_cells = cell_id[mask]
    node_of_cell = np.full(nrows * ncols, -1, dtype=np.int64)
    node_of_cell[valid_cells] = np.arange(valid_cells.size)

    edge_index = node_of_cell[cell_pairs]
    adj = sp.coo_matrix(
        (np.ones(edge_index.shape[0]), (edge_index[:, 0], edge_index[:, 1])),
        shape=(valid_cells.size, valid_cells.size),
    )
    n_comp, labels = connected_components(adj, directed=False)
    if n_comp > 1:
        counts = np.bincount(labels)
        keep = labels == int(np.argmax(counts))
        valid_cells = valid_cells[keep]
        node_of_cell[:] = -1
        node_of_cell[valid_cells] = np.arange(valid_cells.size)
        in_comp = (node_of_cell[cell_pairs[:, 0]] >= 0) & (node_of_cell[cell_pairs[:, 1]] >= 0)
        cell_pairs = cell_pairs[in_comp]
        edge_index = node_of_cell[cell_pairs]

    n = valid_cells.size
    if n < 2:
        raise DataError("fewer than 2 connected valid cells")

    ri, ci = np.divmod(cell_pairs[:, 0], ncols)
    rj, cj = np.divmod(cell_pairs[:, 1], ncols)

    elevation = None
    if grid.elevation is not None:
        elevation = (grid.elevation[ri, ci] + grid.elevation[rj, cj]) / 2.0

    landcover = None
    node_landcover = None
    if grid.landcover_presence is not None:
        pres = grid.landcover_presence
        landcover = (pres[ri, ci].astype(np.float64) + pres[rj, cj].astype(np.float64)) / 2.0
        rows_n, cols_n = np.divmod(valid_cells, ncols)
        node_landcover = pres[rows_n, cols_n]

    edge_unclassified = None
    if grid.unclassified is not None:
        unc = grid.unclassified
        edge_unclassified = unc[ri, ci] | unc[rj, cj]

    lo = np.minimum(edge_index[:, 0], edge_index[:, 1])
    hi = np.maximum(edge_index[:, 0], edge_index[:, 1])

    return EdgeGraph(
        n=n,
        edge_index=np.column_stack([lo, hi]),
        elevation=elevation,
        landcover=landcover,
        weights=None,
        node_landcover=node_landcover,
        edge_unclassified=edge_unclassified,
        cell_index=valid_cells,
        grid_shape=(nrows, ncols),
    )
