"""Structured-grid assembly helpers shared by the box solvers.

The Dirichlet energy is discretized edge-wise on the dual mesh: an edge
along axis d carries weight (transverse trapezoid area) / h_d, so that
sum_e w_e (u_a - u_b)^2 is a consistent quadrature of the gradient energy
with natural (Neumann) behavior on untagged boundary. Dirichlet nodes are
eliminated (dof id -1); edges into them contribute only to the diagonal.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .geometry import BoxRegion
from .sparse_linalg import SparseMatrix

__all__ = [
    "edge_weight_array",
    "graph_laplacian",
    "assemble_box_laplacian",
    "gradient_energy",
]


def edge_weight_array(box: BoxRegion, d: int) -> np.ndarray:
    """Dual-area edge weights along axis d; shape = grid shape minus one on d."""
    w = [box.axis_weights(t) for t in range(3)]
    n_edges = box.shape[d] - 1
    w[d] = np.full(n_edges, 1.0 / box.h[d])
    return w[0][:, None, None] * w[1][None, :, None] * w[2][None, None, :]


def graph_laplacian(n_free: int, a: np.ndarray, b: np.ndarray, w: np.ndarray,
                    extra_diag: np.ndarray | None = None) -> SparseMatrix:
    """Weighted graph Laplacian over free dofs from edge lists.

    a, b are dof ids (-1 = eliminated Dirichlet node), w the edge weights.
    """
    a = a.ravel()
    b = b.ravel()
    w = w.ravel()
    both = (a >= 0) & (b >= 0)
    only_a = (a >= 0) & (b < 0)
    only_b = (b >= 0) & (a < 0)
    rows = np.concatenate([a[both], b[both], a[both], b[both], a[only_a], b[only_b]])
    cols = np.concatenate([b[both], a[both], a[both], b[both], a[only_a], b[only_b]])
    vals = np.concatenate([-w[both], -w[both], w[both], w[both], w[only_a], w[only_b]])
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n_free, n_free)).tocsr()
    if extra_diag is not None:
        A = A + sp.diags(extra_diag)
    return SparseMatrix(A, symmetric=True)


def _axis_edge_dofs(idx: np.ndarray, d: int):
    sl_lo = [slice(None)] * 3
    sl_hi = [slice(None)] * 3
    sl_lo[d] = slice(None, -1)
    sl_hi[d] = slice(1, None)
    return idx[tuple(sl_lo)], idx[tuple(sl_hi)]


def assemble_box_laplacian(box: BoxRegion, pinned: np.ndarray,
                           extra_diag_grid: np.ndarray | None = None):
    """Stiffness matrix on the free nodes of a single box.

    pinned marks homogeneous Dirichlet nodes. extra_diag_grid, when given,
    is a full-grid array of additional diagonal terms (e.g. Robin surface
    mass); entries at pinned nodes are ignored. Returns (A, idx) with idx
    the grid -> dof map (-1 at pinned nodes).
    """
    if pinned.shape != box.shape:
        raise ValueError("pinned mask has wrong shape")
    idx = -np.ones(box.shape, dtype=np.int64)
    free = ~pinned
    n_free = int(np.count_nonzero(free))
    idx[free] = np.arange(n_free)
    a_list, b_list, w_list = [], [], []
    for d in range(3):
        a, b = _axis_edge_dofs(idx, d)
        a_list.append(a.ravel())
        b_list.append(b.ravel())
        w_list.append(edge_weight_array(box, d).ravel())
    extra = None
    if extra_diag_grid is not None:
        extra = extra_diag_grid[free]
    A = graph_laplacian(n_free, np.concatenate(a_list), np.concatenate(b_list),
                        np.concatenate(w_list), extra_diag=extra)
    return A, idx


def gradient_energy(box: BoxRegion, values: np.ndarray) -> float:
    """Discrete Dirichlet energy of a full-grid nodal field."""
    total = 0.0
    for d in range(3):
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[d] = slice(None, -1)
        sl_hi[d] = slice(1, None)
        diff = values[tuple(sl_hi)] - values[tuple(sl_lo)]
        total += float(np.sum(edge_weight_array(box, d) * diff * diff))
    return total
