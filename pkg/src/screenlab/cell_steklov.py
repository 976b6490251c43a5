"""The cell eigenvalue on a truncated semi-infinite cylinder.

The periodicity cell is the square (-1,1)^2; the cylinder extends downward
and is cut at depth R (the omitted tail contributes O(exp(-pi R / 2)), so
R = 4 is ample). The Dirichlet patch scaled by epsilon sits in the top
face; everything else is natural (Neumann), including the bottom, which the
limit field approaches as a constant. The smallest pencil eigenvalue
lambda(eps) scales like eps * pi * c / 2 with c the plate capacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fdcore import assemble_box_laplacian
from .fields import GridField
from .geometry import BoxRegion, PlateShape
from .sparse_linalg import SparseMatrix, smallest_steklov_pair

__all__ = [
    "CellGrid",
    "SteklovResult",
    "assemble_cell",
    "cell_eigenvalue",
    "thm15_sweep",
    "cutoff",
    "trial_quotient",
]


def cutoff(t):
    """Smooth monotone cut-off: 1 for t < 1/3, 0 for t > 2/3, quintic bridge."""
    t = np.asarray(t, dtype=float)
    s = np.clip(3.0 * t - 1.0, 0.0, 1.0)
    return 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)


@dataclass(frozen=True)
class CellGrid:
    """Discretization of the truncated cylinder (-1,1)^2 x (-R, 0)."""

    epsilon: float
    R: float
    h: float
    plate: PlateShape = field(default_factory=lambda: PlateShape.disk(1.0))

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in (0, 1]")
        if self.R < 4.0:
            raise ValueError("truncation depth must satisfy R >= 4")
        if self.h > self.epsilon / 4.0 + 1e-12:
            raise ValueError("grid too coarse: require h <= epsilon / 4")
        if not self.plate.fits_cell():
            raise ValueError("plate does not fit in the reference cell")

    @property
    def box(self) -> BoxRegion:
        return BoxRegion.make((-1.0, -1.0, -self.R), (1.0, 1.0, 0.0), self.h)

    def patch_mask(self) -> np.ndarray:
        """Top-face nodes inside the scaled patch, shape (nx, ny)."""
        xs = self.box.axis_nodes(0)
        ys = self.box.axis_nodes(1)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return self.plate.contains_many(X / self.epsilon, Y / self.epsilon)


def assemble_cell(epsilon: float, R: float, h: float,
                  plate: PlateShape | None = None):
    """Stiffness/surface-mass pencil of the cell problem.

    Returns (A, B, grid, idx): A the stiffness on free nodes, B the lumped
    surface mass (diagonal vector over free dofs, supported on the top
    face), idx the grid -> dof map.
    """
    if epsilon <= 0.0:
        raise ValueError("unresolved patch: empty patch set (epsilon <= 0 "
                         "leaves the quotient unconstrained)")
    grid = CellGrid(epsilon, R, h, plate or PlateShape.disk(1.0))
    box = grid.box
    on_patch = grid.patch_mask()
    if not np.any(on_patch):
        raise ValueError("unresolved patch: no top-face node falls in the patch")
    pinned = np.zeros(box.shape, dtype=bool)
    pinned[:, :, -1] = on_patch
    A, idx = assemble_box_laplacian(box, pinned)
    surf = np.zeros(box.shape)
    surf[:, :, -1] = box.top_face_areas()
    B = surf[~pinned]
    return A, B, grid, idx


@dataclass
class SteklovResult:
    lam: float
    eigenfield: GridField
    residual: float
    grid: CellGrid


def cell_eigenvalue(epsilon: float, R: float, h: float,
                    plate: PlateShape | None = None,
                    tol: float = 1e-8) -> SteklovResult:
    """Smallest cell eigenvalue with its eigenfield, normalized on the surface."""
    A, B, grid, idx = assemble_cell(epsilon, R, h, plate)
    lam, v = smallest_steklov_pair(A, B, tol=tol)
    Av = A.matvec(v)
    resid = float(np.linalg.norm(Av - lam * (B * v)) / np.linalg.norm(Av))
    values = np.zeros(grid.box.shape)
    values[idx >= 0] = v[idx[idx >= 0]]
    return SteklovResult(lam, GridField(grid.box, values), resid, grid)


def trial_quotient(grid: CellGrid) -> float:
    """Rayleigh quotient of the explicit cut-off trial field 1 - chi(r / (3 tau eps)).

    The trial field vanishes on the patch and is admissible, so its quotient
    bounds the cell eigenvalue from above on the same grid.
    """
    box = grid.box
    xs, ys, zs = (box.axis_nodes(d) for d in range(3))
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    r = np.sqrt(X * X + Y * Y + Z * Z)
    tau = grid.plate.max_radius
    w = 1.0 - cutoff(r / (3.0 * tau * grid.epsilon))
    f = GridField(box, w)
    num = f.h1() ** 2 - f.l2() ** 2   # gradient energy
    den = f.l2_gamma1() ** 2
    return num / den


def thm15_sweep(epsilons, R: float = 4.0, h_rule=None,
                plate: PlateShape | None = None, tol: float = 1e-8):
    """Eigenvalue sweep over patch scales with the eps -> 0 extrapolation.

    h_rule maps eps to a spacing and must keep h <= eps / 8. Returns
    (rows, extrapolated) where rows are dicts with keys epsilon, R, h,
    lam, lam_over_eps, residual, and extrapolated is the linear-in-eps
    fit of lam/eps at eps = 0 (None for an empty sweep).
    """
    if h_rule is None:
        h_rule = lambda eps: eps / 8.0
    rows = []
    for eps in epsilons:
        h = h_rule(eps)
        if h > eps / 8.0 + 1e-12:
            raise ValueError(f"h rule too coarse at eps={eps}: require h <= eps/8")
        res = cell_eigenvalue(eps, R, h, plate, tol=tol)
        rows.append({
            "epsilon": eps, "R": R, "h": h,
            "lam": res.lam, "lam_over_eps": res.lam / eps,
            "residual": res.residual,
        })
    if not rows:
        return rows, None
    e = np.array([r["epsilon"] for r in rows])
    q = np.array([r["lam_over_eps"] for r in rows])
    if len(rows) == 1:
        return rows, float(q[0])
    coeff = np.polyfit(e, q, 1)
    return rows, float(coeff[1])
