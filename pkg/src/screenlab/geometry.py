"""Plates, periodic patch lattices, box domains, and node classification.

Coordinates follow the half-space convention: the distinguished boundary
plane is z = 0, domains of interest lie in z <= 0, and patch lattices live
on the z = 0 plane. The reference cell is (-1, 1)^2 with the patch shape
centered at the origin; a layout scales the cell by delta and the patch by
epsilon * delta.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BoundaryTag",
    "ProblemKind",
    "PlateShape",
    "PatchLayout",
    "BoxRegion",
    "plate_contains",
    "patch_contains",
    "patch_area_fraction",
    "classify_node",
    "classify_plane_nodes",
]


class BoundaryTag(enum.Enum):
    """Role of a single grid node in an assembled problem."""

    DIRICHLET_PATCH = "dirichlet_patch"
    ROBIN_COMPLEMENT = "robin_complement"
    OUTER_DIRICHLET = "outer_dirichlet"
    NEUMANN_SCREEN = "neumann_screen"
    WINDOW_INTERIOR = "window_interior"
    ABSORBING_OUTER = "absorbing_outer"
    INTERIOR = "interior"


class ProblemKind(enum.Enum):
    """Which boundary-value problem the classification serves."""

    ALTERNATING = "alternating"          # mixed Dirichlet/Robin on the top face
    DIRICHLET_SCREEN = "dirichlet_screen"  # patches pinned, complement open
    NEUMANN_SCREEN = "neumann_screen"      # patches open, complement rigid


@dataclass(frozen=True)
class PlateShape:
    """A bounded planar patch shape in cell coordinates.

    kind is one of "disk" (radius), "square" (half_side), or "polygon"
    (convex vertex list, counter-clockwise). The shape must contain the
    origin in its interior. Containment in the reference cell is not
    enforced here; layouts and cell grids check it where it matters, so
    plates may also be used stand-alone (e.g. scaled copies for capacity
    runs).
    """

    kind: str
    radius: float = 1.0
    half_side: float = 1.0
    vertices: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        if self.kind == "disk":
            if not (self.radius > 0 and math.isfinite(self.radius)):
                raise ValueError("disk radius must be positive and finite")
        elif self.kind == "square":
            if not (self.half_side > 0 and math.isfinite(self.half_side)):
                raise ValueError("square half_side must be positive and finite")
        elif self.kind == "polygon":
            v = np.asarray(self.vertices, dtype=float)
            if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
                raise ValueError("polygon needs at least 3 vertices")
            if not np.all(np.isfinite(v)):
                raise ValueError("polygon vertices must be finite")
            nxt = np.roll(v, -1, axis=0)
            cross = (nxt[:, 0] - v[:, 0]) * (-v[:, 1]) - (nxt[:, 1] - v[:, 1]) * (-v[:, 0])
            if not np.all(cross > 0):
                raise ValueError("polygon must be convex, counter-clockwise, "
                                 "with the origin strictly inside")
        else:
            raise ValueError(f"unknown plate kind {self.kind!r}")

    @staticmethod
    def disk(radius: float = 1.0) -> "PlateShape":
        return PlateShape("disk", radius=radius)

    @staticmethod
    def square(half_side: float = 1.0) -> "PlateShape":
        return PlateShape("square", half_side=half_side)

    @staticmethod
    def polygon(vertices) -> "PlateShape":
        return PlateShape("polygon", vertices=tuple(map(tuple, vertices)))

    @property
    def area(self) -> float:
        if self.kind == "disk":
            return math.pi * self.radius ** 2
        if self.kind == "square":
            return 4.0 * self.half_side ** 2
        v = np.asarray(self.vertices, dtype=float)
        nxt = np.roll(v, -1, axis=0)
        return 0.5 * float(np.sum(v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]))

    @property
    def max_radius(self) -> float:
        """max |y| over the closed shape; the constant tau of the cut-off bound."""
        if self.kind == "disk":
            return self.radius
        if self.kind == "square":
            return math.sqrt(2.0) * self.half_side
        v = np.asarray(self.vertices, dtype=float)
        return float(np.max(np.hypot(v[:, 0], v[:, 1])))

    def contains(self, y) -> bool:
        """Open-set membership: boundary points resolve to False."""
        y = np.asarray(y, dtype=float)
        if y.shape != (2,) or not np.all(np.isfinite(y)):
            raise ValueError("point must be a finite 2D point")
        return bool(self.contains_many(y[None, 0], y[None, 1])[0])

    def contains_many(self, y1, y2) -> np.ndarray:
        """Vectorized open-set membership for coordinate arrays."""
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        if self.kind == "disk":
            return y1 * y1 + y2 * y2 < self.radius ** 2
        if self.kind == "square":
            return np.maximum(np.abs(y1), np.abs(y2)) < self.half_side
        v = np.asarray(self.vertices, dtype=float)
        nxt = np.roll(v, -1, axis=0)
        inside = np.ones(np.broadcast(y1, y2).shape, dtype=bool)
        for (ax, ay), (bx, by) in zip(v, nxt):
            inside &= (bx - ax) * (y2 - ay) - (by - ay) * (y1 - ax) > 0
        return inside

    def fits_cell(self) -> bool:
        """Whether the closed shape fits in the closed reference cell [-1,1]^2."""
        if self.kind == "disk":
            return self.radius <= 1.0
        if self.kind == "square":
            return self.half_side <= 1.0
        v = np.asarray(self.vertices, dtype=float)
        return bool(np.all(np.abs(v) <= 1.0))


def plate_contains(plate: PlateShape, y) -> bool:
    return plate.contains(y)


@dataclass(frozen=True)
class PatchLayout:
    """Periodic Dirichlet/Neumann partition of a rectangle in the z=0 plane.

    Patch centers form the lattice {(2 n delta, 2 m delta)}; the patch at a
    center c is c + delta * epsilon * plate. The partition of the region is
    exhaustive: every point is either in a patch or in the complement.
    """

    plate: PlateShape
    epsilon: float
    delta: float
    region: tuple[float, float, float, float]  # (x0, x1, y0, y1)

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in (0, 1]")
        if not (self.delta > 0.0 and math.isfinite(self.delta)):
            raise ValueError("delta must be positive and finite")
        x0, x1, y0, y1 = self.region
        if not (x1 > x0 and y1 > y0):
            raise ValueError("region must be a nondegenerate rectangle")
        if not self.plate.fits_cell():
            raise ValueError("plate does not fit in the reference cell [-1,1]^2")

    def in_region(self, x1, x2) -> np.ndarray:
        a0, a1, b0, b1 = self.region
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return (x1 >= a0) & (x1 <= a1) & (x2 >= b0) & (x2 <= b1)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (2,):
            raise ValueError("point must be 2D (coordinates in the z=0 plane)")
        if not self.in_region(x[0], x[1]):
            raise ValueError("not on Γ₁: point outside layout region")
        return bool(self.contains_many(x[None, 0], x[None, 1])[0])

    def contains_many(self, x1, x2) -> np.ndarray:
        """Patch membership for arrays of in-region points (no region check)."""
        period = 2.0 * self.delta
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        r1 = x1 - period * np.rint(x1 / period)
        r2 = x2 - period * np.rint(x2 / period)
        s = self.delta * self.epsilon
        return self.plate.contains_many(r1 / s, r2 / s)


def patch_contains(layout: PatchLayout, x) -> bool:
    return layout.contains(x)


def patch_area_fraction(layout: PatchLayout) -> float:
    """Fraction of the plane covered by patches: eps^2 * area(plate) / 4."""
    return layout.epsilon ** 2 * layout.plate.area / 4.0


def _axis_nodes(lo: float, hi: float, h: float, name: str) -> np.ndarray:
    n = (hi - lo) / h
    n_round = round(n)
    if n_round < 1 or abs(n - n_round) > 1e-9 * max(1.0, abs(n)):
        raise ValueError(f"spacing {h} does not divide the {name}-extent {hi - lo}")
    return lo + h * np.arange(n_round + 1)


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned box with a structured grid and an optional top-face role.

    lo/hi are corner coordinates, h the per-axis grid spacing. Each spacing
    must divide its extent to an integer interval count. When the box plays
    the role of the half-space domain, its top face must lie in z = 0 and is
    the face carrying the patch layout.
    """

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    h: tuple[float, float, float]

    def __post_init__(self):
        for d in range(3):
            if not (self.hi[d] > self.lo[d]):
                raise ValueError("box extents must be positive")
            if not (self.h[d] > 0):
                raise ValueError("grid spacings must be positive")
        self.axis_nodes(0), self.axis_nodes(1), self.axis_nodes(2)  # validate divisibility

    @staticmethod
    def make(lo, hi, h) -> "BoxRegion":
        h = (h, h, h) if np.isscalar(h) else tuple(h)
        return BoxRegion(tuple(map(float, lo)), tuple(map(float, hi)), tuple(map(float, h)))

    def axis_nodes(self, d: int) -> np.ndarray:
        return _axis_nodes(self.lo[d], self.hi[d], self.h[d], "xyz"[d])

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(len(self.axis_nodes(d)) for d in range(3))

    @property
    def extents(self) -> tuple[float, float, float]:
        return tuple(self.hi[d] - self.lo[d] for d in range(3))

    @property
    def num_nodes(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    def has_top_on_plane(self) -> bool:
        return abs(self.hi[2]) <= 1e-12

    def top_face_rect(self) -> tuple[float, float, float, float]:
        return (self.lo[0], self.hi[0], self.lo[1], self.hi[1])

    def axis_weights(self, d: int) -> np.ndarray:
        """Trapezoidal per-node weights along axis d (h, halved at the ends)."""
        n = self.shape[d]
        w = np.full(n, self.h[d])
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def node_volumes(self) -> np.ndarray:
        """Lumped volume weights, shape (nx, ny, nz); sums to the box volume."""
        wx, wy, wz = (self.axis_weights(d) for d in range(3))
        return wx[:, None, None] * wy[None, :, None] * wz[None, None, :]

    def top_face_areas(self) -> np.ndarray:
        """Lumped area weights of the top face, shape (nx, ny)."""
        wx, wy = self.axis_weights(0), self.axis_weights(1)
        return wx[:, None] * wy[None, :]


def classify_plane_nodes(layout: PatchLayout, xs: np.ndarray, ys: np.ndarray,
                         mode: ProblemKind) -> np.ndarray:
    """Tags for all top-face nodes at once; returns an (nx, ny) object array."""
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    on_patch = layout.contains_many(X, Y)
    tags = np.empty(X.shape, dtype=object)
    if mode is ProblemKind.ALTERNATING:
        tags[on_patch] = BoundaryTag.DIRICHLET_PATCH
        tags[~on_patch] = BoundaryTag.ROBIN_COMPLEMENT
    elif mode is ProblemKind.DIRICHLET_SCREEN:
        tags[on_patch] = BoundaryTag.DIRICHLET_PATCH
        tags[~on_patch] = BoundaryTag.WINDOW_INTERIOR
    elif mode is ProblemKind.NEUMANN_SCREEN:
        tags[on_patch] = BoundaryTag.WINDOW_INTERIOR
        tags[~on_patch] = BoundaryTag.NEUMANN_SCREEN
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unsupported mode {mode}")
    return tags


def classify_node(layout: PatchLayout, domain: BoxRegion, node: tuple[int, int, int],
                  mode: ProblemKind) -> BoundaryTag:
    """Classify one grid node of a half-space box domain.

    Interior nodes are INTERIOR; top-face nodes follow the layout partition
    per mode; the remaining boundary faces are the outer Dirichlet boundary.
    """
    if not domain.has_top_on_plane():
        raise ValueError("configuration error: domain top face is not in the plane z = 0")
    i, j, k = node
    nx, ny, nz = domain.shape
    if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
        raise IndexError("node outside the grid")
    on_top = k == nz - 1
    on_other = i in (0, nx - 1) or j in (0, ny - 1) or k == 0
    if not on_top and not on_other:
        return BoundaryTag.INTERIOR
    if on_top and not on_other:
        x = domain.axis_nodes(0)[i]
        y = domain.axis_nodes(1)[j]
        on_patch = bool(layout.contains_many(np.array([x]), np.array([y]))[0])
        if mode is ProblemKind.ALTERNATING:
            return BoundaryTag.DIRICHLET_PATCH if on_patch else BoundaryTag.ROBIN_COMPLEMENT
        if mode is ProblemKind.DIRICHLET_SCREEN:
            return BoundaryTag.DIRICHLET_PATCH if on_patch else BoundaryTag.WINDOW_INTERIOR
        return BoundaryTag.WINDOW_INTERIOR if on_patch else BoundaryTag.NEUMANN_SCREEN
    # edges of the top face belong to the closure of the outer boundary
    return BoundaryTag.OUTER_DIRICHLET
