"""Plate capacity via collocation boundary elements.

The equilibrium potential of a flat plate held at unit potential in the
half-space (with a sound-hard rest of the plane) extends evenly across
z = 0, which doubles the free-space kernel: K(x, y) = 1 / (2 pi |x - y|).
The capacity is the r^-1 far-field coefficient, i.e. (1/2pi) times the
total panel charge. For the unit disk the exact value is 2/pi, which pins
the normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import PlateShape
from .sparse_linalg import dense_solve

__all__ = [
    "PanelMesh",
    "CapacityResult",
    "mesh_plate",
    "assemble_single_layer",
    "plate_capacity",
    "far_field_probe",
]

TWO_PI = 2.0 * math.pi


def _polygon_inv_r_integral(point: np.ndarray, verts: np.ndarray) -> float:
    """Exact integral of 1/|x - point| over a convex CCW polygon, point inside.

    Edge-by-edge closed form: each edge contributes d * [asinh(s/d)] between
    the endpoint coordinates s measured along the edge from the foot of the
    perpendicular, d the distance from the point to the edge line.
    """
    total = 0.0
    m = len(verts)
    for a in range(m):
        v1 = verts[a]
        v2 = verts[(a + 1) % m]
        e = v2 - v1
        elen = float(np.hypot(e[0], e[1]))
        if elen == 0.0:
            continue
        e = e / elen
        d = (v1[0] - point[0]) * (-e[1]) + (v1[1] - point[1]) * e[0]
        d = -d  # left-normal distance; positive when point is left of the edge
        if abs(d) < 1e-300:
            continue
        s1 = (v1[0] - point[0]) * e[0] + (v1[1] - point[1]) * e[1]
        s2 = s1 + elen
        total += d * (math.asinh(s2 / d) - math.asinh(s1 / d))
    return total


@dataclass
class PanelMesh:
    """Flat panels covering a plate: centroids, areas, and self-integrals.

    self_integrals[j] is the exact integral of K over panel j against its
    own centroid (panel arcs are chordized, so every panel is a convex
    polygon and the closed form applies).
    """

    centroids: np.ndarray      # (N, 2)
    areas: np.ndarray          # (N,)
    self_integrals: np.ndarray  # (N,)

    def __post_init__(self):
        if len(self.centroids) == 0:
            raise ValueError("mesh has no panels")
        if np.any(self.areas <= 0.0):
            raise ValueError("degenerate (zero-area) panel")

    @property
    def num_panels(self) -> int:
        return len(self.areas)

    @property
    def total_area(self) -> float:
        return float(np.sum(self.areas))

    @property
    def diameter(self) -> float:
        lo = self.centroids.min(axis=0)
        hi = self.centroids.max(axis=0)
        return float(np.hypot(*(hi - lo)))


def _finish_mesh(polys: list[np.ndarray], centroids: list, areas: list) -> PanelMesh:
    cents = np.array(centroids, dtype=float)
    selfint = np.array([_polygon_inv_r_integral(c, p) / TWO_PI
                        for c, p in zip(cents, polys)])
    return PanelMesh(cents, np.array(areas, dtype=float), selfint)


def _mesh_disk(radius: float, n: int) -> PanelMesh:
    rings = 2 ** (n + 1)
    edges = radius * np.sqrt(np.arange(rings + 1) / rings)  # equal-area rings
    polys, cents, areas = [], [], []
    for k in range(1, rings + 1):
        r1, r2 = edges[k - 1], edges[k]
        rbar, dr = 0.5 * (r1 + r2), r2 - r1
        m = max(8, int(math.ceil(TWO_PI * rbar / dr)))
        m += m % 2  # even count keeps the mesh centrally symmetric
        alpha = TWO_PI / m
        # centroid radius of an annular sector of opening alpha
        rc = (2.0 / 3.0) * (r2 ** 3 - r1 ** 3) / (r2 ** 2 - r1 ** 2) \
            * math.sin(alpha / 2) / (alpha / 2)
        area = 0.5 * alpha * (r2 ** 2 - r1 ** 2)
        for i in range(m):
            t1, t2 = i * alpha, (i + 1) * alpha
            tm = 0.5 * (t1 + t2)
            cents.append((rc * math.cos(tm), rc * math.sin(tm)))
            areas.append(area)
            corner = [(r2, t1), (r2, t2)]
            if r1 > 0.0:
                corner = [(r1, t1)] + corner + [(r1, t2)]
            else:
                corner = [(0.0, t1)] + corner
            polys.append(np.array([(r * math.cos(t), r * math.sin(t))
                                   for r, t in corner]))
    return _finish_mesh(polys, cents, areas)


def _mesh_square(half_side: float, n: int) -> PanelMesh:
    m = 2 ** (n + 1)
    h = 2.0 * half_side / m
    xs = -half_side + h * (np.arange(m) + 0.5)
    polys, cents, areas = [], [], []
    for x in xs:
        for y in xs:
            cents.append((x, y))
            areas.append(h * h)
            polys.append(np.array([(x - h / 2, y - h / 2), (x + h / 2, y - h / 2),
                                   (x + h / 2, y + h / 2), (x - h / 2, y + h / 2)]))
    return _finish_mesh(polys, cents, areas)


def _mesh_polygon(vertices: np.ndarray, n: int) -> PanelMesh:
    ell = 2 ** n
    polys, cents, areas = [], [], []
    origin = np.zeros(2)
    nv = len(vertices)
    for e in range(nv):
        A, B, C = origin, np.asarray(vertices[e]), np.asarray(vertices[(e + 1) % nv])
        # split fan triangle ABC into ell^2 congruent triangles
        du = (B - A) / ell
        dv = (C - A) / ell
        tri_area = abs(du[0] * dv[1] - du[1] * dv[0]) / 2.0
        for i in range(ell):
            for j in range(ell - i):
                p0 = A + (B - A) * (i / ell) + (C - A) * (j / ell)
                up = np.array([p0, p0 + du, p0 + dv])
                polys.append(up)
                cents.append(up.mean(axis=0))
                areas.append(tri_area)
                if j < ell - i - 1:
                    down = np.array([p0 + du, p0 + du + dv, p0 + dv])
                    polys.append(down)
                    cents.append(down.mean(axis=0))
                    areas.append(tri_area)
    return _finish_mesh(polys, cents, areas)


def mesh_plate(plate: PlateShape, n: int) -> PanelMesh:
    """Panel mesh at refinement level n >= 0 (panel count grows ~4x per level)."""
    if n < 0:
        raise ValueError("refinement level must be >= 0")
    if plate.kind == "disk":
        return _mesh_disk(plate.radius, n)
    if plate.kind == "square":
        return _mesh_square(plate.half_side, n)
    return _mesh_polygon(np.asarray(plate.vertices, dtype=float), n)


def assemble_single_layer(mesh: PanelMesh) -> np.ndarray:
    """Collocation matrix: S[i, j] = K(c_i, c_j) a_j, exact self terms."""
    c = mesh.centroids
    dx = c[:, 0][:, None] - c[:, 0][None, :]
    dy = c[:, 1][:, None] - c[:, 1][None, :]
    with np.errstate(divide="ignore"):
        S = mesh.areas[None, :] / (TWO_PI * np.hypot(dx, dy))
    np.fill_diagonal(S, mesh.self_integrals)
    return S


@dataclass
class CapacityResult:
    c_omega: float
    density: np.ndarray
    dipole: tuple[float, float]
    panels: int
    error_estimate: float  # relative Richardson difference between two levels

    def __post_init__(self):
        if not self.c_omega > 0.0:
            raise ValueError("capacity must be positive")
        if np.any(self.density <= 0.0):
            raise ValueError("equilibrium density must be positive on every panel")


def _capacity_once(plate: PlateShape, n: int):
    mesh = mesh_plate(plate, n)
    S = assemble_single_layer(mesh)
    sigma = dense_solve(S, np.ones(mesh.num_panels))
    weighted = sigma * mesh.areas
    c = float(np.sum(weighted)) / TWO_PI
    d1 = float(np.sum(weighted * mesh.centroids[:, 0])) / TWO_PI
    d2 = float(np.sum(weighted * mesh.centroids[:, 1])) / TWO_PI
    return mesh, sigma, c, (d1, d2)


def plate_capacity(plate: PlateShape, n: int) -> CapacityResult:
    """Capacity and dipole coefficients at refinement level n (>= 1).

    The error estimate compares against level n - 1.
    """
    if n < 1:
        raise ValueError("refinement level must be >= 1")
    mesh, sigma, c, dipole = _capacity_once(plate, n)
    _, _, c_coarse, _ = _capacity_once(plate, n - 1)
    err = abs(c - c_coarse) / abs(c)
    return CapacityResult(c, sigma, dipole, mesh.num_panels, err)


def far_field_probe(result: CapacityResult, mesh: PanelMesh, x) -> tuple[float, float]:
    """Evaluate the potential at a distant point and its monopole residual."""
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError("probe point must be 3D")
    r = float(np.linalg.norm(x))
    if x[2] > 0.0 or r <= 2.0 * mesh.diameter:
        raise ValueError("near-field probe: require |x| > 2 diam and z <= 0")
    d = np.sqrt((x[0] - mesh.centroids[:, 0]) ** 2
                + (x[1] - mesh.centroids[:, 1]) ** 2 + x[2] ** 2)
    value = float(np.sum(result.density * mesh.areas / (TWO_PI * d)))
    return value, abs(value - result.c_omega / r)
