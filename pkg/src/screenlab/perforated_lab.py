"""Two-domain problems separated by a perforated screen in the plane z = 0.

An inner box sits inside an outer box; its walls and bottom are hard
(zero-thickness Dirichlet sheets), while the shared top face carries a
periodic pattern of patches. In Dirichlet-screen mode the patches are
pinned and the complement is open; in Neumann-screen mode the patches are
open windows while the complement is a rigid two-sided screen, realized by
splitting each screen node into independent upper and lower copies with
one-sided dual volumes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .fdcore import graph_laplacian
from .fields import GridField
from .geometry import BoxRegion, PatchLayout
from .sparse_linalg import SparseMatrix, cg_solve

__all__ = [
    "ScreenMode",
    "TransmissionSpec",
    "TwoDomainField",
    "solve_screened",
    "solve_decoupled_limit",
    "decoupling_study",
    "fit_screen_grid",
]


class ScreenMode(enum.Enum):
    DIRICHLET = "dirichlet"   # patches pinned, complement open (windows)
    NEUMANN = "neumann"       # patches open (windows), complement rigid screen


@dataclass(frozen=True)
class TransmissionSpec:
    outer: BoxRegion
    inner: BoxRegion
    layout: PatchLayout
    mode: ScreenMode
    F: object   # callable (x,y,z) or ndarray on the outer grid

    def __post_init__(self):
        for d in range(3):
            if not (self.outer.lo[d] < self.inner.lo[d] and self.inner.hi[d] < self.outer.hi[d]):
                raise ValueError("inner box must lie strictly inside the outer box")
        if abs(self.inner.hi[2]) > 1e-12:
            raise ValueError("inner top face must lie in the plane z = 0")
        if tuple(np.round(self.layout.region, 12)) != tuple(np.round(self.inner.top_face_rect(), 12)):
            raise ValueError("layout region must equal the inner top face")
        if self.inner.h != self.outer.h:
            raise ValueError("inner and outer grids must share the spacing")
        _inner_ranges(self.outer, self.inner)  # validates alignment


def _inner_ranges(outer: BoxRegion, inner: BoxRegion):
    """Index ranges of the inner box corners on the outer grid."""
    rng = []
    for d in range(3):
        lo = (inner.lo[d] - outer.lo[d]) / outer.h[d]
        hi = (inner.hi[d] - outer.lo[d]) / outer.h[d]
        if abs(lo - round(lo)) > 1e-9 or abs(hi - round(hi)) > 1e-9:
            raise ValueError("inner box corners must lie on the outer grid")
        rng.append((int(round(lo)), int(round(hi))))
    return rng


class _ScreenSystem:
    """Assembled split-node system over the outer grid.

    closed=True seals the interface entirely (the decoupled-limit topology):
    all face-interior nodes pinned in Dirichlet mode, all split in Neumann
    mode. outer_bc chooses between pinned outer faces and free (absorbing)
    ones; the Helmholtz module reuses this machinery with the latter.
    """

    def __init__(self, outer: BoxRegion, inner: BoxRegion, layout: PatchLayout | None,
                 mode: ScreenMode, closed: bool = False, outer_bc: str = "dirichlet"):
        self.outer, self.inner, self.mode = outer, inner, mode
        (i0, i1), (j0, j1), (k0, k1) = _inner_ranges(outer, inner)
        self.ir = (i0, i1, j0, j1, k0, k1)
        nx, ny, nz = outer.shape
        if not (0 < k1 < nz - 1):
            raise ValueError("interface plane must be interior to the outer box")

        pinned = np.zeros(outer.shape, dtype=bool)
        if outer_bc == "dirichlet":
            pinned[0, :, :] = pinned[-1, :, :] = True
            pinned[:, 0, :] = pinned[:, -1, :] = True
            pinned[:, :, 0] = pinned[:, :, -1] = True
        elif outer_bc != "absorbing":
            raise ValueError("outer_bc must be 'dirichlet' or 'absorbing'")
        # hard inner walls and bottom (closure includes the top-face rim)
        pinned[i0, j0:j1 + 1, k0:k1 + 1] = True
        pinned[i1, j0:j1 + 1, k0:k1 + 1] = True
        pinned[i0:i1 + 1, j0, k0:k1 + 1] = True
        pinned[i0:i1 + 1, j1, k0:k1 + 1] = True
        pinned[i0:i1 + 1, j0:j1 + 1, k0] = True

        face = np.zeros((nx, ny), dtype=bool)
        face[i0 + 1:i1, j0 + 1:j1] = True
        split2 = np.zeros((nx, ny), dtype=bool)
        if closed:
            if mode is ScreenMode.DIRICHLET:
                pinned[:, :, k1] |= face
            else:
                split2 = face.copy()
        else:
            if layout is None:
                raise ValueError("open interface needs a patch layout")
            res = layout.epsilon * layout.delta / 4.0
            if max(outer.h[0], outer.h[1]) > res + 1e-12:
                raise ValueError("unresolved patch: require in-plane h <= eps*delta/4")
            xs, ys = outer.axis_nodes(0), outer.axis_nodes(1)
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            on_patch = layout.contains_many(X, Y) & face
            if not np.any(on_patch):
                raise ValueError("unresolved patch: no face node falls in any patch")
            if mode is ScreenMode.DIRICHLET:
                pinned[:, :, k1] |= on_patch      # patches pinned, windows shared
            else:
                split2 = face & ~on_patch         # screen split, windows shared

        self.pinned = pinned
        self.k1 = k1
        base = -np.ones(outer.shape, dtype=np.int64)
        nfree = int(np.count_nonzero(~pinned))
        base[~pinned] = np.arange(nfree)
        upper2 = base[:, :, k1].copy()
        nsplit = int(np.count_nonzero(split2))
        upper2[split2] = nfree + np.arange(nsplit)
        self.base, self.upper2, self.split2 = base, upper2, split2
        self.n = nfree + nsplit
        self._stiff_cache = {}

    # -- assembly ---------------------------------------------------------

    def _upper_view(self) -> np.ndarray:
        U = self.base.copy()
        U[:, :, self.k1] = self.upper2
        return U

    def stiffness(self, side: str | None = None) -> SparseMatrix:
        """Energetic stiffness; side='below'/'above' keeps one-sided duals only."""
        if side in self._stiff_cache:
            return self._stiff_cache[side]
        outer, k1 = self.outer, self.k1
        hx, hy, hz = outer.h
        wx, wy, wz = (outer.axis_weights(d) for d in range(3))
        U = self._upper_view()
        a_all, b_all, w_all = [], [], []

        # z-edges: below-plane edges end at the lower copy, above start at upper
        a = U[:, :, :-1]
        b = self.base[:, :, 1:]
        w = (wx[:, None, None] * wy[None, :, None] / hz) * np.ones(outer.shape[2] - 1)
        keep = np.ones(outer.shape[2] - 1, dtype=bool)
        if side == "below":
            keep = np.arange(outer.shape[2] - 1) < k1
        elif side == "above":
            keep = np.arange(outer.shape[2] - 1) >= k1
        a_all.append(a[:, :, keep].ravel())
        b_all.append(b[:, :, keep].ravel())
        w_all.append(np.broadcast_to(w, a.shape)[:, :, keep].ravel())

        # lateral edges: full weight off the plane, half per side in the plane
        for d, (wt, ht) in ((0, (wy, hx)), (1, (wx, hy))):
            if d == 0:
                sa = self.base[:-1, :, :]
                sb = self.base[1:, :, :]
                ua = self._upper_view()[:-1, :, k1]
                ub = self._upper_view()[1:, :, k1]
                trans = wt[None, :, None]
            else:
                sa = self.base[:, :-1, :]
                sb = self.base[:, 1:, :]
                ua = self._upper_view()[:, :-1, k1]
                ub = self._upper_view()[:, 1:, k1]
                trans = wt[:, None, None]
            wz_line = wz.copy()
            wz_line[k1] = 0.5 * hz      # lower half of the dual slab
            W = trans * wz_line[None, None, :] / ht
            W = np.broadcast_to(W, sa.shape).copy()
            keep3 = np.ones(sa.shape, dtype=bool)
            if side == "above":
                keep3[:, :, :k1] = False
                W[:, :, k1] = 0.0       # lower half belongs to the other side
                keep3[:, :, k1] = False
            elif side == "below":
                keep3[:, :, k1 + 1:] = False
            a_all.append(sa[keep3].ravel())
            b_all.append(sb[keep3].ravel())
            w_all.append(W[keep3].ravel())
            if side != "below":
                w_up = np.broadcast_to(trans[..., 0] * (0.5 * hz) / ht, ua.shape)
                a_all.append(ua.ravel())
                b_all.append(ub.ravel())
                w_all.append(w_up.ravel())

        A = graph_laplacian(self.n, np.concatenate(a_all), np.concatenate(b_all),
                            np.concatenate(w_all))
        self._stiff_cache[side] = A
        return A

    def dof_volumes(self, side: str | None = None) -> np.ndarray:
        """Lumped volume per dof; plane nodes get half per side."""
        outer, k1 = self.outer, self.k1
        vol3 = outer.node_volumes()
        lower = vol3.copy()
        plane_half = vol3[:, :, k1] * 0.5
        lower[:, :, k1] = plane_half
        out = np.zeros(self.n)
        if side != "above":
            sel = self.base >= 0
            if side == "below":
                sel = sel & (np.arange(outer.shape[2])[None, None, :] <= k1)
            np.add.at(out, self.base[sel], lower[sel])
        if side != "below":
            if side == "above":
                sel = self.base >= 0
                sel = sel & (np.arange(outer.shape[2])[None, None, :] > k1)
                np.add.at(out, self.base[sel], vol3[sel])
            ok = self.upper2 >= 0
            np.add.at(out, self.upper2[ok], plane_half[ok])
        return out

    def absorb_areas(self) -> np.ndarray:
        """Lumped outer-face areas per dof (for absorbing boundary terms)."""
        outer = self.outer
        wx, wy, wz = (outer.axis_weights(d) for d in range(3))
        s3 = np.zeros(outer.shape)
        s3[0, :, :] += wy[:, None] * wz[None, :]
        s3[-1, :, :] += wy[:, None] * wz[None, :]
        s3[:, 0, :] += wx[:, None] * wz[None, :]
        s3[:, -1, :] += wx[:, None] * wz[None, :]
        s3[:, :, 0] += wx[:, None] * wy[None, :]
        s3[:, :, -1] += wx[:, None] * wy[None, :]
        out = np.zeros(self.n)
        sel = self.base >= 0
        np.add.at(out, self.base[sel], s3[sel])
        return out

    def load(self, F3: np.ndarray, side: str | None = None) -> np.ndarray:
        """Right-hand side -int F v for a single-valued source field."""
        outer, k1 = self.outer, self.k1
        vol3 = outer.node_volumes()
        plane_half = vol3[:, :, k1] * 0.5
        b = np.zeros(self.n, dtype=F3.dtype)
        lower = vol3.copy()
        lower[:, :, k1] = plane_half
        if side != "above":
            sel = self.base >= 0
            if side == "below":
                sel = sel & (np.arange(outer.shape[2])[None, None, :] <= k1)
            np.add.at(b, self.base[sel], -(lower * F3)[sel])
        if side != "below":
            if side == "above":
                sel = self.base >= 0
                sel = sel & (np.arange(outer.shape[2])[None, None, :] > k1)
                np.add.at(b, self.base[sel], -(vol3 * F3)[sel])
            ok = self.upper2 >= 0
            np.add.at(b, self.upper2[ok], -(plane_half * F3[:, :, k1])[ok])
        return b

    def field_from(self, x: np.ndarray) -> "TwoDomainField":
        vals = np.zeros(self.outer.shape, dtype=x.dtype)
        vals[self.base >= 0] = x[self.base[self.base >= 0]]
        up = np.zeros(self.outer.shape[:2], dtype=x.dtype)
        ok = self.upper2 >= 0
        up[ok] = x[self.upper2[ok]]
        return TwoDomainField(self.outer, self.inner, vals, up, self.k1, self.ir)

    def window_dofs(self) -> np.ndarray:
        """Dofs of shared (continuous) face-interior nodes."""
        i0, i1, j0, j1, _, k1 = self.ir
        face = np.zeros(self.outer.shape[:2], dtype=bool)
        face[i0 + 1:i1, j0 + 1:j1] = True
        shared = face & ~self.split2 & (self.base[:, :, k1] >= 0)
        return self.base[:, :, k1][shared]


def _cells_mean_sq(v: np.ndarray) -> np.ndarray:
    """Mean of |v|^2 over the 8 corners of every grid cell."""
    acc = None
    for sx in (slice(None, -1), slice(1, None)):
        for sy in (slice(None, -1), slice(1, None)):
            for sz in (slice(None, -1), slice(1, None)):
                blk = np.abs(v[sx, sy, sz]) ** 2
                acc = blk if acc is None else acc + blk
    return acc / 8.0


@dataclass
class TwoDomainField:
    """Field on the outer grid with independent upper copies on the screen.

    values holds the lower-side view (and everything away from the plane);
    upper_plane holds the upper-side values in the plane (equal to the lower
    ones at shared and pinned nodes).
    """

    outer: BoxRegion
    inner: BoxRegion
    values: np.ndarray
    upper_plane: np.ndarray
    k1: int
    ir: tuple

    def upper_view(self) -> np.ndarray:
        v = self.values.copy()
        v[:, :, self.k1] = self.upper_plane
        return v

    def inner_grid(self) -> BoxRegion:
        return BoxRegion(self.inner.lo, self.inner.hi, self.outer.h)

    def restrict_inner(self) -> GridField:
        i0, i1, j0, j1, k0, k1 = self.ir
        sub = self.values[i0:i1 + 1, j0:j1 + 1, k0:k1 + 1]
        return GridField(self.inner_grid(), np.ascontiguousarray(sub))

    def _cell_volume(self) -> float:
        return self.outer.h[0] * self.outer.h[1] * self.outer.h[2]

    def _inner_cell_mask(self) -> np.ndarray:
        i0, i1, j0, j1, k0, k1 = self.ir
        nx, ny, nz = self.outer.shape
        m = np.zeros((nx - 1, ny - 1, nz - 1), dtype=bool)
        m[i0:i1, j0:j1, k0:k1] = True
        return m

    def inner_l2(self) -> float:
        cells = _cells_mean_sq(self.values)
        return math.sqrt(float(np.sum(cells[self._inner_cell_mask()])) * self._cell_volume())

    def outer_l2(self) -> float:
        cells = _cells_mean_sq(self.upper_view())
        return math.sqrt(float(np.sum(cells[~self._inner_cell_mask()])) * self._cell_volume())

    def jump_l2(self) -> float:
        """Surface L2 norm of the across-screen jump over the interface face."""
        i0, i1, j0, j1, _, _ = self.ir
        jump = self.upper_plane - self.values[:, :, self.k1]
        sq = 0.25 * (np.abs(jump[:-1, :-1]) ** 2 + np.abs(jump[1:, :-1]) ** 2
                     + np.abs(jump[:-1, 1:]) ** 2 + np.abs(jump[1:, 1:]) ** 2)
        area = self.outer.h[0] * self.outer.h[1]
        return math.sqrt(float(np.sum(sq[i0:i1, j0:j1])) * area)

    def screen_trace_l2(self) -> float:
        """Surface L2 norm of the (lower) trace over the interface face."""
        i0, i1, j0, j1, _, _ = self.ir
        tr = self.values[:, :, self.k1]
        sq = 0.25 * (np.abs(tr[:-1, :-1]) ** 2 + np.abs(tr[1:, :-1]) ** 2
                     + np.abs(tr[:-1, 1:]) ** 2 + np.abs(tr[1:, 1:]) ** 2)
        area = self.outer.h[0] * self.outer.h[1]
        return math.sqrt(float(np.sum(sq[i0:i1, j0:j1])) * area)

    def diff(self, other: "TwoDomainField") -> "TwoDomainField":
        return TwoDomainField(self.outer, self.inner, self.values - other.values,
                              self.upper_plane - other.upper_plane, self.k1, self.ir)


def _sample_outer(outer: BoxRegion, F) -> np.ndarray:
    if callable(F):
        X, Y, Z = np.meshgrid(*(outer.axis_nodes(d) for d in range(3)), indexing="ij")
        return np.asarray(F(X, Y, Z), dtype=float)
    arr = np.asarray(F, dtype=float)
    if arr.shape != outer.shape:
        raise ValueError("source shape does not match the outer grid")
    return arr


def solve_screened(spec: TransmissionSpec, tol: float = 1e-9) -> TwoDomainField:
    """Solution of the screened transmission problem on the given grids."""
    sys_ = _ScreenSystem(spec.outer, spec.inner, spec.layout, spec.mode)
    F3 = _sample_outer(spec.outer, spec.F)
    A = sys_.stiffness()
    b = sys_.load(F3)
    x, _ = cg_solve(A, b, tol=tol)
    return sys_.field_from(x)


def solve_decoupled_limit(spec: TransmissionSpec, mode: ScreenMode | None = None,
                          tol: float = 1e-9) -> TwoDomainField:
    """Limit pair with a fully closed interface (independent inner/outer solves)."""
    mode = mode or spec.mode
    sys_ = _ScreenSystem(spec.outer, spec.inner, None, mode, closed=True)
    F3 = _sample_outer(spec.outer, spec.F)
    A = sys_.stiffness()
    b = sys_.load(F3)
    x, _ = cg_solve(A, b, tol=tol)
    return sys_.field_from(x)


def fit_screen_grid(outer_lo, outer_hi, inner_lo, inner_hi, plane_target: float,
                    z_target: float | None = None) -> tuple[BoxRegion, BoxRegion]:
    """Conforming outer/inner grids with in-plane spacing <= plane_target.

    Spacings are chosen per axis as extent/m with the smallest m that puts
    the inner walls on grid planes; the vertical target defaults to the
    in-plane one.
    """
    if z_target is None:
        z_target = plane_target
    h = []
    for d, target in ((0, plane_target), (1, plane_target), (2, z_target)):
        ext = outer_hi[d] - outer_lo[d]
        m = max(1, math.ceil(ext / target - 1e-12))
        while True:
            hd = ext / m
            a = (inner_lo[d] - outer_lo[d]) / hd
            b = (inner_hi[d] - outer_lo[d]) / hd
            if abs(a - round(a)) < 1e-9 and abs(b - round(b)) < 1e-9:
                break
            m += 1
        h.append(ext / m)
    outer = BoxRegion.make(outer_lo, outer_hi, tuple(h))
    inner = BoxRegion.make(inner_lo, inner_hi, tuple(h))
    return outer, inner


def decoupling_study(outer_lo, outer_hi, inner_lo, inner_hi, mode: ScreenMode,
                     regime: str, epsilons, F, plate=None, tol: float = 1e-9,
                     z_coarsen: float | None = None):
    """Distance of screened solutions to the decoupled limits over a scale sweep.

    The proven regimes pair the Dirichlet screen with delta = eps^2 and the
    Neumann screen with delta = sqrt(eps); other combinations are rejected.
    Each row reports the inner and outer restriction errors and the screen
    trace (Dirichlet) or interface jump (Neumann).
    """
    from .geometry import PlateShape
    from .homogenization_lab import schedule_delta
    plate = plate or PlateShape.disk(1.0)
    if mode is ScreenMode.DIRICHLET and regime != "pinf":
        raise ValueError("configuration error: Dirichlet screen decouples for p = infinity")
    if mode is ScreenMode.NEUMANN and regime != "p0":
        raise ValueError("configuration error: Neumann screen decouples for p = 0")
    rows = []
    for eps in sorted(epsilons, reverse=True):
        delta = schedule_delta(regime, eps)
        ztarget = None if z_coarsen is None else max(eps * delta / 4.0, z_coarsen(eps, delta))
        outer, inner = fit_screen_grid(outer_lo, outer_hi, inner_lo, inner_hi,
                                       eps * delta / 4.0, ztarget)
        layout = PatchLayout(plate, eps, delta, inner.top_face_rect())
        spec = TransmissionSpec(outer, inner, layout, mode, F)
        u = solve_screened(spec, tol=tol)
        limit = solve_decoupled_limit(spec, tol=tol)
        d = u.diff(limit)
        rows.append({
            "eps": eps, "delta": delta, "h_plane": outer.h[0], "h_z": outer.h[2],
            "inner_err": d.inner_l2(), "outer_err": d.outer_l2(),
            "screen_trace_or_jump": (u.screen_trace_l2() if mode is ScreenMode.DIRICHLET
                                     else u.jump_l2()),
            "inner_limit_l2": limit.inner_l2(), "outer_limit_l2": limit.outer_l2(),
        })
    return rows
