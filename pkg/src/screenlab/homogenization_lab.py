"""Mixed alternating boundary conditions on a box and their homogenized limits.

The perturbed problem pins the solution on the patch lattice of the top
face and imposes a Robin condition (coefficient q) on the complement; the
walls and bottom are Dirichlet. Depending on how the patch scale relates to
the lattice scale, the limit is either the all-Dirichlet problem or a Robin
problem on the whole top face with an effective coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fdcore import assemble_box_laplacian
from .fields import GridField
from .geometry import BoxRegion, PatchLayout, PlateShape
from .sparse_linalg import cg_solve

__all__ = [
    "MixedBvpSpec",
    "ConvergenceReport",
    "EffectiveQFit",
    "sample_on_grid",
    "assemble_mixed",
    "solve_perturbed",
    "solve_dirichlet_limit",
    "solve_robin_limit",
    "convergence_study",
    "fit_effective_Q",
    "trace_ratio_check",
    "schedule_delta",
    "grid_for_layout",
]

DEFAULT_DOMAIN = ((0.0, 0.0, -1.0), (2.0, 2.0, 0.0))


def sample_on_grid(box: BoxRegion, f) -> np.ndarray:
    """Sample a callable f(x, y, z) (or pass an array through) on the grid."""
    if callable(f):
        X, Y, Z = np.meshgrid(*(box.axis_nodes(d) for d in range(3)), indexing="ij")
        return np.asarray(f(X, Y, Z), dtype=float)
    arr = np.asarray(f, dtype=float)
    if arr.shape != box.shape:
        raise ValueError("source field shape does not match grid")
    return arr


@dataclass(frozen=True)
class MixedBvpSpec:
    """Data of the perturbed mixed problem on a half-space box."""

    domain: BoxRegion
    layout: PatchLayout
    q: float
    f: np.ndarray

    def __post_init__(self):
        if self.q < 0:
            raise ValueError("Robin coefficient must be nonnegative")
        if not self.domain.has_top_on_plane():
            raise ValueError("domain top face must lie in the plane z = 0")
        if tuple(np.round(self.layout.region, 12)) != tuple(np.round(self.domain.top_face_rect(), 12)):
            raise ValueError("layout region must equal the top face")


def _boundary_pinned(box: BoxRegion, include_top: bool) -> np.ndarray:
    pinned = np.zeros(box.shape, dtype=bool)
    pinned[0, :, :] = pinned[-1, :, :] = True
    pinned[:, 0, :] = pinned[:, -1, :] = True
    pinned[:, :, 0] = True
    if include_top:
        pinned[:, :, -1] = True
    return pinned


def _top_interior(box: BoxRegion) -> np.ndarray:
    m = np.zeros(box.shape[:2], dtype=bool)
    m[1:-1, 1:-1] = True
    return m


def assemble_mixed(domain: BoxRegion, f: np.ndarray, *, layout: PatchLayout | None,
                   q: float = 0.0, robin_all: float | None = None,
                   dirichlet_top: bool = False):
    """Assemble stiffness + Robin diagonal and the load for one box problem.

    Exactly one of three top-face treatments applies: the alternating
    layout (patches pinned, Robin q on the complement), a uniform Robin
    coefficient robin_all, or full Dirichlet. Returns (A, idx, b).
    """
    pinned = _boundary_pinned(domain, include_top=dirichlet_top)
    robin = np.zeros(domain.shape)
    top = _top_interior(domain)
    if dirichlet_top:
        pass
    elif robin_all is not None:
        if robin_all < 0:
            raise ValueError("Robin coefficient must be nonnegative")
        areas = domain.top_face_areas()
        robin[:, :, -1][top] = robin_all * areas[top]
    else:
        if layout is None:
            raise ValueError("alternating mode needs a layout")
        hx, hy = domain.h[0], domain.h[1]
        res = layout.epsilon * layout.delta / 4.0
        if max(hx, hy, domain.h[2]) > res + 1e-12:
            raise ValueError("unresolved patch: require h <= eps * delta / 4")
        xs, ys = domain.axis_nodes(0), domain.axis_nodes(1)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        on_patch = layout.contains_many(X, Y) & top
        if not np.any(on_patch):
            raise ValueError("unresolved patch: no grid node falls in any patch")
        pinned[:, :, -1] |= on_patch
        areas = domain.top_face_areas()
        free_top = top & ~on_patch
        robin[:, :, -1][free_top] = q * areas[free_top]
    A, idx = assemble_box_laplacian(domain, pinned, extra_diag_grid=robin)
    b = -(domain.node_volumes() * f)[~pinned]
    return A, idx, b


def _solve(domain, A, idx, b, tol, x0=None):
    x, stats = cg_solve(A, b, tol=tol, x0=x0)
    values = np.zeros(domain.shape)
    values[idx >= 0] = x[idx[idx >= 0]]
    return GridField(domain, values), stats


def solve_perturbed(spec: MixedBvpSpec, tol: float = 1e-9) -> GridField:
    """Solution of the alternating-boundary problem on the given grid."""
    f = sample_on_grid(spec.domain, spec.f)
    A, idx, b = assemble_mixed(spec.domain, f, layout=spec.layout, q=spec.q)
    field, _ = _solve(spec.domain, A, idx, b, tol)
    return field


def solve_dirichlet_limit(domain: BoxRegion, f, tol: float = 1e-9) -> GridField:
    """All-Dirichlet limit problem."""
    fg = sample_on_grid(domain, f)
    A, idx, b = assemble_mixed(domain, fg, layout=None, dirichlet_top=True)
    field, _ = _solve(domain, A, idx, b, tol)
    return field


def solve_robin_limit(domain: BoxRegion, f, Q: float, tol: float = 1e-9) -> GridField:
    """Robin limit problem with uniform coefficient Q on the top face."""
    fg = sample_on_grid(domain, f)
    A, idx, b = assemble_mixed(domain, fg, layout=None, robin_all=Q)
    field, _ = _solve(domain, A, idx, b, tol)
    return field


def schedule_delta(regime: str, eps: float, p: float | None = None) -> float:
    """Lattice scale for a patch scale under the named limit regime."""
    if regime == "pinf":
        return eps * eps
    if regime == "p0":
        return math.sqrt(eps)
    if regime == "pfix":
        if not p or p <= 0:
            raise ValueError("finite-ratio regime needs p > 0")
        return eps / p
    raise ValueError(f"unknown regime {regime!r} (expected pinf | p0 | pfix)")


def grid_for_layout(eps: float, delta: float,
                    lo=DEFAULT_DOMAIN[0], hi=DEFAULT_DOMAIN[1],
                    max_nodes: int = 40_000_000) -> BoxRegion:
    """Coarsest grid resolving the patches: isotropic h <= eps*delta/4.

    The spacing is chosen as 1/m with the smallest m that divides every
    extent to an integer count, so layouts of different scales stay on
    conforming grids. Schedules that would exceed max_nodes are rejected
    up front.
    """
    target = eps * delta / 4.0
    extents = [hi[d] - lo[d] for d in range(3)]
    m0 = max(1, math.ceil(1.0 / target - 1e-12))
    m = m0
    while any(abs(e * m - round(e * m)) > 1e-9 for e in extents):
        m += 1
        if m > 8 * m0 + 1000:
            raise ValueError("infeasible schedule: no conforming grid spacing")
    nodes = 1
    for e in extents:
        nodes *= round(e * m) + 1
    if nodes > max_nodes:
        raise ValueError(f"infeasible schedule: grid would need {nodes:,} nodes")
    return BoxRegion.make(lo, hi, 1.0 / m)


@dataclass
class ConvergenceReport:
    rows: list
    regime: str
    p: float | None
    monotone: bool


def convergence_study(regime: str, epsilons, q: float, f,
                      plate: PlateShape | None = None,
                      lo=DEFAULT_DOMAIN[0], hi=DEFAULT_DOMAIN[1],
                      p: float | None = None, tol: float = 1e-9) -> ConvergenceReport:
    """Per-epsilon distance of the perturbed solution to the regime's limit.

    For the finite-ratio regime both candidate effective coefficients are
    solved and recorded; the other regimes have a unique limit.
    """
    plate = plate or PlateShape.disk(1.0)
    epsilons = sorted(epsilons, reverse=True)
    if any(e <= 0 or e > 1 for e in epsilons):
        raise ValueError("epsilons must lie in (0, 1]")
    for eps in epsilons:  # validate the whole schedule before any solve
        grid_for_layout(eps, schedule_delta(regime, eps, p), lo, hi)
    rows = []
    for eps in epsilons:
        delta = schedule_delta(regime, eps, p)
        domain = grid_for_layout(eps, delta, lo, hi)
        layout = PatchLayout(plate, eps, delta, domain.top_face_rect())
        fg = sample_on_grid(domain, f)
        u = solve_perturbed(MixedBvpSpec(domain, layout, q, fg), tol=tol)
        row = {"eps": eps, "delta": delta, "h": domain.h[0],
               "trace_norm": u.l2_gamma1()}
        if regime == "pinf":
            limit = solve_dirichlet_limit(domain, fg, tol=tol)
            diff = GridField(domain, u.values - limit.values)
            row["l2_err"] = diff.l2()
            row["h1_err"] = diff.h1()
            row["limit_l2"] = limit.l2()
        elif regime == "p0":
            limit = solve_robin_limit(domain, fg, q, tol=tol)
            diff = GridField(domain, u.values - limit.values)
            row["l2_err"] = diff.l2()
            row["h1_err"] = diff.h1()
            row["limit_l2"] = limit.l2()
        else:
            from .capacity import plate_capacity
            c_omega = plate_capacity(plate, 3).c_omega
            for name, coef in (("paper", c_omega), ("flux", math.pi * c_omega / 2.0)):
                limit = solve_robin_limit(domain, fg, q + coef * p, tol=tol)
                diff = GridField(domain, u.values - limit.values)
                row[f"l2_err_{name}"] = diff.l2()
                row[f"h1_err_{name}"] = diff.h1()
        rows.append(row)
    errkey = "l2_err" if regime in ("pinf", "p0") else "l2_err_paper"
    errs = [r[errkey] for r in rows]
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    return ConvergenceReport(rows, regime, p, monotone)


@dataclass
class EffectiveQFit:
    Q_emp: float
    fit_residual: float
    candidates: dict      # name -> coefficient value
    distances: dict       # name -> |Q_emp - candidate|
    scanned: list         # (Q, objective) pairs actually evaluated


class _RobinScanner:
    """Re-solves the Robin limit for many Q on one fixed grid, warm-started."""

    def __init__(self, domain: BoxRegion, f: np.ndarray, tol: float):
        self.domain = domain
        self.f = f
        self.tol = tol
        self._x = None
        A, idx, b = assemble_mixed(domain, f, layout=None, robin_all=0.0)
        self.idx, self.b = idx, b
        self.base = A.csr.copy()
        top = _top_interior(domain)
        areas = domain.top_face_areas()
        gridw = np.zeros(domain.shape)
        gridw[:, :, -1][top] = areas[top]
        self.surf = gridw[idx >= 0]
        n = self.base.shape[0]
        # positions of the diagonal inside the CSR data array (always present)
        rows = np.repeat(np.arange(n), np.diff(self.base.indptr))
        self.diag_pos = np.flatnonzero(self.base.indices == rows)
        self.base_diag = self.base.data[self.diag_pos].copy()

    def solve(self, Q: float) -> GridField:
        self.base.data[self.diag_pos] = self.base_diag + Q * self.surf
        x, _ = cg_solve(self.base, self.b, tol=self.tol, x0=self._x)
        self._x = x
        values = np.zeros(self.domain.shape)
        values[self.idx >= 0] = x[self.idx[self.idx >= 0]]
        return GridField(self.domain, values)


def fit_effective_Q(u_perturbed: GridField, domain: BoxRegion, f, q: float,
                    layout: PatchLayout, c_omega: float,
                    tol: float = 1e-9, rel_tol: float = 5e-3) -> EffectiveQFit:
    """Best uniform Robin coefficient reproducing a perturbed solution.

    Scans the increment above q geometrically around the two candidate
    effective coefficients, then refines by golden section. Both candidate
    values (capacity-times-ratio and the cell-flux constant) are reported
    with their distances from the fitted optimum.
    """
    fg = sample_on_grid(domain, f)
    if not np.any(fg):
        raise ValueError("fit undefined: source is identically zero")
    ratio = layout.epsilon / layout.delta
    cand = {"paper": q + c_omega * ratio,
            "flux": q + (math.pi * c_omega / 2.0) * ratio}
    scanner = _RobinScanner(domain, fg, tol)
    evaluated = []

    def objective(Q: float) -> float:
        u = scanner.solve(Q)
        val = GridField(domain, u.values - u_perturbed.values).l2()
        evaluated.append((Q, val))
        return val

    inc_lo = (cand["paper"] - q) / 4.0
    inc_hi = (cand["flux"] - q) * 4.0
    scan = q + np.geomspace(inc_lo, inc_hi, 9)
    vals = [objective(Q) for Q in scan]
    k = int(np.argmin(vals))
    lo = scan[max(k - 1, 0)]
    hi = scan[min(k + 1, len(scan) - 1)]
    # golden-section refinement of the bracket
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - gr * (b - a)
    c2 = a + gr * (b - a)
    f1, f2 = objective(c1), objective(c2)
    while (b - a) > rel_tol * max(1.0, b):
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - gr * (b - a)
            f1 = objective(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + gr * (b - a)
            f2 = objective(c2)
    Q_emp = 0.5 * (a + b)
    resid = objective(Q_emp)
    return EffectiveQFit(Q_emp, resid, cand,
                         {k: abs(Q_emp - v) for k, v in cand.items()},
                         evaluated)


def trace_ratio_check(layout: PatchLayout, domain: BoxRegion, samples: int,
                      q: float = 0.0, seed: int = 0, tol: float = 1e-9) -> float:
    """Max over random sources of the scaled boundary-trace ratio.

    The trace bound predicts ||u||_{L2(top)} <= C sqrt(delta/eps) ||u||_{H1}
    uniformly in (eps, delta); the returned max ratio estimates C.
    """
    if samples < 10:
        raise ValueError("need at least 10 samples")
    rng = np.random.default_rng(seed)
    scale = math.sqrt(layout.delta / layout.epsilon)
    worst = 0.0
    for _ in range(samples):
        f = rng.standard_normal(domain.shape)
        u = solve_perturbed(MixedBvpSpec(domain, layout, q, f), tol=tol)
        h1 = u.h1()
        if h1 == 0.0:
            continue
        worst = max(worst, u.l2_gamma1() / (scale * h1))
    return worst
