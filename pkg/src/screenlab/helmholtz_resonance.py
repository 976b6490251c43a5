"""Complex-frequency scattering through the perforated screen and its poles.

The free-space problem is truncated to a cube with a first-order absorbing
condition du/dn - i k u = 0 on its faces. The discrete resolvent is rational
in k, so evaluating the same system at complex k is a legitimate analytic
continuation; poles just below the real axis show up as sharp peaks of the
response at real k and are located by a secant iteration in the complex
plane.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import BoxRegion, PatchLayout
from .perforated_lab import ScreenMode, TwoDomainField, _ScreenSystem
from .sparse_linalg import SolverError, bicgstab_solve

__all__ = [
    "ScatterSpec",
    "ComplexField",
    "ResonanceScan",
    "PoleEstimate",
    "bump_source",
    "reference_eigenfrequency",
    "solve_helmholtz",
    "response_scan",
    "locate_pole",
]

# A complex field over the two-domain grid is structurally the same object.
ComplexField = TwoDomainField

CONTINUATION_FLOOR = -0.5   # the absorbing condition degrades below this


def bump_source(center, radius: float, amplitude: float = 1.0):
    """Compactly supported smooth bump; exactly zero outside its ball."""
    cx, cy, cz = center

    def F(X, Y, Z):
        s2 = ((X - cx) ** 2 + (Y - cy) ** 2 + (Z - cz) ** 2) / radius ** 2
        out = np.zeros_like(s2)
        inside = s2 < 1.0
        out[inside] = amplitude * np.exp(-1.0 / (1.0 - s2[inside]))
        return out

    F.support_center = (cx, cy, cz)
    F.support_radius = radius
    return F


@dataclass(frozen=True)
class ScatterSpec:
    """Truncated scattering setup around the resonator box."""

    inner: BoxRegion
    layout: PatchLayout | None    # None = fully closed screen (reference case)
    mode: ScreenMode
    F: object
    L: float                      # half-size of the truncation cube
    center: tuple | None = None   # cube center; defaults to the inner-box center

    def __post_init__(self):
        if abs(self.inner.hi[2]) > 1e-12:
            raise ValueError("resonator top face must lie in the plane z = 0")
        c = self.cube_center()
        for d in range(3):
            clearance = self.L - max(c[d] - self.inner.lo[d], self.inner.hi[d] - c[d])
            if clearance < 1.0 - 1e-12:
                raise ValueError("truncation cube must clear the resonator by >= 1")
        rad = getattr(self.F, "support_radius", None)
        if rad is not None:
            sc = self.F.support_center
            for d in range(3):
                if self.L - (abs(sc[d] - c[d]) + rad) < 1.0 - 1e-12:
                    raise ValueError("truncation cube must clear the source support by >= 1")

    def cube_center(self) -> tuple:
        if self.center is not None:
            return self.center
        return tuple(0.5 * (self.inner.lo[d] + self.inner.hi[d]) for d in range(3))

    def boxes(self) -> tuple[BoxRegion, BoxRegion]:
        """Conforming outer cube / inner box pair at the inner spacing."""
        c = self.cube_center()
        lo = tuple(c[d] - self.L for d in range(3))
        hi = tuple(c[d] + self.L for d in range(3))
        outer = BoxRegion.make(lo, hi, self.inner.h)
        return outer, self.inner


def reference_eigenfrequency(inner: BoxRegion, mode: ScreenMode) -> float:
    """Smallest eigenfrequency of the decoupled interior box, by separation.

    Dirichlet screen: the limit interior problem is all-Dirichlet. Neumann
    screen: Dirichlet on walls and bottom, Neumann on the top face, so the
    vertical mode number is half-integer.
    """
    ex, ey, ez = inner.extents
    if mode is ScreenMode.DIRICHLET:
        return math.pi * math.sqrt(1.0 / ex ** 2 + 1.0 / ey ** 2 + 1.0 / ez ** 2)
    return math.pi * math.sqrt(1.0 / ex ** 2 + 1.0 / ey ** 2 + 1.0 / (2.0 * ez) ** 2)


class ScatterOperator:
    """Caches the k-independent parts; cheap re-assembly at each wavenumber."""

    def __init__(self, spec: ScatterSpec):
        outer, inner = spec.boxes()
        self.spec = spec
        self.outer = outer
        self.sys = _ScreenSystem(outer, inner, spec.layout, spec.mode,
                                 closed=spec.layout is None, outer_bc="absorbing")
        K = self.sys.stiffness().csr
        self.A = K.astype(np.complex128)
        rows = np.repeat(np.arange(self.A.shape[0]), np.diff(self.A.indptr))
        self.diag_pos = np.flatnonzero(self.A.indices == rows)
        self.base_diag = self.A.data[self.diag_pos].copy()
        self.mass = self.sys.dof_volumes()
        self.absorb = self.sys.absorb_areas()
        F3 = self._sample(spec.F)
        self.b = self.sys.load(F3.astype(np.complex128))
        self._warm = None

    def _sample(self, F):
        if callable(F):
            X, Y, Z = np.meshgrid(*(self.outer.axis_nodes(d) for d in range(3)),
                                  indexing="ij")
            return np.asarray(F(X, Y, Z), dtype=float)
        return np.asarray(F, dtype=float)

    def check_resolution(self, k: complex):
        spacing = max(self.outer.h)
        res = math.inf
        if self.spec.layout is not None:
            res = self.spec.layout.epsilon * self.spec.layout.delta / 4.0
        wavelength = 2.0 * math.pi / max(abs(k.real), 1e-12)
        if spacing > min(res, wavelength / 10.0) + 1e-12:
            raise ValueError("grid too coarse: require h <= min(eps*delta/4, wavelength/10)")

    def solve(self, k: complex, tol: float = 1e-8, warm: bool = True,
              max_iter: int | None = None) -> ComplexField:
        if k.imag < CONTINUATION_FLOOR - 1e-12:
            raise ValueError("wavenumber below the continuation window Im k >= -0.5")
        self.check_resolution(k)
        self.A.data[self.diag_pos] = self.base_diag
        diag_shift = -(k * k) * self.mass - 1j * k * self.absorb
        self.A.data[self.diag_pos] += diag_shift
        x0 = self._warm if warm else None
        x, _ = bicgstab_solve(self.A, self.b, tol=tol, x0=x0, max_iter=max_iter)
        self._warm = x
        return self.sys.field_from(x)

    def bilinear_inner_sq(self, field: ComplexField) -> complex:
        """Unconjugated L2(inner) pairing; analytic in k along continuations."""
        i0, i1, j0, j1, k0, k1 = self.sys.ir
        v = field.values
        acc = 0.0 + 0.0j
        for sx in (slice(i0, i1), slice(i0 + 1, i1 + 1)):
            for sy in (slice(j0, j1), slice(j0 + 1, j1 + 1)):
                for sz in (slice(k0, k1), slice(k0 + 1, k1 + 1)):
                    acc += np.sum(v[sx, sy, sz] ** 2)
        vol = self.outer.h[0] * self.outer.h[1] * self.outer.h[2]
        return acc / 8.0 * vol


def solve_helmholtz(spec: ScatterSpec, k: complex, tol: float = 1e-8) -> ComplexField:
    """One scattering solve at (possibly complex) wavenumber k."""
    return ScatterOperator(spec).solve(complex(k), tol=tol, warm=False)


@dataclass
class ResonanceScan:
    k_values: np.ndarray
    amplitudes: np.ndarray
    peak_k: float
    peak_amplitude: float
    fitted_peak: float | None
    half_width: float | None
    insufficient_resolution: bool
    failures: list = field(default_factory=list)


def response_scan(spec: ScatterSpec, k_values, tol: float = 1e-8,
                  max_iter: int | None = None) -> ResonanceScan:
    """Amplitude of the interior response along a sorted list of real k.

    The peak is the largest sample; a three-point Lorentzian fit around it
    yields the refined peak and half-width when the scan is fine enough.
    """
    ks = np.asarray(sorted(k_values), dtype=float)
    op = ScatterOperator(spec)
    amps = np.full(len(ks), np.nan)
    failures = []
    for i, k in enumerate(ks):
        try:
            u = op.solve(complex(k), tol=tol, max_iter=max_iter)
            amps[i] = u.inner_l2()
        except SolverError as exc:   # extremely close to a pole
            failures.append((float(k), str(exc)))
            if exc.best_x is not None:
                amps[i] = op.sys.field_from(exc.best_x).inner_l2()
    if np.all(np.isnan(amps)):
        raise SolverError("response scan failed at every wavenumber")
    ipk = int(np.nanargmax(amps))
    peak_k, peak_a = float(ks[ipk]), float(amps[ipk])
    fitted = width = None
    poor = len(ks) < 5 or ipk in (0, len(ks) - 1)
    if 0 < ipk < len(ks) - 1 and np.all(np.isfinite(amps[ipk - 1:ipk + 2])):
        # Lorentzian amplitude: a(k) = C / sqrt((k-kp)^2 + w^2); fit 1/a^2
        coeff = np.polyfit(ks[ipk - 1:ipk + 2], 1.0 / amps[ipk - 1:ipk + 2] ** 2, 2)
        al, be, ga = coeff
        if al > 0:
            kp = -be / (2.0 * al)
            w2 = ga / al - kp * kp
            if w2 > 0:
                fitted, width = float(kp), float(math.sqrt(w2))
            else:
                poor = True
        else:
            poor = True
    return ResonanceScan(ks, amps, peak_k, peak_a, fitted, width, poor, failures)


@dataclass
class PoleEstimate:
    tau: complex
    k0: float
    iterations: int
    residual: float          # 1 / ||u||_{L2(inner)} at tau
    degenerate_real: bool    # closed-screen reference case: pole on the axis

    def __post_init__(self):
        if not self.degenerate_real and not (self.tau.imag < 0.0):
            raise ValueError("resonance pole must lie in the lower half plane")


def locate_pole(spec: ScatterSpec, k0_guess: float, second_point: complex | None = None,
                tol: float = 1e-6, max_steps: int = 40, solve_tol: float = 1e-8,
                max_iter: int | None = None, real_tol: float = 1e-6) -> PoleEstimate:
    """Secant iteration in complex k on the reciprocal interior response.

    The iterated functional is the analytic continuation of 1/||u||: the
    unconjugated quadrature of u^2 over the resonator, square-rooted on the
    branch continuous along the iteration. Its zero is the resonance pole.
    """
    op = ScatterOperator(spec)
    k0_ref = reference_eigenfrequency(spec.inner, spec.mode)
    last_sqrt = None
    last_field = [None]

    def g(k: complex) -> complex:
        nonlocal last_sqrt
        try:
            u = op.solve(k, tol=solve_tol, max_iter=max_iter)
        except SolverError as exc:
            if exc.best_x is None:
                raise
            u = op.sys.field_from(exc.best_x)
        last_field[0] = u
        s = op.bilinear_inner_sq(u)
        w = cmath.sqrt(s)
        if last_sqrt is not None and abs(-w - last_sqrt) < abs(w - last_sqrt):
            w = -w
        last_sqrt = w
        if w == 0:
            return 0.0 + 0.0j
        return 1.0 / w

    ka = complex(k0_guess)
    kb = second_point if second_point is not None else ka * (1.0 - 0.002) - 0.01j
    ga_, gb_ = g(ka), g(kb)
    it = 2
    while it < max_steps:
        if gb_ == ga_:
            break
        step = gb_ * (kb - ka) / (gb_ - ga_)
        kc = kb - step
        if kc.imag < CONTINUATION_FLOOR:
            raise SolverError("pole too deep: iteration left the continuation window")
        if abs(kc - k0_guess) > 0.5 * abs(k0_guess):
            raise SolverError("pole iteration diverged from the initial guess")
        gc_ = g(kc)
        it += 1
        ka, ga_ = kb, gb_
        kb, gb_ = kc, gc_
        if abs(kb - ka) <= tol * abs(kb):
            break
    else:
        raise SolverError(f"pole iteration did not converge in {max_steps} steps")
    tau = kb
    residual = 1.0 / last_field[0].inner_l2()
    degenerate = abs(tau.imag) <= real_tol
    if degenerate:
        tau = complex(tau.real, 0.0)
    return PoleEstimate(tau, k0_ref, it, residual, degenerate)
