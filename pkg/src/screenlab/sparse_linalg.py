"""Sparse iterative kernels and the generalized surface-mass eigensolver.

Storage is CSR (scipy backs the container); the Krylov loops are written
out so iteration counts, residual histories, and failure payloads are fully
under our control and bit-reproducible across runs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SparseMatrix",
    "SolveStats",
    "SolverError",
    "cg_solve",
    "bicgstab_solve",
    "dense_solve",
    "smallest_steklov_pair",
]


class SolverError(RuntimeError):
    """Iteration failure; carries the best iterate reached so far."""

    def __init__(self, message: str, best_x=None, stats=None):
        super().__init__(message)
        self.best_x = best_x
        self.stats = stats


@dataclass
class SolveStats:
    iterations: int
    residual: float       # relative, ||Ax - b|| / ||b||
    elapsed: float        # seconds, informational only


class SparseMatrix:
    """Square CSR matrix with an explicit symmetry promise."""

    def __init__(self, mat: sp.spmatrix, symmetric: bool = False):
        mat = mat.tocsr()
        if mat.shape[0] != mat.shape[1]:
            raise ValueError("matrix must be square")
        mat.sum_duplicates()
        mat.sort_indices()
        self.csr = mat
        self.symmetric = symmetric

    @staticmethod
    def from_coo(n: int, rows, cols, vals, symmetric: bool = False) -> "SparseMatrix":
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        return SparseMatrix(mat, symmetric=symmetric)

    @property
    def n(self) -> int:
        return self.csr.shape[0]

    @property
    def dtype(self):
        return self.csr.dtype

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.csr @ x

    def diagonal(self) -> np.ndarray:
        return self.csr.diagonal()

    def todense(self) -> np.ndarray:
        return self.csr.toarray()


def _as_csr(A):
    return A.csr if isinstance(A, SparseMatrix) else sp.csr_matrix(A)


def _default_cap(n: int) -> int:
    return max(100, int(math.ceil(50.0 * math.sqrt(n))))


def cg_solve(A, b, tol: float = 1e-10, x0=None, max_iter: int | None = None):
    """Jacobi-preconditioned conjugate gradients for SPD systems.

    Returns (x, SolveStats) with relative residual <= tol. Raises
    SolverError carrying the best iterate when the iteration cap
    (default 50 sqrt(n)) is exceeded.
    """
    if not (0.0 < tol < 1.0):
        raise ValueError("tol must lie in (0, 1)")
    M = _as_csr(A)
    n = M.shape[0]
    b = np.asarray(b, dtype=float)
    t_start = time.perf_counter()
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        return np.zeros(n), SolveStats(0, 0.0, time.perf_counter() - t_start)
    dinv = M.diagonal()
    if np.any(dinv <= 0):
        raise ValueError("matrix diagonal must be positive for Jacobi/CG")
    dinv = 1.0 / dinv
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - M @ x
    res0 = float(np.linalg.norm(r)) / nb
    if res0 <= tol:
        return x, SolveStats(0, res0, time.perf_counter() - t_start)
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    cap = _default_cap(n) if max_iter is None else max_iter
    best_x, best_res = x.copy(), res0
    for it in range(1, cap + 1):
        Ap = M @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise SolverError("CG breakdown: matrix not positive definite",
                              best_x=best_x, stats=SolveStats(it - 1, best_res,
                                                              time.perf_counter() - t_start))
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = float(np.linalg.norm(r)) / nb
        if res < best_res:
            best_res, best_x = res, x.copy()
        if res <= tol:
            return x, SolveStats(it, res, time.perf_counter() - t_start)
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not converge in {cap} iterations (residual {best_res:.3e})",
                      best_x=best_x, stats=SolveStats(cap, best_res,
                                                      time.perf_counter() - t_start))


def bicgstab_solve(A, b, tol: float = 1e-10, x0=None, max_iter: int | None = None):
    """Jacobi-preconditioned BiCGStab for general (complex) systems."""
    if not (0.0 < tol < 1.0):
        raise ValueError("tol must lie in (0, 1)")
    M = _as_csr(A)
    n = M.shape[0]
    dtype = np.result_type(M.dtype, np.asarray(b).dtype)
    b = np.asarray(b, dtype=dtype)
    t_start = time.perf_counter()
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        return np.zeros(n, dtype=dtype), SolveStats(0, 0.0, time.perf_counter() - t_start)
    diag = M.diagonal()
    if np.any(diag == 0):
        raise ValueError("zero diagonal entry; Jacobi preconditioner undefined")
    dinv = 1.0 / diag
    x = np.zeros(n, dtype=dtype) if x0 is None else np.array(x0, dtype=dtype)
    r = b - M @ x
    res0 = float(np.linalg.norm(r)) / nb
    if res0 <= tol:
        return x, SolveStats(0, res0, time.perf_counter() - t_start)
    r0 = r.copy()
    rho = alpha = omega = 1.0 + 0.0j if np.iscomplexobj(r) else 1.0
    v = np.zeros_like(r)
    p = np.zeros_like(r)
    cap = _default_cap(n) if max_iter is None else max_iter
    best_x, best_res = x.copy(), res0
    eps = 1e-30
    for it in range(1, cap + 1):
        rho_new = np.vdot(r0, r)
        if abs(rho_new) < eps * nb * nb:
            raise SolverError("BiCGStab breakdown (rho ~ 0)", best_x=best_x,
                              stats=SolveStats(it - 1, best_res, time.perf_counter() - t_start))
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        phat = dinv * p
        v = M @ phat
        denom = np.vdot(r0, v)
        if abs(denom) < eps:
            raise SolverError("BiCGStab breakdown (r0.v ~ 0)", best_x=best_x,
                              stats=SolveStats(it - 1, best_res, time.perf_counter() - t_start))
        alpha = rho / denom
        s = r - alpha * v
        if float(np.linalg.norm(s)) / nb <= tol:
            x = x + alpha * phat
            res = float(np.linalg.norm(b - M @ x)) / nb
            return x, SolveStats(it, res, time.perf_counter() - t_start)
        shat = dinv * s
        t = M @ shat
        tt = np.vdot(t, t)
        if abs(tt) < eps:
            raise SolverError("BiCGStab breakdown (t ~ 0)", best_x=best_x,
                              stats=SolveStats(it - 1, best_res, time.perf_counter() - t_start))
        omega = np.vdot(t, s) / tt
        x = x + alpha * phat + omega * shat
        r = s - omega * t
        res = float(np.linalg.norm(r)) / nb
        if res < best_res:
            best_res, best_x = res, x.copy()
        if res <= tol:
            return x, SolveStats(it, res, time.perf_counter() - t_start)
        if abs(omega) < eps:
            raise SolverError("BiCGStab breakdown (omega ~ 0)", best_x=best_x,
                              stats=SolveStats(it, best_res, time.perf_counter() - t_start))
    raise SolverError(f"BiCGStab did not converge in {cap} iterations "
                      f"(residual {best_res:.3e})", best_x=best_x,
                      stats=SolveStats(cap, best_res, time.perf_counter() - t_start))


def dense_solve(A, b) -> np.ndarray:
    """Pivoted dense elimination; the small-system oracle."""
    if isinstance(A, SparseMatrix):
        A = A.todense()
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if A.shape[0] > 10_000:
        raise ValueError("dense_solve limited to n <= 10^4")
    try:
        return np.linalg.solve(A, np.asarray(b))
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"dense solve failed: {exc}") from exc


def smallest_steklov_pair(A, B_diag, tol: float = 1e-8, max_outer: int = 500,
                          cg_tol: float | None = None, cg_max_iter: int | None = None):
    """Smallest eigenvalue of A v = lambda B v with B a diagonal surface mass.

    Inverse power iteration on the pencil: each step solves A y = B x by
    Jacobi-CG (warm-started from the previous step). Stops when successive
    eigenvalue estimates agree to tol relatively and the eigen-residual
    ||A v - lambda B v|| <= tol ||A v||. Returns (lambda, v) normalized to
    v^T B v = 1.
    """
    Bd = np.asarray(B_diag, dtype=float)
    if np.all(Bd == 0.0):
        raise ValueError("empty trace: B has no positive entries")
    if np.any(Bd < 0.0):
        raise ValueError("B must be positive semidefinite (diagonal, >= 0)")
    M = _as_csr(A)
    n = M.shape[0]
    if Bd.shape != (n,):
        raise ValueError("B diagonal has wrong length")
    if cg_tol is None:
        cg_tol = max(min(1e-3 * tol, 1e-10), 1e-14)

    x = np.ones(n)
    x /= math.sqrt(float(x @ (Bd * x)))
    lam = None
    y = None
    for it in range(1, max_outer + 1):
        rhs = Bd * x
        y, _ = cg_solve(M, rhs, tol=cg_tol, x0=y, max_iter=cg_max_iter)
        yBy = float(y @ (Bd * y))
        if yBy <= 0.0:
            raise SolverError("inverse iteration collapsed onto the B-null space")
        lam_new = float(y @ (M @ y)) / yBy
        x = y / math.sqrt(yBy)
        if lam is not None and abs(lam_new - lam) <= tol * abs(lam_new):
            Av = M @ x
            resid = float(np.linalg.norm(Av - lam_new * (Bd * x)))
            if resid <= tol * float(np.linalg.norm(Av)):
                lam = lam_new
                break
        lam = lam_new
    else:
        raise SolverError(f"eigen-iteration did not settle in {max_outer} steps",
                          best_x=x, stats=None)
    if float(np.sum(Bd * x)) < 0:   # deterministic sign: positive surface mean
        x = -x
    return lam, x
