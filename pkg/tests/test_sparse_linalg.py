import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from screenlab.sparse_linalg import (SolverError, SparseMatrix, bicgstab_solve,
                                     cg_solve, dense_solve, smallest_steklov_pair)


def csr(dense, symmetric=False):
    return SparseMatrix(sp.csr_matrix(np.asarray(dense)), symmetric=symmetric)


class TestCg:
    def test_identity(self):
        b = np.array([3.0, -1.0, 2.0])
        x, stats = cg_solve(csr(np.eye(3)), b, tol=1e-12)
        assert np.allclose(x, b, atol=1e-12)
        assert stats.residual <= 1e-12

    def test_1d_laplacian_matches_dense(self):
        A = np.array([[2.0, -1, 0], [-1, 2, -1], [0, -1, 2]])
        b = np.ones(3)
        x, _ = cg_solve(csr(A), b, tol=1e-12)
        assert np.allclose(x, dense_solve(A, b), atol=1e-10)

    def test_diagonal(self):
        x, _ = cg_solve(csr(np.diag([2.0, 2.0])), np.array([4.0, 6.0]), tol=1e-14)
        assert np.allclose(x, [2.0, 3.0])

    def test_zero_rhs_is_instant(self):
        x, stats = cg_solve(csr(np.diag([2.0, 3.0])), np.zeros(2))
        assert stats.iterations == 0
        assert np.all(x == 0)

    def test_cap_carries_best_iterate(self):
        rng = np.random.default_rng(0)
        M = rng.standard_normal((30, 30))
        A = M @ M.T + 30 * np.eye(30)
        b = rng.standard_normal(30)
        with pytest.raises(SolverError) as err:
            cg_solve(csr(A), b, tol=1e-14, max_iter=2)
        assert err.value.best_x is not None
        assert err.value.stats.iterations == 2

    def test_tol_validation(self):
        with pytest.raises(ValueError):
            cg_solve(csr(np.eye(2)), np.ones(2), tol=2.0)


class TestBicgstab:
    def test_imaginary_identity(self):
        A = csr(1j * np.eye(2))
        x, _ = bicgstab_solve(A, np.array([1.0, 0.0]), tol=1e-12)
        assert np.allclose(x, [-1j, 0.0], atol=1e-10)

    def test_random_complex_vs_dense(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((50, 50)) + 1j * rng.standard_normal((50, 50))
        A += np.diag(20.0 + np.abs(A).sum(axis=1))
        b = rng.standard_normal(50) + 1j * rng.standard_normal(50)
        x, _ = bicgstab_solve(csr(A), b, tol=1e-12)
        assert np.linalg.norm(x - dense_solve(A, b)) <= 1e-8 * np.linalg.norm(b)

    def test_zero_rhs(self):
        x, stats = bicgstab_solve(csr(np.eye(3) + 0j), np.zeros(3))
        assert stats.iterations == 0
        assert np.all(x == 0)


class TestDenseSolve:
    def test_identity(self):
        b = np.array([1.0, 2.0])
        assert np.allclose(dense_solve(np.eye(2), b), b)

    def test_hilbert(self):
        A = sla.hilbert(4)
        x = dense_solve(A, A @ np.ones(4))
        assert np.allclose(x, 1.0, atol=1e-8)

    def test_permutation(self):
        P = np.eye(4)[[2, 0, 3, 1]]
        b = np.array([1.0, 2.0, 3.0, 4.0])
        assert np.allclose(dense_solve(P, b), P.T @ b)

    def test_singular_raises(self):
        with pytest.raises(SolverError):
            dense_solve(np.zeros((2, 2)), np.ones(2))

    def test_size_cap(self):
        with pytest.raises(ValueError):
            dense_solve(np.zeros((10_001, 10_001)), np.zeros(10_001))


class TestSteklovPair:
    def test_full_mass(self):
        lam, v = smallest_steklov_pair(csr(np.diag([1.0, 2.0])), np.array([1.0, 1.0]),
                                       tol=1e-12)
        assert lam == pytest.approx(1.0, abs=1e-10)
        assert abs(v[0]) == pytest.approx(1.0, abs=1e-6)

    def test_constrained_mass_kills_first_coordinate(self):
        lam, v = smallest_steklov_pair(csr(np.diag([1.0, 2.0])), np.array([0.0, 1.0]),
                                       tol=1e-12)
        assert lam == pytest.approx(2.0, abs=1e-10)

    def test_empty_trace(self):
        with pytest.raises(ValueError, match="empty trace"):
            smallest_steklov_pair(csr(np.eye(3)), np.zeros(3))

    def test_random_pencil_vs_dense_oracle(self):
        rng = np.random.default_rng(7)
        M = rng.standard_normal((40, 40))
        A = M @ M.T + 40 * np.eye(40)
        B = np.abs(rng.standard_normal(40))
        B[rng.choice(40, 10, replace=False)] = 0.0
        lam, v = smallest_steklov_pair(csr(A), B, tol=1e-10)
        vals = sla.eig(A, np.diag(B), right=False)
        vals = np.sort(np.real(vals[np.isfinite(vals)]))
        assert abs(lam - vals[0]) <= 1e-6 * abs(vals[0])
        # normalization v^T B v = 1
        assert float(v @ (B * v)) == pytest.approx(1.0, abs=1e-8)

    def test_rayleigh_quotient_bound(self):
        rng = np.random.default_rng(3)
        M = rng.standard_normal((25, 25))
        A = M @ M.T + 25 * np.eye(25)
        B = np.abs(rng.standard_normal(25))
        lam, _ = smallest_steklov_pair(csr(A), B, tol=1e-10)
        for _ in range(100):
            w = rng.standard_normal(25)
            wBw = float(w @ (B * w))
            if wBw <= 1e-12:
                continue
            assert lam <= float(w @ (A @ w)) / wBw + 1e-8


class TestDeterminism:
    def test_cg_bit_identical(self):
        rng = np.random.default_rng(11)
        M = rng.standard_normal((60, 60))
        A = csr(M @ M.T + 60 * np.eye(60))
        b = rng.standard_normal(60)
        x1, s1 = cg_solve(A, b, tol=1e-11)
        x2, s2 = cg_solve(A, b, tol=1e-11)
        assert x1.tobytes() == x2.tobytes()
        assert s1.iterations == s2.iterations

    def test_bicgstab_bit_identical(self):
        rng = np.random.default_rng(12)
        A = rng.standard_normal((40, 40)) + 1j * rng.standard_normal((40, 40))
        A += np.diag(15.0 + np.abs(A).sum(axis=1))
        b = rng.standard_normal(40) + 0j
        x1, _ = bicgstab_solve(csr(A), b, tol=1e-10)
        x2, _ = bicgstab_solve(csr(A), b, tol=1e-10)
        assert x1.tobytes() == x2.tobytes()


@given(st.integers(2, 30), st.integers(0, 2 ** 31 - 1))
@settings(max_examples=25, deadline=None)
def test_cg_agrees_with_dense_on_random_spd(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    A = M @ M.T + n * np.eye(n)
    b = rng.standard_normal(n)
    x, _ = cg_solve(csr(A), b, tol=1e-13)
    assert np.linalg.norm(x - dense_solve(A, b)) <= 1e-8 * max(1.0, np.linalg.norm(b))
