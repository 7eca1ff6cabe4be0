import numpy as np
import pytest

from vemeig.gevp import (
    GevpError,
    kernel_dim,
    smallest_pencil_eigenvalue,
    solve_pencil,
    solve_singular_m,
    solve_spd,
)


def random_spd(n, seed, shift=None):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n))
    S = X @ X.T
    return S + (shift if shift is not None else n) * np.eye(n)


def det_roots_by_bisection(A, M, n_roots, lo=-1.0, hi=None):
    """Scalar oracle: roots of det(A - t M) located by sign changes of the
    determinant on a fine grid, then bisection."""
    if hi is None:
        hi = 10 * max(1.0, np.abs(A).max() / max(np.linalg.eigvalsh(M).min(), 1e-12))
    grid = np.linspace(lo, hi, 20001)
    vals = [np.linalg.det(A - t * M) for t in grid]
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0:
            x0, x1, f0 = a, b, fa
            for _ in range(200):
                mid = 0.5 * (x0 + x1)
                fm = np.linalg.det(A - mid * M)
                if f0 * fm <= 0:
                    x1 = mid
                else:
                    x0, f0 = mid, fm
            roots.append(0.5 * (x0 + x1))
    return np.array(sorted(roots)[:n_roots])


def test_identity_pair():
    res = solve_spd(np.eye(5), np.eye(5))
    assert np.allclose(res.eigenvalues, 1.0)
    assert res.n_infinite == 0


def test_diagonal_pair():
    res = solve_spd(np.diag([2.0, 5.0]), np.eye(2))
    assert np.allclose(res.eigenvalues, [2.0, 5.0])


def test_random_pair_matches_determinant_roots():
    A = random_spd(6, 1, shift=2.0)
    M = random_spd(6, 2, shift=6.0)
    res = solve_spd(A, M)
    oracle = det_roots_by_bisection(A, M, 6)
    assert len(oracle) == 6
    assert np.allclose(res.eigenvalues, oracle, rtol=1e-9, atol=1e-9)


def test_eigenvectors_m_orthonormal():
    A = random_spd(8, 3)
    M = random_spd(8, 4)
    res = solve_spd(A, M)
    G = res.eigenvectors.T @ M @ res.eigenvectors
    assert np.max(np.abs(G - np.eye(8))) < 1e-9


def test_residual_bound():
    A = random_spd(20, 5)
    M = random_spd(20, 6)
    res = solve_spd(A, M)
    for lam, i in zip(res.eigenvalues, range(20)):
        r = A @ res.eigenvectors[:, i] - lam * (M @ res.eigenvectors[:, i])
        bound = 1e-8 * (np.linalg.norm(A, "fro") + abs(lam) * np.linalg.norm(M, "fro"))
        assert np.linalg.norm(r) <= bound


def test_n_lowest_subset():
    A = random_spd(30, 7)
    M = random_spd(30, 8)
    full = solve_spd(A, M)
    sub = solve_spd(A, M, n_lowest=5)
    assert np.allclose(sub.eigenvalues, full.eigenvalues[:5], rtol=1e-12)


def test_spd_rejects_singular_mass():
    with pytest.raises(GevpError, match="solve_singular_m"):
        solve_spd(np.eye(2), np.diag([1.0, 0.0]))


def test_singular_m_simple_cases():
    res = solve_singular_m(np.eye(2), np.diag([1.0, 0.0]))
    assert res.n_infinite == 1
    assert np.allclose(res.eigenvalues, [1.0])
    res = solve_singular_m(np.diag([1.0, 2.0]), np.diag([1.0, 0.0]))
    assert res.n_infinite == 1
    assert np.allclose(res.eigenvalues, [1.0])


def test_singular_m_requires_spd_a():
    with pytest.raises(GevpError, match="alpha"):
        solve_singular_m(np.diag([1.0, 0.0]), np.eye(2))


def test_reciprocal_consistency_spd_mass():
    A = random_spd(10, 11)
    M = random_spd(10, 12)
    r1 = solve_spd(A, M)
    r2 = solve_singular_m(A, M)
    assert r2.n_infinite == 0
    assert np.allclose(r1.eigenvalues, r2.eigenvalues, rtol=1e-9)


def test_eigenvalue_count_conservation():
    n = 12
    A = random_spd(n, 20)
    rng = np.random.default_rng(21)
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    M = Q @ np.diag([0, 0, 0] + list(rng.uniform(0.5, 2, n - 3))) @ Q.T
    res = solve_singular_m(A, M)
    assert res.n_infinite + len(res.eigenvalues) == n
    assert res.n_infinite == 3


def test_shift_robustness():
    A = random_spd(9, 30)
    M = random_spd(9, 31)
    base = solve_spd(A, M).eigenvalues
    shifted = solve_spd(A + 1.0 * M, M).eigenvalues
    assert np.allclose(shifted, base + 1.0, rtol=1e-9)


def test_solve_pencil_dispatch():
    A = random_spd(6, 40)
    M = random_spd(6, 41)
    assert solve_pencil(A, M).n_infinite == 0
    res = solve_pencil(np.eye(3), np.diag([1.0, 1.0, 0.0]))
    assert res.n_infinite == 1


def test_kernel_dim():
    assert kernel_dim(np.eye(4)) == 0
    assert kernel_dim(np.diag([1.0, 0.0, 0.0])) == 2
    rng = np.random.default_rng(50)
    Q = np.linalg.qr(rng.standard_normal((7, 7)))[0]
    S = Q @ np.diag([0, 0, 1e-14, 1, 2, 3, 4]) @ Q.T
    assert kernel_dim(S) == 3


def test_smallest_pencil_eigenvalue():
    assert abs(smallest_pencil_eigenvalue(2 * np.eye(4), np.eye(4)) - 2.0) < 1e-12
    assert abs(smallest_pencil_eigenvalue(np.diag([3.0, 1.0]), np.eye(2)) - 1.0) < 1e-12
    # deflation: a kernel direction of M1 is ignored
    A1 = np.diag([5.0, 2.0, 7.0])
    M1 = np.diag([1.0, 1.0, 0.0])
    assert abs(smallest_pencil_eigenvalue(A1, M1) - 2.0) < 1e-12
    with pytest.raises(GevpError, match="identically zero"):
        smallest_pencil_eigenvalue(np.eye(2), np.zeros((2, 2)))


def test_rejects_nonsymmetric():
    A = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(GevpError, match="symmetric"):
        solve_spd(A, np.eye(2))
