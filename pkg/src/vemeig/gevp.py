"""Dense symmetric generalized eigensolver A u = lambda M u at desk scale.

Handles the singular-mass case through the reciprocal problem
M u = (1/lambda) A u, with directions in ker(M) reported as
conventional-infinite eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

DEFAULT_KERNEL_TOL = 1e-10


class GevpError(Exception):
    pass


def _as_dense_symmetric(mat, name: str) -> np.ndarray:
    if sps.issparse(mat):
        mat = mat.toarray()
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise GevpError(f"{name} must be square")
    scale = max(1.0, np.abs(mat).max())
    if np.max(np.abs(mat - mat.T)) > 1e-10 * scale:
        raise GevpError(f"{name} is not symmetric")
    return 0.5 * (mat + mat.T)


def _is_spd(mat) -> bool:
    try:
        sla.cholesky(mat, lower=True)
        return True
    except sla.LinAlgError:
        return False


@dataclass
class SpectralResult:
    """Finite eigenvalues ascending, plus the conventional-infinite count.

    Residuals are ||A v - lambda M v|| / ||A v|| per reported finite pair.
    Indeterminate directions (common kernel of A and M) never appear among
    the finite eigenvalues.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n_infinite: int = 0
    n_indeterminate: int = 0
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _residuals(A, M, w, V):
    res = np.zeros(len(w))
    for i, lam in enumerate(w):
        av = A @ V[:, i]
        r = av - lam * (M @ V[:, i])
        denom = np.linalg.norm(av)
        res[i] = np.linalg.norm(r) / denom if denom > 0 else np.linalg.norm(r)
    return res


def solve_spd(A, M, n_lowest: int | None = None) -> SpectralResult:
    """A u = lambda M u with M symmetric positive definite.

    Reduction through the Cholesky factor of M; eigenvectors come back
    M-orthonormal.  Deterministic for fixed inputs.
    """
    A = _as_dense_symmetric(A, "A")
    M = _as_dense_symmetric(M, "M")
    if A.shape != M.shape:
        raise GevpError("dimension mismatch between A and M")
    if not _is_spd(M):
        raise GevpError("M is not positive definite; use solve_singular_m")
    if n_lowest is not None and n_lowest < A.shape[0]:
        w, V = sla.eigh(A, M, subset_by_index=[0, n_lowest - 1])
    else:
        w, V = sla.eigh(A, M)
    return SpectralResult(
        eigenvalues=w, eigenvectors=V, residuals=_residuals(A, M, w, V)
    )


def solve_singular_m(
    A, M, n_lowest: int | None = None, kernel_tol: float = DEFAULT_KERNEL_TOL
) -> SpectralResult:
    """A u = lambda M u with A SPD and M positive semidefinite.

    Solves the reciprocal problem M u = omega A u; omega below the kernel
    tolerance maps to conventional-infinite eigenvalues, the rest to
    lambda = 1/omega reported ascending.
    """
    A = _as_dense_symmetric(A, "A")
    M = _as_dense_symmetric(M, "M")
    if A.shape != M.shape:
        raise GevpError("dimension mismatch between A and M")
    if not _is_spd(A):
        raise GevpError(
            "A is not positive definite; increase the stiffness parameter alpha"
        )
    omega, V = sla.eigh(M, A)
    omega = np.maximum(omega, 0.0)
    thr = kernel_tol * max(omega.max(), kernel_tol)
    finite = omega > thr
    n_inf = int(np.sum(~finite))
    lam = 1.0 / omega[finite]
    order = np.argsort(lam)
    lam = lam[order]
    vecs = V[:, finite][:, order]
    if n_lowest is not None:
        lam = lam[:n_lowest]
        vecs = vecs[:, : len(lam)]
    return SpectralResult(
        eigenvalues=lam,
        eigenvectors=vecs,
        n_infinite=n_inf,
        residuals=_residuals(A, M, lam, vecs),
    )


def solve_pencil(
    A, M, n_lowest: int | None = None, kernel_tol: float = DEFAULT_KERNEL_TOL
) -> SpectralResult:
    """Dispatch on the definiteness of M (SPD solve, else reciprocal solve)."""
    M_dense = _as_dense_symmetric(M, "M")
    if _is_spd(M_dense):
        return solve_spd(A, M_dense, n_lowest)
    return solve_singular_m(A, M_dense, n_lowest, kernel_tol)


def kernel_dim(S, kernel_tol: float = DEFAULT_KERNEL_TOL) -> int:
    """Count of eigenvalues below kernel_tol * max(largest eigenvalue, 1)."""
    S = _as_dense_symmetric(S, "S")
    w = sla.eigvalsh(S)
    thr = kernel_tol * max(w[-1], 1.0)
    return int(np.sum(w <= thr))


def smallest_pencil_eigenvalue(
    A1, M1, kernel_tol: float = DEFAULT_KERNEL_TOL
) -> float:
    """Smallest finite eigenvalue of A1 x = lambda M1 x after deflating ker M1."""
    A1 = _as_dense_symmetric(A1, "A1")
    M1 = _as_dense_symmetric(M1, "M1")
    w, V = sla.eigh(M1)
    keep = w > kernel_tol * max(w[-1], kernel_tol)
    if not keep.any():
        raise GevpError("M1 is identically zero: no finite eigenvalues")
    Vk = V[:, keep]
    A_red = Vk.T @ A1 @ Vk
    M_red = np.diag(w[keep])
    vals = sla.eigh(A_red, M_red, eigvals_only=True, subset_by_index=[0, 0])
    return float(vals[0])
