"""Small dense matrix services: det, cofactor, norms, SVD, polar factors, K.

Matrices are plain ``numpy`` arrays of shape ``(n, n)`` with ``1 <= n <= 8``.
Singular values are always returned in ascending order.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SolverError
from .kernels.linalg import SVD_MAX_SWEEPS, det_batch, svd_batch

MAX_DIM = 8
SINGULAR_RTOL = 1e-14


@dataclass(frozen=True)
class SvdResult:
    u_factor: np.ndarray
    sigma: np.ndarray
    v_factor: np.ndarray

    def reconstruct(self):
        return (self.u_factor * self.sigma) @ self.v_factor.T


@dataclass(frozen=True)
class PolarResult:
    spd_factor: np.ndarray
    rotation_factor: np.ndarray


def as_matrix(A):
    """Validate and convert to a float ``(n, n)`` array."""
    M = np.array(A, dtype=np.float64)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not 1 <= M.shape[0] <= MAX_DIM:
        raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {M.shape[0]}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def det(A):
    A = as_matrix(A)
    return float(det_batch(A[None])[0])


def cofactor(A):
    """Cofactor matrix from signed minors; defined for singular A as well."""
    A = as_matrix(A)
    n = A.shape[0]
    if n == 1:
        return np.ones((1, 1))
    minors = np.empty((n * n, n - 1, n - 1))
    k = 0
    for i in range(n):
        rows = [r for r in range(n) if r != i]
        for j in range(n):
            cols = [c for c in range(n) if c != j]
            minors[k] = A[np.ix_(rows, cols)]
            k += 1
    signs = (-1.0) ** np.add.outer(np.arange(n), np.arange(n))
    return signs * det_batch(minors).reshape(n, n)


def frobenius(A):
    return float(np.sqrt(np.sum(np.square(A))))


def svd(A):
    """Singular value decomposition with ascending singular values.

    When ``det A > 0`` both orthogonal factors are rotations: the column
    paired with the smallest singular value is flipped if needed.
    """
    A = as_matrix(A)
    U, S, V, sweeps = svd_batch(A[None])
    if sweeps < 0:
        raise SolverError(f"Jacobi SVD did not converge in {SVD_MAX_SWEEPS} sweeps")
    U, S, V = U[0], S[0], V[0]
    if det(A) > 0.0 and det(U) < 0.0:
        U[:, 0] = -U[:, 0]
        V[:, 0] = -V[:, 0]
    return SvdResult(U, S, V)


def norms(A):
    """Return ``(frobenius, operator)`` norms."""
    A = as_matrix(A)
    return frobenius(A), float(svd(A).sigma[-1])


def _require_positive_det(A, what):
    d = det(A)
    if d <= SINGULAR_RTOL * frobenius(A) ** A.shape[0]:
        raise DomainError(f"{what} requires det A > 0 (got det A = {d:.3e})")
    return d


def polar(A):
    """Left polar decomposition ``A = S O`` with ``S = (A A^T)^{1/2}``, ``O`` in SO(n)."""
    A = as_matrix(A)
    _require_positive_det(A, "polar decomposition")
    r = svd(A)
    U, s, V = r.u_factor, r.sigma, r.v_factor
    S = (U * s) @ U.T
    return PolarResult(0.5 * (S + S.T), U @ V.T)


def cond_K(A):
    """Distortion ratio ``|A|^n / det A`` (Frobenius norm); always >= 1."""
    A = as_matrix(A)
    d = _require_positive_det(A, "K(A)")
    return frobenius(A) ** A.shape[0] / d


def symplectic_J(dim):
    """Standard symplectic matrix ``[[0, -I], [I, 0]]`` of even size ``dim``."""
    if dim % 2:
        raise DomainError(f"symplectic structure needs an even dimension, got {dim}")
    h = dim // 2
    J = np.zeros((dim, dim))
    J[:h, h:] = -np.eye(h)
    J[h:, :h] = np.eye(h)
    return J
