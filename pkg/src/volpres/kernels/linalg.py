"""Batched small dense kernels: determinant and one-sided Jacobi SVD.

Every kernel takes a stack ``A`` of shape ``(m, n, n)``.  The ``_nb``
variants are loop-style and compiled by numba; the ``_np`` variants
vectorise the same algorithm across the batch axis.
"""
import numpy as np

from .._accel import njit, pick

SVD_MAX_SWEEPS = 100
_ROT_TOL = 1e-15
_NULL_TOL = 1e-15  # columns below this fraction of |A| count as zero


# ---------------------------------------------------------------- determinant

@njit
def _det_batch_nb(A):
    m, n, _ = A.shape
    out = np.empty(m)
    for b in range(m):
        M = A[b].copy()
        sign = 1.0
        for k in range(n):
            piv = k
            best = abs(M[k, k])
            for i in range(k + 1, n):
                if abs(M[i, k]) > best:
                    best = abs(M[i, k])
                    piv = i
            if best == 0.0:
                sign = 0.0
                break
            if piv != k:
                for j in range(n):
                    tmp = M[k, j]
                    M[k, j] = M[piv, j]
                    M[piv, j] = tmp
                sign = -sign
            for i in range(k + 1, n):
                f = M[i, k] / M[k, k]
                for j in range(k, n):
                    M[i, j] -= f * M[k, j]
        d = sign
        if sign != 0.0:
            for k in range(n):
                d *= M[k, k]
        out[b] = d
    return out


def _det_batch_np(A):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):  # subnormal inputs
        return np.linalg.det(A)


def det_batch(A, use_numba=None):
    A = np.ascontiguousarray(A, dtype=np.float64)
    return pick(_det_batch_nb, _det_batch_np, use_numba)(A)


# ------------------------------------------------------------------------ SVD

@njit
def _svd_batch_nb(A, max_sweeps):
    m, n, _ = A.shape
    U = np.zeros((m, n, n))
    S = np.zeros((m, n))
    V = np.zeros((m, n, n))
    sweeps_used = 0
    for b in range(m):
        W = A[b].copy()
        Vb = np.eye(n)
        floor = 0.0
        for i in range(n):
            for j in range(n):
                floor += W[i, j] * W[i, j]
        floor *= _NULL_TOL * _NULL_TOL
        converged = n < 2
        sweep = 0
        while not converged and sweep < max_sweeps:
            sweep += 1
            rotated = False
            for p in range(n - 1):
                for q in range(p + 1, n):
                    alpha = 0.0
                    beta = 0.0
                    gamma = 0.0
                    for k in range(n):
                        alpha += W[k, p] * W[k, p]
                        beta += W[k, q] * W[k, q]
                        gamma += W[k, p] * W[k, q]
                    if gamma == 0.0 or abs(gamma) <= _ROT_TOL * np.sqrt(alpha * beta):
                        continue
                    if alpha <= floor or beta <= floor:
                        continue
                    rotated = True
                    zeta = (beta - alpha) / (2.0 * gamma)
                    t = (1.0 if zeta >= 0.0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                    c = 1.0 / np.sqrt(1.0 + t * t)
                    s = c * t
                    for k in range(n):
                        wp = W[k, p]
                        W[k, p] = c * wp - s * W[k, q]
                        W[k, q] = s * wp + c * W[k, q]
                        vp = Vb[k, p]
                        Vb[k, p] = c * vp - s * Vb[k, q]
                        Vb[k, q] = s * vp + c * Vb[k, q]
            if not rotated:
                converged = True
        if not converged:
            return U, S, V, -1
        if sweep > sweeps_used:
            sweeps_used = sweep
        sig = np.empty(n)
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc += W[k, j] * W[k, j]
            sig[j] = np.sqrt(acc)
        order = np.argsort(sig)
        for jj in range(n):
            j = order[jj]
            S[b, jj] = sig[j]
            for k in range(n):
                V[b, k, jj] = Vb[k, j]
                U[b, k, jj] = W[k, j] / sig[j] if sig[j] > 0.0 else 0.0
    return U, S, V, sweeps_used


def _svd_batch_np(A, max_sweeps):
    m, n, _ = A.shape
    W = A.copy()
    Vb = np.broadcast_to(np.eye(n), (m, n, n)).copy()
    floor = _NULL_TOL ** 2 * np.einsum("bij,bij->b", A, A)
    sweeps_used = 0
    converged = n < 2
    while not converged and sweeps_used < max_sweeps:
        sweeps_used += 1
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                wp = W[:, :, p]
                wq = W[:, :, q]
                alpha = np.einsum("ij,ij->i", wp, wp)
                beta = np.einsum("ij,ij->i", wq, wq)
                gamma = np.einsum("ij,ij->i", wp, wq)
                act = (gamma != 0.0) & (np.abs(gamma) > _ROT_TOL * np.sqrt(alpha * beta))
                act &= (alpha > floor) & (beta > floor)
                if not act.any():
                    continue
                rotated = True
                g = np.where(act, gamma, 1.0)
                zeta = (beta - alpha) / (2.0 * g)
                t = np.where(zeta >= 0.0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = np.where(act, 1.0 / np.sqrt(1.0 + t * t), 1.0)
                s = np.where(act, c * t, 0.0)
                c = c[:, None]
                s = s[:, None]
                new_p = c * wp - s * wq
                new_q = s * wp + c * wq
                W[:, :, p] = new_p
                W[:, :, q] = new_q
                vp = Vb[:, :, p].copy()
                vq = Vb[:, :, q]
                Vb[:, :, p] = c * vp - s * vq
                Vb[:, :, q] = s * vp + c * vq
        if not rotated:
            converged = True
    if not converged:
        return None, None, None, -1
    sig = np.sqrt(np.einsum("bkj,bkj->bj", W, W))
    order = np.argsort(sig, axis=1, kind="stable")
    S = np.take_along_axis(sig, order, axis=1)
    idx = np.broadcast_to(order[:, None, :], W.shape)
    W = np.take_along_axis(W, idx, axis=2)
    V = np.take_along_axis(Vb, idx, axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        U = np.where(S[:, None, :] > 0.0, W / np.where(S > 0.0, S, 1.0)[:, None, :], 0.0)
    return U, S, V, sweeps_used


def _complete_basis(U, S):
    """Re-orthogonalise U where some singular values are negligible.

    Columns ``W_j / sigma_j`` lose orthogonality like ``eps |A| / sigma_j``;
    Gram-Schmidt from the largest sigma down repairs them (and fills null
    columns with a complement) while moving ``U S V^T`` by O(eps |A|).
    """
    m, n, _ = U.shape
    small = S[:, 0] <= 1e-6 * S[:, -1]
    for b in np.nonzero(small)[0]:
        cols = []
        for j in range(n - 1, -1, -1):
            cands = [U[b, :, j]] + list(np.eye(n))
            for v in cands:
                v = v.copy()
                for _ in range(2):
                    for c in cols:
                        v -= (c @ v) * c
                nv = np.linalg.norm(v)
                if nv > 0.5:
                    v /= nv
                    break
            U[b, :, j] = v
            cols.append(v)
    return U


def svd_batch(A, max_sweeps=SVD_MAX_SWEEPS, use_numba=None):
    """Return ``(U, sigma, V, sweeps)`` with sigma ascending; sweeps = -1 on failure."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    U, S, V, sweeps = pick(_svd_batch_nb, _svd_batch_np, use_numba)(A, max_sweeps)
    if sweeps < 0:
        return None, None, None, -1
    return _complete_basis(np.array(U), S), S, V, sweeps
