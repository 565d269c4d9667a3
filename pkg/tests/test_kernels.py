import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linear_sum_assignment

from volpres.kernels.assignment import lsap
from volpres.kernels.linalg import det_batch, svd_batch
from volpres.kernels.sldiag import sl_diag_batch


def test_det_batch_matches_lapack(use_numba, rng):
    for n in (1, 2, 3, 4, 6):
        A = rng.uniform(-2, 2, (50, n, n))
        np.testing.assert_allclose(det_batch(A, use_numba), np.linalg.det(A), rtol=1e-10, atol=1e-12)


def test_svd_batch_against_eigh_oracle(use_numba, rng):
    A = rng.uniform(-2, 2, (200, 4, 4))
    U, S, V, sweeps = svd_batch(A, use_numba=use_numba)
    assert sweeps >= 0
    # singular values from a symmetric eigensolve of A^T A
    ref = np.sqrt(np.clip(np.linalg.eigvalsh(np.einsum("bki,bkj->bij", A, A)), 0, None))
    np.testing.assert_allclose(S, ref, atol=1e-10)
    assert np.all(np.diff(S, axis=1) >= 0)
    rec = np.einsum("bij,bj,bkj->bik", U, S, V)
    assert np.abs(rec - A).max() < 1e-10
    eye = np.eye(4)
    assert np.abs(np.einsum("bki,bkj->bij", U, U) - eye).max() < 1e-10
    assert np.abs(np.einsum("bki,bkj->bij", V, V) - eye).max() < 1e-10


def test_svd_rank_deficient(use_numba):
    A = np.array([[[3.0, 0.0], [0.0, 0.0]], [[1.0, 1.0], [1.0, 1.0]]])
    _, S, _, _ = svd_batch(A, use_numba=use_numba)
    np.testing.assert_allclose(S, [[0, 3], [0, 2]], atol=1e-14)


def test_sl_diag_backends_agree(rng):
    a = np.sort(rng.uniform(0.05, 3.0, (300, 3)), axis=1)
    D1, lam1, st1 = sl_diag_batch(a, use_numba=True)
    D2, lam2, st2 = sl_diag_batch(a, use_numba=False)
    np.testing.assert_allclose(D1, D2, atol=1e-9)
    np.testing.assert_allclose(np.prod(D1, axis=1), 1.0, atol=1e-11)


def test_sl_diag_stationarity(use_numba, rng):
    a = np.sort(np.exp(rng.uniform(-2, 2, (500, 2))), axis=1)
    D, lam, status = sl_diag_batch(a, use_numba=use_numba)
    kkt = np.abs(D - a - lam[:, None] / D).max()
    assert kkt < 1e-8
    assert np.all(np.diff(D, axis=1) >= -1e-12)


def test_sl_diag_scalar_four():
    # a = (4, 4): the asymmetric root pair d = 2 -+ sqrt(3) beats d = (1, 1)
    D, lam, _ = sl_diag_batch(np.array([[4.0, 4.0]]))
    np.testing.assert_allclose(D[0], [2 - np.sqrt(3), 2 + np.sqrt(3)], atol=1e-12)
    assert np.sum((D[0] - 4) ** 2) == pytest.approx(14.0, abs=1e-10)


def _brute(C):
    n = C.shape[0]
    return min(sum(C[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def test_lsap_factorial_bruteforce(use_numba, rng):
    for _ in range(20):
        P, Q = rng.uniform(size=(2, 7, 2))
        C = np.linalg.norm(P[:, None] - Q[None], axis=-1)
        col, _, _ = lsap(C, use_numba)
        assert C[np.arange(7), col].sum() == pytest.approx(_brute(C), abs=1e-12)


def test_lsap_matches_scipy_and_duals(use_numba, rng):
    C = rng.uniform(size=(120, 120))
    col, u, v = lsap(C, use_numba)
    r, c = linear_sum_assignment(C)
    assert C[np.arange(120), col].sum() == pytest.approx(C[r, c].sum(), rel=1e-12)
    red = C - u[:, None] - v[None, :]
    assert red.min() >= -1e-9
    assert np.abs(red[np.arange(120), col]).max() < 1e-9
    assert sorted(col) == list(range(120))


def test_lsap_ties_deterministic(use_numba):
    col, _, _ = lsap(np.zeros((5, 5)), use_numba)
    assert list(col) == [0, 1, 2, 3, 4]


def test_lsap_rejects_rectangular():
    with pytest.raises(ValueError):
        lsap(np.zeros((2, 3)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(0, 10, allow_nan=False)))
def test_lsap_optimal_property(C):
    col, u, v = lsap(C)
    r, c = linear_sum_assignment(C)
    assert C[np.arange(6), col].sum() == pytest.approx(C[r, c].sum(), abs=1e-9)
    assert (C - u[:, None] - v[None, :]).min() >= -1e-9
