import numpy as np
import pytest

from volpres._accel import USE_NUMBA

BACKENDS = [pytest.param(True, id="numba", marks=pytest.mark.skipif(not USE_NUMBA, reason="numba disabled")),
            pytest.param(False, id="numpy")]


@pytest.fixture(params=BACKENDS)
def use_numba(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_det_matrix(rng, n, lo=0.1, hi=10.0):
    """Entries in [-2, 2], first row flipped to make det > 0, det rescaled log-uniformly into [lo, hi]."""
    while True:
        A = rng.uniform(-2, 2, (n, n))
        d = np.linalg.det(A)
        if abs(d) > 1e-3:
            break
    if d < 0:
        A[0] *= -1
        d = -d
    t = np.exp(rng.uniform(np.log(lo), np.log(hi)))
    return A * (t / d) ** (1.0 / n)


def random_rotation(rng, n):
    Q, R = np.linalg.qr(rng.normal(size=(n, n)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
