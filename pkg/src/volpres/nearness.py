"""Distances and Frobenius projections onto SL(n), sl(n), SO(n), so(n), sp(2n).

Also hosts the inequality checks relating ``dist(A, SL(n))`` to the
determinant deviation, and a small seeded Monte-Carlo driver for them.
"""
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PreconditionError, SolverError
from .kernels.linalg import det_batch, svd_batch
from .kernels.sldiag import sl_diag_batch
from . import matcore

TARGETS = ("SL", "sl", "SO", "so", "sp_lie")
BOUND_NAMES = ("sl-sandwich", "sp-det", "weighted-det")
REL_SLACK = 1e-12


@dataclass(frozen=True)
class ProjectionResult:
    target: str
    projected: np.ndarray
    distance: float
    multiplier: float = 0.0
    kkt_residual: float = 0.0
    diagonal: np.ndarray = None
    sigma: np.ndarray = None

    def to_dict(self):
        out = {
            "target": self.target,
            "n": int(self.projected.shape[0]),
            "distance": float(self.distance),
            "multiplier": float(self.multiplier),
            "kkt_residual": float(self.kkt_residual),
            "projected": [float(x) for x in self.projected.ravel()],
        }
        if self.sigma is not None:
            out["sigma"] = [float(x) for x in self.sigma]
            out["diagonal"] = [float(x) for x in self.diagonal]
        return out


def snake_key(k):
    """JSON keys are lowercase; the upper determinant bound becomes ``lambda_upper``."""
    return "lambda_upper" if k == "Lambda" else k.lower()


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class BoundReport:
    """Certificate for one inequality ``lhs <= rhs``.

    ``lower`` is only filled by the two-sided SL check and holds the
    reverse inequality ``lower_lhs <= lhs``.
    """
    name: str
    n: int
    lhs: float
    rhs: float
    constant: float
    params: dict = field(default_factory=dict)
    lower: dict = None

    @property
    def ratio(self):
        return self.lhs / self.rhs if self.rhs > 0 else math.nan

    @property
    def satisfied(self):
        ok = self.lhs <= self.rhs * (1.0 + REL_SLACK)
        if self.lower is not None:
            ok = ok and self.lower["satisfied"]
        return ok

    def to_dict(self):
        out = {
            "name": self.name,
            "n": self.n,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "constant": float(self.constant),
            "ratio": _finite_or_none(self.ratio),
            "satisfied": bool(self.satisfied),
            "params": {snake_key(k): _finite_or_none(v) for k, v in self.params.items()},
        }
        if self.lower is not None:
            out["lower"] = {k: (bool(v) if isinstance(v, (bool, np.bool_)) else _finite_or_none(v))
                            for k, v in self.lower.items()}
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


# ------------------------------------------------------------------ constants

def c4(n):
    """Proof-harvested constant of the SL lower bound; huge for n >= 3."""
    inner = 4.0 * n ** (n + n / 2 + 1.5)
    return 0.5 * (1.0 + (inner + 1.0)) + 1.0 / (2.0 ** (1.0 / n) - 1.0)


def sandwich_constant(n):
    return math.sqrt(n) + c4(n)


def c6(n, lam, Lam):
    return math.sqrt(n) * Lam * c4(n) / (lam ** (1.0 / n) * min(lam, 0.5))


def symplectic_det_constant(half, Lam):
    """``(2n)^{8n} (1 + Lambda)^{2n-1}`` with ``half`` = n."""
    return float(2 * half) ** (8 * half) * (1.0 + Lam) ** (2 * half - 1)


# ------------------------------------------------------------- linear targets

def dist_sl(A):
    A = matcore.as_matrix(A)
    n = A.shape[0]
    tr = np.trace(A)
    return abs(tr) / math.sqrt(n), A - (tr / n) * np.eye(n)


def dist_so(A):
    A = matcore.as_matrix(A)
    return 0.5 * matcore.frobenius(A + A.T), 0.5 * (A - A.T)


def dist_sp_lie(A):
    """Distance to {B : JB symmetric}; closed form ``|JA - (JA)^T| / 2``."""
    A = matcore.as_matrix(A)
    J = matcore.symplectic_J(A.shape[0])
    JA = J @ A
    sym = 0.5 * (JA + JA.T)
    return 0.5 * matcore.frobenius(JA - JA.T), -J @ sym


def symplectic_residual(A):
    A = matcore.as_matrix(A)
    J = matcore.symplectic_J(A.shape[0])
    return matcore.frobenius(A.T @ J @ A - J)


def dist_SO(A):
    A = matcore.as_matrix(A)
    matcore._require_positive_det(A, "dist to SO(n)")
    r = matcore.svd(A)
    return float(np.sqrt(np.sum((r.sigma - 1.0) ** 2))), r.u_factor @ r.v_factor.T


# ---------------------------------------------------------------- SL(n) proper

def _check_batch(As):
    As = np.asarray(As, dtype=np.float64)
    if As.ndim != 3 or As.shape[1] != As.shape[2]:
        raise ValueError(f"expected a stack of square matrices, got {As.shape}")
    if not np.all(np.isfinite(As)):
        raise ValueError("matrix has non-finite entries")
    return As


def proj_SL_batch(As, use_numba=None):
    """Vectorised SL(n) projection.

    Returns ``(projected, distance, multiplier, kkt, d, sigma)`` arrays.
    """
    As = _check_batch(As)
    m, n, _ = As.shape
    dets = det_batch(As, use_numba)
    fro = np.sqrt(np.einsum("bij,bij->b", As, As))
    bad = dets <= matcore.SINGULAR_RTOL * fro ** n
    if bad.any():
        i = int(np.argmax(bad))
        raise DomainError(f"SL projection requires det A > 0 (sample {i}: det A = {dets[i]:.3e})")
    U, S, V, sweeps = svd_batch(As, use_numba=use_numba)
    if sweeps < 0:
        raise SolverError("Jacobi SVD did not converge", state=As)
    flip = det_batch(U, use_numba) < 0.0
    U[flip, :, 0] *= -1.0
    V[flip, :, 0] *= -1.0
    D, lam, status = sl_diag_batch(S, use_numba)
    if status.any():
        i = int(np.argmax(status))
        raise SolverError("no feasible diagonal candidate found", state=As[i])
    P = np.einsum("bij,bj,bkj->bik", U, D, V)
    dist = np.sqrt(np.sum((D - S) ** 2, axis=1))
    kkt = np.max(np.abs(D - S - lam[:, None] / D), axis=1)
    return P, dist, lam, kkt, D, S


def proj_SL(A, use_numba=None):
    """Nearest point of SL(n) to ``A`` in the Frobenius norm.

    The problem reduces to the singular values ``a`` of ``A``: the minimiser
    is ``U diag(d) V^T`` where ``d`` solves the diagonal problem and
    ``d_j - a_j = lam / d_j`` for a single multiplier ``lam``.
    """
    A = matcore.as_matrix(A)
    P, dist, lam, kkt, D, S = proj_SL_batch(A[None], use_numba)
    return ProjectionResult("SL", P[0], float(dist[0]), float(lam[0]), float(kkt[0]), D[0], S[0])


def project(A, target):
    if target == "SL":
        return proj_SL(A)
    fns = {"sl": dist_sl, "so": dist_so, "SO": dist_SO, "sp_lie": dist_sp_lie}
    if target not in fns:
        raise ValueError(f"unknown target {target!r}; expected one of {', '.join(TARGETS)}")
    dist, P = fns[target](A)
    return ProjectionResult(target, P, float(dist))


def det_deviation_F(A):
    """``F(A) = |1 - 1/det A| / |A^{-1}|`` with the Frobenius norm."""
    A = matcore.as_matrix(A)
    d = matcore.det(A)
    return abs(1.0 - 1.0 / d) / matcore.frobenius(np.linalg.inv(A))


def sl_upper_bound(A):
    """Operator-norm form ``|1 - 1/det A| / ||A^{-1}||`` = sigma_min * |1 - 1/det A|."""
    A = matcore.as_matrix(A)
    return float(matcore.svd(A).sigma[0]) * abs(1.0 - 1.0 / matcore.det(A))


# --------------------------------------------------------------------- checks

def verify_sl_sandwich(A, theta, dist=None):
    """Two-sided check ``(theta/C) F(A) <= dist(A, SL(n)) <= C F(A)``."""
    A = matcore.as_matrix(A)
    n = A.shape[0]
    if not 0.0 < theta <= 0.5:
        raise PreconditionError(f"theta must lie in (0, 1/2], got {theta}")
    d = matcore.det(A)
    if d < theta:
        raise PreconditionError(f"det A = {d:.6g} is below theta = {theta}")
    if dist is None:
        dist = proj_SL(A).distance
    C = sandwich_constant(n)
    F = det_deviation_F(A)
    low = theta / C * F
    lower = {
        "lhs": low,
        "rhs": dist,
        "ratio": low / dist if dist > 0 else math.nan,
        "satisfied": low <= dist * (1.0 + REL_SLACK) + 1e-15,
    }
    return BoundReport("sl-sandwich", n, dist, C * F, C,
                       {"theta": theta, "det": d, "f": F}, lower)


def verify_symplectic_det_bound(A, Lambda):
    A = matcore.as_matrix(A)
    dim = A.shape[0]
    if dim % 2:
        raise DomainError(f"symplectic bound needs an even dimension, got {dim}")
    d = matcore.det(A)
    if not 0.0 < d <= Lambda:
        raise PreconditionError(f"need 0 < det A <= Lambda, got det A = {d:.6g}, Lambda = {Lambda}")
    const = symplectic_det_constant(dim // 2, Lambda)
    res = symplectic_residual(A)
    return BoundReport("sp-det", dim // 2, abs(1.0 - d), const * res, const,
                       {"Lambda": Lambda, "det": d, "residual": res})


def verify_weighted_det_bound(A, lam, Lambda, dist=None):
    """Check ``|1 - det A| <= C6 K(A) dist(A, SL(n))``."""
    A = matcore.as_matrix(A)
    n = A.shape[0]
    d = matcore.det(A)
    if not 0.0 < lam <= d <= Lambda:
        raise PreconditionError(f"need lambda <= det A <= Lambda, got {lam} <= {d:.6g} <= {Lambda}")
    if dist is None:
        dist = proj_SL(A).distance
    const = c6(n, lam, Lambda)
    K = matcore.cond_K(A)
    return BoundReport("weighted-det", n, abs(1.0 - d), const * K * dist, const,
                       {"lambda": lam, "Lambda": Lambda, "det": d, "k": K, "dist": dist})


# ---------------------------------------------------------------- Monte Carlo

def sample_matrix(rng, n, det_range):
    """Entries uniform in [-2, 2], rescaled so det is log-uniform in det_range."""
    while True:
        A = rng.uniform(-2.0, 2.0, (n, n))
        d = np.linalg.det(A)
        if abs(d) > 1e-6:
            break
    if d < 0:
        A[0] = -A[0]
        d = -d
    lo, hi = det_range
    target = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    return A * (target / d) ** (1.0 / n)


def sample_symplectic(rng, dim):
    """exp(J S) for a random symmetric S lies in Sp(2n)."""
    from scipy.linalg import expm
    S = rng.normal(size=(dim, dim)) * 0.5
    return expm(matcore.symplectic_J(dim) @ (S + S.T))


def sample_seeds(seed, count):
    return [np.random.default_rng([seed, i]) for i in range(count)]


def _one_sample(args):
    bound, seed, i, n, params = args
    rng = np.random.default_rng([seed, i])
    if bound == "sl-sandwich":
        A = sample_matrix(rng, n, params.get("det_range", (params["theta"], 10.0)))
        return verify_sl_sandwich(A, params["theta"])
    if bound == "sp-det":
        if params.get("symplectic"):
            A = sample_symplectic(rng, 2 * n)
        else:
            A = sample_matrix(rng, 2 * n, params.get("det_range", (0.5, 1.5)))
        return verify_symplectic_det_bound(A, params["Lambda"])
    if bound == "weighted-det":
        A = sample_matrix(rng, n, (params["lambda"], params["Lambda"]))
        return verify_weighted_det_bound(A, params["lambda"], params["Lambda"])
    raise ValueError(f"unknown bound {bound!r}; expected one of {', '.join(BOUND_NAMES)}")


def monte_carlo(bound, n, samples, seed=0, threads=1, **params):
    """Run ``samples`` independent checks; sample ``i`` uses rng([seed, i]).

    For ``sp-det`` the dimension is ``2n``.  Output order and values do not
    depend on ``threads``.
    """
    jobs = [(bound, seed, i, n, params) for i in range(samples)]
    if threads <= 1:
        return [_one_sample(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_one_sample, jobs, chunksize=64))


def summarize(reports):
    ratios = [r.ratio for r in reports if math.isfinite(r.ratio)]
    return {
        "samples": len(reports),
        "violations": sum(not r.satisfied for r in reports),
        "max_ratio": max(ratios) if ratios else None,
    }
