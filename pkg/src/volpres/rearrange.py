"""Measure-preserving approximants by discrete optimal transport.

``measure_preserving_approx`` pairs the images ``u(x_i)`` of the grid nodes
with an equally sized uniform cloud filling ``u(U)`` by an exact optimal
assignment; the resulting point map ``s`` is the discrete stand-in for a
measure-preserving map close to ``u``.  Also here: the cube-permutation
approximant and a small symplectic integrator for quadratic Hamiltonians.
"""
import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import matcore
from .errors import DomainError, PreconditionError
from .fieldgrid import GridField, image_geometry, jacobian, lp_integral
from .kernels.assignment import lsap

MAX_EXACT = 4096
VACUOUS = "vacuous bound"


# ------------------------------------------------------------------ transport

@dataclass
class TransportPlan:
    source: np.ndarray
    target: np.ndarray
    assignment: np.ndarray  # target index for each source point
    p: float
    row_dual: np.ndarray = None
    col_dual: np.ndarray = None

    @property
    def cost(self):
        d = np.linalg.norm(self.source - self.target[self.assignment], axis=1)
        return float(np.mean(d ** self.p))

    def mapped(self):
        return self.target[self.assignment]

    def slackness_residual(self):
        """Smallest reduced cost ``c_ij - u_i - v_j``; >= 0 up to round-off at an optimum."""
        C = cost_matrix(self.source, self.target, self.p)
        return float((C - self.row_dual[:, None] - self.col_dual[None, :]).min())


def cost_matrix(source, target, p):
    diff = source[:, None, :] - target[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return d if p == 1 else d ** p


def solve_assignment(source, target, p=2.0, use_numba=None):
    """Exact optimal pairing for the ``|x - y|^p`` cost (uniform weights)."""
    source = np.atleast_2d(np.asarray(source, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if source.shape[0] == 1 and source.shape[1] != target.shape[1]:
        source, target = source.T, target.T
    if source.shape != target.shape:
        raise ValueError(f"source and target must have equal shapes, got {source.shape} and {target.shape}")
    N = source.shape[0]
    if N > MAX_EXACT:
        raise PreconditionError(
            f"exact assignment is capped at N = {MAX_EXACT} (got {N}); use entropic_map for larger clouds")
    col, u, v = lsap(cost_matrix(source, target, p), use_numba)
    return TransportPlan(source, target, col, p, u, v)


def entropic_map(source, target, p=2.0, eps=None, scaling=0.5, iters=200):
    """Log-domain Sinkhorn with epsilon scaling; returns the barycentric image of each source point.

    A speed fallback for large clouds: the result is not a permutation.
    """
    C = cost_matrix(np.asarray(source, float), np.asarray(target, float), p)
    N = C.shape[0]
    eps_final = eps if eps is not None else 1e-3 * float(C.mean())
    eps_cur = max(float(C.max()), eps_final)
    f = np.zeros(N)
    g = np.zeros(N)
    loga = -math.log(N)
    while True:
        for _ in range(iters):
            f = eps_cur * (loga - logsumexp((g[None, :] - C) / eps_cur, axis=1))
            g = eps_cur * (loga - logsumexp((f[:, None] - C) / eps_cur, axis=0))
        if eps_cur <= eps_final:
            break
        eps_cur = max(eps_cur * scaling, eps_final)
    logP = (f[:, None] + g[None, :] - C) / eps_cur
    P = np.exp(logP - logsumexp(logP, axis=1, keepdims=True))
    return P @ np.asarray(target, float)


# ------------------------------------------------------------------- clouds

def _lattice_in_mask(ig, delta):
    """Lattice of spacing ``delta`` centred on the image bounding box, kept where the mask is set."""
    lo = ig.mask_origin
    blo, bhi = ig.bbox
    counts = np.maximum(np.round((bhi - blo) / delta).astype(int), 1) + 2
    start = 0.5 * (blo + bhi) - 0.5 * counts * delta
    axes = [s + (np.arange(c) + 0.5) * delta for s, c in zip(start, counts)]
    P = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(axes))
    idx = np.floor((P - lo) / ig.mask_spacing).astype(int)
    inside = np.all((idx >= 0) & (idx < np.array(ig.mask.shape)), axis=1)
    P, idx = P[inside], idx[inside]
    return P[ig.mask[tuple(idx.T)]]


def uniform_cloud(ig, N, volume, seed=0, jitter=0.0, volume_tol=0.02):
    """``N`` lattice points filling the occupancy mask of ``ig``.

    The lattice spacing starts at ``(volume / N)^(1/n)`` and shrinks until
    at least ``N`` points land in the mask; surplus points are dropped by a
    seeded draw.  When the occupied volume differs from ``volume`` by more
    than ``volume_tol`` (relative) the cloud is scaled about its centroid
    to the requested volume.  Returns ``(points, info)``.
    """
    dim = ig.mask.ndim
    delta = (volume / N) ** (1.0 / dim)
    pts = _lattice_in_mask(ig, delta)
    steps = 0
    while len(pts) < N:
        delta *= 0.997
        steps += 1
        if steps > 5000:
            raise PreconditionError("image mask too thin to hold the target cloud")
        pts = _lattice_in_mask(ig, delta)
    rng = np.random.default_rng(seed)
    if len(pts) > N:
        keep = np.sort(rng.choice(len(pts), N, replace=False))
        pts = pts[keep]
    if jitter > 0:
        pts = pts + jitter * delta * rng.uniform(-0.5, 0.5, pts.shape)
    scale = 1.0
    if abs(ig.volume - volume) > volume_tol * volume:
        scale = (volume / ig.volume) ** (1.0 / dim)
        c = pts.mean(axis=0)
        pts = c + scale * (pts - c)
    return pts, {"delta": delta, "scale": scale}


def uniformity(points, ig, scale=1.0, bins=None):
    """Bin counts of ``points`` against the mask-proportional expectation.

    Returns ``{bins, max_dev, frac_within}`` where deviations are in units
    of ``sqrt(expected)`` and ``frac_within`` counts bins within 4 units.
    """
    N, dim = points.shape
    if bins is None:
        bins = max(2, int(round((N / 16.0) ** (1.0 / dim))))
    cells = ig.occupied_centers()
    c = cells.mean(axis=0)
    cells = c + scale * (cells - c)
    lo = np.minimum(points.min(0), cells.min(0))
    hi = np.maximum(points.max(0), cells.max(0))
    hi = hi + 1e-9 * np.maximum(1.0, np.abs(hi))
    edges = [np.linspace(a, b, bins + 1) for a, b in zip(lo, hi)]
    got, _ = np.histogramdd(points, bins=edges)
    ref, _ = np.histogramdd(cells, bins=edges)
    expected = N * ref / ref.sum()
    live = expected > 0
    dev = np.abs(got - expected)[live] / np.sqrt(expected[live])
    stray = float(got[~live].sum())
    return {
        "bins": bins,
        "max_dev": float(dev.max()) if dev.size else 0.0,
        "frac_within": float(np.mean(dev <= 4.0)) if dev.size else 1.0,
        "stray_points": stray,
    }


# --------------------------------------------------------------- approximant

def cor_p1_constant(d, lam, n):
    """Explicit p = 1 constant ``10 (d / lam^(1/n)) (1 + 1/lam)``."""
    return 10.0 * d / lam ** (1.0 / n) * (1.0 + 1.0 / lam)


def cor_form(d, lam, Lam, n, p):
    """``(d / lam^(1/n))^p (1 + lam^-p (Lam/lam)^(2p-2))``; the p > 1 constant is this times C3(n, p)."""
    return (d / lam ** (1.0 / n)) ** p * (1.0 + lam ** (-p) * (Lam / lam) ** (2 * p - 2))


@dataclass
class RearrangeResult:
    s: GridField
    lhs: float
    rhs: float
    constant: float
    p: float
    params: dict
    uniformity: dict
    plan: TransportPlan = None
    tags: list = field(default_factory=list)

    @property
    def ratio(self):
        return self.lhs / self.rhs if self.rhs > 0 else math.nan

    @property
    def satisfied(self):
        """Only decidable for p = 1, where the constant is explicit, and rhs > 0."""
        if self.p != 1 or VACUOUS in self.tags:
            return None
        return self.lhs <= self.constant * self.rhs * (1.0 + 1e-12)

    def to_dict(self):
        r = self.ratio
        pr = self.params
        out = {
            "p": self.p,
            "n_points": pr["N"],
            "d": pr["d"],
            "lambda": pr["lambda"],
            "lambda_upper": pr["Lambda"],
            "lhs": self.lhs,
            "rhs": self.rhs,
            "constant": self.constant,
            "ratio": r if math.isfinite(r) else None,
            "satisfied": self.satisfied,
            "uniformity": self.uniformity,
            "tags": list(self.tags),
        }
        if "empirical_c3" in pr:
            out["empirical_c3"] = pr["empirical_c3"]
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def triples_csv(self, u):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        dim = u.dim
        x = u.geometry.nodes().reshape(-1, dim)
        y = u.points()
        s = self.s.points()
        w.writerow([f"x{k}" for k in range(dim)] + [f"u{k}" for k in range(dim)] + [f"s{k}" for k in range(dim)])
        for a, b, c in zip(x, y, s):
            w.writerow([repr(float(t)) for t in (*a, *b, *c)])
        return buf.getvalue()


def measure_preserving_approx(u, p=1.0, spec=None, seed=0, jitter=0.0, lam=None, use_numba=None):
    """Optimal-transport approximant ``s`` of an injective field ``u``.

    ``spec`` (the analytic MapSpec) supplies the diameter when known and
    sharpens the image mask; injectivity is taken from it as declared.
    ``lam`` optionally imposes a lower determinant bound on the discrete
    Jacobian; otherwise the measured minimum is used and must be positive.
    """
    g = u.geometry
    if u.components != g.dim or g.dim not in (1, 2):
        raise DomainError("measure-preserving approximation needs a 1-D or 2-D map")
    if spec is not None and not spec.injective:
        raise PreconditionError(f"map family {spec.family!r} is not declared injective")
    det = jacobian(u).det
    lo_req = 0.0 if lam is None else lam
    bad = np.argwhere(det <= lo_req) if lam is None else np.argwhere(det < lam)
    if bad.size:
        cells = ", ".join(str(tuple(int(i) for i in b)) for b in bad[:8])
        more = f" (+{len(bad) - 8} more)" if len(bad) > 8 else ""
        raise PreconditionError(f"det Du below {lo_req:g} at cells {cells}{more}")
    lam_m = float(det.min()) if lam is None else lam
    Lam_m = float(det.max())
    N = int(np.prod(g.shape))
    ig = image_geometry(u, spec=spec)
    d = spec.diameter(g) if spec is not None else None
    d_tag = "analytic"
    if d is None:
        d = ig.diameter + math.sqrt(sum(h * h for h in g.spacing))
        d_tag = "discrete+cell"
    target, cinfo = uniform_cloud(ig, N, g.volume, seed=seed, jitter=jitter)
    src = u.points()
    plan = solve_assignment(src, target, p, use_numba)
    s_pts = plan.mapped()
    disp = np.linalg.norm(src - s_pts, axis=1)
    cv = g.cell_volume
    lhs = float(np.sum(disp ** p) * cv)
    rhs = lp_integral(1.0 - det, p, cv)
    n = g.dim
    params = {"N": N, "d": d, "d_source": d_tag, "lambda": lam_m, "Lambda": Lam_m,
              "lattice_spacing": cinfo["delta"], "cloud_scale": cinfo["scale"]}
    if p == 1:
        const = cor_p1_constant(d, lam_m, n)
    else:
        const = cor_form(d, lam_m, Lam_m, n, p)
        if rhs > 0:
            params["empirical_c3"] = lhs / (const * rhs)
    tags = [] if rhs > 0 else [VACUOUS]
    if p != 1:
        tags.append("c3 not explicit: constant is the form only")
    uni = uniformity(s_pts, ig, cinfo["scale"])
    s_field = GridField(g, s_pts.reshape(u.values.shape))
    return RearrangeResult(s_field, lhs, rhs, const, p, params, uni, plan, tags)


# ----------------------------------------------------------- cube permutation

@dataclass
class CubePermutation:
    sigma: np.ndarray
    l1_gap: float
    transpositions: list
    k: int

    def compose(self):
        """Replay the transpositions on the identity arrangement; equals sigma."""
        return replay_transpositions(self.transpositions, len(self.sigma))


def _snake_order(k, dim):
    """Boustrophedon ordering of a k^dim grid: consecutive cells are adjacent."""
    if dim == 1:
        return [(i,) for i in range(k)]
    out = []
    sub = _snake_order(k, dim - 1)
    for i in range(k):
        seq = sub if i % 2 == 0 else sub[::-1]
        out.extend((i,) + t for t in seq)
    return out


def adjacent_transpositions(sigma, k, dim):
    """Bubble sort along the snake order of the cube grid.

    Returns swaps ``(a, b)`` of grid-adjacent cube indices (row-major); the
    block starting in cube ``i`` finishes in cube ``sigma[i]``.
    """
    order = [int(np.ravel_multi_index(t, (k,) * dim)) for t in _snake_order(k, dim)]
    rank = {c: r for r, c in enumerate(order)}
    # content[r]: block currently at snake rank r; its goal rank
    goal = [rank[int(sigma[c])] for c in order]
    swaps = []
    n = len(goal)
    for end in range(n - 1, 0, -1):
        moved = False
        for r in range(end):
            if goal[r] > goal[r + 1]:
                goal[r], goal[r + 1] = goal[r + 1], goal[r]
                swaps.append((order[r], order[r + 1]))
                moved = True
        if not moved:
            break
    return swaps


def replay_transpositions(swaps, count):
    """Position of each block after applying ``swaps`` to the identity arrangement."""
    at = list(range(count))  # at[pos] = block
    for a, b in swaps:
        at[a], at[b] = at[b], at[a]
    sigma = np.empty(count, dtype=np.int64)
    for pos, blk in enumerate(at):
        sigma[blk] = pos
    return sigma


def cube_permutation(s, k, use_numba=None):
    """Piecewise-translation approximant ``w(x) = x - x_i + x_sigma(i)`` of ``s``.

    ``s`` lives on a grid over a cube; each axis is cut into ``k`` equal
    pieces (the grid shape must be divisible by ``k``).  ``sigma`` is the
    optimal assignment between cube centres and the centroids of ``s`` over
    the cubes.
    """
    g = s.geometry
    dim = g.dim
    if any(n % k for n in g.shape):
        raise PreconditionError(f"grid shape {g.shape} is not divisible by k = {k}")
    if s.components != dim:
        raise DomainError("cube permutation needs a map into the same dimension")
    m = [n // k for n in g.shape]
    vals = s.values
    new_shape = []
    for a in range(dim):
        new_shape += [k, m[a]]
    blocks = vals.reshape(*new_shape, dim)
    cube_axes = tuple(range(0, 2 * dim, 2))
    inner = tuple(range(1, 2 * dim, 2))
    blocks = np.transpose(blocks, cube_axes + inner + (2 * dim,)).reshape(k ** dim, -1, dim)
    centroids = blocks.mean(axis=1)
    side = [h * n / k for h, n in zip(g.spacing, g.shape)]
    idx = np.stack(np.unravel_index(np.arange(k ** dim), (k,) * dim), -1)
    centers = np.asarray(g.origin) + (idx + 0.5) * np.asarray(side)
    plan = solve_assignment(centroids, centers, 2.0, use_numba)
    sigma = plan.assignment
    X = g.nodes().reshape(*new_shape, dim)
    X = np.transpose(X, cube_axes + inner + (2 * dim,)).reshape(k ** dim, -1, dim)
    W = X - centers[:, None, :] + centers[sigma][:, None, :]
    gap = float(np.sum(np.linalg.norm(blocks - W, axis=-1)) * g.cell_volume)
    return CubePermutation(sigma, gap, adjacent_transpositions(sigma, k, dim), k)


# ------------------------------------------------------------ Hamiltonian flow

def _is_separable(H):
    h = H.shape[0] // 2
    return not np.any(H[:h, h:]) and not np.any(H[h:, :h])


def flow_step_matrix(H, dt):
    """One-step linear map of the integrator for ``gamma(x) = x^T H x / 2``.

    The vector field is ``x' = J^T H x`` (first half q, second half p).
    Separable H uses leapfrog (kick-drift-kick); otherwise the implicit
    midpoint rule, which for a linear field is the Cayley transform.
    """
    H = np.asarray(H, dtype=np.float64)
    dim = H.shape[0]
    J = matcore.symplectic_J(dim)
    if _is_separable(H):
        h = dim // 2
        kick = np.eye(dim)
        kick[h:, :h] = -0.5 * dt * H[:h, :h]
        drift = np.eye(dim)
        drift[:h, h:] = dt * H[h:, h:]
        return kick @ drift @ kick
    A = J.T @ H
    I = np.eye(dim)
    return np.linalg.solve(I - 0.5 * dt * A, I + 0.5 * dt * A)


def hamiltonian_flow(H, x0, t, dt):
    """Integrate the flow of the quadratic Hamiltonian ``x^T H x / 2`` from ``x0`` for time ``t``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] % 2:
        raise DomainError("H must be a square matrix of even size")
    H = 0.5 * (H + H.T)
    steps = max(1, int(math.ceil(abs(t) / dt - 1e-12)))
    M = flow_step_matrix(H, t / steps)
    x = np.asarray(x0, dtype=np.float64).copy()
    for _ in range(steps):
        x = M @ x
    return x


def flow_map_matrix(H, t, dt):
    """Linear flow map (its own Jacobian) of :func:`hamiltonian_flow`."""
    dim = np.asarray(H).shape[0]
    return np.stack([hamiltonian_flow(H, e, t, dt) for e in np.eye(dim)], axis=1)
