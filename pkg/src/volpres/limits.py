"""Static incompressible limit: minimise ``int W_iso(Du) + kappa w(det Du)`` and sweep kappa.

Discretisation: bilinear (Q1) elements on an ``n x n`` cell grid over the
unit square, one-point (cell-centre) quadrature.  Vertex positions are the
unknowns; boundary vertices are pinned to the boundary map.  The cell
gradient only sees the averaged edge differences, so hourglass modes
carry no energy; they are never excited because the gradient is
orthogonal to them.
"""
import csv
import io
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .energy import EnergySpec, density_batch
from .errors import SolverError
from .fieldgrid import GridField, unit_grid
from .rearrange import measure_preserving_approx

DET_FLOOR = 0.2
MAX_ITER = 5000


# ------------------------------------------------------------------ mechanics

def vertex_grid(n):
    t = np.linspace(0.0, 1.0, n + 1)
    return np.stack(np.meshgrid(t, t, indexing="ij"), -1)


def cell_gradients(U, h):
    """One-point Q1 gradients ``F[c] = du/dx`` for vertex positions U (n+1, n+1, 2)."""
    a = U[:-1, :-1]
    b = U[1:, :-1]
    c = U[:-1, 1:]
    d = U[1:, 1:]
    dx = (b + d - a - c) / (2.0 * h)
    dy = (c + d - a - b) / (2.0 * h)
    return np.stack([dx, dy], axis=-1)  # (n, n, 2, 2): [..., i, j] = du_i/dx_j


def _scatter(G, h):
    """Adjoint of :func:`cell_gradients`: cell stresses (n, n, 2, 2) to vertex forces."""
    gx = G[..., 0] / (2.0 * h)
    gy = G[..., 1] / (2.0 * h)
    n = G.shape[0]
    out = np.zeros((n + 1, n + 1, 2))
    out[:-1, :-1] += -gx - gy
    out[1:, :-1] += gx - gy
    out[:-1, 1:] += -gx + gy
    out[1:, 1:] += gx + gy
    return out


class Problem:
    """Discrete energy ``I(U) = sum_c W(F_c) h^2`` with pinned boundary vertices."""

    def __init__(self, boundary, spec, n):
        self.n = n
        self.h = 1.0 / n
        self.spec = spec
        X = vertex_grid(n)
        self.V = boundary.value(X)
        mask = np.zeros((n + 1, n + 1), dtype=bool)
        mask[1:-1, 1:-1] = True
        self.free = mask

    def unpack(self, z):
        U = self.V.copy()
        U[self.free] = z.reshape(-1, 2)
        return U

    def pack(self, U):
        return U[self.free].ravel().copy()

    def parts(self, U):
        F = cell_gradients(U, self.h).reshape(-1, 2, 2)
        iso, pen, grad = density_batch(self.spec, F)
        return F, iso, pen, grad

    def energy_parts(self, U):
        _, iso, pen, _ = self.parts(U)
        a = self.h ** 2
        return float(iso.sum() * a), float(pen.sum() * a)

    def value_and_grad(self, z):
        U = self.unpack(z)
        F, iso, pen, grad = self.parts(U)
        a = self.h ** 2
        val = float((iso + self.spec.kappa * pen).sum() * a)
        if not math.isfinite(val):
            return math.inf, None
        G = _scatter(grad.reshape(self.n, self.n, 2, 2), self.h) * a
        return val, G[self.free].ravel()


# -------------------------------------------------------------------- L-BFGS

@dataclass
class MinimizeInfo:
    iterations: int
    evaluations: int
    energy: float
    grad_inf: float
    converged: bool
    message: str


def lbfgs(fun, x0, maxiter=MAX_ITER, memory=10, rtol=1e-6):
    """Limited-memory BFGS with Armijo backtracking.

    Stops when ``max|grad| <= rtol (1 + |f|)``.  Infeasible trial points
    (``f = inf``) are rejected by the line search; if no feasible decrease
    is found after a rejection a :class:`SolverError` is raised carrying
    the last feasible iterate.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    f, g = fun(x)
    if g is None:
        raise SolverError("initial point is infeasible", state=x)
    S = deque(maxlen=memory)
    Y = deque(maxlen=memory)
    evals = 1
    msg = "iteration cap reached"
    it = 0
    for it in range(maxiter):
        gi = float(np.abs(g).max()) if g.size else 0.0
        if gi <= rtol * (1.0 + abs(f)):
            return x, MinimizeInfo(it, evals, f, gi, True, "converged")
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(S), reversed(Y)):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            q -= a * y
            alphas.append((rho, a))
        if S:
            q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
        else:
            q *= min(1.0, 1.0 / max(gi, 1e-300)) * 1e-2
        for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        d = -q
        slope = g @ d
        if slope >= 0:
            S.clear()
            Y.clear()
            d = -g * (1e-2 / max(gi, 1e-300))
            slope = g @ d
        step = 1.0
        hit_barrier = False
        while True:
            xn = x + step * d
            moved = not np.array_equal(xn, x)  # a step lost to rounding is no progress
            if moved:
                fn, gn = fun(xn)
                evals += 1
                if gn is None:
                    hit_barrier = True
                elif fn <= f + 1e-4 * step * slope:
                    break
            step *= 0.5
            if step < 1e-20 or not moved:
                if hit_barrier:
                    raise SolverError("line search blocked by the infeasible region",
                                      residual=gi, state=x)
                msg = "line search stalled"
                return x, MinimizeInfo(it, evals, f, gi, False, msg)
        s = xn - x
        y = gn - g
        sy = s @ y
        if sy > 1e-12 * math.sqrt((s @ s) * (y @ y)):
            S.append(s)
            Y.append(y)
        x, f, g = xn, fn, gn
    gi = float(np.abs(g).max()) if g.size else 0.0
    return x, MinimizeInfo(it + 1, evals, f, gi, gi <= rtol * (1.0 + abs(f)), msg)


# ------------------------------------------------------------------ results

@dataclass
class MinimizeResult:
    vertices: np.ndarray
    field: GridField  # cell-centred positions
    cell_gradients: np.ndarray
    energy_iso: float
    penalty_term: float
    kappa: float
    info: MinimizeInfo

    @property
    def energy_total(self):
        return self.energy_iso + self.kappa * self.penalty_term

    @property
    def det(self):
        F = self.cell_gradients
        return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]


def minimize_energy(boundary, spec, kappa=None, n=32, x0=None, maxiter=MAX_ITER):
    """Minimise the discrete energy with boundary vertices pinned to ``boundary``.

    ``kappa`` overrides ``spec.kappa``.  ``x0`` is an optional vertex array
    (n+1, n+1, 2) used as the starting point (warm start); by default the
    boundary map sampled at every vertex.
    """
    if kappa is not None:
        spec = spec.with_kappa(kappa)
    prob = Problem(boundary, spec, n)
    z0 = prob.pack(prob.V if x0 is None else x0)
    z, info = lbfgs(prob.value_and_grad, z0, maxiter=maxiter)
    U = prob.unpack(z)
    iso, pen = prob.energy_parts(U)
    centres = 0.25 * (U[:-1, :-1] + U[1:, :-1] + U[:-1, 1:] + U[1:, 1:])
    fld = GridField(unit_grid(n), centres)
    return MinimizeResult(U, fld, cell_gradients(U, prob.h), iso, pen, spec.kappa, info)


def gradient_check(boundary, spec, kappa=1.0, n=8, nodes=20, h=1e-5, seed=0, perturb=0.02):
    """Compare the analytic gradient with central differences at random interior vertices.

    The state is the boundary map plus a seeded perturbation so that the
    gradient is not trivially zero.  Returns the vector relative error.
    """
    spec = spec.with_kappa(kappa)
    prob = Problem(boundary, spec, n)
    rng = np.random.default_rng(seed)
    z = prob.pack(prob.V) + perturb * rng.uniform(-1.0, 1.0, prob.pack(prob.V).shape)
    _, g = prob.value_and_grad(z)
    m = z.size // 2
    picks = rng.choice(m, size=min(nodes, m), replace=False)
    comps = np.concatenate([2 * picks, 2 * picks + 1])
    fd = np.empty(comps.size)
    for k, c in enumerate(comps):
        e = np.zeros_like(z)
        e[c] = h
        fd[k] = (prob.value_and_grad(z + e)[0] - prob.value_and_grad(z - e)[0]) / (2.0 * h)
    an = g[comps]
    return float(np.linalg.norm(fd - an) / max(np.linalg.norm(an), 1e-300))


# -------------------------------------------------------------------- sweep

@dataclass
class KappaRow:
    kappa: float
    iterations: int
    energy_total: float
    energy_iso: float
    penalty_term: float
    det_dev_l2: float
    proj_err: float
    kappa_times_err: float
    min_det: float = math.nan
    status: str = "ok"


@dataclass
class SweepReport:
    rows: list
    fitted_slope: float
    c_envelope: float
    envelope_spread: float
    comparison_energy: dict = field(default_factory=dict)
    tags: list = field(default_factory=list)

    COLUMNS = ("kappa", "iterations", "energy_total", "energy_iso", "penalty_term",
               "det_dev_l2", "proj_err", "kappa_times_err")

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r.iterations if c == "iterations" else repr(float(getattr(r, c))) for c in self.COLUMNS])
        return buf.getvalue()

    def to_dict(self):
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v
        return {
            "fitted_slope": clean(self.fitted_slope),
            "c_envelope": clean(self.c_envelope),
            "envelope_spread": clean(self.envelope_spread),
            "tags": list(self.tags),
            "rows": [{k: clean(v) for k, v in asdict(r).items()} for r in self.rows],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def plot_data(self):
        """``log10 kappa, log10 proj_err`` pairs, one per line (positive errors only)."""
        lines = ["log10_kappa log10_proj_err"]
        for r in self.rows:
            if r.proj_err > 0:
                lines.append(f"{math.log10(r.kappa):.12g} {math.log10(r.proj_err):.12g}")
        return "\n".join(lines) + "\n"


def kappa_sweep(boundary, spec, kappas, n=32, seed=0, maxiter=MAX_ITER, use_numba=None):
    """Minimise for each kappa (warm-started), project onto measure-preserving maps, fit the decay."""
    kappas = [float(k) for k in kappas]
    if len(kappas) < 3 or any(b <= a for a, b in zip(kappas, kappas[1:])):
        raise ValueError("kappas must be strictly increasing with at least 3 values")
    if kappas[-1] / kappas[0] < 100.0:
        raise ValueError("kappas must span at least two decades")
    rows = []
    comparison = {}
    x0 = None
    for k in kappas:
        res = minimize_energy(boundary, spec, k, n, x0=x0, maxiter=maxiter)
        x0 = res.vertices
        h2 = (1.0 / n) ** 2
        det = res.det
        det_dev = float(np.sum((1.0 - det) ** 2) * h2)
        prob = Problem(boundary, spec.with_kappa(k), n)
        ci, cp = prob.energy_parts(prob.V)
        comparison[k] = ci + k * cp
        row = KappaRow(k, res.info.iterations, res.energy_total, res.energy_iso, res.penalty_term,
                       det_dev, math.nan, math.nan, float(det.min()))
        if not res.info.converged:
            row.status = res.info.message
        if det.min() < DET_FLOOR:
            row.status = "aborted: min det below %.2f" % DET_FLOOR
        else:
            mp = measure_preserving_approx(res.field, p=2.0, seed=seed, use_numba=use_numba)
            row.proj_err = mp.lhs
            row.kappa_times_err = k * mp.lhs
        rows.append(row)
    good = [r for r in rows if math.isfinite(r.proj_err)]
    tags = []
    pos = [r for r in good if r.proj_err > 0]
    if good and not pos:
        tags.append("degenerate-zero sweep")
        slope = math.nan
        env = 0.0
        spread = math.nan
    elif len(pos) >= 2:
        lk = np.log10([r.kappa for r in pos])
        le = np.log10([r.proj_err for r in pos])
        slope = float(np.polyfit(lk, le, 1)[0])
        kt = [r.kappa_times_err for r in pos]
        env = max(kt)
        spread = max(kt) / min(kt)
    else:
        slope = env = spread = math.nan
    return SweepReport(rows, slope, env, spread, comparison, tags)
