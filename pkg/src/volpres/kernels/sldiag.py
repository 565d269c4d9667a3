"""Diagonal nearest point on {prod d = 1} for positive ascending vectors ``a``.

Minimises ``sum (d_j - a_j)^2`` subject to ``prod d_j = 1``.  Stationary
points satisfy ``d_j^2 - a_j d_j - lam = 0`` so every ``d_j`` is one of the
two roots ``(a_j +- sqrt(a_j^2 + 4 lam)) / 2``.

* ``prod a <= 1``: ``lam >= 0`` and only the ``+`` root is positive.  The
  product of ``+`` roots increases monotonically in ``lam``; a safeguarded
  Newton/bisection finds the unique root.
* ``prod a > 1``: ``lam`` lies in ``[-a_1^2/4, 0)``.  The ``-`` root may be
  active on a prefix of the smallest ``a_j``.  All ``n + 1`` prefix patterns
  are scanned on a grid in ``lam``, every sign change is refined, and the
  feasible candidate of least distance wins.  A log-space projected Newton
  descent is run as a cross-check and replaces the branch answer only when
  it is strictly better.

Returned status codes: 0 ok, 1 no feasible candidate found.
"""
import numpy as np

from .._accel import njit, pick

PROD_TOL = 1e-12
MAX_BISECT = 200


def lambda_grid():
    """Grid over ``q`` in (0, 1], with ``lam = -q a_1^2 / 4``."""
    g = np.concatenate([
        np.geomspace(1e-40, 1e-2, 120, endpoint=False),
        np.linspace(1e-2, 1.0 - 1e-2, 100, endpoint=False),
        1.0 - np.geomspace(1e-2, 1e-16, 60),
        [1.0],
    ])
    return np.unique(g)


_QGRID = lambda_grid()


# ------------------------------------------------------------ scalar (numba)

@njit
def _roots(a, lam, m, d):
    """Fill d with roots for pattern m (minus root on the first m entries)."""
    n = a.shape[0]
    for j in range(n):
        disc = a[j] * a[j] + 4.0 * lam
        if disc < 0.0:
            disc = 0.0
        r = np.sqrt(disc)
        plus = 0.5 * (a[j] + r)
        if j < m:
            d[j] = -lam / plus if plus > 0.0 else 0.0
        else:
            d[j] = plus


@njit
def _logprod(a, lam, m, d):
    _roots(a, lam, m, d)
    s = 0.0
    for j in range(a.shape[0]):
        if d[j] <= 0.0:
            return -np.inf
        s += np.log(d[j])
    return s


@njit
def _dlogprod(a, lam, m, d):
    """Derivative of sum log d_j(lam) for the current pattern (d already filled)."""
    s = 0.0
    for j in range(a.shape[0]):
        r = np.sqrt(max(a[j] * a[j] + 4.0 * lam, 0.0))
        if r == 0.0 or d[j] <= 0.0:
            return np.nan
        if j < m:
            s -= 1.0 / (d[j] * r)
        else:
            s += 1.0 / (d[j] * r)
    return s


@njit
def _newton_polish(a, lam, m, d, lo, hi):
    for _ in range(8):
        f = _logprod(a, lam, m, d)
        if abs(f) <= 1e-15:
            break
        df = _dlogprod(a, lam, m, d)
        if not np.isfinite(df) or df == 0.0:
            break
        new = lam - f / df
        if new < lo or new > hi:
            break
        lam = new
    _roots(a, lam, m, d)
    return lam


@njit
def _solve_phase1(a, d):
    lo = 0.0
    hi = 1.0
    while _logprod(a, hi, a.shape[0] * 0, d) < 0.0:
        lo = hi
        hi *= 2.0
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _logprod(a, mid, 0, d) < 0.0:
            lo = mid
        else:
            hi = mid
    lam = _newton_polish(a, 0.5 * (lo + hi), 0, d, lo, hi)
    return lam


@njit
def _logspace_descent(a, t):
    """Projected Newton on f(t) = sum (e^t - a)^2 with sum t = 0; t updated in place."""
    n = a.shape[0]
    g = np.empty(n)
    h = np.empty(n)
    step = np.empty(n)
    for _ in range(200):
        f0 = 0.0
        for j in range(n):
            e = np.exp(t[j])
            f0 += (e - a[j]) ** 2
            g[j] = 2.0 * (e - a[j]) * e
            h[j] = 2.0 * e * (2.0 * e - a[j])
        convex = True
        for j in range(n):
            if h[j] <= 0.0:
                convex = False
        if convex:
            num = 0.0
            den = 0.0
            for j in range(n):
                num += g[j] / h[j]
                den += 1.0 / h[j]
            mu = -num / den
            for j in range(n):
                step[j] = -(g[j] + mu) / h[j]
        else:
            gm = 0.0
            for j in range(n):
                gm += g[j]
            gm /= n
            for j in range(n):
                step[j] = -(g[j] - gm)
        slope = 0.0
        for j in range(n):
            slope += g[j] * step[j]
        if slope >= 0.0 or not np.isfinite(slope):
            break
        if -slope < 1e-30:
            break
        alpha = 1.0
        accepted = False
        for _ls in range(60):
            f1 = 0.0
            for j in range(n):
                f1 += (np.exp(t[j] + alpha * step[j]) - a[j]) ** 2
            if f1 <= f0 + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        for j in range(n):
            t[j] += alpha * step[j]
    # restore exact feasibility
    mean = 0.0
    for j in range(n):
        mean += t[j]
    mean /= n
    for j in range(n):
        t[j] -= mean


@njit
def _dist2(a, d):
    s = 0.0
    for j in range(a.shape[0]):
        s += (d[j] - a[j]) ** 2
    return s


@njit
def _sl_diag_one(a, qgrid, d_out):
    n = a.shape[0]
    d = np.empty(n)
    logdet = 0.0
    for j in range(n):
        logdet += np.log(a[j])
    if logdet == 0.0:
        for j in range(n):
            d_out[j] = a[j]
        return 0.0, 0
    if logdet < 0.0:
        lam = _solve_phase1(a, d)
        for j in range(n):
            d_out[j] = d[j]
        return lam, 0
    best = np.inf
    best_lam = 0.0
    lam_scale = 0.25 * a[0] * a[0]
    ng = qgrid.shape[0]
    for m in range(n + 1):
        prev_q = qgrid[0]
        prev_f = _logprod(a, -lam_scale * prev_q, m, d)
        for k in range(1, ng):
            q = qgrid[k]
            f = _logprod(a, -lam_scale * q, m, d)
            if (prev_f < 0.0) != (f < 0.0) or f == 0.0:
                qlo = prev_q
                qhi = q
                flo = prev_f
                for _ in range(MAX_BISECT):
                    if qlo > 0.0 and qhi > 2.0 * qlo:
                        qm = np.sqrt(qlo * qhi)
                    else:
                        qm = 0.5 * (qlo + qhi)
                    if qm <= qlo or qm >= qhi:
                        break
                    fm = _logprod(a, -lam_scale * qm, m, d)
                    if (fm < 0.0) == (flo < 0.0):
                        qlo = qm
                        flo = fm
                    else:
                        qhi = qm
                lam = _newton_polish(a, -lam_scale * 0.5 * (qlo + qhi), m, d,
                                     -lam_scale * qhi, -lam_scale * qlo)
                s = 0.0
                ok = True
                for j in range(n):
                    if d[j] <= 0.0:
                        ok = False
                    else:
                        s += np.log(d[j])
                if ok and abs(s) <= PROD_TOL:
                    dd = _dist2(a, d)
                    if dd < best:
                        best = dd
                        best_lam = lam
                        for j in range(n):
                            d_out[j] = d[j]
            prev_q = q
            prev_f = f
    # log-space cross-check
    t = np.empty(n)
    for j in range(n):
        t[j] = np.log(a[j]) - logdet / n
    _logspace_descent(a, t)
    for j in range(n):
        d[j] = np.exp(t[j])
    dd = _dist2(a, d)
    if dd < best * (1.0 - 1e-12):
        best = dd
        lam_acc = 0.0
        for j in range(n):
            d_out[j] = d[j]
            lam_acc += d[j] * (d[j] - a[j])
        best_lam = lam_acc / n
    if not np.isfinite(best):
        return 0.0, 1
    return best_lam, 0


@njit
def _sl_diag_batch_nb(A, qgrid):
    m, n = A.shape
    D = np.empty((m, n))
    lam = np.empty(m)
    status = np.empty(m, dtype=np.int64)
    for b in range(m):
        lb, st = _sl_diag_one(A[b], qgrid, D[b])
        lam[b] = lb
        status[b] = st
    return D, lam, status


# --------------------------------------------------------------- numpy batch

def _roots_np(a, lam, m):
    """a: (k, n); lam: (k,); pattern m (scalar). Returns (k, n) roots."""
    disc = np.maximum(a * a + 4.0 * lam[:, None], 0.0)
    plus = 0.5 * (a + np.sqrt(disc))
    d = plus.copy()
    if m:
        with np.errstate(divide="ignore", invalid="ignore"):
            minus = np.where(plus > 0.0, -lam[:, None] / plus, 0.0)
        d[:, :m] = minus[:, :m]
    return d


def _logprod_np(a, lam, m):
    d = _roots_np(a, lam, m)
    with np.errstate(divide="ignore"):
        return np.log(d).sum(axis=1), d


def _polish_np(a, lam, m, lo, hi):
    for _ in range(8):
        f, d = _logprod_np(a, lam, m)
        r = np.sqrt(np.maximum(a * a + 4.0 * lam[:, None], 0.0))
        sgn = np.ones(a.shape[1])
        sgn[:m] = -1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            df = (sgn / (d * r)).sum(axis=1)
            new = lam - f / df
        ok = np.isfinite(new) & (new >= lo) & (new <= hi) & (np.abs(f) > 1e-15)
        if not ok.any():
            break
        lam = np.where(ok, new, lam)
    return lam, _roots_np(a, lam, m)


def _phase1_np(a):
    k = a.shape[0]
    lo = np.zeros(k)
    hi = np.ones(k)
    while True:
        f, _ = _logprod_np(a, hi, 0)
        grow = f < 0.0
        if not grow.any():
            break
        lo = np.where(grow, hi, lo)
        hi = np.where(grow, 2.0 * hi, hi)
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        f, _ = _logprod_np(a, mid, 0)
        neg = f < 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return _polish_np(a, 0.5 * (lo + hi), 0, lo, hi)


def _logspace_descent_np(a):
    k, n = a.shape
    t = np.log(a) - np.log(a).mean(axis=1, keepdims=True)
    active = np.ones(k, dtype=bool)
    for _ in range(200):
        e = np.exp(t)
        f0 = ((e - a) ** 2).sum(axis=1)
        g = 2.0 * (e - a) * e
        h = 2.0 * e * (2.0 * e - a)
        convex = (h > 0.0).all(axis=1)
        hs = np.where(h > 0.0, h, 1.0)
        mu = -(g / hs).sum(axis=1) / (1.0 / hs).sum(axis=1)
        newton = -(g + mu[:, None]) / hs
        grad = -(g - g.mean(axis=1, keepdims=True))
        step = np.where(convex[:, None], newton, grad)
        slope = (g * step).sum(axis=1)
        active &= np.isfinite(slope) & (slope < -1e-30)
        if not active.any():
            break
        alpha = np.ones(k)
        accepted = np.zeros(k, dtype=bool)
        for _ls in range(60):
            with np.errstate(over="ignore", invalid="ignore"):  # overshooting trial steps give inf and are rejected
                f1 = ((np.exp(t + alpha[:, None] * step) - a) ** 2).sum(axis=1)
            accepted |= f1 <= f0 + 1e-4 * alpha * slope
            todo = active & ~accepted
            if not todo.any():
                break
            alpha = np.where(todo, 0.5 * alpha, alpha)
        active &= accepted
        t = np.where(active[:, None], t + alpha[:, None] * step, t)
    t -= t.mean(axis=1, keepdims=True)
    return np.exp(t)


def _sl_diag_batch_np(A, qgrid):
    m, n = A.shape
    D = np.empty((m, n))
    lam = np.zeros(m)
    status = np.zeros(m, dtype=np.int64)
    logdet = np.log(A).sum(axis=1)

    same = logdet == 0.0
    D[same] = A[same]

    low = logdet < 0.0
    if low.any():
        lam_l, D_l = _phase1_np(A[low])
        lam[low] = lam_l
        D[low] = D_l

    high = np.nonzero(logdet > 0.0)[0]
    if high.size:
        a = A[high]
        k = high.size
        scale = 0.25 * a[:, 0] ** 2
        best = np.full(k, np.inf)
        best_d = np.zeros((k, n))
        best_lam = np.zeros(k)
        for pat in range(n + 1):
            lam_grid = -scale[:, None] * qgrid[None, :]
            F = np.empty((k, qgrid.size))
            for c in range(qgrid.size):
                F[:, c], _ = _logprod_np(a, lam_grid[:, c], pat)
            neg = F < 0.0
            change = (neg[:, :-1] != neg[:, 1:]) | (F[:, 1:] == 0.0)
            rows, cols = np.nonzero(change)
            if rows.size == 0:
                continue
            ar = a[rows]
            sc = scale[rows]
            qlo = qgrid[cols].copy()
            qhi = qgrid[cols + 1].copy()
            flo_neg = neg[rows, cols]
            for _ in range(MAX_BISECT):
                geo = (qlo > 0.0) & (qhi > 2.0 * qlo)
                qm = np.where(geo, np.sqrt(qlo * qhi), 0.5 * (qlo + qhi))
                fm, _ = _logprod_np(ar, -sc * qm, pat)
                same_side = (fm < 0.0) == flo_neg
                qlo = np.where(same_side, qm, qlo)
                qhi = np.where(same_side, qhi, qm)
            lam_c, d_c = _polish_np(ar, -sc * 0.5 * (qlo + qhi), pat, -sc * qhi, -sc * qlo)
            with np.errstate(divide="ignore"):
                s = np.log(d_c).sum(axis=1)
            ok = (d_c > 0.0).all(axis=1) & (np.abs(s) <= PROD_TOL)
            dist = np.where(ok, ((d_c - ar) ** 2).sum(axis=1), np.inf)
            for r, dd, lc, dv in zip(rows, dist, lam_c, d_c):
                if dd < best[r]:
                    best[r] = dd
                    best_lam[r] = lc
                    best_d[r] = dv
        d_n = _logspace_descent_np(a)
        dist_n = ((d_n - a) ** 2).sum(axis=1)
        better = dist_n < best * (1.0 - 1e-12)
        best_d[better] = d_n[better]
        best_lam[better] = (d_n[better] * (d_n[better] - a[better])).mean(axis=1)
        best[better] = dist_n[better]
        status[high[~np.isfinite(best)]] = 1
        D[high] = best_d
        lam[high] = best_lam
    return D, lam, status


def sl_diag_batch(a, use_numba=None):
    """Solve for a batch ``a`` of shape (m, n) of positive ascending vectors.

    Returns ``(d, lam, status)``.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    return pick(_sl_diag_batch_nb, _sl_diag_batch_np, use_numba)(a, _QGRID)
