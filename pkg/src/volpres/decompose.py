"""Grid decompositions: divergence-free part and Hamiltonian (symplectic-gradient) part.

On periodic grids both are computed in Fourier space with the symbol of
the central difference ``i sin(k h) / h``, so the discrete divergence of
the divergence-free part vanishes to round-off and the split of the
Dirichlet energy is exactly orthogonal.  Clamped grids use a Neumann
solve in the cosine basis.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import matcore
from .errors import DomainError, PreconditionError, SolverError
from .fieldgrid import GridField, diff_axis, jacobian, lp_integral

CG_MAXITER = 20000


@dataclass
class SolveInfo:
    bc: str
    method: str
    iterations: int = 0
    residual_norm: float = 0.0
    mean_removed: float = 0.0

    def to_dict(self):
        return {"bc": self.bc, "method": self.method, "iterations": self.iterations,
                "residual_norm": float(self.residual_norm), "mean_removed": float(self.mean_removed)}


@dataclass
class DecomposeResult:
    mode: str
    p: float
    corrected_field: GridField
    potential: GridField
    residual_lp: float
    rhs_lp: float
    solver: SolveInfo
    residual_kind: str = "derivative"
    extras: dict = field(default_factory=dict)

    @property
    def ratio(self):
        return self.residual_lp / self.rhs_lp if self.rhs_lp > 0 else math.nan

    def to_dict(self):
        r = self.ratio
        return {
            "mode": self.mode,
            "p": self.p,
            "residual": self.residual_lp,
            "rhs": self.rhs_lp,
            "ratio": r if math.isfinite(r) else None,
            "residual_kind": self.residual_kind,
            "solver": {k: v for k, v in self.solver.to_dict().items() if k in ("bc", "iterations", "residual_norm")},
        }


# --------------------------------------------------------------- Fourier bits

def _wavenumbers(geometry):
    return [2.0 * np.pi * sfft.fftfreq(n, d=h) for n, h in zip(geometry.shape, geometry.spacing)]


def _mesh(arrs):
    return np.meshgrid(*arrs, indexing="ij")


def central_symbols(geometry):
    """Per-axis ``sin(k h) / h``: the Fourier symbol of the central difference, divided by i."""
    return _mesh([np.sin(k * h) / h for k, h in zip(_wavenumbers(geometry), geometry.spacing)])


def laplace_symbol(geometry, stencil="compact"):
    """Symbol of the periodic discrete Laplacian.

    ``compact``: the 3-point stencil per axis, ``-(4/h^2) sin^2(k h / 2)``.
    ``wide``: the square of the central difference, ``-(sin(k h)/h)^2``.
    """
    ks = _mesh(_wavenumbers(geometry))
    out = np.zeros(geometry.shape)
    for k, h in zip(ks, geometry.spacing):
        if stencil == "compact":
            out -= (4.0 / h ** 2) * np.sin(0.5 * k * h) ** 2
        elif stencil == "wide":
            out -= (np.sin(k * h) / h) ** 2
        else:
            raise ValueError(f"unknown stencil {stencil!r}")
    return out


def _neumann_symbol(geometry):
    out = np.zeros(geometry.shape)
    idx = _mesh([np.arange(n) for n in geometry.shape])
    for i, n, h in zip(idx, geometry.shape, geometry.spacing):
        out -= (4.0 / h ** 2) * np.sin(np.pi * i / (2.0 * n)) ** 2
    return out


def _invert(rhs_hat, sym):
    tiny = 1e-12 * np.abs(sym).max() if sym.size else 0.0
    safe = np.where(np.abs(sym) > tiny, sym, 1.0)
    return np.where(np.abs(sym) > tiny, rhs_hat / safe, 0.0)


def _laplacian_matrix(geometry, bc):
    """Sparse 3-point-per-axis Laplacian (periodic or cell-centred Neumann)."""
    mats = []
    for n, h in zip(geometry.shape, geometry.spacing):
        main = -2.0 * np.ones(n)
        if bc == "neumann":
            main[0] = main[-1] = -1.0
        L = sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1], format="lil")
        if bc == "periodic" and n > 2:
            L[0, n - 1] = 1.0
            L[n - 1, 0] = 1.0
        mats.append(sp.csr_matrix(L) / h ** 2)
    total = None
    for a, L in enumerate(mats):
        left = int(np.prod(geometry.shape[:a]))
        right = int(np.prod(geometry.shape[a + 1:]))
        term = sp.kron(sp.kron(sp.identity(left), L), sp.identity(right))
        total = term if total is None else total + term
    return sp.csr_matrix(total)


def apply_laplacian(psi, geometry, bc, stencil="compact"):
    """Apply the discrete Laplacian matching :func:`poisson_solve`."""
    if bc == "periodic":
        return np.real(sfft.ifftn(laplace_symbol(geometry, stencil) * sfft.fftn(psi)))
    return (_laplacian_matrix(geometry, "neumann") @ psi.ravel()).reshape(geometry.shape)


def poisson_solve(rhs, bc="periodic", stencil="compact", method="spectral"):
    """Zero-mean solution of ``Lap_h psi = rhs``.

    ``rhs`` is a scalar GridField or an array on ``rhs.geometry``.  A
    non-zero mean in the right-hand side is projected out and recorded in
    the returned :class:`SolveInfo`.  Returns ``(psi GridField, SolveInfo)``.
    """
    g = rhs.geometry
    f = np.asarray(rhs.values[..., 0], dtype=np.float64)
    if bc not in ("periodic", "neumann"):
        raise ValueError(f"bc must be 'periodic' or 'neumann', got {bc!r}")
    mean = float(f.mean())
    f = f - mean
    info = SolveInfo(bc, method, mean_removed=mean)
    if method == "spectral":
        if bc == "periodic":
            sym = laplace_symbol(g, stencil)
            psi = np.real(sfft.ifftn(_invert(sfft.fftn(f), sym)))
        else:
            if stencil != "compact":
                raise ValueError("the Neumann solve supports the compact stencil only")
            psi = sfft.idctn(_invert(sfft.dctn(f, type=2, norm="ortho"), _neumann_symbol(g)),
                             type=2, norm="ortho")
        psi -= psi.mean()
    elif method == "cg":
        if stencil != "compact":
            raise ValueError("the iterative solve supports the compact stencil only")
        L = _laplacian_matrix(g, bc)
        b = -f.ravel()
        count = [0]

        def cb(_):
            count[0] += 1

        x, status = spla.cg(-L, b, rtol=1e-13, atol=0.0, maxiter=CG_MAXITER, callback=cb)
        res = float(np.linalg.norm(L @ x + b) / max(np.linalg.norm(b), 1e-300))
        if status != 0 and res > 1e-8:
            raise SolverError(f"conjugate gradients did not converge in {CG_MAXITER} iterations",
                              residual=res, state=x.reshape(g.shape))
        psi = x.reshape(g.shape) - x.mean()
        info.iterations = count[0]
    else:
        raise ValueError(f"unknown method {method!r}")
    r = apply_laplacian(psi, g, bc, stencil) - f
    info.residual_norm = float(np.linalg.norm(r) / max(np.linalg.norm(f), 1e-300)) if np.any(f) else float(np.linalg.norm(r))
    return GridField(g, psi), info


# ------------------------------------------------------------- decompositions

def _require(u, even=False):
    g = u.geometry
    if any(s < 8 for s in g.shape):
        raise PreconditionError(f"decompositions need at least 8 nodes per axis, got {g.shape}")
    if u.components != g.dim:
        raise DomainError(f"expected a {g.dim}-component field, got {u.components}")
    if even and g.dim % 2:
        raise DomainError(f"Hamiltonian decomposition needs an even dimension, got {g.dim}")


def _gradient_potential(w, geometry):
    """Fourier least-squares fit ``w ~ grad_h psi`` on a periodic grid.

    Returns ``(psi, grad_h psi, info)`` with the central-difference gradient.
    """
    S = central_symbols(geometry)
    W = [sfft.fftn(w[..., a]) for a in range(geometry.dim)]
    div_hat = sum(1j * s * wa for s, wa in zip(S, W))
    sym = -sum(s * s for s in S)
    psi_hat = _invert(div_hat, sym)
    psi = np.real(sfft.ifftn(psi_hat))
    grad = np.stack([np.real(sfft.ifftn(1j * s * psi_hat)) for s in S], -1)
    res = np.linalg.norm(sym * psi_hat - div_hat)
    scale = np.linalg.norm(div_hat)
    info = SolveInfo("periodic", "spectral", residual_norm=float(res / scale) if scale > 0 else float(res))
    return psi - psi.mean(), grad, info


def _gradient_potential_neumann(w, geometry):
    div = sum(diff_axis(w[..., a], a, geometry.spacing[a], False) for a in range(geometry.dim))
    psi, info = poisson_solve(GridField(geometry, div), bc="neumann")
    psi = psi.values[..., 0]
    grad = np.stack([diff_axis(psi, a, geometry.spacing[a], False) for a in range(geometry.dim)], -1)
    return psi, grad, info


def _split(w, u):
    g = u.geometry
    if g.boundary == "periodic":
        return _gradient_potential(w, g)
    return _gradient_potential_neumann(w, g)


def divergence(v):
    g = v.geometry
    per = g.boundary == "periodic"
    if per:
        S = central_symbols(g)
        return sum(np.real(sfft.ifftn(1j * S[a] * sfft.fftn(v.values[..., a]))) for a in range(g.dim))
    return sum(diff_axis(v.values[..., a], a, g.spacing[a], False) for a in range(g.dim))


def divfree_approx(u, p=2.0):
    """``v = u - grad psi`` with ``Lap psi = div u``; ``div v = 0`` on periodic grids.

    For ``p > 1`` the reported residual is ``int |Du - Dv|^p`` against
    ``int dist^p(Du, sl(n))``.  For ``p = 1`` no derivative estimate is
    available, so the residual is the field term ``int |u - v|`` against
    ``int |div u| / sqrt(n)``.
    """
    _require(u)
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    g = u.geometry
    psi, grad, info = _split(u.values, u)
    v = GridField(g, u.values - grad)
    Du = jacobian(u)
    if p == 1:
        residual = lp_integral(np.linalg.norm(grad, axis=-1), 1.0, g.cell_volume)
        rhs = lp_integral(np.abs(divergence(u)) / math.sqrt(g.dim), 1.0, g.cell_volume)
        kind = "field"
    else:
        D2 = jacobian(GridField(g, grad)).mats
        residual = lp_integral(np.sqrt(np.sum(D2 ** 2, axis=(-2, -1))), p, g.cell_volume)
        rhs = lp_integral(Du.dist_sl, p, g.cell_volume)
        kind = "derivative"
    return DecomposeResult("divfree", p, v, GridField(g, psi), residual, rhs, info, kind)


def hamiltonian_approx(u, p=2.0):
    """Fit ``u ~ J grad psi`` where ``Lap psi = div(J^T u)``.

    The residual is ``int |Du - J D^2 psi|^p`` against
    ``int dist^p(Du, sp(2n))`` with ``dist(A, sp) = |JA - (JA)^T| / 2``.
    """
    _require(u, even=True)
    g = u.geometry
    J = matcore.symplectic_J(g.dim)
    w = u.values @ J  # row vector u times J, i.e. J^T u
    psi, grad, info = _split(w, u)
    corrected = grad @ J.T
    Du = jacobian(u)
    Dc = jacobian(GridField(g, corrected)).mats
    diff = Du.mats - Dc
    residual = lp_integral(np.sqrt(np.sum(diff ** 2, axis=(-2, -1))), p, g.cell_volume)
    rhs = lp_integral(Du.dist_sp, p, g.cell_volume)
    return DecomposeResult("hamiltonian", p, GridField(g, corrected), GridField(g, psi), residual, rhs, info)


def energy_split(u, result):
    """``(int |Du|^2, int |Dv|^2, int |D grad psi|^2)`` for a divfree result."""
    g = u.geometry
    Du = jacobian(u).mats
    Dv = jacobian(result.corrected_field).mats
    Dg = Du - Dv
    cv = g.cell_volume
    return float(np.sum(Du ** 2) * cv), float(np.sum(Dv ** 2) * cv), float(np.sum(Dg ** 2) * cv)
