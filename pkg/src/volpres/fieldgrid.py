"""Deformation fields sampled on uniform rectangular grids.

Nodes are cell centred: along each axis ``x_i = origin + (i + 1/2) h``, so
the midpoint rule ``sum f(x_i) h^n`` integrates over the whole box.
``periodic`` fields are functions on the torus; ``clamped`` fields use
central differences inside and second-order one-sided ones at the ends.
"""
import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import ConvexHull, QhullError

from . import matcore
from .errors import DomainError, PreconditionError
from .nearness import BoundReport, proj_SL_batch

BOUNDARIES = ("periodic", "clamped")


# ---------------------------------------------------------------- containers

@dataclass(frozen=True)
class GridGeometry:
    shape: tuple
    origin: tuple
    spacing: tuple
    boundary: str = "clamped"

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        if not len(self.shape) == len(self.origin) == len(self.spacing):
            raise ValueError("shape, origin and spacing must have equal length")
        if not 1 <= len(self.shape) <= 4:
            raise ValueError(f"spatial dimension must be 1..4, got {len(self.shape)}")
        if any(h <= 0 for h in self.spacing) or any(s < 1 for s in self.shape):
            raise ValueError("spacing must be positive and shape at least 1")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")

    @property
    def dim(self):
        return len(self.shape)

    @property
    def size(self):
        return tuple(s * h for s, h in zip(self.shape, self.spacing))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod(self.size))

    def axes(self):
        return [o + (np.arange(s) + 0.5) * h for s, o, h in zip(self.shape, self.origin, self.spacing)]

    def nodes(self):
        """Node coordinates, shape ``(*shape, dim)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)


def unit_grid(n, dim=2, boundary="clamped", lo=0.0, hi=1.0):
    """``n`` cells per axis on the cube ``[lo, hi]^dim``."""
    h = (hi - lo) / n
    return GridGeometry((n,) * dim, (lo,) * dim, (h,) * dim, boundary)


@dataclass(frozen=True)
class GridField:
    geometry: GridGeometry
    values: np.ndarray  # (*shape, components)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape[:-1] != self.geometry.shape and v.shape == self.geometry.shape:
            v = v[..., None]
        if v.shape[:-1] != self.geometry.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.geometry.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    dim = property(lambda self: self.geometry.dim)
    shape = property(lambda self: self.geometry.shape)
    origin = property(lambda self: self.geometry.origin)
    spacing = property(lambda self: self.geometry.spacing)
    boundary = property(lambda self: self.geometry.boundary)

    @property
    def components(self):
        return self.values.shape[-1]

    def points(self):
        return self.values.reshape(-1, self.components)

    def with_values(self, values):
        return GridField(self.geometry, values)

    # -- I/O
    def to_dict(self):
        g = self.geometry
        return {
            "dim": g.dim,
            "shape": list(g.shape),
            "origin": list(g.origin),
            "spacing": list(g.spacing),
            "boundary": g.boundary,
            "values": [float(x) for x in self.values.ravel()],
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        g = GridGeometry(tuple(d["shape"]), tuple(d["origin"]), tuple(d["spacing"]), d.get("boundary", "clamped"))
        vals = np.asarray(d["values"], dtype=np.float64)
        cells = int(np.prod(g.shape))
        if vals.size % cells:
            raise ValueError(f"{vals.size} values do not divide into {cells} nodes")
        return cls(g, vals.reshape(*g.shape, vals.size // cells))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def scalar_csv(geometry, values, name="value"):
    """CSV text with index columns and one value column, LF line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"i{k}" for k in range(geometry.dim)] + [name])
    vals = np.asarray(values).reshape(geometry.shape)
    for idx in np.ndindex(*geometry.shape):
        w.writerow(list(idx) + [repr(float(vals[idx]))])
    return buf.getvalue()


# ---------------------------------------------------------------- map families

def _potential(name, X):
    """Return (phi, grad, hessian) of a named analytic potential at X (..., d)."""
    d = X.shape[-1]
    tp = 2.0 * math.pi
    if name == "sinsin":
        s = np.sin(tp * X)
        c = np.cos(tp * X)
        phi = np.prod(s, axis=-1)
        grad = np.empty_like(X)
        hess = np.empty(X.shape + (d,))
        for i in range(d):
            others = np.prod(np.delete(s, i, axis=-1), axis=-1) if d > 1 else 1.0
            grad[..., i] = tp * c[..., i] * others
            for j in range(d):
                if i == j:
                    hess[..., i, j] = -tp * tp * phi
                else:
                    rest = np.prod(np.delete(s, [i, j], axis=-1), axis=-1) if d > 2 else 1.0
                    hess[..., i, j] = tp * tp * c[..., i] * c[..., j] * rest
        return phi, grad, hess
    if name == "asym":
        if d != 2:
            raise DomainError("potential 'asym' is two-dimensional")
        x, y = X[..., 0], X[..., 1]
        phi = np.sin(tp * x) * np.sin(2 * tp * y) + np.cos(tp * x)
        gx = tp * np.cos(tp * x) * np.sin(2 * tp * y) - tp * np.sin(tp * x)
        gy = 2 * tp * np.sin(tp * x) * np.cos(2 * tp * y)
        hxx = -tp * tp * np.sin(tp * x) * np.sin(2 * tp * y) - tp * tp * np.cos(tp * x)
        hxy = 2 * tp * tp * np.cos(tp * x) * np.cos(2 * tp * y)
        hyy = -4 * tp * tp * np.sin(tp * x) * np.sin(2 * tp * y)
        hess = np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)
        return phi, np.stack([gx, gy], -1), hess
    raise ValueError(f"unknown potential {name!r}; expected 'sinsin' or 'asym'")


def _rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


@dataclass(frozen=True)
class MapSpec:
    """Analytic deformation family.

    Families: identity, affine(A, c), shear(s), twist(omega), radial_polar,
    fold, cavity, gradient(potential), hamiltonian(potential), compress(alpha).
    """
    family: str
    params: dict = field(default_factory=dict)

    FAMILIES = ("identity", "affine", "shear", "twist", "radial_polar", "fold",
                "cavity", "gradient", "hamiltonian", "compress")

    def __post_init__(self):
        if self.family not in self.FAMILIES:
            raise ValueError(f"unknown map family {self.family!r}")

    @classmethod
    def parse(cls, text):
        """``family`` or ``family:arg`` as used on the command line."""
        name, _, arg = text.partition(":")
        name = name.strip()
        if name == "twist":
            return cls(name, {"omega": float(arg) if arg else 0.5})
        if name == "shear":
            return cls(name, {"s": float(arg) if arg else 0.5})
        if name == "compress":
            return cls(name, {"alpha": float(arg) if arg else 0.3})
        if name in ("gradient", "hamiltonian"):
            return cls(name, {"potential": arg or "sinsin"})
        if name == "affine":
            vals = [float(v) for v in arg.split(",")] if arg else [1.0, 0.0, 0.0, 1.0]
            n = int(round(math.sqrt(len(vals))))
            if n * n != len(vals):
                raise ValueError(f"affine needs n*n entries, got {len(vals)}")
            return cls(name, {"A": np.array(vals).reshape(n, n), "c": np.zeros(n)})
        if arg:
            raise ValueError(f"family {name!r} takes no argument")
        return cls(name, {})

    # -- metadata
    @property
    def injective(self):
        if self.family in ("radial_polar", "fold", "gradient"):
            return False
        if self.family == "affine":
            return abs(np.linalg.det(self.params["A"])) > 0
        if self.family == "compress":
            return self.params.get("alpha", 0.3) < 2.0
        return True

    def default_geometry(self, n, dim=2, boundary="clamped"):
        if self.family in ("radial_polar", "fold", "cavity"):
            return unit_grid(n, dim, boundary, -1.0, 1.0)
        return unit_grid(n, dim, boundary)

    def det_bounds(self):
        """Analytic (lambda, Lambda) on the default domain, or None when unknown."""
        f = self.family
        if f in ("identity", "shear", "twist", "radial_polar", "cavity", "hamiltonian"):
            return (1.0, 1.0)
        if f == "compress":
            a = self.params.get("alpha", 0.3)
            return ((1 - a / 2) ** 2, (1 + a / 2) ** 2)
        if f == "affine":
            d = float(np.linalg.det(self.params["A"]))
            return (d, d)
        return None

    def diameter(self, geometry):
        """Analytic image diameter on ``geometry``'s box when known."""
        f = self.family
        diag = math.sqrt(sum(s * s for s in geometry.size))
        if f in ("identity", "compress"):
            return diag
        if f == "affine":
            corners = np.array(np.meshgrid(*[[o, o + s] for o, s in zip(geometry.origin, geometry.size)],
                                           indexing="ij")).reshape(geometry.dim, -1).T
            img = corners @ self.params["A"].T
            return float(max(np.linalg.norm(p - q) for p in img for q in img))
        return None

    # -- evaluation
    def value(self, X):
        return self._eval(np.asarray(X, dtype=np.float64), False)

    def jacobian(self, X):
        return self._eval(np.asarray(X, dtype=np.float64), True)

    def _eval(self, X, jac):
        f = self.family
        d = X.shape[-1]
        eye = np.broadcast_to(np.eye(d), X.shape + (d,))
        if f == "identity":
            return eye.copy() if jac else X.copy()
        if f == "affine":
            A = np.asarray(self.params["A"], dtype=np.float64)
            if A.shape != (d, d):
                raise DomainError(f"affine map is {A.shape[0]}-dimensional, grid is {d}-dimensional")
            if jac:
                return np.broadcast_to(A, X.shape + (d,)).copy()
            return X @ A.T + np.asarray(self.params.get("c", np.zeros(d)))
        if f == "shear":
            s = self.params.get("s", 0.5)
            if d < 2:
                raise DomainError("shear needs at least two dimensions")
            if jac:
                J = eye.copy()
                J[..., 0, 1] = s
                return J
            out = X.copy()
            out[..., 0] += s * X[..., 1]
            return out
        if f == "compress":
            a = self.params.get("alpha", 0.3)
            tp = 2.0 * math.pi
            if jac:
                J = np.zeros(X.shape + (d,))
                for i in range(d):
                    J[..., i, i] = 1.0 + 0.5 * a * np.cos(tp * X[..., i])
                return J
            return X + a / (2.0 * tp) * np.sin(tp * X)
        if f in ("gradient", "hamiltonian"):
            _, g, H = _potential(self.params.get("potential", "sinsin"), X)
            if f == "gradient":
                return H if jac else g
            J = matcore.symplectic_J(d)
            return np.einsum("ij,...jk->...ik", J, H) if jac else g @ J.T
        if d != 2 and f in ("twist", "radial_polar"):
            raise DomainError(f"family {f!r} is two-dimensional")
        if f == "twist":
            w = self.params.get("omega", 0.5)
            c = np.array([0.5, 0.5])
            Y = X - c
            r2 = np.sum(Y * Y, axis=-1)
            theta = w * np.exp(-4.0 * r2)
            R = _rot(theta)
            if not jac:
                return c + np.einsum("...ij,...j->...i", R, Y)
            # D[R(theta(r)) y] = R + (theta'(r)/r) R J y y^T with theta'/r = -8 theta
            Jm = np.array([[0.0, -1.0], [1.0, 0.0]])
            RJy = np.einsum("...ij,jk,...k->...i", R, Jm, Y)
            return R + (-8.0 * theta)[..., None, None] * RJy[..., :, None] * Y[..., None, :]
        if f == "radial_polar":
            # (r, t) -> (c r, 2t) with c^2 * 2 = 1 so that det = 1; in complex form z^2 / (sqrt2 |z|)
            x, y = X[..., 0], X[..., 1]
            r = np.hypot(x, y)
            rs = np.where(r > 0, r, 1.0)
            k = 1.0 / math.sqrt(2.0)
            if not jac:
                return np.stack([k * (x * x - y * y) / rs, k * 2 * x * y / rs], -1)
            J = np.empty(X.shape + (2,))
            r3 = rs ** 3
            J[..., 0, 0] = k * (2 * x / rs - (x * x - y * y) * x / r3)
            J[..., 0, 1] = k * (-2 * y / rs - (x * x - y * y) * y / r3)
            J[..., 1, 0] = k * (2 * y / rs - 2 * x * y * x / r3)
            J[..., 1, 1] = k * (2 * x / rs - 2 * x * y * y / r3)
            return J
        if f == "fold":
            if jac:
                J = np.zeros(X.shape + (d,))
                for i in range(d):
                    J[..., i, i] = 0.5 * np.sign(X[..., i])
                return J
            return 0.5 * np.abs(X)
        if f == "cavity":
            r = np.linalg.norm(X, axis=-1)
            rs = np.where(r > 0, r, 1.0)
            base = 2.0 ** d - 1.0
            R = (base + rs ** d) ** (1.0 / d)
            if not jac:
                return X / rs[..., None] * R[..., None]
            e = X / rs[..., None]
            dR = rs ** (d - 1) * (base + rs ** d) ** (1.0 / d - 1.0)
            P = e[..., :, None] * e[..., None, :]
            return (R / rs)[..., None, None] * (eye - P) + dR[..., None, None] * P
        raise AssertionError(f)


def sample(spec, geometry):
    """Evaluate ``spec`` at every node of ``geometry``."""
    if spec.family in ("twist", "radial_polar") and geometry.dim != 2:
        raise DomainError(f"family {spec.family!r} needs a 2-D grid")
    return GridField(geometry, spec.value(geometry.nodes()))


# ------------------------------------------------------------------- Jacobian

class JacobianField:
    """Per-node Jacobian matrices with cached determinant and distance fields."""

    def __init__(self, geometry, mats):
        self.geometry = geometry
        self.mats = mats  # (*shape, m, dim)

    @property
    def flat(self):
        m = self.mats
        return m.reshape(-1, m.shape[-2], m.shape[-1])

    @cached_property
    def det(self):
        return np.linalg.det(self.flat).reshape(self.geometry.shape)

    @cached_property
    def K(self):
        F = self.flat
        n = F.shape[-1]
        fro = np.sqrt(np.einsum("bij,bij->b", F, F))
        d = self.det.ravel()
        with np.errstate(divide="ignore", invalid="ignore"):
            K = np.where(d > 0, fro ** n / np.where(d > 0, d, 1.0), np.nan)
        return K.reshape(self.geometry.shape)

    @cached_property
    def dist_sl(self):
        tr = np.trace(self.flat, axis1=1, axis2=2)
        return (np.abs(tr) / math.sqrt(self.flat.shape[-1])).reshape(self.geometry.shape)

    @cached_property
    def dist_sp(self):
        F = self.flat
        J = matcore.symplectic_J(F.shape[-1])
        JA = np.einsum("ij,bjk->bik", J, F)
        S = JA - np.swapaxes(JA, 1, 2)
        return (0.5 * np.sqrt(np.einsum("bij,bij->b", S, S))).reshape(self.geometry.shape)

    @cached_property
    def dist_SL(self):
        _, dist, *_ = proj_SL_batch(self.flat)
        return dist.reshape(self.geometry.shape)


def diff_axis(values, axis, h, periodic):
    """Second-order first derivative along ``axis``."""
    if periodic:
        return (np.roll(values, -1, axis) - np.roll(values, 1, axis)) / (2.0 * h)
    return np.gradient(values, h, axis=axis, edge_order=2)


def jacobian(u):
    g = u.geometry
    if any(s < 3 for s in g.shape):
        raise PreconditionError(f"jacobian needs at least 3 nodes per axis, got {g.shape}")
    per = g.boundary == "periodic"
    cols = [diff_axis(u.values, a, g.spacing[a], per) for a in range(g.dim)]
    return JacobianField(g, np.stack(cols, axis=-1))


def lp_norm(f, p, cell_volume=1.0, vector=False):
    """Riemann-sum ``(sum |f|^p dV)^(1/p)``.

    With ``vector=True`` the last axis holds components and the pointwise
    Euclidean norm is used.
    """
    f = np.asarray(f, dtype=np.float64)
    if p != math.inf and p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return _lp(f, p, cell_volume, vector)


def _lp(f, p, cell_volume, vector):
    a = np.linalg.norm(f, axis=-1) if vector else np.abs(f)
    if p == math.inf:
        return float(a.max()) if a.size else 0.0
    return float((np.sum(a ** p) * cell_volume) ** (1.0 / p))


def lp_integral(f, p, cell_volume=1.0):
    """``sum |f|^p dV`` (no root); scalar fields only."""
    return float(np.sum(np.abs(np.asarray(f)) ** p) * cell_volume)


# ---------------------------------------------------------- image geometry

@dataclass
class ImageGeometry:
    diameter: float
    volume: float
    mask: np.ndarray
    mask_origin: np.ndarray
    mask_spacing: float
    refine: int
    bbox: tuple = None  # (lo, hi) of the image including extrapolated boundary points

    def occupied_centers(self):
        idx = np.argwhere(self.mask)
        return self.mask_origin + (idx + 0.5) * self.mask_spacing


def _refined_points(u, refine, spec=None):
    """Map sub-cell centres: bilinear interpolation of u (extrapolated at the
    edges), or exact evaluation when the analytic ``spec`` is supplied."""
    g = u.geometry
    if spec is None:
        interp = RegularGridInterpolator(g.axes(), u.values, bounds_error=False, fill_value=None)
    else:
        interp = spec.value
    sub = [o + (np.arange(s * refine) + 0.5) * h / refine for s, o, h in zip(g.shape, g.origin, g.spacing)]
    P = np.stack(np.meshgrid(*sub, indexing="ij"), -1).reshape(-1, g.dim)
    return interp(P), interp


def _boundary_points(u, interp, per_edge):
    g = u.geometry
    lines = [np.linspace(o, o + s, per_edge) for o, s in zip(g.origin, g.size)]
    pts = []
    for a in range(g.dim):
        for end in (g.origin[a], g.origin[a] + g.size[a]):
            ax = list(lines)
            ax[a] = np.array([end])
            pts.append(np.stack(np.meshgrid(*ax, indexing="ij"), -1).reshape(-1, g.dim))
    return interp(np.concatenate(pts))


def _diameter(points):
    if len(points) < 2:
        return 0.0
    if points.shape[1] == 1:
        return float(points.max() - points.min())
    try:
        hull = points[ConvexHull(points).vertices]
    except QhullError:
        hull = points
    best = 0.0
    for k in range(0, len(hull), 512):
        block = hull[k:k + 512]
        dd = np.sqrt(((block[:, None, :] - hull[None, :, :]) ** 2).sum(-1)).max()
        best = max(best, float(dd))
    return best


def refine_factor(u, target=8.0, cap=24):
    """Sub-sampling so that mapped sub-cells are ~1/8 of a source cell apart."""
    Du = jacobian(u)
    op = float(np.max(np.linalg.norm(Du.flat, ord=2, axis=(1, 2))))
    return int(min(cap, max(2, math.ceil(target * op))))


def image_geometry(u, lattice_factor=4, refine=None, spec=None):
    """Diameter, occupied volume and occupancy mask of ``u(U)``.

    The mask lives on a lattice of spacing ``h / lattice_factor`` covering
    the image bounding box; a lattice cell is occupied when a mapped
    sub-cell centre lands in it.
    """
    g = u.geometry
    if g.dim not in (1, 2) or u.components != g.dim:
        raise DomainError("image geometry is available for 1-D and 2-D maps only")
    if refine is None:
        refine = refine_factor(u)
    pts, interp = _refined_points(u, refine, spec)
    bpts = _boundary_points(u, interp, max(g.shape) * 4 + 1)
    allp = np.concatenate([pts, bpts])
    diam = _diameter(allp)
    hl = min(g.spacing) / lattice_factor
    lo = pts.min(axis=0) - hl
    hi = pts.max(axis=0) + hl
    nbin = np.maximum(np.ceil((hi - lo) / hl).astype(int), 1)
    idx = np.clip(np.floor((pts - lo) / hl).astype(int), 0, nbin - 1)
    mask = np.zeros(tuple(nbin), dtype=bool)
    mask[tuple(idx.T)] = True
    vol = float(mask.sum()) * hl ** g.dim
    return ImageGeometry(diam, vol, mask, lo, hl, refine, (allp.min(axis=0), allp.max(axis=0)))


def multiplicity_density(u, bins=16, refine=None, spec=None):
    """Histogram estimate of omega_u over the image bounding box.

    Each sub-cell with positive determinant deposits its source volume in
    the bin containing its image; dividing by the bin volume estimates the
    density sum over positive-determinant preimages of 1/det Du.
    Returns ``(density, edges)``.
    """
    g = u.geometry
    if g.dim not in (1, 2):
        raise DomainError("multiplicity density is available for 1-D and 2-D maps only")
    if refine is None:
        refine = refine_factor(u)
    pts, _ = _refined_points(u, refine, spec)
    Du = jacobian(u)
    det = Du.det
    det_sub = det
    for a in range(g.dim):
        det_sub = np.repeat(det_sub, refine, axis=a)
    pos = det_sub.ravel() > 0
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    edges = [np.linspace(l, h + 1e-12 * max(1.0, abs(h)), bins + 1) for l, h in zip(lo, hi)]
    w = np.full(pos.sum(), g.cell_volume / refine ** g.dim)
    H, edges = np.histogramdd(pts[pos], bins=edges, weights=w)
    bin_vol = np.prod([e[1] - e[0] for e in edges])
    return H / bin_vol, edges


# ----------------------------------------------------------------- 1-D chain

def chain_check(u, p=1.0):
    """1-D check ``int |u - (x + c)|^p <= |U|^p int |1 - u'|^p``, c = mean(u - x)."""
    g = u.geometry
    if g.dim != 1:
        raise DomainError("the chain inequality is one-dimensional")
    x = g.nodes()[..., 0]
    v = u.values[..., 0]
    du = jacobian(u).mats[..., 0, 0]
    c = float(np.mean(v - x))
    lhs = lp_integral(v - x - c, p, g.cell_volume)
    rhs = g.volume ** p * lp_integral(1.0 - du, p, g.cell_volume)
    return BoundReport("chain-1d", 1, lhs, rhs, g.volume ** p, {"p": p, "c": c})


# ------------------------------------------------------------------- gallery

def _has_hole(mask):
    lab, k = ndimage.label(~mask)
    if k == 0:
        return False
    border = set(np.unique(np.concatenate([lab[0], lab[-1], lab[:, 0], lab[:, -1]])))
    return any(i not in border for i in range(1, k + 1))


def gallery(n=64):
    """Qualitative flags for the three classic counterexample maps."""
    out = {}
    spec = MapSpec("radial_polar")
    g = spec.default_geometry(n)
    u = sample(spec, g)
    det = jacobian(u).det
    r = np.linalg.norm(g.nodes(), axis=-1)
    away = r > 0.25
    ig = image_geometry(u, spec=spec)
    det_int = float(det.sum() * g.cell_volume)
    out["radial_polar"] = {
        "median_det_error": float(np.median(np.abs(det[away] - 1.0))),
        "det_integral": det_int,
        "occupied_volume": ig.volume,
        "jacobian_one_not_measure_preserving": bool(np.median(np.abs(det[away] - 1.0)) < 0.02
                                                    and ig.volume < 0.75 * det_int),
    }
    spec = MapSpec("fold")
    g = spec.default_geometry(n)
    u = sample(spec, g)
    det = jacobian(u).det
    ig = image_geometry(u, spec=spec)
    abs_int = float(np.abs(det).sum() * g.cell_volume)
    out["fold"] = {
        "abs_det_integral": abs_int,
        "occupied_volume": ig.volume,
        "cover_multiplicity": abs_int / ig.volume,
        "many_to_one": bool(abs_int / ig.volume > 1.5),
    }
    spec = MapSpec("cavity")
    g = spec.default_geometry(n)
    u = sample(spec, g)
    ig = image_geometry(u, spec=spec)
    out["cavity"] = {
        "domain_volume": g.volume,
        "occupied_volume": ig.volume,
        "volume_error": abs(ig.volume - g.volume) / g.volume,
        "has_hole": bool(_has_hole(ig.mask)),
    }
    return out
