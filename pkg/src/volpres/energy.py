"""Stored-energy functions, volumetric penalties and their batched gradients."""
import math
from dataclasses import dataclass

import numpy as np

from . import matcore
from .errors import DomainError
from .nearness import proj_SL

ISO_KINDS = ("hookean", "neo_hookean", "mooney_rivlin")
PENALTY_KINDS = ("quadratic", "windowed")


class Infeasible(float):
    """Marker returned by the windowed penalty outside its window.

    Behaves as +inf in arithmetic, but callers are expected to test for it
    with :func:`is_infeasible` and reject the point instead.
    """

    def __new__(cls):
        return super().__new__(cls, math.inf)

    def __repr__(self):
        return "INFEASIBLE"


INFEASIBLE = Infeasible()


def is_infeasible(x):
    return isinstance(x, Infeasible) or (isinstance(x, float) and x == math.inf)


# --------------------------------------------------------- pointwise energies

def w_so(A):
    A = matcore.as_matrix(A)
    return 0.25 * float(np.sum((A + A.T) ** 2))


def w_SO(A):
    s = matcore.svd(A).sigma
    return float(np.sum((s - 1.0) ** 2))


def hookean(A):
    """Orthogonal split ``|A|^2 = iso + dil`` into trace-free and trace parts."""
    A = matcore.as_matrix(A)
    n = A.shape[0]
    tr = np.trace(A)
    dev = A - (tr / n) * np.eye(n)
    return float(np.sum(dev ** 2)), float(tr * tr / n)


def neo_hookean(A):
    A = matcore.as_matrix(A)
    n = A.shape[0]
    d = matcore._require_positive_det(A, "neo-Hookean energy")
    B = A * d ** (-1.0 / n)
    return max(float(np.sum(B ** 2)) - n, 0.0), (1.0 - d) ** 2


def mooney_rivlin_iso(A):
    A = matcore.as_matrix(A)
    if A.shape[0] != 3:
        raise DomainError(f"Mooney-Rivlin energy is defined for n = 3, got n = {A.shape[0]}")
    d = matcore._require_positive_det(A, "Mooney-Rivlin energy")
    B = A * d ** (-1.0 / 3.0)
    return max(float(np.sum(B ** 2)) - 3.0 + float(np.sum(matcore.cofactor(B) ** 2)) - 3.0, 0.0)


def w_SL(A):
    return proj_SL(A).distance ** 2


def matrix_power(A, k):
    A = matcore.as_matrix(A)
    P = np.eye(A.shape[0])
    for _ in range(k):
        P = P @ A
    return P


def modified_energy(A):
    """``(n + neo_iso(A^n)) * w_SL(A)``: SL distance weighted by distortion."""
    A = matcore.as_matrix(A)
    n = A.shape[0]
    matcore._require_positive_det(A, "modified energy")
    iso, _ = neo_hookean(matrix_power(A, n))
    return (n + iso) * w_SL(A)


def k_weight_ratio(A):
    """``K(A) / sqrt(n + neo_iso(A^n))``; used to probe the distortion envelope."""
    A = matcore.as_matrix(A)
    n = A.shape[0]
    iso, _ = neo_hookean(matrix_power(A, n))
    return matcore.cond_K(A) / math.sqrt(n + iso)


# ------------------------------------------------------------------- penalties

@dataclass(frozen=True)
class EnergySpec:
    kind: str = "neo_hookean"
    kappa: float = 1.0
    penalty_kind: str = "quadratic"
    c3: float = 1.0
    window: tuple = (0.0, math.inf)
    exponent: float = 2.0

    def __post_init__(self):
        if self.kind not in ISO_KINDS:
            raise ValueError(f"unknown energy kind {self.kind!r}")
        if self.penalty_kind not in PENALTY_KINDS:
            raise ValueError(f"unknown penalty kind {self.penalty_kind!r}")
        if self.kappa < 0 or self.c3 <= 0:
            raise ValueError("need kappa >= 0 and c3 > 0")
        lo, hi = self.window
        if not 0.0 <= lo < 1.0 < hi:
            raise ValueError(f"window must contain 1, got {self.window}")

    def with_kappa(self, kappa):
        return EnergySpec(self.kind, kappa, self.penalty_kind, self.c3, self.window, self.exponent)


def penalty(spec, x):
    if spec.penalty_kind == "windowed":
        lo, hi = spec.window
        if not lo <= x <= hi:
            return INFEASIBLE
        return spec.c3 * abs(1.0 - x) ** spec.exponent
    return spec.c3 * (1.0 - x) ** 2


def penalty_deriv(spec, x):
    if spec.penalty_kind == "windowed":
        lo, hi = spec.window
        if not lo <= x <= hi:
            return INFEASIBLE
        q = spec.exponent
        return -spec.c3 * q * abs(1.0 - x) ** (q - 1.0) * math.copysign(1.0, 1.0 - x) if x != 1.0 else 0.0
    return -2.0 * spec.c3 * (1.0 - x)


def _penalty_batch(spec, x):
    """Vectorised penalty and derivative; windowed values outside are inf."""
    if spec.penalty_kind == "windowed":
        lo, hi = spec.window
        q = spec.exponent
        r = 1.0 - x
        w = spec.c3 * np.abs(r) ** q
        dw = -spec.c3 * q * np.abs(r) ** (q - 1.0) * np.sign(r)
        out = (x < lo) | (x > hi)
        return np.where(out, np.inf, w), np.where(out, np.inf, dw)
    return spec.c3 * (1.0 - x) ** 2, -2.0 * spec.c3 * (1.0 - x)


# ------------------------------------------------------ batched density + grad

def det_cof_batch(F):
    """Determinants and cofactor matrices for a stack of 2x2 or 3x3 matrices."""
    n = F.shape[-1]
    if n == 2:
        a, b, c, d = F[:, 0, 0], F[:, 0, 1], F[:, 1, 0], F[:, 1, 1]
        cof = np.stack([np.stack([d, -c], -1), np.stack([-b, a], -1)], -2)
        return a * d - b * c, cof
    if n == 3:
        r0, r1, r2 = F[:, 0], F[:, 1], F[:, 2]
        cof = np.stack([np.cross(r1, r2), np.cross(r2, r0), np.cross(r0, r1)], 1)
        return np.einsum("bj,bj->b", r0, cof[:, 0]), cof
    raise DomainError(f"batched energies support n in {{2, 3}}, got {n}")


def density_batch(spec, F):
    """Per-matrix ``(iso, pen, dW/dF)`` with ``W = iso + kappa * pen``.

    Non-positive determinants give ``inf`` for the neo-Hookean and
    Mooney-Rivlin parts.
    """
    n = F.shape[-1]
    J, cof = det_cof_batch(F)
    pen, dpen = _penalty_batch(spec, J)
    grad = spec.kappa * dpen[:, None, None] * cof
    fro2 = np.einsum("bij,bij->b", F, F)
    if spec.kind == "hookean":
        tr = np.trace(F, axis1=1, axis2=2)
        dev = F - (tr / n)[:, None, None] * np.eye(n)
        iso = np.einsum("bij,bij->b", dev, dev)
        grad = grad + 2.0 * dev
        return iso, pen, grad
    pos = J > 0
    Js = np.where(pos, J, 1.0)
    s = Js ** (-2.0 / n)
    iso = s * fro2 - n
    # d(J^{-2/n} |F|^2) = J^{-2/n} (2F - (2/n) |F|^2 F^{-T}),  F^{-T} = cof / J
    g_iso = s[:, None, None] * (2.0 * F - (2.0 / n) * (fro2 / Js)[:, None, None] * cof)
    if spec.kind == "mooney_rivlin":
        if n != 3:
            raise DomainError("Mooney-Rivlin energy is defined for n = 3")
        cof2 = np.einsum("bij,bij->b", cof, cof)
        t = Js ** (-4.0 / 3.0)
        iso = iso + t * cof2 - 3.0
        C = np.einsum("bki,bkj->bij", F, F)
        I1 = fro2
        dcof2 = 2.0 * (I1[:, None, None] * F - np.einsum("bik,bkj->bij", F, C))
        g_iso = g_iso + t[:, None, None] * (dcof2 - (4.0 / 3.0) * (cof2 / Js)[:, None, None] * cof)
    iso = np.where(pos, np.maximum(iso, 0.0), np.inf)
    return iso, pen, grad + g_iso
