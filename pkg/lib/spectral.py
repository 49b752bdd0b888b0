"""
Fourier conventions, potential transforms, initial-data evaluation and the
norms N₁, N₂ of the one-particle datum.

Convention: f̂(h) = ∫ f(x) e^{-ih·x} dx, with all factors of 2π in the inverse
f(x) = (2π)^{-d} ∫ f̂(h) e^{ih·x} dh. Phase-space transforms use the same sign
in both arguments.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import integrate, optimize, special

from .models import InitialDatum, PotentialSpec
from .potentials import get_potential_kind

logger = logging.getLogger(__name__)


def _last_axis(arr, dimension: int) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    if out.shape[-1] != dimension:
        raise ValueError(f"Expected trailing dimension {dimension}, got shape {out.shape}")
    return out


def sphere_area(dimension: int) -> float:
    """Surface measure of the unit sphere S^{d-1}."""
    return float(2.0 * np.pi ** (dimension / 2.0) / special.gamma(dimension / 2.0))


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

def potential_fourier(p: PotentialSpec, h) -> np.ndarray:
    """φ̂(h) for wavevectors of shape (..., d); real and radial."""
    h = _last_axis(h, p.dimension)
    if p.is_contact:
        return np.full(h.shape[:-1], float(p.amplitude))
    h2 = np.sum(h * h, axis=-1)
    out = np.zeros(h.shape[:-1])
    d = p.dimension
    for bump in p.bumps:
        out = out + bump.amplitude * (2.0 * np.pi * bump.width ** 2) ** (d / 2.0) \
            * np.exp(-0.5 * bump.width ** 2 * h2)
    return out


def potential_eval(p: PotentialSpec, x) -> np.ndarray:
    """φ(x) in position space."""
    if not get_potential_kind(p.kind).has_real_space_form:
        raise ValueError(f"{p.kind} potential has no pointwise real-space form")
    x = _last_axis(x, p.dimension)
    r2 = np.sum(x * x, axis=-1)
    out = np.zeros(x.shape[:-1])
    for bump in p.bumps:
        out = out + bump.amplitude * np.exp(-0.5 * r2 / bump.width ** 2)
    return out


def potential_inverse(p: PotentialSpec, x, points: int = 64, span: float = 9.0) -> np.ndarray:
    """
    Inverse transform (2π)^{-d} ∫ φ̂(h) e^{ih·x} dh by a tensor trapezoid rule.

    Used to check the transform convention against potential_eval.
    """
    if not p.integrable:
        raise ValueError(f"{p.kind} potential is not integrable in Fourier space")
    if p.dimension > 3:
        raise ValueError("potential_inverse supports d <= 3")
    x = np.atleast_2d(_last_axis(x, p.dimension))
    d = p.dimension
    half = span / p.min_width
    axis = np.linspace(-half, half, points)
    step = axis[1] - axis[0]
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    weights = potential_fourier(p, mesh) * step ** d
    values = np.array([np.sum(weights * np.cos(mesh @ xi)) for xi in x])
    return values / (2.0 * np.pi) ** d


@dataclass
class PotentialNorms:
    l1: float
    sup: float


def potential_norms(p: PotentialSpec) -> PotentialNorms:
    """‖φ̂‖_{L¹} and ‖φ̂‖_{L∞} by radial quadrature."""
    if not p.integrable:
        raise ValueError(f"{p.kind} potential has no finite L1 transform norm")
    d = p.dimension
    radial = lambda r: abs(float(potential_fourier(p, np.array([r] + [0.0] * (d - 1))))) * r ** (d - 1)
    upper = 12.0 / p.min_width
    l1, _ = integrate.quad(radial, 0.0, upper, limit=200)
    grid = np.linspace(0.0, upper, 2001)
    samples = np.abs(potential_fourier(p, np.stack([grid] + [np.zeros_like(grid)] * (d - 1), axis=-1)))
    return PotentialNorms(l1=sphere_area(d) * l1, sup=float(samples.max()))


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------

def datum_eval(f: InitialDatum, x, v) -> np.ndarray:
    """f⁰(x, v) for points of shape (..., d)."""
    x = _last_axis(x, f.dimension)
    v = _last_axis(v, f.dimension)
    out = 0.0
    for c in f.components:
        sx = np.asarray(c.x_width)
        sv = np.asarray(c.v_width)
        zx = (x - np.asarray(c.x_center)) / sx
        zv = (v - np.asarray(c.v_center)) / sv
        norm = (2.0 * np.pi) ** f.dimension * np.prod(sx) * np.prod(sv)
        out = out + c.weight * np.exp(-0.5 * (np.sum(zx * zx, axis=-1) + np.sum(zv * zv, axis=-1))) / norm
    return np.asarray(out, dtype=float) * np.ones(np.broadcast_shapes(x.shape[:-1], v.shape[:-1]))


def datum_sup(f: InitialDatum) -> float:
    """Upper bound on sup |f⁰|: the sum of component peaks, exact for one component."""
    peaks = [abs(c.weight) / ((2.0 * np.pi) ** f.dimension * np.prod(c.x_width) * np.prod(c.v_width))
             for c in f.components]
    return float(sum(peaks))


def datum_fourier(f: InitialDatum, xi, k) -> np.ndarray:
    """f̂⁰(ξ, k) = ∫∫ f⁰(x, v) e^{-iξ·x - ik·v} dx dv."""
    xi = _last_axis(xi, f.dimension)
    k = _last_axis(k, f.dimension)
    out = 0.0j
    for c in f.components:
        sx2 = np.asarray(c.x_width) ** 2
        sv2 = np.asarray(c.v_width) ** 2
        quad = np.sum(sx2 * xi * xi, axis=-1) + np.sum(sv2 * k * k, axis=-1)
        phase = xi @ np.asarray(c.x_center) + k @ np.asarray(c.v_center)
        out = out + c.weight * np.exp(-0.5 * quad - 1j * phase)
    return np.asarray(out, dtype=complex) * np.ones(np.broadcast_shapes(xi.shape[:-1], k.shape[:-1]))


def factorized_datum_fourier(f: InitialDatum, n: int, xis, ks) -> np.ndarray:
    """
    Transform of the n-fold tensor product f⁰^{⊗n}.

    Accepts blocks shaped (..., n, d) or flattened (..., n*d).
    """
    if n < 1:
        raise ValueError(f"factorized transform needs n >= 1, got {n}")
    d = f.dimension
    xis = np.asarray(xis, dtype=float)
    ks = np.asarray(ks, dtype=float)
    if xis.shape[-1] == n * d and (xis.ndim < 2 or xis.shape[-2:] != (n, d)):
        xis = xis.reshape(xis.shape[:-1] + (n, d))
    if ks.shape[-1] == n * d and (ks.ndim < 2 or ks.shape[-2:] != (n, d)):
        ks = ks.reshape(ks.shape[:-1] + (n, d))
    return np.prod(datum_fourier(f, xis, ks), axis=-1)


@dataclass
class DatumNorms:
    n1: float
    n2: float
    method: str = "closed_form"

    @property
    def total(self) -> float:
        return self.n1 + self.n2

    def to_dict(self):
        return {"n1": self.n1, "n2": self.n2, "method": self.method}


def _closed_form_norms(f: InitialDatum) -> DatumNorms:
    d = f.dimension
    n1 = 0.0
    n2 = 0.0
    for c in f.components:
        n1 += c.weight * (2.0 * np.pi) ** d / (np.prod(c.x_width) * np.prod(c.v_width))
        n2 += c.weight * (2.0 * np.pi) ** (d / 2.0) / np.prod(c.x_width)
    return DatumNorms(float(n1), float(n2), "closed_form")


def _sup_over_k(f: InitialDatum, xi: np.ndarray) -> np.ndarray:
    """sup_k |f̂⁰(ξ, k)| for each row of ξ."""
    zero = np.zeros_like(xi)
    at_zero = np.abs(datum_fourier(f, xi, zero))
    if f.is_concentric:
        return at_zero
    best = np.atleast_1d(at_zero).copy()
    start = np.zeros(f.dimension)
    for i, row in enumerate(np.atleast_2d(xi)):
        objective = lambda kk: -abs(complex(datum_fourier(f, row, kk)))
        res = optimize.minimize(objective, start, method="Nelder-Mead",
                                options={"xatol": 1e-8, "fatol": 1e-12})
        best[i] = max(best[i], -res.fun)
    return best


def quadrature_norms(f: InitialDatum, points: Optional[int] = None, span: float = 8.0) -> DatumNorms:
    """N₁ and N₂ by tensor trapezoid rules (d ≤ 2)."""
    d = f.dimension
    if d > 2:
        raise ValueError("quadrature_norms supports d <= 2")
    if points is None:
        points = 401 if d == 1 else 49
    lx = span / f.x_widths.min()
    lv = span / f.v_widths.min()
    xi_axis = np.linspace(-lx, lx, points)
    k_axis = np.linspace(-lv, lv, points)
    dxi = (xi_axis[1] - xi_axis[0]) ** d
    dk = (k_axis[1] - k_axis[0]) ** d
    xi_mesh = np.stack(np.meshgrid(*([xi_axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    k_mesh = np.stack(np.meshgrid(*([k_axis] * d), indexing="ij"), axis=-1).reshape(-1, d)

    n1 = 0.0
    for chunk in np.array_split(xi_mesh, max(1, len(xi_mesh) // 256)):
        vals = np.abs(datum_fourier(f, chunk[:, None, :], k_mesh[None, :, :]))
        n1 += vals.sum() * dxi * dk
    n2 = float(_sup_over_k(f, xi_mesh).sum() * dxi)
    return DatumNorms(float(n1), n2, "quadrature")


def norms(f: InitialDatum) -> DatumNorms:
    """N₁ = ‖f̂⁰‖_{L¹} and N₂ = ∫ dξ sup_k |f̂⁰(ξ,k)|."""
    if f.is_concentric:
        return _closed_form_norms(f)
    logger.debug("Non-concentric mixture: norms by quadrature")
    return quadrature_norms(f)


@dataclass
class NormCheck:
    closed: DatumNorms
    quadrature: DatumNorms
    tolerance: float
    passed: bool = True
    errors: List[str] = field(default_factory=list)

    def to_dict(self):
        return {
            "closed": self.closed.to_dict(),
            "quadrature": self.quadrature.to_dict(),
            "tolerance": self.tolerance,
            "passed": self.passed,
            "errors": self.errors,
        }


def check_norms(f: InitialDatum, tolerance: float = 1e-3, points: Optional[int] = None) -> NormCheck:
    """Compare the closed-form norms of a concentric datum with tensor quadrature."""
    if not f.is_concentric:
        raise ValueError("Closed-form norms exist only for concentric mixtures")
    closed = _closed_form_norms(f)
    quad = quadrature_norms(f, points=points)
    report = NormCheck(closed=closed, quadrature=quad, tolerance=tolerance)
    for name in ("n1", "n2"):
        a = getattr(closed, name)
        b = getattr(quad, name)
        if abs(a - b) > tolerance * abs(a):
            report.passed = False
            report.errors.append(f"{name}: closed form {a:.6g} vs quadrature {b:.6g}")
    return report
