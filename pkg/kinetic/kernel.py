"""
Cross section, δ polar reduction and the limiting collision operators.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from lib.models import InitialDatum, PotentialSpec
from lib.montecarlo import Estimate, run_batches
from lib.quadrature import (Rule, get_rule, legendre_interval, sphere_rule, uniform_sphere,
                            velocity_sphere_integral)
from lib.spectral import datum_eval, potential_fourier, sphere_area

logger = logging.getLogger(__name__)

Density = Callable[[np.ndarray], np.ndarray]
PhaseDensity = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Cross section
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossSection:
    """
    Weak-coupling cross section of a radial potential,

        B(ω, w) = π (2π)^{-d} |ω·w|^{d-2} |φ̂((ω·w)ω)|²,

    which is |ω·w| |φ̂|² / (8π²) in three dimensions.
    """
    potential: PotentialSpec
    dimension: Optional[int] = None

    def __post_init__(self):
        if self.dimension is None:
            object.__setattr__(self, "dimension", self.potential.dimension)
        if self.dimension != self.potential.dimension:
            raise ValueError(
                f"Cross section dimension {self.dimension} does not match potential dimension "
                f"{self.potential.dimension}"
            )

    @property
    def prefactor(self) -> float:
        return np.pi * (2.0 * np.pi) ** (-self.dimension)

    @property
    def vanishes(self) -> bool:
        return self.potential.is_zero

    def __call__(self, omega, w) -> np.ndarray:
        return cross_section(self, omega, w)


def cross_section(cs: CrossSection, omega, w, check_unit: bool = True) -> np.ndarray:
    d = cs.dimension
    if d < 2:
        raise ValueError("The cross section is defined for d >= 2")
    omega = np.asarray(omega, dtype=float)
    w = np.asarray(w, dtype=float)
    if check_unit and not np.allclose(np.linalg.norm(omega, axis=-1), 1.0, atol=1e-9):
        raise ValueError("cross_section needs unit impact directions")
    proj = np.sum(omega * w, axis=-1)
    transfer = potential_fourier(cs.potential, proj[..., None] * omega)
    return cs.prefactor * np.abs(proj) ** (d - 2) * transfer ** 2


def collision_velocities(v, v1, omega):
    """Elastic exchange along ω: v′ = v − ω(ω·(v−v₁)), v₁′ = v₁ + ω(ω·(v−v₁))."""
    v = np.asarray(v, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    proj = np.sum(omega * (v - v1), axis=-1, keepdims=True)
    return v - proj * omega, v1 + proj * omega


def maxwellian(v, mean=None, temperature: float = 1.0, density: float = 1.0) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    mean = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)
    r2 = np.sum((v - mean) ** 2, axis=-1)
    return density * np.exp(-0.5 * r2 / temperature) / (2.0 * np.pi * temperature) ** (d / 2.0)


# ---------------------------------------------------------------------------
# δ polar reduction
# ---------------------------------------------------------------------------

def delta_reduce(gamma: Density, w, points: int = 48, tolerance: float = 1e-8) -> float:
    """
    ∫ dη γ(η) δ(η·(w−η)) = ½ ∫_{S^{d-1}} dω |ω·w|^{d-2} γ((ω·w)ω).

    The right-hand side by sphere quadrature about the pole w; a coarse
    rerun disagreeing by more than `tolerance` is logged.
    """
    w = np.asarray(w, dtype=float)
    d = w.shape[-1]

    def rhs(p: int) -> float:
        omegas, weights = sphere_rule(d, p, axis=w if np.any(w) else None)
        proj = omegas @ w
        values = np.abs(proj) ** (d - 2) * gamma(proj[:, None] * omegas)
        return 0.5 * float(np.sum(weights * values))

    fine = rhs(points)
    coarse = rhs(max(4, (3 * points) // 4))
    if abs(fine - coarse) > tolerance * max(1.0, abs(fine)):
        logger.warning("delta_reduce: sphere rule not converged, achieved %.3g", abs(fine - coarse))
    return fine


def mollified_delta_lhs(gamma: Density, w, width: float, radial_points: int = 64,
                        sphere_points: int = 48, span: float = 8.0) -> float:
    """
    ∫ dη γ(η) δ_ς(η·(w−η)) with a Gaussian δ_ς of width ς.

    With η = w/2 + rθ the argument is |w/2|² − r², so the mass sits on a
    thin shell that Gauss-Legendre resolves in r.
    """
    w = np.asarray(w, dtype=float)
    d = w.shape[-1]
    c = 0.5 * w
    r2 = float(c @ c)
    cut = span * width
    lo = np.sqrt(max(r2 - cut, 0.0))
    hi = np.sqrt(r2 + cut)
    radii, r_weights = legendre_interval(lo, hi, radial_points)
    thetas, t_weights = sphere_rule(d, sphere_points, axis=w if np.any(w) else None)
    eta = c + radii[:, None, None] * thetas[None, :, :]
    arg = r2 - radii ** 2
    kernel = np.exp(-0.5 * (arg / width) ** 2) / (np.sqrt(2.0 * np.pi) * width)
    values = gamma(eta.reshape(-1, d)).reshape(len(radii), len(thetas))
    radial = r_weights * radii ** (d - 1) * kernel
    return float(radial @ values @ t_weights)


@dataclass
class DeltaCheckReport:
    rhs: float
    widths: List[float]
    lhs: List[float]
    extrapolated: float
    observed_order: float
    relative_error: float
    tolerance: float
    passed: bool = True
    errors: List[str] = field(default_factory=list)

    def to_dict(self):
        return {
            "rhs": self.rhs,
            "widths": self.widths,
            "lhs": self.lhs,
            "extrapolated": self.extrapolated,
            "observed_order": self.observed_order,
            "relative_error": self.relative_error,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "errors": self.errors,
        }


def delta_mollification_check(gamma: Density, w, widths: Sequence[float] = (0.1, 0.05, 0.025, 0.0125),
                              tolerance: float = 1e-2) -> DeltaCheckReport:
    """Mollified left-hand side along a halving ladder, Richardson-extrapolated."""
    widths = [float(x) for x in widths]
    if len(widths) < 3:
        raise ValueError("Mollification ladder needs at least three widths")
    rhs = delta_reduce(gamma, w)
    lhs = [mollified_delta_lhs(gamma, w, s) for s in widths]
    ratio = widths[-2] / widths[-1]
    d1 = lhs[-2] - lhs[-3]
    d2 = lhs[-1] - lhs[-2]
    if abs(d2) < 1e-14 or abs(d1) < 1e-14 or d1 * d2 <= 0:
        order = float("nan")
        extrapolated = lhs[-1]
    else:
        order = float(np.log(abs(d1 / d2)) / np.log(ratio))
        extrapolated = lhs[-1] + d2 / (ratio ** order - 1.0)
    scale = max(abs(rhs), 1e-300)
    rel = abs(extrapolated - rhs) / scale
    report = DeltaCheckReport(rhs, widths, lhs, float(extrapolated), order, float(rel), tolerance)
    if rel > tolerance:
        report.passed = False
        report.errors.append(f"extrapolated {extrapolated:.6g} vs sphere value {rhs:.6g} (rel {rel:.2e})")
    logger.info("delta check: rhs=%.6g extrapolated=%.6g order=%.2f", rhs, extrapolated, order)
    return report


# ---------------------------------------------------------------------------
# Limiting collision operators
# ---------------------------------------------------------------------------

def product_density(f0: InitialDatum) -> PhaseDensity:
    """f⁰_m(X, V) = ∏ f⁰(xᵢ, vᵢ) for blocks shaped (..., m, d)."""
    def density(X: np.ndarray, V: np.ndarray) -> np.ndarray:
        return np.prod(datum_eval(f0, X, V), axis=-1)
    return density


def limiting_collision_C(
    f: PhaseDensity,
    ell: int,
    X,
    V,
    cs: CrossSection,
    rule: Union[str, Rule] = Rule.MC,
    samples: int = 20_000,
    seed: int = 0,
    points: int = 16,
    sphere_points: int = 24,
    center=None,
    scale: float = 1.5,
) -> Estimate:
    """
    (C_{ℓ,j+1} f)(X, V): gain minus loss over the new velocity and ω, the new
    particle sitting on x_ℓ.

    f takes blocks of shape (..., j+1, d).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    j, d = X.shape
    if not 1 <= ell <= j:
        raise ValueError(f"Collision partner ℓ={ell} outside 1..{j}")
    if cs.vanishes:
        return Estimate.exact(0.0)
    a = ell - 1
    X_full = np.concatenate([X, X[a:a + 1]], axis=0)

    def integrand(v_new: np.ndarray, omega: np.ndarray) -> np.ndarray:
        shape = np.broadcast_shapes(v_new.shape, omega.shape)
        v_new = np.broadcast_to(v_new, shape)
        omega = np.broadcast_to(omega, shape)
        v_a = np.broadcast_to(V[a], shape)
        weight = cross_section(cs, omega, v_a - v_new, check_unit=False)
        gain_a, gain_new = collision_velocities(v_a, v_new, omega)
        lead = shape[:-1]
        V_loss = np.concatenate([np.broadcast_to(V, lead + (j, d)), v_new[..., None, :]], axis=-2)
        V_gain = V_loss.copy()
        V_gain[..., a, :] = gain_a
        V_gain[..., j, :] = gain_new
        Xb = np.broadcast_to(X_full, lead + (j + 1, d))
        return weight * (f(Xb, V_gain) - f(Xb, V_loss))

    return velocity_sphere_integral(integrand, d, center=center, scale=scale, rule=rule,
                                    points=points, sphere_points=sphere_points,
                                    samples=samples, seed=seed)


def boltzmann_Q(
    g: Density,
    v,
    cs: CrossSection,
    rule: Union[str, Rule] = Rule.MC,
    samples: int = 20_000,
    seed: int = 0,
    points: int = 16,
    sphere_points: int = 24,
    center=None,
    scale: float = 1.5,
    h: Optional[Density] = None,
) -> Estimate:
    """
    Q(g, h)(v) = ∫dv₁ ∫dω B(ω, v − v₁)(g(v′)h(v₁′) − g(v)h(v₁)); h defaults to g.
    """
    v = np.asarray(v, dtype=float)
    h = g if h is None else h
    if cs.vanishes:
        return Estimate.exact(0.0)

    def integrand(v1: np.ndarray, omega: np.ndarray) -> np.ndarray:
        shape = np.broadcast_shapes(v1.shape, omega.shape)
        v1 = np.broadcast_to(v1, shape)
        omega = np.broadcast_to(omega, shape)
        vb = np.broadcast_to(v, shape)
        weight = cross_section(cs, omega, vb - v1, check_unit=False)
        vp, v1p = collision_velocities(vb, v1, omega)
        return weight * (g(vp) * h(v1p) - g(vb) * h(v1))

    return velocity_sphere_integral(integrand, v.shape[-1], center=center, scale=scale, rule=rule,
                                    points=points, sphere_points=sphere_points,
                                    samples=samples, seed=seed)


@dataclass
class CollisionMoments:
    """Weak-form moments ∫Q(g,g)ψ dv for ψ = 1, v, |v|², plus a direct mass estimate."""
    mass: Estimate
    momentum: List[Estimate]
    energy: Estimate
    direct_mass: Estimate

    def to_dict(self) -> Dict[str, object]:
        return {
            "mass": self.mass.to_dict(),
            "momentum": [m.to_dict() for m in self.momentum],
            "energy": self.energy.to_dict(),
            "direct_mass": self.direct_mass.to_dict(),
        }

    def within(self, sigmas: float = 3.0, floor: float = 1e-10) -> bool:
        checks = [self.mass, self.energy, self.direct_mass] + list(self.momentum)
        return all(abs(e.value) <= sigmas * e.stderr + floor for e in checks)


def collision_moments(g: Density, cs: CrossSection, dimension: int, samples: int = 20_000,
                      seed: int = 0, scale: float = 1.5, center=None) -> CollisionMoments:
    """
    Pairs (v, v₁) drawn from a Gaussian proposal and ω uniform. The weak form
    uses the symmetrised bracket ½(ψ′ + ψ₁′ − ψ − ψ₁); the direct estimator
    integrates g′g₁′ − g g₁ without pairing.
    """
    d = dimension
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    area = sphere_area(d)

    def draw(rng: np.random.Generator, count: int):
        z = rng.standard_normal((count, 2, d))
        v = center + scale * z[:, 0]
        v1 = center + scale * z[:, 1]
        omega = uniform_sphere(rng, count, d)
        inv_q = area * (scale ** d * (2.0 * np.pi) ** (d / 2.0)) ** 2 \
            * np.exp(0.5 * np.sum(z * z, axis=(-2, -1)))
        vp, v1p = collision_velocities(v, v1, omega)
        weight = cross_section(cs, omega, v - v1, check_unit=False) * inv_q
        return v, v1, vp, v1p, weight

    def weak(psi: Callable[[np.ndarray], np.ndarray]):
        def sample_fn(rng: np.random.Generator, count: int) -> np.ndarray:
            v, v1, vp, v1p, weight = draw(rng, count)
            bracket = 0.5 * (psi(vp) + psi(v1p) - psi(v) - psi(v1))
            return weight * g(v) * g(v1) * bracket
        return run_batches(sample_fn, samples, seed)

    def direct(rng: np.random.Generator, count: int) -> np.ndarray:
        v, v1, vp, v1p, weight = draw(rng, count)
        return weight * (g(vp) * g(v1p) - g(v) * g(v1))

    return CollisionMoments(
        mass=weak(lambda u: np.ones(u.shape[:-1])),
        momentum=[weak(lambda u, i=i: u[..., i]) for i in range(d)],
        energy=weak(lambda u: 0.5 * np.sum(u * u, axis=-1)),
        direct_mass=run_batches(direct, samples, seed + 1),
    )


# ---------------------------------------------------------------------------
# Deterministic grid operator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VelocityGrid:
    """Tensor grid [-L, L]^d with trapezoid weights."""
    dimension: int
    half_width: float
    size: int

    def __post_init__(self):
        if self.size < 3:
            raise ValueError(f"Velocity grid needs at least 3 points per axis, got {self.size}")

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.size)

    @property
    def step(self) -> float:
        return 2.0 * self.half_width / (self.size - 1)

    @property
    def shape(self):
        return (self.size,) * self.dimension

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.dimension), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dimension)

    @property
    def weights(self) -> np.ndarray:
        w1 = np.full(self.size, self.step)
        w1[[0, -1]] *= 0.5
        mesh = np.meshgrid(*([w1] * self.dimension), indexing="ij")
        return np.prod(np.stack(mesh, axis=-1), axis=-1).reshape(-1)

    def sample(self, g: Density) -> np.ndarray:
        return g(self.points).reshape(self.shape)

    def coarsened(self) -> "VelocityGrid":
        return VelocityGrid(self.dimension, self.half_width, (self.size + 1) // 2)

    def interpolate(self, coefficients: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Cubic spline of prefiltered values at points v (..., d); zero outside."""
        idx = (np.moveaxis(v, -1, 0) + self.half_width) / self.step
        flat = idx.reshape(self.dimension, -1)
        out = ndimage.map_coordinates(coefficients, flat, order=3, mode="constant", cval=0.0,
                                      prefilter=False)
        return out.reshape(v.shape[:-1])


def collision_operator_on_grid(
    f_values: np.ndarray,
    grid: VelocityGrid,
    cs: CrossSection,
    g_values: Optional[np.ndarray] = None,
    sphere_points: int = 16,
    chunk: int = 64,
) -> np.ndarray:
    """
    Q(f, g) at every grid node: trapezoid rule in v₁ over the grid, sphere rule
    in ω, cubic-spline values at the post-collision velocities.
    """
    g_values = f_values if g_values is None else g_values
    if cs.vanishes:
        return np.zeros(grid.shape)
    f_spline = ndimage.spline_filter(f_values, order=3, mode="constant")
    g_spline = f_spline if g_values is f_values else ndimage.spline_filter(g_values, order=3, mode="constant")
    pts = grid.points
    wts = grid.weights
    omegas, w_omega = sphere_rule(grid.dimension, sphere_points)
    f_flat = f_values.reshape(-1)
    g_flat = g_values.reshape(-1)
    out = np.empty(len(pts))
    for start in range(0, len(pts), chunk):
        v = pts[start:start + chunk][:, None, None, :]
        v1 = pts[None, :, None, :]
        om = omegas[None, None, :, :]
        rel = v - v1
        b = cross_section(cs, om, rel, check_unit=False)
        vp, v1p = collision_velocities(v, v1, om)
        gain = grid.interpolate(f_spline, vp) * grid.interpolate(g_spline, v1p)
        loss = f_flat[start:start + chunk, None, None] * g_flat[None, :, None]
        out[start:start + chunk] = np.einsum("ijk,j,k->i", b * (gain - loss), wts, w_omega)
    return out.reshape(grid.shape)
