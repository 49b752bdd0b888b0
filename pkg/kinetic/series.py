"""
Limiting collision-history terms, the Boltzmann series and its oracles.

    f₁(t) = Σₙ Σ_graphs ∫_{t>t₁>…>tₙ>0} 𝒯(t₁…tₙ; ℓ₁…ℓₙ)

Each order is one seeded Monte Carlo run over (times, injected velocities,
impact directions), with all n! graphs and 2ⁿ sign vectors summed exactly
inside every sample.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union

import numpy as np
from scipy import ndimage

from lib.models import InitialDatum
from lib.montecarlo import Estimate, run_batches
from lib.quadrature import (Rule, get_rule, legendre_interval, simplex_times, uniform_sphere,
                            velocity_sphere_integral)
from lib.spectral import datum_eval, norms, sphere_area

from .histories import Graph, TimeLadder, classical_nodes, enumerate_graphs, sweep
from .kernel import (CrossSection, VelocityGrid, collision_operator_on_grid, cross_section,
                     limiting_collision_C)

logger = logging.getLogger(__name__)


@dataclass
class SeriesConfig:
    t: float
    n_max: int = 3
    samples: int = 20_000
    seed: int = 0
    constant: Optional[float] = None
    override: bool = False
    accuracy: Optional[float] = None

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"Series time must be positive, got {self.t}")
        if self.n_max < 0:
            raise ValueError(f"n_max must be >= 0, got {self.n_max}")
        if self.samples <= 0:
            raise ValueError(f"samples must be positive, got {self.samples}")
        if self.constant is not None and self.constant <= 0:
            raise ValueError(f"Calibrated constant must be positive, got {self.constant}")

    def to_dict(self):
        return {
            "t": self.t,
            "n_max": self.n_max,
            "samples": self.samples,
            "seed": self.seed,
            "constant": self.constant,
            "override": self.override,
            "accuracy": self.accuracy,
        }


# ---------------------------------------------------------------------------
# Convergence radius
# ---------------------------------------------------------------------------

def convergence_radius(f0: InitialDatum, cs: CrossSection, constant: float) -> float:
    """t₀ = 1 / (C (N₁ + N₂))."""
    if constant <= 0:
        raise ValueError(f"Calibrated constant must be positive, got {constant}")
    return 1.0 / (constant * norms(f0).total)


def check_time(t: float, radius: float, override: bool = False):
    if t < radius:
        return
    message = f"t={t:.4g} is not below the convergence radius t0={radius:.4g}"
    if not override:
        raise ValueError(message)
    logger.warning("%s; continuing on override", message)


def calibrate_constant(orders: List[Estimate], norm_total: float, t: float) -> float:
    """Ĉ = max_{n≥1} |order_n|^{1/n} / ((N₁ + N₂) t); zero when every order vanishes."""
    best = 0.0
    for n, order in enumerate(orders):
        if n == 0:
            continue
        best = max(best, abs(order.value) ** (1.0 / n))
    return best / (norm_total * t)


# ---------------------------------------------------------------------------
# Limit terms
# ---------------------------------------------------------------------------

def velocity_proposal(f0: InitialDatum):
    return f0.mean_velocity, 1.2 * max(1.0, f0.velocity_spread)


def limit_integrand(graph: Graph, t: float, times, f0: InitialDatum, cs: CrossSection,
                    x1, v1, V, omegas) -> np.ndarray:
    """
    Σ_σ ∏ σⱼ B(ωⱼ, wⱼ) f⁰_{n+1}(endpoints) for batches of (times, V, ω),
    shapes (B, n), (B, n, d), (B, n, d).
    """
    V = np.asarray(V, dtype=float)
    batch, n, d = V.shape
    x1b = np.broadcast_to(np.asarray(x1, dtype=float), (batch, d))
    v1b = np.broadcast_to(np.asarray(v1, dtype=float), (batch, d))
    total = np.zeros(batch)
    for signs in itertools.product((-1.0, 1.0), repeat=n):
        sig = np.array(signs)
        result = sweep(t, x1b, v1b, classical_nodes(graph, times, sig, omegas, V), n + 1)
        weight = np.ones(batch)
        for j, (a, b) in enumerate(graph.pairs()):
            rel = result.velocities_above[:, j, a] - result.velocities_above[:, j, b]
            weight = weight * sig[j] * cross_section(cs, omegas[:, j], rel, check_unit=False)
        total += weight * np.prod(datum_eval(f0, result.positions, result.velocities), axis=-1)
    return total


def free_term(f0: InitialDatum, x1, v1, t: float) -> float:
    """𝒮(t)f⁰ at (x₁, v₁)."""
    x1 = np.asarray(x1, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    return float(datum_eval(f0, x1 - v1 * t, v1))


def eval_T_limit(
    g: Graph,
    ladder: TimeLadder,
    f0: InitialDatum,
    cs: CrossSection,
    x1,
    v1,
    samples: int = 20_000,
    seed: int = 0,
    rule: Union[str, Rule] = Rule.MC,
    points: int = 20,
    sphere_points: int = 32,
) -> Estimate:
    """
    𝒯(t₁…tₙ; ℓ) at (x₁, v₁). Injected velocities are importance-sampled from
    a Gaussian around the datum's mean velocity; the tensor rule is available
    for n = 1.
    """
    if g.order != ladder.order:
        raise ValueError(f"Graph of order {g.order} with a ladder of {ladder.order} times")
    n = g.order
    if n == 0:
        return Estimate.exact(free_term(f0, x1, v1, ladder.t))
    if cs.vanishes:
        return Estimate.exact(0.0)
    d = f0.dimension
    center, scale = velocity_proposal(f0)
    times = ladder.as_array()
    rule = get_rule(rule)

    if rule == Rule.TENSOR:
        if n != 1:
            raise ValueError("The tensor rule for limit terms supports n = 1 only")

        def pair(v: np.ndarray, omega: np.ndarray) -> np.ndarray:
            shape = np.broadcast_shapes(v.shape, omega.shape)
            flat_v = np.broadcast_to(v, shape).reshape(-1, 1, d)
            flat_o = np.broadcast_to(omega, shape).reshape(-1, 1, d)
            tt = np.broadcast_to(times, (len(flat_v), 1))
            return limit_integrand(g, ladder.t, tt, f0, cs, x1, v1, flat_v, flat_o).reshape(shape[:-1])

        return velocity_sphere_integral(pair, d, center=center, scale=scale, rule=rule,
                                        points=points, sphere_points=sphere_points)

    area = sphere_area(d)

    def sample_fn(rng: np.random.Generator, count: int) -> np.ndarray:
        z = rng.standard_normal((count, n, d))
        V = center + scale * z
        omegas = uniform_sphere(rng, (count, n), d)
        inv_q = (area * scale ** d * (2.0 * np.pi) ** (d / 2.0)) ** n \
            * np.exp(0.5 * np.sum(z * z, axis=(-2, -1)))
        tt = np.broadcast_to(times, (count, n))
        return limit_integrand(g, ladder.t, tt, f0, cs, x1, v1, V, omegas) * inv_q

    return run_batches(sample_fn, samples, seed)


def order_term(n: int, t: float, f0: InitialDatum, cs: CrossSection, x1, v1,
               samples: int = 20_000, seed: int = 0) -> Estimate:
    """Σ over all n! graphs of ∫_{simplex} 𝒯, by sorted-uniform times."""
    if n == 0:
        return Estimate.exact(free_term(f0, x1, v1, t))
    if cs.vanishes:
        return Estimate.exact(0.0)
    d = f0.dimension
    center, scale = velocity_proposal(f0)
    area = sphere_area(d)
    graphs = list(enumerate_graphs(n))

    def sample_fn(rng: np.random.Generator, count: int) -> np.ndarray:
        times, volume = simplex_times(rng.random((count, n)), t)
        z = rng.standard_normal((count, n, d))
        V = center + scale * z
        omegas = uniform_sphere(rng, (count, n), d)
        inv_q = (area * scale ** d * (2.0 * np.pi) ** (d / 2.0)) ** n \
            * np.exp(0.5 * np.sum(z * z, axis=(-2, -1)))
        values = sum(limit_integrand(g, t, times, f0, cs, x1, v1, V, omegas) for g in graphs)
        return volume * inv_q * values

    logger.debug("order %d: %d graphs x %d signs, %d samples", n, len(graphs), 2 ** n, samples)
    return run_batches(sample_fn, samples, seed)


def first_order_term(t: float, f0: InitialDatum, cs: CrossSection, x1, v1,
                     time_points: int = 8, rule: Union[str, Rule] = Rule.TENSOR,
                     samples: int = 20_000, seed: int = 0, points: int = 20,
                     sphere_points: int = 32) -> Estimate:
    """
    ∫₀ᵗ dt₁ 𝒮(t−t₁) C_{1,2} 𝒮(t₁) f⁰⊗f⁰ at (x₁, v₁), composed from
    limiting_collision_C (independent of the history machinery).
    """
    x1 = np.asarray(x1, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    center, scale = velocity_proposal(f0)
    nodes, weights = legendre_interval(0.0, t, time_points)
    total = Estimate.exact(0.0)
    for i, (t1, w) in enumerate(zip(nodes, weights)):
        def flowed(X: np.ndarray, V: np.ndarray, t1=t1) -> np.ndarray:
            return np.prod(datum_eval(f0, X - V * t1, V), axis=-1)
        state = x1 - v1 * (t - t1)
        value = limiting_collision_C(flowed, 1, state[None], v1[None], cs, rule=rule,
                                     samples=samples, seed=seed + i, points=points,
                                     sphere_points=sphere_points, center=center, scale=scale)
        total = total + value.scaled(w)
    return total


# ---------------------------------------------------------------------------
# Series
# ---------------------------------------------------------------------------

@dataclass
class SeriesResult:
    value: Estimate
    orders: List[Estimate]
    truncation_bound: float
    constant: float
    radius: float
    norm_total: float
    config: SeriesConfig
    passed: bool = True
    errors: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            "value": self.value.to_dict(),
            "orders": [o.to_dict() for o in self.orders],
            "truncation_bound": self.truncation_bound,
            "constant": self.constant,
            "radius": self.radius,
            "norm_total": self.norm_total,
            "config": self.config.to_dict(),
            "passed": self.passed,
            "errors": self.errors,
        }


def geometric_tail(q: float, n_max: int) -> float:
    """Σ_{n>n_max} qⁿ."""
    if q >= 1.0:
        return float("inf")
    return q ** (n_max + 1) / (1.0 - q)


def boltzmann_series(x1, v1, cfg: SeriesConfig, f0: InitialDatum, cs: CrossSection) -> SeriesResult:
    norm_total = norms(f0).total
    if cfg.constant is not None:
        check_time(cfg.t, convergence_radius(f0, cs, cfg.constant), cfg.override)

    orders = [order_term(n, cfg.t, f0, cs, x1, v1, cfg.samples, cfg.seed + 1000 * n)
              for n in range(cfg.n_max + 1)]
    value = orders[0]
    for order in orders[1:]:
        value = value + order

    constant = cfg.constant
    if constant is None:
        constant = calibrate_constant(orders, norm_total, cfg.t)
        logger.info("Calibrated constant C=%.4g from %d orders", constant, len(orders) - 1)
    if constant > 0:
        radius = 1.0 / (constant * norm_total)
        if cfg.constant is None:
            check_time(cfg.t, radius, cfg.override)
        bound = geometric_tail(constant * norm_total * cfg.t, cfg.n_max)
    else:
        radius, bound = float("inf"), 0.0

    result = SeriesResult(value, orders, bound, constant, radius, norm_total, cfg)
    if cfg.accuracy is not None and bound > cfg.accuracy:
        result.passed = False
        result.errors.append(f"truncation bound {bound:.3g} exceeds requested accuracy {cfg.accuracy:.3g}")
    return result


@dataclass
class RatioReport:
    t: float
    q: float
    magnitudes: List[float]
    bounds: List[float]
    passed: bool = True
    errors: List[str] = field(default_factory=list)

    def to_dict(self):
        return {"t": self.t, "q": self.q, "magnitudes": self.magnitudes, "bounds": self.bounds,
                "passed": self.passed, "errors": self.errors}


def term_ratio_check(f0: InitialDatum, cs: CrossSection, x1, v1, constant: float, n_max: int = 3,
                     samples: int = 20_000, seed: int = 0, sigmas: float = 3.0) -> RatioReport:
    """Measured |order_n| at t = t₀/2 against the geometric bound qⁿ."""
    t = 0.5 * convergence_radius(f0, cs, constant)
    q = constant * norms(f0).total * t
    report = RatioReport(t=t, q=q, magnitudes=[], bounds=[])
    for n in range(1, n_max + 1):
        order = order_term(n, t, f0, cs, x1, v1, samples, seed + 1000 * n)
        report.magnitudes.append(abs(order.value))
        report.bounds.append(q ** n)
        if abs(order.value) > q ** n + sigmas * order.stderr:
            report.passed = False
            report.errors.append(f"order {n}: |{abs(order.value):.3g}| above bound {q ** n:.3g}")
    return report


# ---------------------------------------------------------------------------
# Picard oracle (spatially homogeneous)
# ---------------------------------------------------------------------------

@dataclass
class PicardResult:
    value: float
    richardson_error: float
    coefficients: List[float]
    grid_size: int

    def to_dict(self):
        return {"value": self.value, "richardson_error": self.richardson_error,
                "coefficients": self.coefficients, "grid_size": self.grid_size}


def _picard_on_grid(v1, t: float, g0: Callable[[np.ndarray], np.ndarray], cs: CrossSection,
                    iterations: int, grid: VelocityGrid, sphere_points: int):
    """Taylor coefficients aₙ of the mild solution, aₙ₊₁ = Σ_{i+j=n} Q(aᵢ, aⱼ)/(n+1)."""
    coeffs = [grid.sample(g0)]
    for n in range(iterations):
        nxt = np.zeros(grid.shape)
        for i in range(n + 1):
            nxt += collision_operator_on_grid(coeffs[i], grid, cs, coeffs[n - i], sphere_points=sphere_points)
        coeffs.append(nxt / (n + 1))
    point = np.asarray(v1, dtype=float)[None, :]
    values = [float(grid.interpolate(ndimage.spline_filter(c, order=3, mode="constant"), point)[0])
              for c in coeffs]
    terms = [c * t ** n for n, c in enumerate(values)]
    return float(sum(terms)), terms


def picard_oracle(v1, t: float, g0: Callable[[np.ndarray], np.ndarray], cs: CrossSection,
                  iterations: int = 4, half_width: float = 6.0, size: int = 25,
                  sphere_points: int = 16) -> PicardResult:
    """
    Degree-m Picard iterate of f(t) = g₀ + ∫₀ᵗ Q(f, f) at v₁; the Richardson
    error compares with a half-resolution grid.
    """
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    v1 = np.asarray(v1, dtype=float)
    if iterations == 0 or cs.vanishes:
        return PicardResult(float(g0(v1[None])[0]), 0.0, [float(g0(v1[None])[0])], size)
    grid = VelocityGrid(v1.shape[-1], half_width, size)
    fine, terms = _picard_on_grid(v1, t, g0, cs, iterations, grid, sphere_points)
    coarse, _ = _picard_on_grid(v1, t, g0, cs, iterations, grid.coarsened(), sphere_points)
    logger.debug("Picard: fine %.6g coarse %.6g on %d/%d points", fine, coarse, size, grid.coarsened().size)
    return PicardResult(fine, abs(fine - coarse), terms, size)


@dataclass
class HomogeneousComparison:
    series: SeriesResult
    oracle: PicardResult
    homogeneity_error: float
    tolerance: float
    gap: float
    passed: bool = True
    errors: List[str] = field(default_factory=list)

    def to_dict(self):
        return {
            "series": self.series.to_dict(),
            "oracle": self.oracle.to_dict(),
            "homogeneity_error": self.homogeneity_error,
            "tolerance": self.tolerance,
            "gap": self.gap,
            "passed": self.passed,
            "errors": self.errors,
        }


def homogeneous_comparison(x1, v1, cfg: SeriesConfig, f0: InitialDatum, cs: CrossSection,
                           iterations: int = 4, half_width: float = 6.0, size: int = 25,
                           sphere_points: int = 16, sigmas: float = 3.0) -> HomogeneousComparison:
    """
    Series at (x₁, v₁) for a datum that is nearly flat in x, against the
    homogeneous oracle started from v ↦ f⁰(x₁, v).
    """
    x1 = np.asarray(x1, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    series = boltzmann_series(x1, v1, cfg, f0, cs)

    def g0(v: np.ndarray) -> np.ndarray:
        return datum_eval(f0, np.broadcast_to(x1, v.shape), v)

    oracle = picard_oracle(v1, cfg.t, g0, cs, iterations, half_width, size, sphere_points)
    drift = abs(free_term(f0, x1, v1, cfg.t) - float(g0(v1[None])[0]))
    q = series.constant * series.norm_total * cfg.t
    homogeneity = drift / (1.0 - q) if q < 1.0 else float("inf")
    tolerance = sigmas * series.value.stderr + series.truncation_bound + oracle.richardson_error + homogeneity
    gap = abs(series.value.real - oracle.value)
    report = HomogeneousComparison(series, oracle, homogeneity, tolerance, gap)
    if gap > tolerance:
        report.passed = False
        report.errors.append(f"series {series.value.real:.6g} vs oracle {oracle.value:.6g}, gap {gap:.3g} > {tolerance:.3g}")
    return report
