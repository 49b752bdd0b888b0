"""
Quadrature rules and reference-space samplers.

Integrals are written over reference coordinates of two kinds:

    "u"  a unit interval [0, 1] (times, gaps, simplex coordinates)
    "z"  the real line (Gaussian-scaled momenta and velocities)

Callers map reference points to physical variables and fold the Jacobians
into their integrands. The same integrand then runs under a tensor Gauss rule
(Gauss-Legendre on "u", Gauss-Hermite on "z") or under seeded Monte Carlo
(uniform / standard normal draws).
"""

import logging
import math
from enum import Enum
from typing import Callable, Dict, Iterator, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import roots_hermitenorm, roots_legendre

from .montecarlo import DEFAULT_BATCH, Estimate, run_batches
from .spectral import sphere_area

logger = logging.getLogger(__name__)

Points = Union[int, Dict[str, int]]
Integrand = Callable[[np.ndarray], np.ndarray]

MAX_TENSOR_NODES = 4_000_000


class Rule(Enum):
    TENSOR = "tensor"
    MC = "mc"


def get_rule(name: Union[str, Rule]) -> Rule:
    if isinstance(name, Rule):
        return name
    try:
        return Rule(name.lower())
    except (ValueError, AttributeError):
        supported = ", ".join(r.value for r in Rule)
        raise ValueError(f"Unsupported quadrature rule: {name}. Supported: {supported}")


# ---------------------------------------------------------------------------
# One-dimensional rules
# ---------------------------------------------------------------------------

def legendre_unit(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def legendre_interval(a: float, b: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = legendre_unit(n)
    return a + (b - a) * x, (b - a) * w


def hermite_standard(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes/weights with ∫ g(z) dz ≈ Σ w g(z) for Gaussian-decaying g."""
    z, w = roots_hermitenorm(n)
    return z, w * np.exp(0.5 * z * z)


def _points_for(points: Points, kind: str) -> int:
    if isinstance(points, dict):
        return int(points[kind])
    return int(points)


def tensor_size(layout: Sequence[str], points: Points) -> int:
    return int(np.prod([_points_for(points, kind) for kind in layout])) if layout else 1


def balanced_points(layout: Sequence[str], max_nodes: int, u_points: int = 12,
                    z_min: int = 6, z_max: int = 24) -> Dict[str, int]:
    """Per-kind node counts keeping the tensor grid below max_nodes."""
    n_u = sum(1 for k in layout if k == "u")
    n_z = sum(1 for k in layout if k == "z")
    remaining = max_nodes / max(u_points ** n_u, 1)
    z_points = z_max if n_z == 0 else int(np.clip(remaining ** (1.0 / n_z), z_min, z_max))
    return {"u": u_points, "z": z_points}


def _axis_rule(kind: str, n: int) -> Tuple[np.ndarray, np.ndarray]:
    if kind == "u":
        return legendre_unit(n)
    if kind == "z":
        return hermite_standard(n)
    raise ValueError(f"Unknown reference coordinate kind: {kind}")


def tensor_chunks(layout: Sequence[str], points: Points,
                  chunk: int = 200_000) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield (nodes (N, D), weights (N,)) of the tensor rule in chunks."""
    rules = [_axis_rule(kind, _points_for(points, kind)) for kind in layout]
    shape = tuple(len(r[0]) for r in rules)
    total = int(np.prod(shape)) if shape else 1
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk))
        if not shape:
            yield np.zeros((1, 0)), np.ones(1)
            return
        idx = np.unravel_index(flat, shape)
        nodes = np.stack([rules[a][0][idx[a]] for a in range(len(rules))], axis=-1)
        weights = np.prod([rules[a][1][idx[a]] for a in range(len(rules))], axis=0)
        yield nodes, weights


def reference_sample(layout: Sequence[str], rng: np.random.Generator,
                     count: int) -> Tuple[np.ndarray, np.ndarray]:
    """Random reference points and inverse proposal densities 1/q."""
    nodes = np.empty((count, len(layout)))
    inv_q = np.ones(count)
    for a, kind in enumerate(layout):
        if kind == "u":
            nodes[:, a] = rng.random(count)
        elif kind == "z":
            z = rng.standard_normal(count)
            nodes[:, a] = z
            inv_q *= np.sqrt(2.0 * np.pi) * np.exp(0.5 * z * z)
        else:
            raise ValueError(f"Unknown reference coordinate kind: {kind}")
    return nodes, inv_q


def _tensor_sum(integrand: Integrand, layout: Sequence[str], points: Points, chunk: int) -> complex:
    total = 0.0j
    for nodes, weights in tensor_chunks(layout, points, chunk):
        total += complex(np.sum(weights * integrand(nodes)))
    return total


def _coarser(points: Points) -> Points:
    shrink = lambda n: max(2, (3 * int(n)) // 4)
    if isinstance(points, dict):
        return {k: shrink(v) for k, v in points.items()}
    return shrink(points)


def integrate(
    integrand: Integrand,
    layout: Sequence[str],
    rule: Union[str, Rule] = Rule.TENSOR,
    points: Points = 16,
    samples: int = 20_000,
    seed: int = 0,
    chunk: int = 200_000,
    workers: Optional[int] = None,
    batch_size: int = DEFAULT_BATCH,
) -> Estimate:
    """
    ∫ integrand(z) dz over the reference layout.

    Tensor errors come from a rerun at three quarters of the resolution; Monte
    Carlo errors are sample standard errors.
    """
    rule = get_rule(rule)
    if rule == Rule.TENSOR:
        size = tensor_size(layout, points)
        if size > MAX_TENSOR_NODES:
            logger.warning("Tensor grid of %d nodes exceeds %d; consider rule='mc'", size, MAX_TENSOR_NODES)
        fine = _tensor_sum(integrand, layout, points, chunk)
        coarse = _tensor_sum(integrand, layout, _coarser(points), chunk)
        return Estimate(fine, float(abs(fine - coarse)), size, "tensor")

    def sample_fn(rng: np.random.Generator, count: int) -> np.ndarray:
        nodes, inv_q = reference_sample(layout, rng, count)
        return integrand(nodes) * inv_q

    return run_batches(sample_fn, samples, seed, batch_size=batch_size, workers=workers)


# ---------------------------------------------------------------------------
# Variable maps
# ---------------------------------------------------------------------------

def power_tail(u, upper, power: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Map u ∈ [0,1] to s ∈ [0, upper] with density ∝ (1+s)^{-power}.

    Returns (s, ds/du) so that ∫₀^upper g(s) ds = ∫₀¹ g(s(u)) ds/du du.
    """
    u = np.asarray(u, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if abs(power - 1.0) < 1e-12:
        norm = np.log1p(upper)
        s = np.expm1(u * norm)
    else:
        e = 1.0 - power
        top = (1.0 + upper) ** e - 1.0
        norm = top / e
        s = (1.0 + u * top) ** (1.0 / e) - 1.0
    jac = norm * (1.0 + s) ** power
    return s, jac


def simplex_times(u, t: float) -> Tuple[np.ndarray, float]:
    """
    Decreasing times t > t₁ > … > tₙ > 0 from unit-cube coordinates.

    Returns (times (..., n), factor) with ∫_{simplex} F = factor · ∫_{[0,1]^n} F(times(u)) du.
    """
    u = np.asarray(u, dtype=float)
    n = u.shape[-1]
    times = t * -np.sort(-u, axis=-1)
    return times, t ** n / math.factorial(n)


# ---------------------------------------------------------------------------
# Sphere
# ---------------------------------------------------------------------------

def uniform_sphere(rng: np.random.Generator, shape, dimension: int) -> np.ndarray:
    """Uniform directions on S^{d-1} by normalizing Gaussian vectors."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    g = rng.standard_normal(shape + (dimension,))
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    while np.any(norm == 0.0):
        bad = norm[..., 0] == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), dimension))
        norm = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / norm


def _frame(axis: Optional[np.ndarray], dimension: int) -> np.ndarray:
    """Orthonormal basis whose last column is the unit axis."""
    if axis is None or not np.any(axis):
        return np.eye(dimension)
    a = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    basis = np.column_stack([a, np.eye(dimension)])
    q, _ = np.linalg.qr(basis)
    q = q[:, :dimension]
    if q[:, 0] @ a < 0:
        q[:, 0] = -q[:, 0]
    return np.roll(q, -1, axis=1)


def sphere_rule(dimension: int, points: int = 32,
                axis: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Deterministic quadrature on S^{d-1}, oriented so that `axis` is the pole.

    d=3 splits the polar Gauss-Legendre rule at the equator, where integrands
    such as |ω·w| have their kink.
    """
    if dimension == 1:
        return np.array([[1.0], [-1.0]]), np.ones(2)
    if dimension == 2:
        theta = 2.0 * np.pi * (np.arange(points) + 0.5) / points
        local = np.stack([np.sin(theta), np.cos(theta)], axis=-1)
        weights = np.full(points, 2.0 * np.pi / points)
    elif dimension == 3:
        half = max(points // 2, 2)
        c_up, w_up = legendre_interval(0.0, 1.0, half)
        cos_t = np.concatenate([-c_up[::-1], c_up])
        w_t = np.concatenate([w_up[::-1], w_up])
        n_phi = 2 * points
        phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
        ct, ph = np.meshgrid(cos_t, phi, indexing="ij")
        st = np.sqrt(1.0 - ct ** 2)
        local = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
        weights = (w_t[:, None] * np.full(n_phi, 2.0 * np.pi / n_phi)[None, :]).reshape(-1)
    else:
        raise ValueError(f"sphere_rule supports d <= 3, got {dimension}")
    frame = _frame(axis, dimension)
    return local @ frame.T, weights


# ---------------------------------------------------------------------------
# Velocity × sphere integrals
# ---------------------------------------------------------------------------

PairIntegrand = Callable[[np.ndarray, np.ndarray], np.ndarray]


def velocity_sphere_integral(
    integrand: PairIntegrand,
    dimension: int,
    center=None,
    scale: float = 1.5,
    rule: Union[str, Rule] = Rule.MC,
    points: int = 16,
    sphere_points: int = 24,
    samples: int = 20_000,
    seed: int = 0,
    workers: Optional[int] = None,
    chunk: int = 4096,
) -> Estimate:
    """
    ∫ dv ∫_{S^{d-1}} dω integrand(v, ω), with v = center + scale·z.

    Monte Carlo draws z standard normal and ω uniform; the tensor rule pairs
    Gauss-Hermite nodes in z with sphere_rule directions.
    """
    rule = get_rule(rule)
    d = dimension
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)

    if rule == Rule.MC:
        area = sphere_area(d)

        def sample_fn(rng: np.random.Generator, count: int) -> np.ndarray:
            z = rng.standard_normal((count, d))
            omega = uniform_sphere(rng, count, d)
            inv_q = area * scale ** d * (2.0 * np.pi) ** (d / 2.0) * np.exp(0.5 * np.sum(z * z, axis=-1))
            return integrand(center + scale * z, omega) * inv_q

        return run_batches(sample_fn, samples, seed, workers=workers)

    def tensor(p: int, sp: int) -> complex:
        omegas, w_omega = sphere_rule(d, sp)
        total = 0.0j
        for nodes, weights in tensor_chunks(["z"] * d, p, chunk):
            v = center + scale * nodes
            values = integrand(v[:, None, :], omegas[None, :, :])
            total += complex(np.sum(weights[:, None] * w_omega[None, :] * values))
        return total * scale ** d

    fine = tensor(points, sphere_points)
    coarse = tensor(max(2, (3 * points) // 4), max(4, (3 * sphere_points) // 4))
    size = points ** d * len(sphere_rule(d, sphere_points)[1])
    return Estimate(fine, float(abs(fine - coarse)), size, "tensor")
