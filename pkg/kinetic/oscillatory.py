"""
Finite-ε side of the limit.

Oscillations are resolved analytically: T^ε is integrated in its Fourier-side
form, where every (x, v) integral has been done in closed form and only the
rescaled gaps s, concentration variables Ξ and momenta K remain. The direct
form in (τ, h, k) survives only as a low-dimension oracle.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, special

from lib.models import InitialDatum
from lib.montecarlo import Estimate
from lib.quadrature import (Rule, balanced_points, get_rule, integrate as integrate_rule,
                            legendre_interval, power_tail)
from lib.spectral import (datum_eval, datum_fourier, datum_sup, factorized_datum_fourier, norms,
                          potential_fourier, potential_norms)

from .histories import Graph, TimeLadder, assemble, eps_nodes, interaction_matrix, phase_terms, sweep
from .kernel import CrossSection
from .series import eval_T_limit, free_term

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# Model oscillatory integral
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelChi:
    """
    Separable Gaussian χ(x, y, ξ, η) on ℝ^{4d′}:

        amplitude · exp(−|x−x_c|²/2a² − |y−y_c|²/2b² − |ξ−ξ_c|²/2c² − |η−η_c|²/2e²)
    """
    dimension: int = 2
    amplitude: float = 1.0
    widths: tuple = (1.0, 1.0, 1.0, 1.0)
    x_center: Optional[tuple] = None
    y_center: Optional[tuple] = None
    xi_center: Optional[tuple] = None
    eta_center: Optional[tuple] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"Model dimension must be >= 1, got {self.dimension}")
        if len(self.widths) != 4 or min(self.widths) <= 0:
            raise ValueError(f"Model widths must be four positive numbers, got {self.widths}")
        for name in ("x_center", "y_center", "xi_center", "eta_center"):
            value = getattr(self, name)
            vec = (0.0,) * self.dimension if value is None else tuple(float(x) for x in value)
            if len(vec) != self.dimension:
                raise ValueError(f"{name} must have length {self.dimension}")
            object.__setattr__(self, name, vec)

    def to_dict(self):
        return {
            "dimension": self.dimension,
            "amplitude": self.amplitude,
            "widths": list(self.widths),
            "x_center": list(self.x_center),
            "y_center": list(self.y_center),
            "xi_center": list(self.xi_center),
            "eta_center": list(self.eta_center),
        }


def _gauss_1d(p, q, r):
    """∫ exp(−½pz² + qz + r) dz for complex q."""
    return np.sqrt(TWO_PI / p) * np.exp(q * q / (2.0 * p) + r)


def model_s_integrand(chi: ModelChi, s) -> np.ndarray:
    """
    J(s) = ∫ dx dξ dy dη exp(iξ·x − isη·y) χ, evaluated through the partial
    Fourier transform (F_{x,y}χ)(−ξ, sη, ξ, η).
    """
    s = np.asarray(s, dtype=float)
    a, b, c, e = chi.widths
    xc, yc = np.array(chi.x_center), np.array(chi.y_center)
    xic, etac = np.array(chi.xi_center), np.array(chi.eta_center)
    sv = s[..., None]

    xi_part = _gauss_1d(a * a + 1.0 / c ** 2, 1j * xc + xic / c ** 2, -xic ** 2 / (2.0 * c ** 2))
    eta_part = _gauss_1d(b * b * sv ** 2 + 1.0 / e ** 2, -1j * sv * yc + etac / e ** 2,
                         -etac ** 2 / (2.0 * e ** 2))
    prefactor = chi.amplitude * (TWO_PI * a * a) ** (chi.dimension / 2.0) \
        * (TWO_PI * b * b) ** (chi.dimension / 2.0)
    return prefactor * np.prod(xi_part * eta_part, axis=-1)


def _complex_quad(fn: Callable[[float], complex], lo: float, hi: float) -> complex:
    opts = dict(limit=500, epsabs=1e-13, epsrel=1e-11)
    re, _ = integrate.quad(lambda s: float(np.real(fn(s))), lo, hi, **opts)
    im, _ = integrate.quad(lambda s: float(np.imag(fn(s))), lo, hi, **opts)
    return complex(re, im)


def model_A_eps(chi: ModelChi, eps: float) -> complex:
    """A_ε = ∫₀^{1/ε} J(s) ds."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if chi.amplitude == 0:
        return 0.0j
    fn = lambda s: complex(model_s_integrand(chi, s))
    upper = 1.0 / eps
    if upper <= 1.0:
        return _complex_quad(fn, 0.0, upper)
    return _complex_quad(fn, 0.0, 1.0) + _complex_quad(fn, 1.0, upper)


def model_A_limit(chi: ModelChi) -> complex:
    """∫₀^∞ J(s) ds; finite only when J decays like s^{-d′} with d′ ≥ 2."""
    if chi.dimension < 2 and chi.amplitude != 0:
        raise ValueError("The s-integral diverges logarithmically for d' = 1")
    if chi.amplitude == 0:
        return 0.0j
    fn = lambda s: complex(model_s_integrand(chi, s))
    return _complex_quad(fn, 0.0, 1.0) + _complex_quad(fn, 1.0, np.inf)


def model_A_bound(chi: ModelChi, eps: float) -> float:
    """
    |A_ε| ≤ M₁ min(1, 1/ε) + M₂ ∫₁^{max(1,1/ε)} s^{-d′} ds, with
    M₁ = ‖Fχ‖_{L¹(dξdη; L∞)} ≤ |amp|(2π)^{2d′}(abce)^{d′} and
    M₂ = ‖Fχ‖_{L¹(dαdβ; L∞)} ≤ |amp|(2π)^{2d′}.
    """
    d = chi.dimension
    a, b, c, e = chi.widths
    m1 = abs(chi.amplitude) * TWO_PI ** (2 * d) * (a * b * c * e) ** d
    m2 = abs(chi.amplitude) * TWO_PI ** (2 * d)
    upper = max(1.0, 1.0 / eps)
    if d == 1:
        tail = np.log(upper)
    else:
        tail = (1.0 - upper ** (1 - d)) / (d - 1)
    return float(m1 * min(1.0, 1.0 / eps) + m2 * tail)


# ---------------------------------------------------------------------------
# T^ε in Fourier-side form
# ---------------------------------------------------------------------------

def momentum_scale(s, t, w: float, sx: float, sv: float, potentials: int) -> np.ndarray:
    """Gaussian width of the K-integrand at gap s."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    precision = potentials * w * w + (sv * sx * s) ** 2 / (sx * sx + (sv * t) ** 2)
    return 1.0 / np.sqrt(precision)


def _require_integrable(cs: CrossSection):
    if not cs.potential.integrable:
        raise ValueError(f"{cs.potential.kind} potential has no integrable transform")


def _datum_factor(f0: InitialDatum, A: np.ndarray, times, gaps, ks, xis) -> np.ndarray:
    """f̂⁰ₙ(−AᵀΞ, AᵀSK − AᵀTΞ) for batches shaped (B, n, d)."""
    n = A.shape[0]
    first = -np.einsum("rs,brd->bsd", A, xis)
    mixed = times[..., None] * xis - gaps[..., None] * ks
    second = -np.einsum("rs,brd->bsd", A, mixed)
    return factorized_datum_fourier(f0, n, first, second)


def history_amplitude(g: Graph, ladder: TimeLadder, eps: float, f0: InitialDatum, cs: CrossSection,
                      x1, v1) -> Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]:
    """
    (S, Ξ, K) ↦ (−1)ⁿ (2π)^{-2dn} Σ_{σσ′} ∏σσ′ e^{iΓ̃} f⁰(y₁, u₁)
    ∏ φ̂(kⱼ)φ̂(−kⱼ+εξⱼ) f̂⁰ₙ(−AᵀΞ, AᵀSK − AᵀTΞ) for gaps shaped (B, n) and
    Ξ, K shaped (B, n, d).
    """
    n, d = g.order, f0.dimension
    A = interaction_matrix(g).astype(float)
    times = ladder.as_array()
    x1 = np.asarray(x1, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    signs = [np.array(s) for s in itertools.product((-1.0, 1.0), repeat=n)]

    def amplitude(gaps: np.ndarray, xis: np.ndarray, ks: np.ndarray) -> np.ndarray:
        count = len(gaps)
        tt = np.broadcast_to(times, (count, n))
        transfer = np.prod(potential_fourier(cs.potential, ks)
                           * potential_fourier(cs.potential, -ks + eps * xis), axis=-1)
        datum = _datum_factor(f0, A, tt, gaps, ks, xis)
        zeros = np.zeros((count, n, d))
        x1b = np.broadcast_to(x1, (count, d))
        v1b = np.broadcast_to(v1, (count, d))

        total = np.zeros(count, dtype=complex)
        for sig in signs:
            for sig_p in signs:
                nodes_ = eps_nodes(g, tt, gaps, sig, sig_p, ks, xis, eps, zeros, zeros)
                result = sweep(ladder.t, x1b, v1b, nodes_, n + 1)
                terms = phase_terms(result, g, tt, gaps, eps)
                y1, u1 = result.positions[:, 0], result.velocities[:, 0]
                _, phase = assemble(g, terms, tt, gaps, ks, xis, eps, y1, u1)
                total += np.prod(sig) * np.prod(sig_p) * np.exp(1j * phase) * datum_eval(f0, y1, u1)

        return (-1.0) ** n * transfer * datum * total / TWO_PI ** (2 * d * n)

    return amplitude


def eps_term_integrand(g: Graph, ladder: TimeLadder, eps: float, f0: InitialDatum,
                       cs: CrossSection, x1, v1) -> Callable[[np.ndarray], np.ndarray]:
    """
    history_amplitude over reference nodes (u, z_ξ, z_k) per collision, with
    sⱼ on [0, (tⱼ − t_{j+1})/ε] by a (1+s)^{-d} tail map.
    """
    n, d = g.order, f0.dimension
    times = ladder.as_array()
    bounds = ladder.bounds()
    upper = (bounds[1:-1] - bounds[2:]) / eps
    sx = float(f0.x_widths.min())
    sv = float(f0.v_widths.min())
    w = cs.potential.min_width
    xi_scale = 1.0 / sx
    amplitude = history_amplitude(g, ladder, eps, f0, cs, x1, v1)

    def integrand(nodes: np.ndarray) -> np.ndarray:
        count = len(nodes)
        blocks = nodes.reshape(count, n, 1 + 2 * d)
        gaps, jac = power_tail(blocks[..., 0], upper, float(d))
        tt = np.broadcast_to(times, (count, n))
        k_scale = momentum_scale(gaps, tt, w, sx, sv, potentials=2)
        xis = blocks[..., 1:1 + d] * xi_scale
        ks = blocks[..., 1 + d:] * k_scale[..., None]
        weight = np.prod(jac * k_scale ** d, axis=-1) * xi_scale ** (d * n)
        return weight * amplitude(gaps, xis, ks)

    return integrand


def eval_T_eps_term(
    g: Graph,
    ladder: TimeLadder,
    eps: float,
    f0: InitialDatum,
    cs: CrossSection,
    x1,
    v1,
    rule: Union[str, Rule, None] = None,
    points=None,
    samples: int = 200_000,
    seed: int = 0,
    max_nodes: int = 2_000_000,
) -> Estimate:
    """
    𝒯^ε(t₁…tₙ; ℓ) at (x₁, v₁). Tensor Gauss rules by default for n = 1,
    Monte Carlo for n = 2.
    """
    if g.order != ladder.order:
        raise ValueError(f"Graph of order {g.order} with a ladder of {ladder.order} times")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    n = g.order
    if n == 0:
        return Estimate.exact(free_term(f0, x1, v1, ladder.t))
    if n > 2:
        raise ValueError("eval_T_eps_term supports n <= 2")
    if cs.vanishes:
        return Estimate.exact(0.0)
    _require_integrable(cs)
    d = f0.dimension
    layout = (["u"] + ["z"] * (2 * d)) * n
    rule = get_rule(rule or ("tensor" if n == 1 else "mc"))
    if points is None:
        points = balanced_points(layout, max_nodes, u_points=16, z_max=32)
    integrand = eps_term_integrand(g, ladder, eps, f0, cs, x1, v1)
    logger.debug("T_eps: n=%d d=%d eps=%.3g rule=%s points=%s", n, d, eps, rule.value, points)
    return integrate_rule(integrand, layout, rule=rule, points=points, samples=samples, seed=seed)


def _gap_panels(eps: float, t1: float, points: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on (0, t₁) over panels doubling from ε/8."""
    edges = [0.0]
    edge = eps / 8.0
    while edge < t1:
        edges.append(edge)
        edge *= 2.0
    edges.append(t1)
    nodes, weights = zip(*(legendre_interval(a, b, points) for a, b in zip(edges, edges[1:])))
    return np.concatenate(nodes), np.concatenate(weights)


def _trapezoid_axis(half: float, step: float) -> Tuple[np.ndarray, np.ndarray]:
    count = 2 * int(np.ceil(half / step)) + 1
    axis = np.linspace(-half, half, count)
    weights = np.full(count, axis[1] - axis[0])
    weights[[0, -1]] *= 0.5
    return axis, weights


def direct_T_eps_n1(
    ladder: TimeLadder,
    eps: float,
    f0: InitialDatum,
    cs: CrossSection,
    x1,
    v1,
    panel_points: int = 8,
    resolution: float = 0.3,
    span: float = 9.0,
) -> Estimate:
    """
    𝒯^ε for n = 1, d = 1 straight from its (τ, h, k) form.

    Both backward trajectories are composed leg by leg, the injected one from
    x₂ = v₂ = 0. The Gaussian (x₂, v₂) integral then reduces to the datum
    transform at (a, at₁ − c) times the phase of that shifted endpoint, with
    a = (h + k)/ε, c = ku/ε and u = t₁ − τ on panels graded towards 0.
    Trapezoid boxes in (a, c); the error is the change under a coarser rerun.
    """
    if f0.dimension != 1:
        raise ValueError("direct_T_eps_n1 is a one-dimensional oracle")
    if ladder.order != 1:
        raise ValueError("direct_T_eps_n1 needs a single collision time")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if cs.vanishes:
        return Estimate.exact(0.0)
    _require_integrable(cs)
    t, t1 = float(ladder.t), float(ladder.times[0])
    x1 = float(np.asarray(x1, dtype=float).reshape(1)[0])
    v1 = float(np.asarray(v1, dtype=float).reshape(1)[0])
    sx_min, sx_max = float(f0.x_widths.min()), float(f0.x_widths.max())
    sv_min, sv_max = float(f0.v_widths.min()), float(f0.v_widths.max())
    w = cs.potential.min_width
    y1_t1 = x1 - v1 * (t - t1)

    def phi(q: np.ndarray) -> np.ndarray:
        return potential_fourier(cs.potential, q[..., None])

    def evaluate(points: int, step: float) -> Tuple[complex, int]:
        a_axis, wa = _trapezoid_axis(span / sx_min, step / sx_max)
        total = 0.0j
        count = 0
        for u, wu in zip(*_gap_panels(eps, t1, points)):
            tau = t1 - u
            ridge = u / (eps * w)
            c_axis, wc = _trapezoid_axis(min(span * ridge, span / sv_min + t1 * span / sx_min),
                                         step * min(ridge, 1.0 / sv_max))
            a, c = np.meshgrid(a_axis, c_axis, indexing="ij")
            k = eps * c / u
            h = eps * a - k
            weight = wa[:, None] * wc[None, :] * phi(h) * phi(k) \
                * datum_fourier(f0, a[..., None], (a * t1 - c)[..., None])
            inner = np.zeros(a.shape, dtype=complex)
            for sig in (-1.0, 1.0):
                for sig_p in (-1.0, 1.0):
                    # root: v₁ above t₁, −σh/2 below t₁, a further −σ′k/2 below τ
                    u1_mid = v1 - 0.5 * sig * h
                    u1_low = u1_mid - 0.5 * sig_p * k
                    y1_tau = y1_t1 - u1_mid * u
                    y1_0 = y1_tau - u1_low * tau
                    # injected: born at t₁ at rest at the origin, opposite kicks
                    u2_mid = 0.5 * sig * h
                    u2_low = u2_mid + 0.5 * sig_p * k
                    y2_tau = -u2_mid * u
                    y2_0 = y2_tau - u2_low * tau
                    phase = (a - c / u) * y1_t1 + (c / u) * (y1_tau - y2_tau) \
                        + a * y2_0 + (a * t1 - c) * u2_low
                    root = datum_eval(f0, y1_0[..., None], u1_low[..., None])
                    inner += sig * sig_p * root * np.exp(1j * phase)
            total += wu / u * np.sum(weight * inner)
            count += a.size
        return -total / TWO_PI ** 2, count

    fine, count = evaluate(panel_points, resolution)
    coarse, _ = evaluate(max(2, panel_points - 2), 1.25 * resolution)
    return Estimate(fine, float(abs(fine - coarse)), count, "direct")


# ---------------------------------------------------------------------------
# Uniform bound
# ---------------------------------------------------------------------------

@dataclass
class BoundReport:
    gaps: List[List[float]]
    values: List[float]
    envelopes: List[float]
    observed_constant: float
    slope: float
    expected_slope: float
    eps: List[float] = field(default_factory=list)
    eps_values: List[List[float]] = field(default_factory=list)
    majorants: List[float] = field(default_factory=list)
    datum_sup: float = 0.0
    passed: bool = True
    errors: List[str] = field(default_factory=list)

    def rows(self) -> List[dict]:
        rows = []
        for i, gaps in enumerate(self.gaps):
            worst = max((values[i] for values in self.eps_values), default=0.0)
            rows.append({"s": gaps[0], "value": self.values[i], "envelope": self.envelopes[i],
                         "eps_max": worst, "majorant": self.majorants[i] if self.majorants else 0.0})
        return rows

    def to_dict(self):
        return {
            "gaps": self.gaps,
            "values": self.values,
            "envelopes": self.envelopes,
            "observed_constant": self.observed_constant,
            "slope": self.slope,
            "expected_slope": self.expected_slope,
            "eps": self.eps,
            "eps_values": self.eps_values,
            "majorants": self.majorants,
            "datum_sup": self.datum_sup,
            "passed": self.passed,
            "errors": self.errors,
        }


def bound_integral(g: Graph, ladder: TimeLadder, gaps, f0: InitialDatum, cs: CrossSection,
                   rule: Union[str, Rule, None] = None, points=None, samples: int = 100_000,
                   seed: int = 0, max_nodes: int = 2_000_000) -> Estimate:
    """∫ dΞ dK ∏|φ̂(kⱼ)| |f̂⁰ₙ(−AᵀΞ, AᵀSK − AᵀTΞ)| at fixed gaps s; ε does not enter."""
    n, d = g.order, f0.dimension
    gaps = np.broadcast_to(np.asarray(gaps, dtype=float), (n,))
    if cs.vanishes:
        return Estimate.exact(0.0)
    _require_integrable(cs)
    A = interaction_matrix(g).astype(float)
    times = ladder.as_array()
    sx = float(f0.x_widths.min())
    sv = float(f0.v_widths.min())
    xi_scale = 1.0 / sx
    k_scale = momentum_scale(gaps, times, cs.potential.min_width, sx, sv, potentials=1)

    def integrand(nodes: np.ndarray) -> np.ndarray:
        count = len(nodes)
        blocks = nodes.reshape(count, n, 2 * d)
        xis = blocks[..., :d] * xi_scale
        ks = blocks[..., d:] * k_scale[None, :, None]
        tt = np.broadcast_to(times, (count, n))
        ss = np.broadcast_to(gaps, (count, n))
        transfer = np.prod(np.abs(potential_fourier(cs.potential, ks)), axis=-1)
        datum = np.abs(_datum_factor(f0, A, tt, ss, ks, xis))
        return transfer * datum

    layout = ["z"] * (2 * d * n)
    rule = get_rule(rule or ("tensor" if 2 * d * n <= 4 else "mc"))
    if points is None:
        points = balanced_points(layout, max_nodes, z_max=40)
    jac = xi_scale ** (d * n) * float(np.prod(k_scale ** d))
    return integrate_rule(integrand, layout, rule=rule, points=points, samples=samples,
                          seed=seed).scaled(jac)


def fixed_gap_integral(g: Graph, ladder: TimeLadder, gaps, eps: float, f0: InitialDatum,
                       cs: CrossSection, x1, v1, rule: Union[str, Rule, None] = None, points=None,
                       samples: int = 100_000, seed: int = 0, max_nodes: int = 400_000) -> Estimate:
    """∫ dΞ dK of the 𝒯^ε integrand (history_amplitude) with the gaps held at s."""
    n, d = g.order, f0.dimension
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    gaps = np.broadcast_to(np.asarray(gaps, dtype=float), (n,))
    if cs.vanishes:
        return Estimate.exact(0.0)
    _require_integrable(cs)
    times = ladder.as_array()
    sx = float(f0.x_widths.min())
    sv = float(f0.v_widths.min())
    xi_scale = 1.0 / sx
    k_scale = momentum_scale(gaps, times, cs.potential.min_width, sx, sv, potentials=2)
    amplitude = history_amplitude(g, ladder, eps, f0, cs, x1, v1)

    def integrand(nodes: np.ndarray) -> np.ndarray:
        count = len(nodes)
        blocks = nodes.reshape(count, n, 2 * d)
        xis = blocks[..., :d] * xi_scale
        ks = blocks[..., d:] * k_scale[None, :, None]
        return amplitude(np.broadcast_to(gaps, (count, n)), xis, ks)

    layout = ["z"] * (2 * d * n)
    rule = get_rule(rule or ("tensor" if 2 * d * n <= 4 else "mc"))
    if points is None:
        points = balanced_points(layout, max_nodes, z_max=40)
    jac = xi_scale ** (d * n) * float(np.prod(k_scale ** d))
    return integrate_rule(integrand, layout, rule=rule, points=points, samples=samples,
                          seed=seed).scaled(jac)


def uniform_bound_check(
    g: Graph,
    ladder: TimeLadder,
    s_samples,
    f0: InitialDatum,
    cs: CrossSection,
    x1=None,
    v1=None,
    eps_ladder: Sequence[float] = (0.1, 0.0316, 0.01),
    rule: Union[str, Rule, None] = None,
    samples: int = 100_000,
    seed: int = 0,
    max_nodes: int = 400_000,
    slope_window: float = 0.1,
    sigmas: float = 3.0,
) -> BoundReport:
    """
    The 𝒯^ε integrand at fixed gaps, checked along an ε ladder against a
    majorant that does not depend on ε.

    Pointwise |integrand| ≤ 4ⁿ(2π)^{-2dn} ‖f⁰‖∞ ‖φ̂‖∞ⁿ ∏|φ̂(kⱼ)||f̂⁰ₙ|, so the
    fixed-gap integral is dominated by that constant times g(s) = ∫∏|φ̂||f̂⁰ₙ|.
    g itself must sit below min(‖φ̂‖₁ⁿN₂ⁿ, ∏sⱼ^{-d}‖φ̂‖∞ⁿN₁ⁿ) and decay
    against Σ log(1+sⱼ) with slope ≤ −d + window on the points with every sⱼ ≥ 1.
    """
    n, d = g.order, f0.dimension
    s_samples = np.asarray(s_samples, dtype=float)
    s_samples = s_samples.reshape(-1, 1) * np.ones((1, n)) if s_samples.ndim == 1 else s_samples
    eps_ladder = [float(e) for e in eps_ladder]
    if any(e <= 0 for e in eps_ladder):
        raise ValueError(f"eps ladder must be positive, got {eps_ladder}")
    x1 = f0.x_centers[0] if x1 is None else np.asarray(x1, dtype=float)
    v1 = f0.mean_velocity if v1 is None else np.asarray(v1, dtype=float)
    report = BoundReport(gaps=s_samples.tolist(), values=[], envelopes=[], observed_constant=0.0,
                         slope=float("nan"), expected_slope=-float(d), eps=eps_ladder,
                         datum_sup=datum_sup(f0))
    if cs.vanishes:
        report.values = [0.0] * len(s_samples)
        report.envelopes = [0.0] * len(s_samples)
        report.majorants = [0.0] * len(s_samples)
        report.eps_values = [[0.0] * len(s_samples) for _ in eps_ladder]
        return report
    pn = potential_norms(cs.potential)
    dn = norms(f0)
    constant = 4.0 ** n * TWO_PI ** (-2 * d * n) * report.datum_sup * pn.sup ** n
    report.eps_values = [[] for _ in eps_ladder]
    best = 0.0
    for i, gaps in enumerate(s_samples):
        value = bound_integral(g, ladder, gaps, f0, cs, rule=rule, samples=samples, seed=seed + i)
        magnitude = abs(value.value)
        first = (pn.l1 * dn.n2) ** n
        prod_s = float(np.prod(gaps ** d))
        second = (pn.sup * dn.n1) ** n / prod_s if prod_s > 0 else float("inf")
        envelope = min(first, second)
        majorant = constant * (magnitude + sigmas * value.stderr)
        report.values.append(magnitude)
        report.envelopes.append(envelope)
        report.majorants.append(majorant)
        if magnitude > envelope * (1.0 + 1e-6) + sigmas * value.stderr:
            report.passed = False
            report.errors.append(f"envelope violation at s={gaps.tolist()}: {magnitude:.6g} > {envelope:.6g}")
        best = max(best, magnitude * float(np.prod((1.0 + gaps) ** d)))

        for e_index, eps in enumerate(eps_ladder):
            term = fixed_gap_integral(g, ladder, gaps, eps, f0, cs, x1, v1, rule=rule, samples=samples,
                                      seed=seed + i, max_nodes=max_nodes)
            size = abs(complex(term.value))
            report.eps_values[e_index].append(size)
            if size > majorant * (1.0 + 1e-6) + sigmas * term.stderr:
                report.passed = False
                report.errors.append(f"eps={eps:g}, s={gaps.tolist()}: integrand {size:.6g} "
                                     f"above the majorant {majorant:.6g}")
    report.observed_constant = best ** (1.0 / n) / dn.total if n else 0.0

    tail = np.all(s_samples >= 1.0, axis=1) & (np.array(report.values) > 0)
    if tail.sum() >= 2:
        x = np.sum(np.log1p(s_samples[tail]), axis=1)
        y = np.log(np.array(report.values)[tail])
        report.slope = float(np.polyfit(x, y, 1)[0])
        if report.slope > -d + slope_window:
            report.passed = False
            report.errors.append(f"decay slope {report.slope:.3f} shallower than {-d}")
    logger.info("bound: slope %.3f, worst integrand over eps %s", report.slope,
                ", ".join(f"{max(v):.3g}" for v in report.eps_values if v))
    return report


# ---------------------------------------------------------------------------
# Principal-value δ check
# ---------------------------------------------------------------------------

@dataclass
class DeltaLimitReport:
    headline_T: float
    headline_value: float
    target: float
    relative_error: float
    ladder: List[float]
    errors_by_T: List[float]
    odd_value: float
    sign: int
    tolerance: float
    passed: bool = True
    errors: List[str] = field(default_factory=list)

    def to_dict(self):
        return {
            "headline_T": self.headline_T,
            "headline_value": self.headline_value,
            "target": self.target,
            "relative_error": self.relative_error,
            "ladder": self.ladder,
            "errors_by_T": self.errors_by_T,
            "odd_value": self.odd_value,
            "sign": self.sign,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "errors": self.errors,
        }


def _standard_normal(a: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * a * a) / np.sqrt(TWO_PI)


def dirichlet_integral(T: float, test: Callable[[np.ndarray], np.ndarray], half_width: float = 10.0,
                       points: int = 2 ** 17 + 1) -> float:
    """∫ sin(Ta)/a · g(a) da = Re ∫ g(a) ∫₀ᵀ e^{-isa} ds da, by Simpson's rule."""
    a = np.linspace(-half_width, half_width, points)
    kernel = T * np.sinc(T * a / np.pi)
    return float(integrate.simpson(kernel * test(a), x=a))


def mollified_delta_check(
    test: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ladder: Sequence[float] = (1.0, 2.0, 4.0, 8.0, 16.0),
    headline_T: float = 1e3,
    tolerance: float = 1e-3,
    floor: float = 1e-10,
) -> DeltaLimitReport:
    """
    Re ∫₀ᵀ e^{-isa} ds → π δ(a) against Gaussian test functions. The observed
    limit carries the + sign.
    """
    test = test or _standard_normal
    target = np.pi * float(test(np.zeros(1))[0])
    headline = dirichlet_integral(headline_T, test)
    rel = abs(headline - target) / abs(target)
    errors = [abs(dirichlet_integral(T, test) - target) for T in ladder]
    odd = dirichlet_integral(headline_T, lambda a: a * test(a))
    report = DeltaLimitReport(headline_T, headline, target, rel, [float(T) for T in ladder], errors,
                              odd, int(np.sign(headline)), tolerance)
    if rel > tolerance:
        report.passed = False
        report.errors.append(f"T={headline_T:g}: relative error {rel:.2e} above {tolerance:g}")
    for (t_a, e_a), (t_b, e_b) in zip(zip(ladder, errors), zip(ladder[1:], errors[1:])):
        if e_a > floor and e_b > 0.5 * e_a + floor:
            report.passed = False
            report.errors.append(f"error did not halve from T={t_a:g} ({e_a:.2e}) to T={t_b:g} ({e_b:.2e})")
    if abs(odd) > tolerance * abs(target):
        report.passed = False
        report.errors.append(f"odd test function gives {odd:.3g}")
    return report


def standard_normal_dirichlet(T: float) -> float:
    """Closed form ∫ sin(Ta)/a · N(0,1)(a) da = π erf(T/√2) / √(2π)."""
    return float(np.pi * special.erf(T / np.sqrt(2.0)) / np.sqrt(TWO_PI))


# ---------------------------------------------------------------------------
# Term-by-term convergence
# ---------------------------------------------------------------------------

@dataclass
class Extrapolation:
    value: float
    stat: float
    systematic: float

    def to_dict(self):
        return {"value": self.value, "stat": self.stat, "systematic": self.systematic}


def _lagrange_at_zero(eps: Sequence[float]) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    weights = np.ones(len(eps))
    for i in range(len(eps)):
        for j in range(len(eps)):
            if j != i:
                weights[i] *= -eps[j] / (eps[i] - eps[j])
    return weights


def extrapolate_to_zero(eps: Sequence[float], values: Sequence[float],
                        stderrs: Optional[Sequence[float]] = None) -> Extrapolation:
    """
    Polynomial extrapolation in ε through every ladder point. The systematic
    part is the distance to the fit one degree lower through the smallest ε.
    """
    eps = [float(e) for e in eps]
    values = np.asarray(values, dtype=float)
    if len(eps) < 2:
        raise ValueError(f"extrapolation needs at least two ladder points, got {len(eps)}")
    if len(set(eps)) != len(eps):
        raise ValueError(f"extrapolation needs distinct eps, got {eps}")
    stderrs = np.zeros(len(eps)) if stderrs is None else np.asarray(stderrs, dtype=float)
    weights = _lagrange_at_zero(eps)
    full = float(weights @ values)
    stat = float(np.sqrt(np.sum((weights * stderrs) ** 2)))
    lower = float(_lagrange_at_zero(eps[1:]) @ values[1:])
    return Extrapolation(full, stat, abs(full - lower))


@dataclass
class ConvergenceReport:
    eps: List[float]
    values: List[Estimate]
    limit: Estimate
    gaps: List[float]
    extrapolated: Optional[Extrapolation] = None
    final_within: bool = False
    passed: bool = True
    errors: List[str] = field(default_factory=list)

    def to_dict(self):
        return {
            "eps": self.eps,
            "values": [v.to_dict() for v in self.values],
            "limit": self.limit.to_dict(),
            "gaps": self.gaps,
            "extrapolated": self.extrapolated.to_dict() if self.extrapolated else None,
            "final_within": self.final_within,
            "passed": self.passed,
            "errors": self.errors,
        }


def term_convergence_check(
    g: Graph,
    ladder: TimeLadder,
    eps_ladder: Sequence[float],
    f0: InitialDatum,
    cs: CrossSection,
    x1,
    v1,
    sigmas: float = 3.0,
    limit_rule: Union[str, Rule] = Rule.TENSOR,
    samples: int = 200_000,
    seed: int = 0,
) -> ConvergenceReport:
    """
    𝒯^ε along a decreasing ε ladder against 𝒯. The gaps must not grow beyond
    the error bars, and the ladder extrapolated to ε = 0 must land on 𝒯 within
    sigmas combined standard errors plus the extrapolation's own systematic
    spread. final_within records whether the smallest ε alone is already there.
    """
    eps_ladder = [float(e) for e in eps_ladder]
    if len(eps_ladder) < 2:
        raise ValueError(f"eps ladder needs at least two values, got {eps_ladder}")
    if any(b >= a for a, b in zip(eps_ladder, eps_ladder[1:])):
        raise ValueError(f"eps ladder must be strictly decreasing, got {eps_ladder}")
    if g.order > 1 and get_rule(limit_rule) == Rule.TENSOR:
        limit_rule = Rule.MC
    limit = eval_T_limit(g, ladder, f0, cs, x1, v1, samples=samples, seed=seed, rule=limit_rule)
    values = [eval_T_eps_term(g, ladder, e, f0, cs, x1, v1, samples=samples, seed=seed + i + 1)
              for i, e in enumerate(eps_ladder)]
    gaps = [abs(v.real - limit.real) for v in values]
    combined = [float(np.hypot(v.stderr, limit.stderr)) for v in values]
    report = ConvergenceReport(eps_ladder, values, limit, gaps)
    report.final_within = gaps[-1] <= sigmas * combined[-1] + 1e-12
    for i in range(1, len(gaps)):
        slack = sigmas * (combined[i] + combined[i - 1]) + 1e-12
        if gaps[i] > gaps[i - 1] + slack:
            report.passed = False
            report.errors.append(f"gap grew from {gaps[i - 1]:.3g} to {gaps[i]:.3g} at eps={eps_ladder[i]:g}")

    extrap = extrapolate_to_zero(eps_ladder, [v.real for v in values], [v.stderr for v in values])
    report.extrapolated = extrap
    allowed = sigmas * float(np.hypot(extrap.stat, limit.stderr)) + extrap.systematic + 1e-12
    miss = abs(extrap.value - limit.real)
    if miss > allowed:
        report.passed = False
        report.errors.append(f"extrapolated value {extrap.value:.6g} misses the limit {limit.real:.6g} "
                             f"by {miss:.3g} (allowed {allowed:.3g})")
    logger.info("convergence: limit=%.6g extrapolated=%.6g gaps=%s", limit.real, extrap.value,
                ", ".join(f"{x:.3g}" for x in gaps))
    return report
