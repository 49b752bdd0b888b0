"""
Low-order diagnostic terms of the finite-ε expansion and their ε-scaling.

Every term is tested against the standard Gaussian ψ on particles 1…j. All
collision and recollision kicks are constant vectors, so each particle's
(x, v) integral is a phase-space Gaussian with a linear phase and is done in
closed form (lib.gaussian). What remains is a low-dimensional integral over
times and rescaled momenta.

Momenta conjugate to a stationary phase are written q = ε·z/min(σₓ, 1); the
recollision term uses τ₁ = t₁ − εs and ξ = (h + k)/ε instead, which leaves an
O(1) integrand.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from lib.gaussian import free_test_integral, phase_space_integral
from lib.models import InitialDatum
from lib.montecarlo import Estimate, run_batches
from lib.quadrature import (balanced_points, get_rule, integrate as integrate_rule,
                            power_tail, uniform_sphere)
from lib.spectral import potential_fourier, sphere_area

from .histories import Graph, SweepNode, TimeLadder, sweep
from .kernel import CrossSection
from .oscillatory import ModelChi, eval_T_eps_term, model_A_eps, momentum_scale
from .series import velocity_proposal, limit_integrand

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


class Term(Enum):
    I0 = "I0"
    I1 = "I1"
    I2 = "I2"
    I3 = "I3"
    I4_CASE1 = "I4_case1"
    I4_CASE2 = "I4_case2"
    I4_CASE3 = "I4_case3"
    I4_RECOLLISION = "I4_recollision"
    A_EPS = "A_eps"
    T_EPS = "T_eps"


@dataclass
class TermConfig:
    """
    `branch` terms are measured on the σ = σ′ = +1 sign branch, where the
    stationary-phase count gives the expected exponent. Their full sign sum
    cancels `cancellation` further powers of ε, one per operator.
    """
    name: Term
    min_j: int
    expected: Callable[[int], float]
    branch: bool = False
    cancellation: int = 0
    description: str = ""


TERM_CONFIGS: Dict[Term, TermConfig] = {
    Term.I0: TermConfig(Term.I0, 1, lambda d: 0.0, description="free flight 𝒮(t)f⁰"),
    Term.I1: TermConfig(Term.I1, 1, lambda d: 0.5,
                        description="(N−j)/√ε ∫dt₁ 𝒮 C 𝒮 f⁰_{j+1}; σ-sum cancels the leading order"),
    Term.I2: TermConfig(Term.I2, 2, lambda d: d - 0.5, True, 1, "1/√ε ∫dτ₁ 𝒮 T 𝒮 f⁰_j"),
    Term.I3: TermConfig(Term.I3, 2, lambda d: d - 1.0, True, 2, "(N−j)/ε ∫∫ 𝒮 T 𝒮 C 𝒮 f⁰_{j+1}"),
    Term.I4_CASE1: TermConfig(Term.I4_CASE1, 3, lambda d: d - 1.0, True, 2,
                              "C on (r, j+1), T on a disjoint pair"),
    Term.I4_CASE2: TermConfig(Term.I4_CASE2, 2, lambda d: d - 1.0, True, 2,
                              "C on (ℓ, j+1), T on (ℓ, s) with s ≤ j"),
    Term.I4_CASE3: TermConfig(Term.I4_CASE3, 2, lambda d: d - 1.0, True, 2,
                              "C on (r, j+1), T on (ℓ, j+1) with ℓ ≠ r"),
    Term.I4_RECOLLISION: TermConfig(Term.I4_RECOLLISION, 1, lambda d: 0.0,
                                    description="C then T on the same pair: the surviving O(1) term"),
    Term.A_EPS: TermConfig(Term.A_EPS, 1, lambda d: 0.0, description="model oscillatory integral"),
    Term.T_EPS: TermConfig(Term.T_EPS, 1, lambda d: 0.0, description="first-order rescaled history term"),
}


def get_term(name: Union[str, Term]) -> TermConfig:
    if isinstance(name, Term):
        return TERM_CONFIGS[name]
    for term in Term:
        if isinstance(name, str) and term.value.lower() == name.lower():
            return TERM_CONFIGS[term]
    supported = ", ".join(get_supported_terms())
    raise ValueError(f"Unsupported term: {name}. Supported: {supported}")


def get_supported_terms() -> list:
    return [t.value for t in Term if t in TERM_CONFIGS]


@dataclass(frozen=True)
class TermSelector:
    """
    A diagnostic term at subsystem size j; j defaults to the smallest one the
    term admits. `summed` keeps the full sign sum on branch terms.
    """
    which: Union[str, Term]
    j: Optional[int] = None
    dimension: Optional[int] = None
    summed: bool = False

    def __post_init__(self):
        config = get_term(self.which)
        object.__setattr__(self, "which", config.name)
        j = config.min_j if self.j is None else int(self.j)
        if j < config.min_j:
            raise ValueError(f"{config.name.value} needs j >= {config.min_j}, got {j}")
        object.__setattr__(self, "j", j)
        if self.dimension is not None and self.dimension < 1:
            raise ValueError(f"Dimension must be >= 1, got {self.dimension}")

    @property
    def config(self) -> TermConfig:
        return TERM_CONFIGS[self.which]

    @property
    def branch(self) -> bool:
        """True when only the σ = σ′ = +1 branch is integrated."""
        return self.config.branch and not self.summed

    def expected_slope(self, dimension: Optional[int] = None) -> float:
        d = dimension or self.dimension
        if d is None:
            raise ValueError("Expected slope needs a dimension")
        extra = self.config.cancellation if self.config.branch and self.summed else 0
        return float(self.config.expected(d) + extra)

    def to_dict(self):
        return {"which": self.which.value, "j": self.j, "dimension": self.dimension,
                "summed": self.summed}


@dataclass
class TermBudget:
    """Quadrature budget; rule None picks tensor rules up to five reference axes."""
    rule: Optional[str] = None
    samples: int = 100_000
    seed: int = 0
    max_nodes: int = 400_000

    def __post_init__(self):
        if self.rule is not None:
            get_rule(self.rule)
        if self.samples <= 0:
            raise ValueError(f"samples must be positive, got {self.samples}")

    def to_dict(self):
        return {"rule": self.rule, "samples": self.samples, "seed": self.seed,
                "max_nodes": self.max_nodes}


# ---------------------------------------------------------------------------
# Tested amplitude
# ---------------------------------------------------------------------------

@dataclass
class Event:
    """
    One C (creates=True, pair[1] is born) or T operator at forward time `time`
    with momentum `vector`: phase e^{i q·(x_a − x_b)/ε}, kick σq/2 onto b.
    """
    time: np.ndarray
    pair: Tuple[int, int]
    vector: np.ndarray
    sign: float
    creates: bool = False


def tested_amplitude(f0: InitialDatum, t: float, tested: int, events: Sequence[Event],
                     eps: float) -> np.ndarray:
    """
    ∏ₚ ∫dxₚdvₚ [ψ] f⁰(endpoint of p) · e^{iΣ qₑ·Dₑ/ε} over a batch of event sets.

    Particles 0…tested−1 carry ψ and exist from time t; created particles are
    born at their C event with unconstrained position and velocity.
    """
    batch, d = np.asarray(events[0].vector).shape
    created = sum(1 for e in events if e.creates)
    particles = tested + created
    zeros = np.zeros((batch, d))
    birth = np.full((batch, particles), float(t))

    nodes = [SweepNode(time=np.full(batch, float(t)), born=p, birth_position=zeros,
                       birth_velocity=zeros) for p in range(1, tested)]
    for e in events:
        a, b = e.pair
        nodes.append(SweepNode(
            time=e.time, born=b if e.creates else None,
            birth_position=zeros if e.creates else None,
            birth_velocity=zeros if e.creates else None,
            pair=(a, b), delta=0.5 * e.sign * e.vector,
        ))
        if e.creates:
            birth[:, b] = e.time
    result = sweep(t, zeros, zeros, nodes, particles)

    alpha = np.zeros((batch, particles, d))
    beta = np.zeros((batch, particles, d))
    phase = np.zeros(batch)
    for i, e in enumerate(events):
        k = tested - 1 + i
        a, b = e.pair
        q = e.vector / eps
        sep = result.node_positions[:, k, a] - result.node_positions[:, k, b]
        phase += np.sum(q * sep, axis=-1)
        alpha[:, a] += q
        alpha[:, b] -= q
        beta[:, a] -= q * (birth[:, a] - e.time)[:, None]
        beta[:, b] += q * (birth[:, b] - e.time)[:, None]

    value = np.exp(1j * phase)
    for p in range(particles):
        value = value * phase_space_integral(f0, birth[:, p], result.positions[:, p],
                                             result.velocities[:, p], alpha[:, p], beta[:, p],
                                             with_test=p < tested)
    return value


# ---------------------------------------------------------------------------
# Term integrands
# ---------------------------------------------------------------------------

@dataclass
class _Plan:
    layout: List[str]
    integrand: Callable[[np.ndarray], np.ndarray]
    prefactor: float


def _nested_times(u_outer, u_inner, t: float):
    """t > outer > inner > 0 from the unit square, with Jacobian t·outer."""
    outer = t * u_outer
    return outer, outer * u_inner, t * outer


def _signed_sum(build: Callable[[float, float], complex], double: bool, branch: bool = False) -> np.ndarray:
    if branch:
        return build(1.0, 1.0)
    total = 0.0
    signs = list(itertools.product((-1.0, 1.0), repeat=2 if double else 1))
    for combo in signs:
        total = total + np.prod(combo) * build(combo[0], combo[-1])
    return total


def _single_operator_plan(sel: TermSelector, eps: float, f0: InitialDatum, cs: CrossSection,
                          t: float, scale: float) -> _Plan:
    d, j = f0.dimension, sel.j
    creates = sel.which == Term.I1
    pair = (0, j) if creates else (0, 1)
    prefactor = eps ** (-d - 0.5) if creates else eps ** -0.5

    def integrand(nodes: np.ndarray) -> np.ndarray:
        time = t * nodes[:, 0]
        h = eps * scale * nodes[:, 1:1 + d]
        measure = t * (eps * scale) ** d / TWO_PI ** d

        def build(sig, _):
            event = Event(time, pair, h, sig, creates=creates)
            return tested_amplitude(f0, t, j, [event], eps)

        return measure * potential_fourier(cs.potential, h) * _signed_sum(build, False, sel.branch)

    return _Plan(["u"] + ["z"] * d, integrand, prefactor)


def _two_operator_plan(sel: TermSelector, eps: float, f0: InitialDatum, cs: CrossSection,
                       t: float, scale: float) -> _Plan:
    d, j = f0.dimension, sel.j
    which = sel.which

    def events(outer, inner, h, k, sig, sig_p) -> List[List[Event]]:
        if which == Term.I3:
            # T at τ₁ on (1, 2), then C at t₁ < τ₁ on (ℓ, j+1) for both ℓ
            return [[Event(outer, (0, 1), k, sig_p), Event(inner, (ell, j), h, sig, creates=True)]
                    for ell in (0, 1)]
        if which == Term.I4_CASE1:
            tpair = (1, 2)
        elif which == Term.I4_CASE2:
            tpair = (0, 1)
        else:
            tpair = (1, j)
        return [[Event(outer, (0, j), h, sig, creates=True), Event(inner, tpair, k, sig_p)]]

    def integrand(nodes: np.ndarray) -> np.ndarray:
        outer, inner, jac = _nested_times(nodes[:, 0], nodes[:, 1], t)
        h = eps * scale * nodes[:, 2:2 + d]
        k = eps * scale * nodes[:, 2 + d:2 + 2 * d]
        measure = jac * (eps * scale) ** (2 * d) / TWO_PI ** (2 * d)

        def build(sig, sig_p):
            return sum(tested_amplitude(f0, t, j, evs, eps)
                       for evs in events(outer, inner, h, k, sig, sig_p))

        transfer = potential_fourier(cs.potential, h) * potential_fourier(cs.potential, k)
        return -measure * transfer * _signed_sum(build, True, sel.branch)

    return _Plan(["u", "u"] + ["z"] * (2 * d), integrand, eps ** (-d - 1.0))


def _recollision_plan(sel: TermSelector, eps: float, f0: InitialDatum, cs: CrossSection,
                      t: float) -> _Plan:
    """
    C at t₁ and T at τ₁ = t₁ − εs on the same pair, h = −k + εξ. The
    ε^{-d-1} prefactor cancels against dτ₁ dh = ε^{d+1} ds dξ.
    """
    d, j = f0.dimension, sel.j
    sx = float(f0.x_widths.min())
    sv = float(f0.v_widths.min())
    w = cs.potential.min_width
    xi_scale = 1.0 / sx

    def integrand(nodes: np.ndarray) -> np.ndarray:
        t1 = t * nodes[:, 0]
        gap, dgap = power_tail(nodes[:, 1], t1 / eps, float(d))
        tau = t1 - eps * gap
        k_scale = momentum_scale(gap, t1, w, sx, sv, potentials=2)
        xi = xi_scale * nodes[:, 2:2 + d]
        k = k_scale[:, None] * nodes[:, 2 + d:2 + 2 * d]
        h = -k + eps * xi
        measure = t * dgap * (xi_scale * k_scale) ** d / TWO_PI ** (2 * d)

        def build(sig, sig_p):
            evs = [Event(t1, (0, j), h, sig, creates=True), Event(tau, (0, j), k, sig_p)]
            return tested_amplitude(f0, t, j, evs, eps)

        transfer = potential_fourier(cs.potential, h) * potential_fourier(cs.potential, k)
        return -measure * transfer * _signed_sum(build, double=True)

    return _Plan(["u", "u"] + ["z"] * (2 * d), integrand, 1.0)


def term_plan(sel: TermSelector, eps: float, f0: InitialDatum, cs: CrossSection, t: float) -> _Plan:
    scale = 1.0 / min(float(f0.x_widths.min()), 1.0)
    if sel.which in (Term.I1, Term.I2):
        return _single_operator_plan(sel, eps, f0, cs, t, scale)
    if sel.which == Term.I4_RECOLLISION:
        return _recollision_plan(sel, eps, f0, cs, t)
    return _two_operator_plan(sel, eps, f0, cs, t, scale)


def eval_I_term(
    sel: TermSelector,
    eps: float,
    f0: InitialDatum,
    cs: CrossSection,
    budget: Optional[TermBudget] = None,
    t: float = 1.0,
    chi: Optional[ModelChi] = None,
) -> Estimate:
    """Value of the selected term at finite ε, tested against the standard Gaussian ψ."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not t > 0:
        raise ValueError(f"Final time must be positive, got {t}")
    budget = budget or TermBudget()
    which = sel.which

    if which == Term.A_EPS:
        chi = chi or ModelChi(dimension=sel.dimension or 2)
        return Estimate.exact(model_A_eps(chi, eps))
    if which == Term.I0:
        return Estimate.exact(free_test_integral(f0, t) ** sel.j)
    if which == Term.T_EPS:
        ladder = TimeLadder(t, (0.5 * t,))
        return eval_T_eps_term(Graph((1,)), ladder, eps, f0, cs, f0.x_centers[0], f0.mean_velocity,
                               rule=budget.rule, samples=budget.samples, seed=budget.seed)
    if cs.vanishes:
        return Estimate.exact(0.0)
    if not cs.potential.integrable:
        raise ValueError(f"{cs.potential.kind} potential has no integrable transform")

    plan = term_plan(sel, eps, f0, cs, t)
    rule = get_rule(budget.rule or ("tensor" if len(plan.layout) <= 5 else "mc"))
    points = balanced_points(plan.layout, budget.max_nodes)
    logger.debug("%s: eps=%.3g j=%d rule=%s layout=%d axes", which.value, eps, sel.j, rule.value,
                 len(plan.layout))
    result = integrate_rule(plan.integrand, plan.layout, rule=rule, points=points,
                            samples=budget.samples, seed=budget.seed)
    return result.scaled(plan.prefactor)


def recollision_limit(f0: InitialDatum, cs: CrossSection, t: float = 1.0, samples: int = 100_000,
                      seed: int = 0) -> Estimate:
    """
    ∫dx₁dv₁ ψ ∫₀ᵗ dt₁ 𝒯(t₁; ℓ=1)(x₁, v₁): the ε → 0 value of the recollision
    term, with (x₁, v₁) drawn from ψ and t₁ uniform.
    """
    if cs.vanishes:
        return Estimate.exact(0.0)
    d = f0.dimension
    center, scale = velocity_proposal(f0)
    area = sphere_area(d)
    graph = Graph((1,))

    def sample_fn(rng: np.random.Generator, count: int) -> np.ndarray:
        x1 = rng.standard_normal((count, d))
        v1 = rng.standard_normal((count, d))
        times = t * rng.random((count, 1))
        z = rng.standard_normal((count, 1, d))
        V = center + scale * z
        omegas = uniform_sphere(rng, (count, 1), d)
        inv_q = area * scale ** d * (TWO_PI) ** (d / 2.0) * np.exp(0.5 * np.sum(z * z, axis=(-2, -1)))
        return t * inv_q * limit_integrand(graph, t, times, f0, cs, x1, v1, V, omegas)

    return run_batches(sample_fn, samples, seed)


# ---------------------------------------------------------------------------
# Scaling probes
# ---------------------------------------------------------------------------

def eps_ladder(start: float = 0.1, points: int = 4, ratio: float = 10 ** -0.5) -> List[float]:
    if points < 1 or not 0 < ratio < 1 or start <= 0:
        raise ValueError(f"Invalid ladder: start={start}, points={points}, ratio={ratio}")
    return [float(start * ratio ** i) for i in range(points)]


def _check_ladder(ladder: Sequence[float]) -> List[float]:
    ladder = [float(e) for e in ladder]
    if len(ladder) < 4:
        raise ValueError(f"Scaling probes need at least 4 ladder points, got {len(ladder)}")
    if any(e <= 0 for e in ladder) or any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError(f"eps ladder must be positive and strictly decreasing, got {ladder}")
    ratios = np.array(ladder[1:]) / np.array(ladder[:-1])
    if np.ptp(ratios) > 1e-6 * ratios.mean():
        raise ValueError(f"eps ladder must be geometric, got ratios {ratios.tolist()}")
    return ladder


@dataclass
class ScalingProbe:
    selector: TermSelector
    eps: List[float]
    values: List[Estimate]
    magnitudes: List[float]
    slope: float
    slope_stderr: float
    expected: float
    window: float
    residual: float = 0.0
    reliable: bool = True
    limit: Optional[Estimate] = None
    limit_gaps: List[float] = field(default_factory=list)
    passed: bool = True
    errors: List[str] = field(default_factory=list)

    @property
    def measured(self) -> str:
        return "branch" if self.selector.branch else "signed"

    def rows(self) -> List[Dict[str, float]]:
        return [{"eps": e, "value": v.real, "imag": v.imag, "magnitude": m, "stderr": v.stderr}
                for e, v, m in zip(self.eps, self.values, self.magnitudes)]

    def to_dict(self):
        return {
            "selector": self.selector.to_dict(),
            "rows": self.rows(),
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "expected": self.expected,
            "measured": self.measured,
            "window": self.window,
            "residual": self.residual,
            "reliable": self.reliable,
            "limit": self.limit.to_dict() if self.limit is not None else None,
            "limit_gaps": self.limit_gaps,
            "passed": self.passed,
            "errors": self.errors,
        }


def fit_slope(eps: Sequence[float], magnitudes: Sequence[float]) -> Tuple[float, float, float]:
    """OLS of log|value| on log ε: (slope, slope stderr, max residual)."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.asarray(magnitudes, dtype=float))
    coef, cov = np.polyfit(x, y, 1, cov=True)
    residual = float(np.max(np.abs(y - np.polyval(coef, x))))
    return float(coef[0]), float(np.sqrt(max(cov[0, 0], 0.0))), residual


def scaling_probe(
    sel: TermSelector,
    ladder: Sequence[float],
    f0: InitialDatum,
    cs: CrossSection,
    budget: Optional[TermBudget] = None,
    t: float = 1.0,
    window: float = 0.2,
    residual_limit: float = 0.25,
    chi: Optional[ModelChi] = None,
    sigmas: float = 3.0,
) -> ScalingProbe:
    """
    Fitted ε-exponent of |term| along a geometric ladder. Every ladder point
    reuses the budget's seed, so Monte Carlo noise is common to all points.

    The probe passes when |slope − expected| ≤ window. The recollision term is
    also compared with its ε → 0 value: the distance may not grow down the
    ladder beyond sigmas error bars.
    """
    ladder = _check_ladder(ladder)
    budget = budget or TermBudget()
    if sel.which == Term.A_EPS:
        d = chi.dimension if chi is not None else (sel.dimension or 2)
    else:
        d = sel.dimension or f0.dimension
    expected = sel.expected_slope(d)
    values = [eval_I_term(sel, e, f0, cs, budget=budget, t=t, chi=chi) for e in ladder]
    magnitudes = [abs(complex(v.value)) for v in values]
    probe = ScalingProbe(sel, ladder, values, magnitudes, float("nan"), float("nan"), expected, window)

    if all(m == 0.0 for m in magnitudes):
        probe.reliable = False
        probe.passed = False
        probe.errors.append(f"{sel.which.value} vanishes identically on the ladder")
        return probe
    if any(m <= 0.0 or not np.isfinite(m) for m in magnitudes):
        probe.reliable = False
        probe.passed = False
        probe.errors.append(f"{sel.which.value}: non-positive magnitude on the ladder")
        return probe

    probe.slope, probe.slope_stderr, probe.residual = fit_slope(ladder, magnitudes)
    noisy = [e for e, v, m in zip(ladder, values, magnitudes) if v.stderr > 0.5 * m]
    if probe.residual > residual_limit or noisy:
        probe.reliable = False
        probe.passed = False
        detail = f"residual {probe.residual:.3g}" if not noisy else f"stderr above half the value at eps={noisy}"
        probe.errors.append(f"unreliable fit: {detail}")

    if abs(probe.slope - expected) > window:
        probe.passed = False
        probe.errors.append(f"{sel.which.value}: slope {probe.slope:.3f} "
                            f"(wanted {expected:.2f} ± {window:.2f})")
    if sel.which == Term.I4_RECOLLISION:
        _compare_with_limit(probe, f0, cs, budget, t, sigmas)
    logger.info("%s: slope %.3f ± %.3f (expected %.2f, %s)", sel.which.value, probe.slope,
                probe.slope_stderr, expected, probe.measured)
    return probe


def _compare_with_limit(probe: ScalingProbe, f0: InitialDatum, cs: CrossSection, budget: TermBudget,
                        t: float, sigmas: float):
    limit = recollision_limit(f0, cs, t=t, samples=budget.samples, seed=budget.seed)
    probe.limit = limit
    target = complex(limit.value)
    probe.limit_gaps = [abs(complex(v.value) - target) for v in probe.values]
    first, last = probe.limit_gaps[0], probe.limit_gaps[-1]
    slack = sigmas * (np.hypot(probe.values[0].stderr, limit.stderr)
                      + np.hypot(probe.values[-1].stderr, limit.stderr))
    if last > first + slack:
        probe.passed = False
        probe.errors.append(f"distance to the limit {limit.real:.4g} grew from {first:.3g} "
                            f"to {last:.3g} down the ladder")
