import numpy as np
import pytest

from kinetic.kernel import (CrossSection, VelocityGrid, boltzmann_Q, collision_moments,
                            collision_operator_on_grid, collision_velocities, cross_section,
                            delta_mollification_check, delta_reduce, limiting_collision_C,
                            maxwellian, mollified_delta_lhs, product_density)
from lib.models import InitialDatum, PotentialSpec
from lib.spectral import potential_fourier


def _gaussian_bump(center, width=0.6):
    center = np.asarray(center, dtype=float)
    return lambda eta: np.exp(-0.5 * np.sum((eta - center) ** 2, axis=-1) / width ** 2)


def test_three_dimensional_cross_section(cs_3d, rng):
    omega = rng.standard_normal((6, 3))
    omega /= np.linalg.norm(omega, axis=-1, keepdims=True)
    w = rng.standard_normal((6, 3))
    proj = np.sum(omega * w, axis=-1)
    transfer = potential_fourier(cs_3d.potential, proj[:, None] * omega)
    expected = np.abs(proj) * transfer ** 2 / (8.0 * np.pi ** 2)
    assert np.allclose(cs_3d(omega, w), expected)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_cross_section_is_even_and_non_negative(d, rng):
    cs = CrossSection(PotentialSpec(dimension=d))
    omega = rng.standard_normal((20, d))
    omega /= np.linalg.norm(omega, axis=-1, keepdims=True)
    w = 2.0 * rng.standard_normal((20, d))
    b = cs(omega, w)
    assert np.all(b >= 0.0)
    assert np.allclose(b, cs(-omega, w))
    assert np.allclose(b, cs(omega, -w))


def test_grazing_cross_section_in_two_dimensions(cs_2d):
    # ω ⊥ w leaves π (2π)^{-2} |φ̂(0)|² with φ̂(0) = 2π
    omega = np.array([[1.0, 0.0], [0.0, 1.0]])
    w = np.array([[0.0, 1.7], [-0.4, 0.0]])
    assert np.allclose(cs_2d(omega, w), np.pi)


def test_cross_section_guards(cs_1d, cs_2d):
    with pytest.raises(ValueError, match="d >= 2"):
        cs_1d(np.array([1.0]), np.array([0.5]))
    with pytest.raises(ValueError, match="unit impact directions"):
        cs_2d(np.array([1.0, 1.0]), np.array([0.5, 0.0]))
    with pytest.raises(ValueError, match="does not match"):
        CrossSection(PotentialSpec(dimension=2), dimension=3)


def test_zero_potential_cross_section_vanishes(zero_cs):
    cs = zero_cs(3)
    assert cs.vanishes
    assert float(cs(np.array([0.0, 0.0, 1.0]), np.array([1.0, 2.0, 3.0]))) == 0.0


def test_collision_velocities_conserve_momentum_and_energy(rng):
    v, v1 = rng.standard_normal((2, 10, 3))
    omega = rng.standard_normal((10, 3))
    omega /= np.linalg.norm(omega, axis=-1, keepdims=True)
    vp, v1p = collision_velocities(v, v1, omega)
    assert np.allclose(vp + v1p, v + v1)
    assert np.allclose(np.sum(vp ** 2 + v1p ** 2, axis=-1), np.sum(v ** 2 + v1 ** 2, axis=-1))
    # The exchange is an involution
    back, back1 = collision_velocities(vp, v1p, omega)
    assert np.allclose(back, v)
    assert np.allclose(back1, v1)


def test_maxwellian_normalization():
    assert float(maxwellian(np.zeros(2))) == pytest.approx(1.0 / (2.0 * np.pi))
    assert float(maxwellian(np.ones(1), mean=[1.0], temperature=2.0, density=3.0)) == \
        pytest.approx(3.0 / np.sqrt(4.0 * np.pi))


def test_delta_reduce_of_constants():
    ones = lambda eta: np.ones(eta.shape[:-1])
    # ½ ∫ |ω·w| dω = π|w| on the two-sphere, ½|S¹| on the circle
    assert delta_reduce(ones, np.array([0.0, 0.0, 2.0])) == pytest.approx(2.0 * np.pi)
    assert delta_reduce(ones, np.array([0.7, -0.3])) == pytest.approx(np.pi)


def test_delta_reduce_at_zero_relative_velocity():
    ones = lambda eta: np.ones(eta.shape[:-1])
    assert delta_reduce(ones, np.zeros(3)) == 0.0


def test_mollified_delta_approaches_the_sphere_value():
    gamma = _gaussian_bump([0.25, 0.25])
    w = np.array([1.0, 0.5])
    rhs = delta_reduce(gamma, w)
    gaps = [abs(mollified_delta_lhs(gamma, w, s) - rhs) for s in (0.1, 0.05, 0.025)]
    assert gaps[2] < gaps[1] < gaps[0]


@pytest.mark.parametrize("w", [[1.0, 0.5], [0.4, -1.1, 0.3]])
def test_delta_mollification_check_passes(w):
    w = np.array(w)
    report = delta_mollification_check(_gaussian_bump(np.full(len(w), 0.25)), w)
    assert report.passed, report.errors
    assert report.to_dict()["rhs"] == report.rhs


def test_delta_mollification_check_needs_a_ladder():
    with pytest.raises(ValueError, match="at least three widths"):
        delta_mollification_check(_gaussian_bump([0.0, 0.0]), np.ones(2), widths=(0.1, 0.05))


def test_maxwellian_is_a_collision_equilibrium(cs_3d):
    est = boltzmann_Q(maxwellian, np.array([0.3, -0.2, 0.5]), cs_3d, rule="tensor",
                      points=8, sphere_points=8)
    assert abs(est.value) < 1e-10


def test_zero_potential_collision_operators_vanish(zero_cs, datum_2d):
    cs = zero_cs(2)
    assert boltzmann_Q(maxwellian, np.zeros(2), cs).value == 0.0
    f = product_density(datum_2d)
    assert limiting_collision_C(f, 1, np.zeros((1, 2)), np.zeros((1, 2)), cs).value == 0.0
    grid = VelocityGrid(2, 4.0, 9)
    assert np.all(collision_operator_on_grid(grid.sample(maxwellian), grid, cs) == 0.0)


def test_limiting_collision_of_product_equilibrium_vanishes(cs_2d, datum_2d):
    f = product_density(datum_2d)
    X = np.array([[0.2, -0.1], [0.5, 0.4]])
    V = np.array([[0.3, 0.1], [-0.6, 0.2]])
    est = limiting_collision_C(f, 2, X, V, cs_2d, rule="tensor", points=8, sphere_points=12)
    assert abs(est.value) < 1e-12


def test_limiting_collision_partner_range(cs_2d, datum_2d):
    with pytest.raises(ValueError, match="outside 1..1"):
        limiting_collision_C(product_density(datum_2d), 2, np.zeros((1, 2)), np.zeros((1, 2)), cs_2d)


def test_product_density_factorizes(datum_2d):
    f = product_density(datum_2d)
    X = np.array([[0.1, 0.2], [0.3, -0.4]])
    V = np.array([[0.0, 0.5], [1.0, -1.0]])
    single = product_density(datum_2d)
    assert float(f(X, V)) == pytest.approx(float(single(X[:1], V[:1]) * single(X[1:], V[1:])))


def test_maxwellian_collision_moments_vanish(cs_2d):
    moments = collision_moments(maxwellian, cs_2d, 2, samples=20_000, seed=3)
    assert moments.within()
    assert set(moments.to_dict()) == {"mass", "momentum", "energy", "direct_mass"}


def test_weak_form_conserves_for_any_density(cs_3d):
    skewed = lambda v: maxwellian(v, mean=[0.5, 0.0, 0.0]) * (1.0 + 0.3 * np.tanh(v[..., 1]))
    moments = collision_moments(skewed, cs_3d, 3, samples=10_000, seed=5)
    assert abs(moments.mass.value) < 1e-10
    assert abs(moments.energy.value) < 1e-8
    for m in moments.momentum:
        assert abs(m.value) < 1e-8


def test_velocity_grid_layout():
    grid = VelocityGrid(2, 3.0, 7)
    assert grid.points.shape == (49, 2)
    assert np.sum(grid.weights) == pytest.approx(36.0)
    assert grid.coarsened().size == 4
    with pytest.raises(ValueError, match="at least 3 points"):
        VelocityGrid(2, 3.0, 2)


@pytest.mark.slow
def test_grid_operator_is_small_on_a_maxwellian(cs_2d):
    grid = VelocityGrid(2, 5.0, 21)
    q = collision_operator_on_grid(grid.sample(maxwellian), grid, cs_2d, sphere_points=16)
    skewed = grid.sample(lambda v: maxwellian(v, mean=[1.0, 0.0]) + maxwellian(v, mean=[-1.0, 0.0]))
    q_skewed = collision_operator_on_grid(skewed, grid, cs_2d, sphere_points=16)
    assert np.max(np.abs(q)) < 0.1 * np.max(np.abs(q_skewed))


@pytest.mark.slow
def test_monte_carlo_Q_of_a_maxwellian_vanishes_in_three_dimensions(cs_3d, rng):
    for i, v in enumerate(rng.standard_normal((4, 3))):
        est = boltzmann_Q(maxwellian, v, cs_3d, rule="mc", samples=100_000, seed=20 + i)
        assert abs(est.value) <= 4.0 * est.stderr + 1e-12
