import math

import numpy as np
import pytest

from lib.montecarlo import Accumulator, Estimate, batch_rng, run_batches, worker_count
from lib.quadrature import (Rule, balanced_points, get_rule, hermite_standard, integrate,
                            legendre_interval, power_tail, simplex_times, sphere_rule,
                            uniform_sphere, velocity_sphere_integral)
from lib.spectral import sphere_area


def test_rule_lookup():
    assert get_rule("TENSOR") is Rule.TENSOR
    assert get_rule(Rule.MC) is Rule.MC
    with pytest.raises(ValueError, match="Unsupported quadrature rule: simpson. Supported: tensor, mc"):
        get_rule("simpson")


def test_hermite_integrates_gaussians():
    z, w = hermite_standard(30)
    assert np.sum(w * np.exp(-z * z)) == pytest.approx(np.sqrt(np.pi))
    assert np.sum(w * np.exp(-0.5 * z * z) * z * z) == pytest.approx(np.sqrt(2.0 * np.pi))


def test_legendre_interval_is_exact_for_polynomials():
    x, w = legendre_interval(1.0, 3.0, 4)
    assert np.sum(w * x ** 5) == pytest.approx((3.0 ** 6 - 1.0) / 6.0)


def test_balanced_points_stay_within_budget():
    layout = ["u", "u", "z", "z", "z", "z"]
    points = balanced_points(layout, 400_000)
    assert points["u"] ** 2 * points["z"] ** 4 <= 400_000
    assert points["z"] >= 6


def test_tensor_integration_with_error_estimate():
    integrand = lambda nodes: np.exp(-0.5 * nodes[:, 1] ** 2) * nodes[:, 0] ** 2
    result = integrate(integrand, ["u", "z"], rule="tensor", points=16)
    assert result.method == "tensor"
    assert result.real == pytest.approx(np.sqrt(2.0 * np.pi) / 3.0, rel=1e-10)
    assert result.stderr < 1e-8


def test_mc_integration_agrees_with_closed_form():
    integrand = lambda nodes: np.exp(-0.5 * nodes[:, 1] ** 2) * nodes[:, 0] ** 2
    result = integrate(integrand, ["u", "z"], rule="mc", samples=200_000, seed=4)
    assert result.method == "mc"
    assert abs(result.real - np.sqrt(2.0 * np.pi) / 3.0) < 5.0 * result.stderr


@pytest.mark.parametrize("power", [1.0, 2.0, 3.0])
def test_power_tail_maps_onto_interval(power):
    u, w = legendre_interval(0.0, 1.0, 64)
    s, jac = power_tail(u, 50.0, power)
    assert np.all((s >= 0.0) & (s <= 50.0))
    assert np.all(np.diff(s) > 0)
    # The proposal density itself becomes a constant in u
    exact = np.log(51.0) if power == 1.0 else (1.0 - 51.0 ** (1.0 - power)) / (power - 1.0)
    assert np.sum(w * jac * (1.0 + s) ** (-power)) == pytest.approx(exact, rel=1e-10)


def test_simplex_volume_is_exact():
    rng = np.random.default_rng(0)
    times, factor = simplex_times(rng.random((1000, 3)), 2.0)
    assert factor == pytest.approx(8.0 / math.factorial(3))
    assert np.all(times[:, 0] > times[:, 1])
    assert np.all(times[:, 1] > times[:, 2])
    # A constant integrand integrates to tⁿ/n! with no sampling error
    assert factor * np.mean(np.ones(len(times))) == 8.0 / 6.0


@pytest.mark.parametrize("d", [2, 3, 5])
def test_uniform_sphere_is_normalized(d):
    omega = uniform_sphere(np.random.default_rng(1), (100, 2), d)
    assert omega.shape == (100, 2, d)
    assert np.allclose(np.linalg.norm(omega, axis=-1), 1.0)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_sphere_rule_weights_sum_to_area(d):
    omegas, weights = sphere_rule(d, 16)
    assert np.sum(weights) == pytest.approx(sphere_area(d))
    assert np.allclose(np.linalg.norm(omegas, axis=-1), 1.0)


def test_sphere_rule_is_exact_for_absolute_projection():
    axis = np.array([1.0, 2.0, -0.5])
    omegas, weights = sphere_rule(3, 16, axis=axis)
    # ∫ |ω·a| dω = 2π|a|
    assert np.sum(weights * np.abs(omegas @ axis)) == pytest.approx(2.0 * np.pi * np.linalg.norm(axis))


def test_velocity_sphere_integral_tensor_and_mc():
    d = 2
    integrand = lambda v, omega: np.exp(-0.5 * np.sum(v * v, axis=-1)) * omega[..., 0] ** 2
    exact = 2.0 * np.pi * np.pi
    tensor = velocity_sphere_integral(integrand, d, rule="tensor", points=24, sphere_points=32)
    assert tensor.real == pytest.approx(exact, rel=1e-8)
    mc = velocity_sphere_integral(integrand, d, rule="mc", samples=100_000, seed=2)
    assert abs(mc.real - exact) < 5.0 * mc.stderr


def test_batches_are_reproducible_and_worker_independent():
    sample = lambda rng, count: rng.standard_normal(count)
    serial = run_batches(sample, 50_000, seed=9, batch_size=4096, workers=1)
    threaded = run_batches(sample, 50_000, seed=9, batch_size=4096, workers=4)
    assert serial.value == threaded.value
    assert serial.stderr == threaded.stderr
    assert serial.samples == 50_000


def test_batch_streams_differ():
    a = batch_rng(1, 0).random(4)
    b = batch_rng(1, 1).random(4)
    assert not np.allclose(a, b)
    assert np.array_equal(a, batch_rng(1, 0).random(4))


def test_worker_count_from_environment(monkeypatch):
    monkeypatch.setenv("QKINETIC_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("QKINETIC_THREADS", "many")
    assert worker_count(2) == 2
    monkeypatch.delenv("QKINETIC_THREADS")
    assert worker_count() == 1


def test_empty_budget_rejected():
    with pytest.raises(ValueError, match="must be positive"):
        run_batches(lambda rng, n: np.zeros(n), 0, seed=0)


def test_accumulator_standard_error():
    acc = Accumulator()
    acc.add(np.array([1.0, 3.0]))
    acc.add(np.array([5.0]))
    est = acc.estimate()
    assert est.real == pytest.approx(3.0)
    assert est.stderr == pytest.approx(np.std([1.0, 3.0, 5.0], ddof=1) / np.sqrt(3.0))


def test_estimate_arithmetic():
    total = Estimate(1.0, 0.3, 10, "mc") + Estimate(2.0, 0.4, 5, "mc")
    assert total.value == 3.0
    assert total.stderr == pytest.approx(0.5)
    assert total.method == "mc"
    assert (Estimate.exact(2.0) + total).method == "mixed"
    assert Estimate(1.0 + 2.0j, 0.1).scaled(-2.0).stderr == pytest.approx(0.2)
    assert Estimate(1.0 + 2.0j, 0.1).to_dict()["imag"] == 2.0
