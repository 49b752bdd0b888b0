import numpy as np
import pytest

from lib.gaussian import free_test_integral, phase_space_integral
from lib.models import InitialDatum
from lib.spectral import datum_fourier


@pytest.fixture
def f0():
    return InitialDatum.standard(2, x_center=[0.3, -0.2], v_center=[0.5, 0.1], x_width=0.9, v_width=1.4)


def test_untested_integral_is_a_datum_transform(f0):
    rng = np.random.default_rng(3)
    b = rng.random(5)
    oy = rng.standard_normal((5, 2))
    ou = rng.standard_normal((5, 2))
    alpha = rng.standard_normal((5, 2))
    beta = rng.standard_normal((5, 2))
    value = phase_space_integral(f0, b, oy, ou, alpha, beta, with_test=False)
    # y = x − v b + oy, u = v + ou
    shift = np.sum(alpha * (ou * b[:, None] + oy) + beta * ou, axis=-1)
    expected = datum_fourier(f0, -alpha, -(alpha * b[:, None] + beta)) * np.exp(-1j * shift)
    assert np.allclose(value, expected, rtol=1e-10, atol=1e-14)


def test_zero_phase_untested_integral_is_mass(f0):
    zeros = np.zeros(2)
    value = phase_space_integral(f0.scaled(0.4), 0.7, zeros, zeros, zeros, zeros, with_test=False)
    assert complex(value) == pytest.approx(0.4)


def test_free_test_integral_of_standard_data():
    # ∫ N(0,1)² = 1/(2√π) per coordinate
    for d in (1, 2, 3):
        f0 = InitialDatum.standard(d)
        assert free_test_integral(f0, 0.0) == pytest.approx((0.5 / np.sqrt(np.pi)) ** (2 * d))


def test_free_test_integral_matches_quadrature_1d():
    f0 = InitialDatum.standard(1, x_center=[0.3], v_center=[0.5])
    t = 0.8
    axis = np.linspace(-9.0, 9.0, 721)
    step = axis[1] - axis[0]
    x, v = np.meshgrid(axis, axis, indexing="ij")
    psi = np.exp(-0.5 * (x * x + v * v)) / (2.0 * np.pi)
    datum = np.exp(-0.5 * ((x - v * t - 0.3) ** 2 + (v - 0.5) ** 2)) / (2.0 * np.pi)
    direct = float(np.sum(psi * datum) * step * step)
    assert free_test_integral(f0, t) == pytest.approx(direct, rel=1e-8)


def test_broadcast_over_batch(f0):
    zeros = np.zeros((3, 2))
    value = phase_space_integral(f0, np.zeros(3), zeros, zeros, zeros, zeros, with_test=True)
    assert value.shape == (3,)
    assert np.allclose(value, value[0])
