import numpy as np
import pytest

from lib.models import GaussianComponent, InitialDatum, PotentialSpec
from lib.potentials import get_potential_kind
from lib.spectral import (check_norms, datum_eval, datum_fourier, factorized_datum_fourier, norms,
                          potential_eval, potential_fourier, potential_inverse, potential_norms,
                          sphere_area)


@pytest.mark.parametrize("d, area", [(1, 2.0), (2, 2.0 * np.pi), (3, 4.0 * np.pi)])
def test_sphere_area(d, area):
    assert sphere_area(d) == pytest.approx(area)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_gaussian_transform_at_origin(d):
    p = PotentialSpec(amplitude=1.5, width=0.7, dimension=d)
    value = float(potential_fourier(p, np.zeros(d)))
    assert value == pytest.approx(1.5 * (2.0 * np.pi * 0.49) ** (d / 2.0))


@pytest.mark.parametrize("d", [1, 2])
def test_inverse_transform_recovers_potential(d):
    p = PotentialSpec(amplitude=1.0, width=1.0, dimension=d)
    x = np.array([[0.0] * d, [0.5] * d, [1.2] + [0.0] * (d - 1)])
    assert np.allclose(potential_inverse(p, x), potential_eval(p, x), rtol=1e-6, atol=1e-10)


def test_contact_potential_is_flat_and_has_no_real_space_form():
    p = PotentialSpec(kind="contact", amplitude=2.0, dimension=3)
    h = np.random.default_rng(0).standard_normal((5, 3))
    assert np.all(potential_fourier(p, h) == 2.0)
    with pytest.raises(ValueError, match="contact potential has no pointwise real-space form"):
        potential_eval(p, h)
    assert not get_potential_kind("contact").has_real_space_form
    with pytest.raises(ValueError, match="no finite L1"):
        potential_norms(p)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_potential_norms_closed_form(d):
    p = PotentialSpec(amplitude=1.0, width=1.0, dimension=d)
    pn = potential_norms(p)
    # ∫ φ̂ = (2π)^d φ(0) for a non-negative transform
    assert pn.l1 == pytest.approx((2.0 * np.pi) ** d, rel=1e-6)
    assert pn.sup == pytest.approx((2.0 * np.pi) ** (d / 2.0))


def test_trailing_dimension_checked():
    p = PotentialSpec(dimension=2)
    with pytest.raises(ValueError, match="trailing dimension 2"):
        potential_fourier(p, np.zeros(3))


def test_datum_transform_at_zero_is_mass():
    f0 = InitialDatum.standard(2, x_center=[0.3, -0.1], v_center=[0.5, 0.0]).scaled(0.7)
    assert complex(datum_fourier(f0, np.zeros(2), np.zeros(2))) == pytest.approx(0.7)


def test_datum_transform_matches_quadrature_1d():
    f0 = InitialDatum.standard(1, x_center=[0.3], v_center=[0.5], x_width=0.8, v_width=1.3)
    axis = np.linspace(-10.0, 10.0, 801)
    step = axis[1] - axis[0]
    x, v = np.meshgrid(axis, axis, indexing="ij")
    values = datum_eval(f0, x[..., None], v[..., None])
    xi, k = 0.7, -0.4
    direct = np.sum(values * np.exp(-1j * (xi * x + k * v))) * step * step
    assert complex(datum_fourier(f0, np.array([xi]), np.array([k]))) == pytest.approx(complex(direct), rel=1e-8)


def test_factorized_transform_accepts_flat_blocks():
    f0 = InitialDatum.standard(2, x_center=[0.3, 0.0])
    rng = np.random.default_rng(1)
    xis = rng.standard_normal((4, 3, 2))
    ks = rng.standard_normal((4, 3, 2))
    blocked = factorized_datum_fourier(f0, 3, xis, ks)
    flat = factorized_datum_fourier(f0, 3, xis.reshape(4, 6), ks.reshape(4, 6))
    assert np.allclose(blocked, flat)
    assert np.allclose(blocked, np.prod(datum_fourier(f0, xis, ks), axis=-1))


def test_closed_form_norms():
    f0 = InitialDatum.standard(2, x_width=0.5, v_width=2.0)
    dn = norms(f0)
    assert dn.n1 == pytest.approx((2.0 * np.pi) ** 2 / (0.25 * 4.0))
    assert dn.n2 == pytest.approx(2.0 * np.pi / 0.25)
    assert dn.total == pytest.approx(dn.n1 + dn.n2)


@pytest.mark.parametrize("d", [1, 2])
def test_closed_form_norms_agree_with_quadrature(d):
    f0 = InitialDatum.standard(d, x_center=[0.2] * d, v_center=[0.4] * d, x_width=1.2, v_width=0.8)
    report = check_norms(f0, tolerance=1e-3)
    assert report.passed, report.errors


def test_non_concentric_mixture_uses_quadrature():
    comps = (
        GaussianComponent(0.5, (0.0,), (0.0,), (1.0,), (1.0,)),
        GaussianComponent(0.5, (2.0,), (0.0,), (1.0,), (1.0,)),
    )
    f0 = InitialDatum(1, comps)
    dn = norms(f0)
    assert dn.method == "quadrature"
    # Triangle inequality against the sum of component norms
    assert dn.n1 <= 2.0 * np.pi + 1e-6
    assert dn.n2 <= np.sqrt(2.0 * np.pi) + 1e-6
    with pytest.raises(ValueError, match="concentric"):
        check_norms(f0)
