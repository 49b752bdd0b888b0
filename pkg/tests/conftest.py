import numpy as np
import pytest

from lib.models import InitialDatum, PotentialSpec
from kinetic.kernel import CrossSection


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def datum_1d():
    return InitialDatum.standard(1)


@pytest.fixture
def datum_2d():
    return InitialDatum.standard(2)


@pytest.fixture
def offset_datum_1d():
    return InitialDatum.standard(1, x_center=[0.3], v_center=[0.5])


@pytest.fixture
def cs_1d():
    return CrossSection(PotentialSpec(dimension=1))


@pytest.fixture
def cs_2d():
    return CrossSection(PotentialSpec(dimension=2))


@pytest.fixture
def cs_3d():
    return CrossSection(PotentialSpec(dimension=3))


@pytest.fixture
def zero_cs():
    def make(dimension: int) -> CrossSection:
        return CrossSection(PotentialSpec(amplitude=0.0, dimension=dimension))
    return make


@pytest.fixture
def mixture_datum():
    """Two velocity spreads about one off-centre point: a datum Q does not annihilate."""
    def make(dimension: int) -> InitialDatum:
        return InitialDatum.from_dict({
            "dimension": dimension,
            "components": [
                {"weight": 0.5, "x_center": 0.3, "v_center": 0.5, "v_width": 0.5},
                {"weight": 0.5, "x_center": 0.3, "v_center": 0.5, "v_width": 1.5},
            ],
        })
    return make
