import numpy as np
import pytest

from kinetic.oscillatory import ModelChi
from kinetic.terms import (Event, Term, TermBudget, TermSelector, eps_ladder, eval_I_term,
                           fit_slope, get_supported_terms, get_term, scaling_probe,
                           tested_amplitude)
from lib.gaussian import free_test_integral


def test_term_lookup():
    assert get_term("i4_recollision").name == Term.I4_RECOLLISION
    assert not get_term(Term.A_EPS).branch
    assert get_term(Term.I3).branch
    assert "T_eps" in get_supported_terms()
    with pytest.raises(ValueError, match="Unsupported term: I9. Supported: I0, I1"):
        get_term("I9")


def test_selector_defaults_to_smallest_subsystem():
    assert TermSelector("I0").j == 1
    assert TermSelector("I4_case1").j == 3
    assert TermSelector("I2", j=4).j == 4
    with pytest.raises(ValueError, match="needs j >= 2"):
        TermSelector("I3", j=1)
    with pytest.raises(ValueError, match="Dimension must be >= 1"):
        TermSelector("I0", dimension=0)


@pytest.mark.parametrize("name, d, slope", [
    ("I0", 3, 0.0), ("I1", 2, 0.5), ("I2", 2, 1.5), ("I3", 3, 2.0),
    ("I4_case2", 2, 1.0), ("I4_recollision", 3, 0.0), ("T_eps", 1, 0.0),
])
def test_expected_slopes(name, d, slope):
    assert TermSelector(name).expected_slope(d) == slope


def test_expected_slope_needs_dimension():
    with pytest.raises(ValueError, match="needs a dimension"):
        TermSelector("I1").expected_slope()
    assert TermSelector("I2", dimension=3).expected_slope() == 2.5


def test_branch_terms_and_their_summed_slopes():
    assert TermSelector("I2").branch
    assert not TermSelector("I2", summed=True).branch
    assert not TermSelector("I1").branch
    # The full sign sum cancels one power of ε per operator
    assert TermSelector("I2", summed=True).expected_slope(2) == 2.5
    assert TermSelector("I3", summed=True).expected_slope(2) == 3.0
    assert TermSelector("I4_case1", summed=True).expected_slope(3) == 4.0
    assert TermSelector("I1", summed=True).expected_slope(2) == 0.5
    assert TermSelector("I2").to_dict() == {"which": "I2", "j": 2, "dimension": None, "summed": False}


def test_budget_validation():
    with pytest.raises(ValueError, match="Unsupported quadrature rule"):
        TermBudget(rule="simpson")
    with pytest.raises(ValueError, match="samples must be positive"):
        TermBudget(samples=0)


def test_eps_ladder_is_geometric():
    ladder = eps_ladder(0.1, 4)
    assert ladder[0] == 0.1
    assert ladder[-1] == pytest.approx(0.1 * 10 ** -1.5)
    with pytest.raises(ValueError, match="Invalid ladder"):
        eps_ladder(0.1, 4, ratio=2.0)


def test_probe_ladder_checks(datum_1d, cs_1d):
    sel = TermSelector("I0")
    with pytest.raises(ValueError, match="at least 4 ladder points"):
        scaling_probe(sel, [0.1, 0.05, 0.025], datum_1d, cs_1d)
    with pytest.raises(ValueError, match="geometric"):
        scaling_probe(sel, [0.1, 0.05, 0.02, 0.01], datum_1d, cs_1d)
    with pytest.raises(ValueError, match="strictly decreasing"):
        scaling_probe(sel, [0.01, 0.1, 1.0, 10.0], datum_1d, cs_1d)


def test_fit_slope_of_a_power_law():
    eps = np.array([0.1, 0.01, 0.001, 0.0001])
    slope, stderr, residual = fit_slope(eps, 3.0 * eps ** 1.5)
    assert slope == pytest.approx(1.5)
    assert stderr < 1e-8
    assert residual < 1e-10


def test_untouched_amplitude_is_the_free_integral(datum_1d):
    t = 0.8
    free = free_test_integral(datum_1d, t)
    time = np.full(3, 0.4)
    zero = np.zeros((3, 1))
    kick = tested_amplitude(datum_1d, t, 2, [Event(time, (0, 1), zero, 1.0)], 0.1)
    assert np.allclose(kick, free ** 2)
    # A created particle carries no test function and has unit mass
    born = tested_amplitude(datum_1d, t, 2, [Event(time, (0, 2), zero, -1.0, creates=True)], 0.1)
    assert np.allclose(born, free ** 2)


def test_free_flight_term(datum_2d, cs_2d):
    value = eval_I_term(TermSelector("I0", j=2), 0.1, datum_2d, cs_2d, t=0.5)
    assert value.value == pytest.approx(free_test_integral(datum_2d, 0.5) ** 2)
    assert value.stderr == 0.0


def test_term_arguments_checked(datum_1d, cs_1d):
    with pytest.raises(ValueError, match="eps must be positive"):
        eval_I_term(TermSelector("I1"), 0.0, datum_1d, cs_1d)
    with pytest.raises(ValueError, match="Final time must be positive"):
        eval_I_term(TermSelector("I1"), 0.1, datum_1d, cs_1d, t=0.0)


def test_zero_potential_terms_vanish(offset_datum_1d, zero_cs):
    cs = zero_cs(1)
    for name in ("I1", "I2", "I4_recollision"):
        assert eval_I_term(TermSelector(name), 0.1, offset_datum_1d, cs).value == 0.0
    probe = scaling_probe(TermSelector("I1"), eps_ladder(0.1, 4), offset_datum_1d, cs)
    assert not probe.passed
    assert not probe.reliable
    assert "vanishes identically" in probe.errors[0]


def test_free_flight_probe_is_flat(datum_1d, cs_1d):
    probe = scaling_probe(TermSelector("I0"), eps_ladder(0.1, 4), datum_1d, cs_1d)
    assert probe.passed, probe.errors
    assert abs(probe.slope) < 1e-8
    assert len(probe.rows()) == 4
    assert probe.to_dict()["measured"] == "signed"
    assert probe.limit is None


def test_model_integral_probe_is_order_one(datum_2d, cs_2d):
    probe = scaling_probe(TermSelector("A_eps"), eps_ladder(0.1, 4), datum_2d, cs_2d,
                          chi=ModelChi(dimension=2))
    assert probe.passed, probe.errors
    assert probe.expected == 0.0
    assert -0.1 < probe.slope < 0.0


@pytest.mark.slow
def test_single_collision_term_scales_like_root_eps(offset_datum_1d, cs_1d):
    probe = scaling_probe(TermSelector("I1"), eps_ladder(0.1, 4), offset_datum_1d, cs_1d)
    assert probe.reliable, probe.errors
    assert probe.slope == pytest.approx(0.5, abs=0.2)


@pytest.mark.slow
@pytest.mark.parametrize("name, slope", [("I2", 1.5), ("I3", 1.0), ("I4_case2", 1.0)])
def test_branch_terms_scale_with_the_stationary_phase_count(name, slope, mixture_datum, cs_2d):
    probe = scaling_probe(TermSelector(name), eps_ladder(0.1, 4), mixture_datum(2), cs_2d,
                          budget=TermBudget(samples=200_000, seed=2))
    assert probe.measured == "branch"
    assert probe.reliable, probe.errors
    assert probe.slope == pytest.approx(slope, abs=0.2)


@pytest.mark.slow
def test_summed_single_operator_term_loses_another_power(mixture_datum, cs_2d):
    probe = scaling_probe(TermSelector("I2", summed=True), eps_ladder(0.1, 4), mixture_datum(2), cs_2d,
                          budget=TermBudget(samples=200_000, seed=2))
    assert probe.measured == "signed"
    assert probe.slope == pytest.approx(2.5, abs=0.2)


@pytest.mark.slow
def test_recollision_term_approaches_its_limit(mixture_datum, cs_2d):
    probe = scaling_probe(TermSelector("I4_recollision"), eps_ladder(0.1, 4), mixture_datum(2), cs_2d,
                          budget=TermBudget(samples=400_000, seed=3))
    assert probe.reliable, probe.errors
    assert probe.passed, probe.errors
    assert abs(probe.slope) <= 0.2
    assert abs(probe.limit.real) > 3.0 * probe.limit.stderr
    assert len(probe.limit_gaps) == 4
