import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import i0, i1

from aqplfc.distributions import (PhasePrior, cumulant_features, cumulants_from_moments, empirical_cumulants,
                                  fourier_moments, pdf, pdf_on_grid, sample_phase, sample_phases)
from aqplfc.errors import DegenerateFeatureError, DeltaUnsupportedError, DomainError
from aqplfc.torus import TWO_PI


@pytest.mark.parametrize("prior", [
    PhasePrior.uniform(),
    PhasePrior.wrapped_normal(1.0, 0.3),
    PhasePrior.wrapped_normal(5.0, 2.5),
    PhasePrior.von_mises(2.0, 4.0),
    PhasePrior.mixture([(0.4, 0.5, 0.2), (0.6, 3.0, 0.7)]),
])
def test_pdf_integrates_to_one(prior):
    total, _ = quad(lambda x: float(pdf(prior, np.array(x))), 0, TWO_PI, limit=200)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_point_prior_has_no_density():
    with pytest.raises(DeltaUnsupportedError):
        pdf_on_grid(PhasePrior.point(0.0))


def test_grid_resolution_floor():
    with pytest.raises(DomainError):
        pdf_on_grid(PhasePrior.uniform(), 4)


def test_parameter_validation():
    with pytest.raises(DomainError):
        PhasePrior.wrapped_normal(0.0, -1.0)
    with pytest.raises(DomainError):
        PhasePrior("cauchy", ())
    with pytest.raises(DomainError):
        PhasePrior.mixture([(0.3, 0.0, 1.0), (0.3, 1.0, 1.0)])


def test_sampling_is_counter_based():
    prior = PhasePrior.wrapped_normal(1.0, 0.5)
    batch = sample_phases(prior, 7, 50)
    assert sample_phase(prior, 7, 33) == batch[33]
    assert np.array_equal(sample_phases(prior, 7, 10, start=20), batch[20:30])
    assert np.all((batch >= 0) & (batch < TWO_PI))


def test_point_samples():
    assert np.all(sample_phases(PhasePrior.point(-1.0), 0, 5) == TWO_PI - 1.0)


def test_von_mises_samples_match_moment():
    s = sample_phases(PhasePrior.von_mises(1.0, 2.0), 3, 200_000)
    m = np.exp(1j * s).mean()
    assert abs(m) == pytest.approx(i1(2.0) / i0(2.0), abs=5e-3)
    assert np.angle(m) == pytest.approx(1.0, abs=1e-2)


def test_wrapped_normal_cumulants_closed_form():
    assert cumulant_features(PhasePrior.wrapped_normal(7.0, 0.6), 3).kappas == pytest.approx(
        (7.0 - TWO_PI, 0.36, 0.0))


def test_numeric_cumulants_agree_with_closed_form():
    prior = PhasePrior.wrapped_normal(1.0, 0.8)
    numeric = cumulants_from_moments(fourier_moments(prior, [1, 2]), 4)
    assert numeric == pytest.approx((1.0, 0.64, 0.0, 0.0), abs=1e-10)


def test_von_mises_variance_feature():
    k = cumulant_features(PhasePrior.von_mises(0.5, 3.0), 2).kappas
    assert k[0] == pytest.approx(0.5)
    assert k[1] == pytest.approx(-2 * math.log(i1(3.0) / i0(3.0)))


def test_uniform_prior_is_degenerate():
    with pytest.raises(DegenerateFeatureError):
        cumulant_features(PhasePrior.uniform(), 3)


def test_point_prior_features():
    assert cumulant_features(PhasePrior.point(1.0), 3).kappas == (1.0, 0.0, 0.0)


def test_variance_feature_increases_with_sigma():
    sig = np.linspace(0.2, 2.0, 16)
    k2 = [cumulant_features(PhasePrior.wrapped_normal(0.0, s), 3).kappas[1] for s in sig]
    assert np.all(np.diff(k2) > 0)


def test_empirical_cumulants_converge():
    prior = PhasePrior.mixture([(0.3, 0.5, 0.3), (0.7, 1.5, 0.4)])
    exact = cumulant_features(prior, 3).kappas
    emp = empirical_cumulants(sample_phases(prior, 2, 400_000), 3)
    assert emp == pytest.approx(exact, abs=5e-3)


def test_shifted_and_roundtrip():
    p = PhasePrior.mixture([(0.5, 0.0, 0.2), (0.5, 1.0, 0.3)])
    q = p.shifted(0.5)
    assert q.components[1][1] == pytest.approx(1.5)
    assert PhasePrior.from_dict(q.to_dict()) == q
