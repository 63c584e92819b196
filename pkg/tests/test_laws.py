import numpy as np
import pytest

from ldqueue.errors import ConfigError, DomainError
from ldqueue.laws import (
    deterministic_interarrivals,
    deterministic_service,
    exponential_interarrivals,
    exponential_service,
    gamma_interarrivals,
    integrated_tail,
    renewal_from_spec,
    service_from_spec,
    service_truncate,
    tail_integral_signed,
    uniform_interarrivals,
    uniform_service,
)

ALL_SERVICE = [uniform_service(0, 1), exponential_service(1.0),
               deterministic_service(0.3)]
ALL_RENEWAL = [exponential_interarrivals(1.0), gamma_interarrivals(2, 2),
               uniform_interarrivals(0.5, 1.5), deterministic_interarrivals(1.0)]


@pytest.mark.parametrize("svc", ALL_SERVICE, ids=lambda s: s.name)
def test_service_cdf_tail_complement(svc):
    xs = np.linspace(0.0, 3.0, 61)
    np.testing.assert_allclose(svc.tail(xs) + svc.cdf(xs), 1.0, atol=1e-12)
    assert np.all(np.diff(svc.cdf(xs)) >= -1e-15)
    assert float(svc.cdf(-1e-9)) == 0.0


@pytest.mark.parametrize("svc", ALL_SERVICE, ids=lambda s: s.name)
def test_service_support_bound(svc):
    if svc.support_bound is not None:
        assert float(svc.cdf(svc.support_bound)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("svc", [uniform_service(0, 1), exponential_service(1.0)],
                         ids=lambda s: s.name)
def test_service_density_integrates_to_one(svc):
    hi = svc.quantile(1 - 1e-6)
    xs = np.linspace(0.0, hi, 200001)
    mass = np.trapezoid(svc.pdf(xs), xs)
    assert 1 - 1e-4 <= mass <= 1 + 1e-4


def test_integrated_tail_values():
    assert integrated_tail(uniform_service(0, 1), 0.0) == 0.0
    assert integrated_tail(uniform_service(0, 1), 1.0) == pytest.approx(0.5, abs=1e-14)
    assert integrated_tail(exponential_service(1.0), 50.0) == pytest.approx(1.0, abs=1e-8)
    # generic quadrature route vs the closed form, on a law with the
    # closed form stripped off
    svc = uniform_service(0, 1)
    bare = svc.__class__(**{**svc.__dict__, "closed_tail_integral": None})
    for u in (0.25, 0.7, 1.0, 2.0):
        assert integrated_tail(bare, u) == pytest.approx(
            integrated_tail(svc, u), abs=1e-9)


def test_tail_integral_signed_extension():
    svc = uniform_service(0, 1)
    assert tail_integral_signed(svc, -0.7) == -0.7
    assert tail_integral_signed(svc, 0.5) == pytest.approx(0.375, abs=1e-14)


def test_service_truncate_uniform():
    svc = uniform_service(0, 1)
    same = service_truncate(svc, 1.0)
    xs = np.linspace(0, 1, 11)
    np.testing.assert_allclose(same.cdf(xs), svc.cdf(xs), atol=1e-14)

    half = service_truncate(svc, 0.5)
    assert half.support_bound == 0.5
    np.testing.assert_allclose(half.cdf(np.array([0.1, 0.25, 0.5, 0.9])),
                               [0.2, 0.5, 1.0, 1.0], atol=1e-14)


def test_service_truncate_exponential():
    svc = exponential_service(1.0)
    K = np.log(2.0)
    trunc = service_truncate(svc, K)
    xs = np.array([0.1, 0.3, 0.5])
    np.testing.assert_allclose(trunc.cdf(xs), (1 - np.exp(-xs)) / 0.5, atol=1e-12)
    assert float(trunc.cdf(K)) == pytest.approx(1.0, abs=1e-12)
    rng = np.random.default_rng(7)
    assert np.all(trunc.sample(rng, 500) <= K + 1e-12)


def test_service_truncate_rejects_zero_mass():
    with pytest.raises(DomainError):
        service_truncate(uniform_service(0.5, 1.0), 0.25)


@pytest.mark.parametrize("law", ALL_RENEWAL, ids=lambda l: l.name)
def test_renewal_cumulant_basics(law):
    assert float(law.cumulant(0.0)) == pytest.approx(0.0, abs=1e-14)
    hi = min(law.theta_sup, 2.0)
    grid = np.linspace(-3.0, 0.9 * hi, 41)
    k = np.asarray(law.cumulant(grid), dtype=float)
    assert np.all(np.diff(k) > 0), "cumulant must be strictly increasing"
    second = np.diff(k, 2)
    assert np.all(second >= -1e-8), "cumulant must be convex"
    # derivative consistency against central differences
    mid = grid[5:-5]
    h = 1e-6
    fd = (np.asarray(law.cumulant(mid + h)) - np.asarray(law.cumulant(mid - h))) / (2 * h)
    np.testing.assert_allclose(np.asarray(law.kappa_prime(mid)), fd,
                               rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("law", ALL_RENEWAL, ids=lambda l: l.name)
def test_renewal_samples_positive(law):
    rng = np.random.default_rng(11)
    u = law.sample(rng, 1000)
    assert np.all(u > 0)


def test_cumulant_closed_forms():
    assert float(exponential_interarrivals(1.0).cumulant(0.5)) == pytest.approx(
        np.log(2.0), abs=1e-12)
    assert float(gamma_interarrivals(2, 2).cumulant(1.0)) == pytest.approx(
        2 * np.log(2.0), abs=1e-12)
    assert float(deterministic_interarrivals(2.0).cumulant(0.3)) == pytest.approx(
        0.6, abs=1e-14)


def test_cumulant_domain_error():
    with pytest.raises(DomainError):
        exponential_interarrivals(1.0).cumulant(1.0)
    with pytest.raises(DomainError):
        gamma_interarrivals(2, 2).cumulant(2.5)


def test_uniform_kappa_matches_quadrature():
    law = uniform_interarrivals(0.5, 1.5)
    for th in (-30.0, -2.0, -1e-7, 1e-7, 0.8, 5.0):
        xs = np.linspace(0.5, 1.5, 20001)
        direct = np.log(np.trapezoid(np.exp(th * xs), xs))
        assert float(law.cumulant(th)) == pytest.approx(direct, abs=1e-6)


def test_spec_round_trip():
    for law in ALL_SERVICE:
        again = service_from_spec(law.spec)
        xs = np.linspace(0, 2, 21)
        np.testing.assert_allclose(again.cdf(xs), law.cdf(xs), atol=1e-14)
    for law in ALL_RENEWAL:
        again = renewal_from_spec(law.spec)
        assert again.name == law.name
        assert float(again.cumulant(0.1)) == pytest.approx(
            float(law.cumulant(0.1)), abs=1e-14)
    with pytest.raises(ConfigError):
        service_from_spec({"kind": "cauchy"})
    with pytest.raises(ConfigError):
        renewal_from_spec({"kind": "gamma", "shape": 2})
