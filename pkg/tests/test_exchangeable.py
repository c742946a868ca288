import itertools
import math

import numpy as np
import pytest
from scipy import stats

from clustercount.core import DomainError, RateModelSpec, RateSchedule, rate_vector
from clustercount.exchangeable import (
    InvalidLambdaError,
    LambdaVector,
    NumericalConsistencyError,
    lambda_beta_binomial,
    lambda_binomial,
    lambda_from_transition,
    lambda_qpower,
    pmf_from_lambda,
    qpower_zero_count_pmf,
)
from clustercount.transition import TransitionDistribution, transition_distribution

from conftest import random_schedule


def beta_binomial_product(p, alpha, n):
    """Closed-form beta-binomial pmf written as products (independent oracle)."""
    out = []
    for r in range(n + 1):
        num = math.prod(k * alpha + p for k in range(r)) * math.prod(s * alpha + 1 - p for s in range(n - r))
        den = math.prod(j * alpha + 1 for j in range(n))
        out.append(math.comb(n, r) * num / den)
    return np.array(out)


def brute_force_count_law(lam):
    """Enumerate all 2**n outcomes, each by inclusion-exclusion over its zeros."""
    n = len(lam) - 1
    law = np.zeros(n + 1)
    for z in itertools.product((0, 1), repeat=n):
        ones = sum(z)
        zeros = [i for i, v in enumerate(z) if v == 0]
        prob = 0.0
        for size in range(len(zeros) + 1):
            for _ in itertools.combinations(zeros, size):
                prob += (-1) ** size * lam[ones + size]
        law[ones] += prob
    return law


def test_binomial_lambda_gives_binomial_pmf():
    np.testing.assert_allclose(pmf_from_lambda(LambdaVector(0.5 ** np.arange(3))), [0.25, 0.5, 0.25],
                               atol=1e-15)


def test_all_ones():
    assert pmf_from_lambda(LambdaVector([1, 1, 1, 1])).tolist() == [0, 0, 0, 1]


def test_lambda_binomial_values():
    np.testing.assert_allclose(lambda_binomial(0.3, 3).lambdas, [1, 0.3, 0.09, 0.027], rtol=1e-15)


@pytest.mark.parametrize("n", [1, 4, 10])
@pytest.mark.parametrize("p", [0.1, 0.45, 0.8])
def test_families_reduce_to_binomial(n, p):
    base = lambda_binomial(p, n).lambdas
    np.testing.assert_allclose(lambda_beta_binomial(p, 0.0, n).lambdas, base, rtol=1e-15)
    np.testing.assert_allclose(lambda_qpower(p, 1.0, n).lambdas, base, rtol=1e-15)
    np.testing.assert_allclose(pmf_from_lambda(lambda_binomial(p, n)), stats.binom.pmf(range(n + 1), n, p),
                               atol=1e-14)


def test_beta_binomial_example():
    np.testing.assert_allclose(pmf_from_lambda(lambda_beta_binomial(0.3, 0.1, 4)),
                               beta_binomial_product(0.3, 0.1, 4), atol=1e-12)


@pytest.mark.parametrize("n", [2, 5, 10])
@pytest.mark.parametrize("p", [0.2, 0.5, 0.7])
def test_beta_binomial_negative_alpha(n, p):
    floor = -min(p, 1 - p) / (n - 1)
    alpha = floor * 0.9
    np.testing.assert_allclose(pmf_from_lambda(lambda_beta_binomial(p, alpha, n)),
                               beta_binomial_product(p, alpha, n), atol=1e-12)
    with pytest.raises(DomainError):
        lambda_beta_binomial(p, floor, n)


def test_beta_binomial_matches_scipy():
    # alpha = 1 / (a + b) with p = a / (a + b)
    a, b, n = 2.0, 3.0, 7
    pmf = pmf_from_lambda(lambda_beta_binomial(a / (a + b), 1 / (a + b), n))
    np.testing.assert_allclose(pmf, stats.betabinom.pmf(range(n + 1), n, a, b), atol=1e-13)


@pytest.mark.parametrize("p", np.round(np.arange(0.1, 1.0, 0.1), 1))
@pytest.mark.parametrize("gamma", [0, 0.25, 0.5, 0.75, 1])
@pytest.mark.parametrize("n", [1, 6, 12])
def test_qpower_valid(p, gamma, n):
    pmf = pmf_from_lambda(lambda_qpower(p, gamma, n))
    assert np.all(pmf >= 0)
    assert abs(pmf.sum() - 1) < 1e-10


def test_qpower_gamma_zero_is_all_or_nothing():
    np.testing.assert_allclose(pmf_from_lambda(lambda_qpower(0.3, 0.0, 4)), [0.7, 0, 0, 0, 0.3], atol=1e-15)


def test_qpower_zero_count_is_reversal():
    zeros = qpower_zero_count_pmf(0.72, 0.835, 5)
    ones = pmf_from_lambda(lambda_qpower(0.28, 0.835, 5))
    np.testing.assert_allclose(zeros, ones[::-1], atol=1e-15)


@pytest.mark.parametrize("bad", [(0.5, -0.1, 3), (0.5, 1.2, 3), (0.0, 1.0, 3)])
def test_family_domain_errors(bad):
    with pytest.raises(DomainError):
        lambda_qpower(*bad)


def test_invalid_lambda_rejected():
    # lambda_2 > lambda_1 cannot come from exchangeable trials
    with pytest.raises(InvalidLambdaError, match="not a valid exchangeable"):
        pmf_from_lambda(LambdaVector([1.0, 0.2, 0.6]))
    with pytest.raises(InvalidLambdaError):
        pmf_from_lambda(LambdaVector([0.9, 0.2, 0.1]))


@pytest.mark.parametrize("n", range(1, 7))
def test_brute_force_enumeration(n, rng):
    for lam in (lambda_beta_binomial(0.35, 0.2, n).lambdas, lambda_qpower(0.6, 0.4, n).lambdas):
        np.testing.assert_allclose(brute_force_count_law(lam), pmf_from_lambda(LambdaVector(lam)), atol=1e-12)
    sched = random_schedule(rng, n_max=n, n_min=n, rate_max=5)
    lam = lambda_from_transition(transition_distribution(sched, 0)).lambdas
    np.testing.assert_allclose(brute_force_count_law(lam), transition_distribution(sched, 0).probs, atol=1e-12)


class TestFromTransition:
    @pytest.mark.parametrize("n", [1, 3, 8])
    @pytest.mark.parametrize("alpha", [0.2, 1.5])
    def test_susceptible1_gives_powers(self, n, alpha):
        row = transition_distribution(rate_vector(RateModelSpec("susceptible1", (alpha,)), n), 0)
        lam = lambda_from_transition(row).lambdas
        np.testing.assert_allclose(lam, (-math.expm1(-alpha)) ** np.arange(n + 1), atol=1e-12)

    def test_point_mass_at_n(self):
        row = TransitionDistribution(0, 4, np.array([0, 0, 0, 0, 1.0]))
        assert lambda_from_transition(row).lambdas.tolist() == [1] * 5

    def test_last_two(self):
        row = transition_distribution(RateSchedule([1.0, 2.0, 3.0, 0.0]), 0)
        lam = lambda_from_transition(row).lambdas
        assert lam[3] == pytest.approx(row.probs[3], abs=1e-15)
        assert lam[2] == pytest.approx(row.probs[2] / 3 + lam[3], abs=1e-15)

    def test_round_trip_and_monotone(self, rng):
        for _ in range(200):
            sched = random_schedule(rng, n_max=10)
            row = transition_distribution(sched, 0)
            lam = lambda_from_transition(row).lambdas
            assert lam[0] == 1.0
            assert np.all(np.diff(lam) <= 1e-10) and lam[-1] >= -1e-10
            np.testing.assert_allclose(pmf_from_lambda(LambdaVector(lam)), row.probs, atol=1e-9)

    def test_inconsistent_row(self):
        with pytest.raises(NumericalConsistencyError):
            lambda_from_transition(TransitionDistribution(0, 2, np.array([0.5, 0.2, 0.1])))

    def test_needs_m_zero(self):
        with pytest.raises(DomainError):
            lambda_from_transition(transition_distribution(RateSchedule([1.0, 1.0, 0.0]), 1))
