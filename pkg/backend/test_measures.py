#!/usr/bin/env python3
"""
measure 검증 / psi / block rate 테스트
"""
import math
import os
import sys

import numpy as np
import pytest
from scipy import integrate, special

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from app.core.errors import (
    BadParameter,
    BarUnsupported,
    ConfigError,
    MassViolation,
    SimplexViolation,
    UnsupportedMeasure,
)
from app.services.measures import (
    LambdaRateModel,
    PsiEvaluator,
    SimplexPoint,
    block_drift,
    bolthausen_sznitman_psi,
    complete_monotonicity_check,
    merger_rates,
    psi,
    regularity_integral,
    validate_measure,
)

KINGMAN = {"family": "kingman"}
BS = {"family": "bolthausen_sznitman"}
BETA = {"family": "beta", "alpha": 1.5}
DIRAC = {"family": "lambda_atoms", "atoms": [[0.5, 1.0]]}
XI_PAIR = {"family": "xi_atoms", "atoms": [[[0.5, 0.5], 1.0]]}


def ev(raw):
    return PsiEvaluator(validate_measure(raw))


def test_kingman_psi_is_half_square():
    assert ev(KINGMAN)(2.0) == 2.0
    assert ev(KINGMAN)(0.0) == 0.0


def test_kingman_psi_bar():
    assert ev(KINGMAN)(5.0, "bar") == pytest.approx(10.0)


@pytest.mark.parametrize("q", [0.5, 3.0, 50.0, 1e4])
def test_bolthausen_sznitman_quadrature_matches_closed_form(q):
    assert ev(BS)(q) == pytest.approx(bolthausen_sznitman_psi(q), rel=1e-7)


def test_bolthausen_sznitman_growth():
    """psi(q) = q log q + O(q)"""
    q = 1e6
    ratio = ev(BS)(q) / (q * math.log(q))
    assert 0.85 <= ratio <= 1.15


def test_dirac_atom_closed_form():
    # (e^{-q/2} - 1 + q/2) / (1/2)^2 at q = 2
    assert ev(DIRAC)(2.0) == pytest.approx(4.0 * math.exp(-1.0), rel=1e-12)


def test_xi_atom_closed_form():
    # sum_i (e^{-q x_i} - 1 + q x_i) / sum_i x_i^2 with x = (1/2, 1/2)
    assert ev(XI_PAIR)(2.0) == pytest.approx(4.0 * math.exp(-1.0), rel=1e-12)


@pytest.mark.parametrize("raw", [KINGMAN, BS, BETA, DIRAC, XI_PAIR])
def test_psi_bounded_by_half_square(raw):
    e = ev(raw)
    for q in (0.1, 1.0, 7.0, 300.0):
        assert 0.0 <= e(q) <= q * q / 2.0


def test_beta_psi_regular_variation():
    e = ev(BETA)
    r5 = e(1e5) / 1e5 ** 1.5
    r6 = e(1e6) / 1e6 ** 1.5
    assert r6 == pytest.approx(r5, rel=0.05)


def test_psi_cache_is_reused():
    e = ev(BETA)
    first = e(17.0)
    assert (17.0, first) in e.cached_table()
    assert e(17.0) == first


def test_negative_q_rejected():
    with pytest.raises(BadParameter):
        ev(KINGMAN)(-1.0)


def test_psi_bar_unsupported_for_xi():
    with pytest.raises(BarUnsupported):
        psi(ev(XI_PAIR), 2.0, "bar")


@pytest.mark.parametrize("raw, error", [
    ({"family": "kingman", "kingman_mass": 0.5}, MassViolation),
    ({"family": "beta", "alpha": 1.5, "kingman_mass": 1.2}, MassViolation),
    ({"family": "beta", "alpha": 2.5}, BadParameter),
    ({"family": "lambda_atoms", "atoms": [[0.5, 0.7]]}, MassViolation),
    ({"family": "lambda_atoms", "atoms": [[1.5, 1.0]]}, SimplexViolation),
    ({"family": "xi_atoms", "atoms": [[[0.2, 0.5], 1.0]]}, SimplexViolation),
    ({"family": "xi_atoms", "atoms": [[[0.7, 0.6], 1.0]]}, SimplexViolation),
    ({"family": "lambda_density", "grid": [0.1, 0.5], "density": [1.0]}, BadParameter),
])
def test_invalid_measures(raw, error):
    with pytest.raises(error):
        validate_measure(raw)


def test_unknown_key_names_the_key():
    with pytest.raises(ConfigError, match="gama"):
        validate_measure({"family": "kingman", "gama": 1})


def test_duplicate_atoms_are_aggregated():
    m = validate_measure({"family": "lambda_atoms", "kingman_mass": 0.5, "atoms": [[0.3, 0.25], [0.3, 0.25]]})
    assert m.nontrivial_part.atoms == ((0.3, 0.5),)


def test_density_table_rescaled_to_remaining_mass():
    m = validate_measure({"family": "lambda_density", "kingman_mass": 0.25, "grid": [0.1, 0.9], "density": [2.0, 2.0]})
    assert regularity_integral(m).value == pytest.approx(0.75)


def test_simplex_point_strips_zeros():
    assert SimplexPoint.of([0.5, 0.2, 0.0]).coordinates == (0.5, 0.2)


def test_regularity_integral():
    assert regularity_integral(validate_measure(XI_PAIR)).value == pytest.approx(2.0)
    assert regularity_integral(validate_measure(BETA)).value == pytest.approx(1.0)
    assert regularity_integral(validate_measure(KINGMAN)).value == 0.0


def test_kingman_merger_rates():
    r = merger_rates(validate_measure(KINGMAN), 5)
    assert r.rate(2) == 1.0
    assert r.rate(3) == 0.0
    assert r.total == pytest.approx(10.0)


@pytest.mark.parametrize("raw", [BETA, BS, DIRAC, {"family": "beta", "alpha": 1.2, "kingman_mass": 0.3}])
def test_lambda_rates_consistency_recursion(raw):
    model = LambdaRateModel(validate_measure(raw))
    for b in (2, 5, 12):
        for k in range(2, b + 1):
            lhs = model.rate(b, k)
            rhs = model.rate(b + 1, k) + model.rate(b + 1, k + 1)
            assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize("raw", [BETA, BS, DIRAC])
def test_closed_form_total_rate_matches_sum(raw):
    model = LambdaRateModel(validate_measure(raw))
    for b in (2, 10, 50):
        assert model.total(b) == pytest.approx(merger_rates(validate_measure(raw), b).total, rel=1e-10)


def test_bolthausen_sznitman_total_rate():
    model = LambdaRateModel(validate_measure(BS))
    for b in (2, 7, 100):
        assert model.total(b) == pytest.approx(b - 1, rel=1e-12)


def test_beta_rate_log_gamma_form():
    model = LambdaRateModel(validate_measure(BETA))
    a, b, k = 1.5, 6, 3
    expected = special.beta(k - a, b - k + a) / special.beta(2 - a, a)
    assert model.rate(b, k) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("raw", [BETA, BS, KINGMAN, {"family": "beta", "alpha": 1.7, "kingman_mass": 0.2}])
def test_block_drift_equals_psi_bar(raw):
    m = validate_measure(raw)
    e = PsiEvaluator(m)
    for b in (2, 5, 20):
        assert block_drift(m, b) == pytest.approx(e(b, "bar"), rel=1e-6)


def test_sample_k_inverts_cdf():
    model = LambdaRateModel(validate_measure(BETA))
    b = 8
    terms = np.array([model.term(b, k) for k in range(2, b + 1)])
    cdf = np.cumsum(terms) / model.total(b)
    assert model.sample_k(b, 0.0) == 2
    assert model.sample_k(b, float(cdf[0]) + 1e-9) == 3
    assert model.sample_k(b, 1.0) == b


def test_rates_need_lambda_type():
    with pytest.raises(UnsupportedMeasure):
        LambdaRateModel(validate_measure(XI_PAIR))


@pytest.mark.parametrize("raw", [BS, KINGMAN, BETA])
def test_psi_prime_is_bernstein(raw):
    verdict = complete_monotonicity_check(ev(raw))
    assert all(verdict.values())


def test_describe_round_trip():
    m = validate_measure({"family": "xi_atoms", "kingman_mass": 0.5, "atoms": [[[0.5, 0.25], 0.5]]})
    assert validate_measure(m.describe()) == m


def beta_reference(q, alpha, variant="standard"):
    """Direct quad of the defining integral against the Beta(2 - alpha, alpha) density."""
    def kernel(x):
        if variant == "bar":
            return (math.exp(q * math.log1p(-x)) - 1.0 + q * x) / (x * x) if x > 1e-6 else q * (q - 1.0) / 2.0
        qx = q * x
        return (math.expm1(-qx) + qx) / (x * x) if qx > 1e-5 else q * q * (0.5 - qx / 6.0)

    value, _ = integrate.quad(kernel, 0.0, 1.0, weight="alg", wvar=(1.0 - alpha, alpha - 1.0),
                              epsabs=0.0, epsrel=1e-10, limit=400)
    return value / special.beta(2.0 - alpha, alpha)


@pytest.mark.parametrize("q", [1.0, 2.0, 10.0])
def test_beta_psi_matches_direct_quadrature(q):
    assert ev(BETA)(q) == pytest.approx(beta_reference(q, 1.5), rel=1e-7)


@pytest.mark.parametrize("q, expected", [(1.0, 0.46296), (2.0, 1.73316), (10.0, 31.099)])
def test_beta_psi_golden_values(q, expected):
    assert ev(BETA)(q) == pytest.approx(expected, rel=1e-4)


@pytest.mark.parametrize("q", [2.0, 10.0])
def test_beta_psi_bar_matches_direct_quadrature(q):
    assert ev(BETA)(q, "bar") == pytest.approx(beta_reference(q, 1.5, "bar"), rel=1e-7)


def test_beta_psi_bar_of_two_is_pair_rate():
    # psi-bar(2) = lambda_{2,2} = 1 for every Beta(alpha)
    assert ev(BETA)(2.0, "bar") == pytest.approx(1.0, rel=1e-8)
    assert ev({"family": "beta", "alpha": 1.2})(2.0, "bar") == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("q", [1e4, 10000.00000000001, 999.9999999999999, 1e6 * (1 + 1e-15)])
def test_beta_psi_near_decades(q):
    value = ev(BETA)(q)
    assert value == pytest.approx(ev(BETA)(round(q)), rel=1e-8)
