#!/usr/bin/env python3
"""
Ewens sampling formula 테스트 - 정확한 값과 Kingman 시뮬레이션 비교
"""
import math
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from app.core.errors import BadConfiguration, BadGamma, TooLarge
from app.services.ewens import (
    AlleleConfiguration,
    configuration_from_partition,
    configurations,
    ewens_distribution,
    ewens_pmf,
    integer_partitions,
    k_marginal_oracle,
    stirling_first_unsigned,
    total_variation,
)
from app.services.experiments import ExperimentSpec, ewens_tv, run_experiment
from app.services.measures import validate_measure


def test_small_sample_values():
    # gamma = 1/2 -> theta = 1
    assert ewens_pmf(3, 0.5, (0, 0, 1)) == pytest.approx(1 / 3)
    assert ewens_pmf(3, 0.5, (1, 1, 0)) == pytest.approx(1 / 2)
    assert ewens_pmf(3, 0.5, (3, 0, 0)) == pytest.approx(1 / 6)


def test_configuration_padding():
    assert ewens_pmf(3, 0.5, (1, 1)) == pytest.approx(1 / 2)


@pytest.mark.parametrize("a", [(1, 0, 0), (0, 2, 0), (-1, 2, 0)])
def test_bad_configuration(a):
    with pytest.raises(BadConfiguration):
        ewens_pmf(3, 0.5, a)


@pytest.mark.parametrize("gamma", [0.0, -1.0, math.inf])
def test_bad_gamma(gamma):
    with pytest.raises(BadGamma):
        ewens_pmf(3, gamma, (0, 0, 1))


def test_enumeration_limit():
    with pytest.raises(TooLarge):
        ewens_distribution(31, 1.0)


def test_partition_count():
    # p(10) = 42
    assert len(list(integer_partitions(10))) == 42
    assert len(configurations(10)) == 42


def test_configurations_are_sorted():
    configs = [c.a for c in configurations(3)]
    assert configs == [(0, 0, 1), (1, 1, 0), (3, 0, 0)]


def test_stirling_numbers():
    assert stirling_first_unsigned(4) == (0, 6, 11, 6, 1)
    assert sum(stirling_first_unsigned(7)) == math.factorial(7)


@pytest.mark.parametrize("n, gamma", [(1, 0.3), (5, 0.5), (12, 2.0), (30, 0.7)])
def test_distribution_sums_to_one(n, gamma):
    dist = ewens_distribution(n, gamma)
    assert float(dist.probabilities.sum()) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n, gamma", [(6, 0.5), (15, 1.3)])
def test_family_count_marginal_matches_stirling(n, gamma):
    dist = ewens_distribution(n, gamma)
    oracle = k_marginal_oracle(n, gamma)
    for k in range(1, n + 1):
        assert dist.k_marginal[k] == pytest.approx(oracle[k], rel=1e-9)


def test_configuration_from_partition():
    c = configuration_from_partition([(1,), (2, 5), (3,), (4,), (6, 9), (7,), (8,)], 9)
    assert c.a == (5, 2, 0, 0, 0, 0, 0, 0, 0)
    assert c.n == 9
    assert c.families == 7


def test_total_variation_of_exact_law_is_zero():
    dist = ewens_distribution(3, 0.5)
    counts = {(0, 0, 1): 2, (1, 1, 0): 3, (3, 0, 0): 1}
    assert total_variation(counts, dist) == pytest.approx(0.0, abs=1e-12)
    assert total_variation({(3, 0, 0): 1}, dist) == pytest.approx(5 / 6)


def test_allele_configuration_validation():
    assert AlleleConfiguration.of([2, 0], 2).a == (2, 0)
    with pytest.raises(BadConfiguration):
        AlleleConfiguration.of([0, 0, 1], 2)


def _kingman_histogram_spec(replicates):
    return ExperimentSpec(
        measure=validate_measure({"family": "kingman"}),
        n_grid=(8,),
        gamma=0.5,
        replicates=replicates,
        master_seed=31337,
        statistic="allele_partition_histogram",
    )


def test_kingman_allele_partitions_match_ewens():
    result = run_experiment(_kingman_histogram_spec(5000))
    assert ewens_tv(result, 8, 0.5) <= 0.05


@pytest.mark.slow
def test_kingman_allele_partitions_match_ewens_closely():
    result = run_experiment(_kingman_histogram_spec(200000))
    assert ewens_tv(result, 8, 0.5) <= 0.01
