"""
Exact Ewens sampling formula for the Kingman coalescent with mutation
rate gamma per unit length, theta = 2 * gamma.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterator, List, Mapping, Sequence, Tuple

import numpy as np
from scipy import special

from ..core.errors import BadConfiguration, BadGamma, BadParameter, TooLarge

logger = logging.getLogger(__name__)

MAX_ENUMERATION_N = 30
ORACLE_REL_TOL = 1e-9


@dataclass(frozen=True)
class AlleleConfiguration:
    """a[i-1] = number of allelic families with exactly i representatives."""

    a: Tuple[int, ...]

    @classmethod
    def of(cls, a: Sequence[int], n: int = None) -> "AlleleConfiguration":
        counts = tuple(int(x) for x in a)
        if any(x < 0 for x in counts):
            raise BadConfiguration(f"negative family count in {counts}")
        total = sum(i * x for i, x in enumerate(counts, start=1))
        if n is not None:
            if total != n:
                raise BadConfiguration(f"sum of i * a_i is {total}, not {n}")
            # pad / trim trailing zeros to length n
            if len(counts) > n and any(counts[n:]):
                raise BadConfiguration(f"family sizes above {n} in {counts}")
            counts = (counts + (0,) * n)[:n]
        return cls(counts)

    @property
    def n(self) -> int:
        return sum(i * x for i, x in enumerate(self.a, start=1))

    @property
    def families(self) -> int:
        return sum(self.a)


@dataclass(frozen=True)
class EwensDistribution:
    n: int
    gamma: float
    configurations: List[AlleleConfiguration] = field(repr=False)
    probabilities: np.ndarray = field(repr=False)
    k_marginal: Dict[int, float] = field(repr=False)

    def pmf(self) -> Dict[Tuple[int, ...], float]:
        return {c.a: float(p) for c, p in zip(self.configurations, self.probabilities)}


def _check_gamma(gamma: float):
    if not (gamma > 0) or not math.isfinite(gamma):
        raise BadGamma(f"gamma must be positive, got {gamma}")


def log_ewens_pmf(n: int, gamma: float, a: AlleleConfiguration) -> float:
    theta = 2.0 * gamma
    # log n! - log theta^(n) (rising factorial)
    value = math.lgamma(n + 1) - (math.lgamma(theta + n) - math.lgamma(theta))
    log_theta = math.log(theta)
    for i, ai in enumerate(a.a, start=1):
        if ai:
            value += ai * (log_theta - math.log(i)) - math.lgamma(ai + 1)
    return value


def ewens_pmf(n: int, gamma: float, a) -> float:
    if n < 1:
        raise BadParameter(f"n must be >= 1, got {n}")
    _check_gamma(gamma)
    if not isinstance(a, AlleleConfiguration):
        a = AlleleConfiguration.of(a, n)
    elif a.n != n:
        raise BadConfiguration(f"configuration {a.a} does not describe {n} individuals")
    return math.exp(log_ewens_pmf(n, gamma, a))


def integer_partitions(n: int, largest: int = None) -> Iterator[Tuple[int, ...]]:
    """Partitions of n as nonincreasing part tuples."""
    largest = n if largest is None else largest
    if n == 0:
        yield ()
        return
    for part in range(min(n, largest), 0, -1):
        for rest in integer_partitions(n - part, part):
            yield (part,) + rest


def configurations(n: int) -> List[AlleleConfiguration]:
    """All allele configurations of n, ascending lexicographic in a."""
    out = []
    for parts in integer_partitions(n):
        a = [0] * n
        for p in parts:
            a[p - 1] += 1
        out.append(AlleleConfiguration(tuple(a)))
    out.sort(key=lambda c: c.a)
    return out


@lru_cache(maxsize=None)
def stirling_first_unsigned(n: int) -> Tuple[int, ...]:
    """|s(n, k)| for k = 0..n, exact integers."""
    row = [1]
    for m in range(n):
        # |s(m+1, k)| = |s(m, k-1)| + m |s(m, k)|
        nxt = [0] * (m + 2)
        for k, v in enumerate(row):
            nxt[k + 1] += v
            nxt[k] += m * v
        row = nxt
    return tuple(row)


def k_marginal_oracle(n: int, gamma: float) -> Dict[int, float]:
    """P(K = k) = |s(n,k)| theta^k / theta^(n)"""
    theta = 2.0 * gamma
    log_rising = special.gammaln(theta + n) - special.gammaln(theta)
    stirling = stirling_first_unsigned(n)
    return {k: math.exp(math.log(stirling[k]) + k * math.log(theta) - log_rising) for k in range(1, n + 1)}


def ewens_distribution(n: int, gamma: float) -> EwensDistribution:
    if n < 1:
        raise BadParameter(f"n must be >= 1, got {n}")
    if n > MAX_ENUMERATION_N:
        raise TooLarge(f"enumeration is capped at n = {MAX_ENUMERATION_N}, got {n}")
    _check_gamma(gamma)

    configs = configurations(n)
    probs = np.exp([log_ewens_pmf(n, gamma, c) for c in configs])
    k_marginal = {k: 0.0 for k in range(1, n + 1)}
    for c, p in zip(configs, probs):
        k_marginal[c.families] += float(p)

    oracle = k_marginal_oracle(n, gamma)
    for k, p in k_marginal.items():
        if abs(p - oracle[k]) > ORACLE_REL_TOL * max(oracle[k], 1e-300):
            logger.warning(f"K marginal at k={k}: enumeration {p!r} vs Stirling {oracle[k]!r}")
    return EwensDistribution(n, gamma, configs, probs, k_marginal)


def configuration_from_partition(partition: Sequence[Sequence[int]], n: int) -> AlleleConfiguration:
    a = [0] * n
    for block in partition:
        a[len(block) - 1] += 1
    return AlleleConfiguration.of(a, n)


def total_variation(counts: Mapping[Tuple[int, ...], int], dist: EwensDistribution) -> float:
    """TV distance between an empirical configuration histogram and the exact law."""
    total = sum(counts.values())
    if total == 0:
        raise BadParameter("empty histogram")
    exact = dist.pmf()
    keys = set(exact) | set(counts)
    return 0.5 * math.fsum(abs(counts.get(k, 0) / total - exact.get(k, 0.0)) for k in keys)
