"""Ewens sampling formula and the Bernoulli-sum law of the emigrant block count Z_n.

Marks falling at rate theta/2 on the branches of a Kingman tree for n leaves cut it into Z_n
blocks, where ``Z_n = zeta_1 + ... + zeta_n`` with independent ``zeta_i ~ Bernoulli(theta /
(i + theta))``. Note the convention: the first term is not forced to 1, so Z_n = 0 has positive
(tiny) probability, exactly as the Bernoulli-sum formula states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from numba import njit
from scipy import special

__all__ = [
    "MutationModel",
    "sample_block_count_crp",
    "esf_log_pmf",
    "expected_block_count",
    "block_count_pmf",
    "esf_block_count_pmf",
    "partitions",
]


@dataclass(frozen=True)
class MutationModel:
    """Mutation marks at Poisson rate theta/2 along lineages; theta = 2 * rho."""

    theta: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")

    @classmethod
    def from_migration_rate(cls, rho: float) -> "MutationModel":
        return cls(2.0 * rho)


def _check(n, theta):
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not theta > 0:
        raise ValueError("theta must be positive")


@njit(cache=True, nogil=True)
def _bernoulli_sum(n, theta, rng):
    # Thinning per dyadic block: candidates arrive geometrically at the block's largest
    # success probability and are kept with probability p_i / p_max. Exact, O(theta log n).
    z = 0
    lo = 1
    while lo <= n:
        hi = min(2 * lo - 1, n)
        pmax = theta / (lo + theta)
        i = lo - 1
        while True:
            i += rng.geometric(pmax)
            if i > hi:
                break
            if rng.random() * pmax < theta / (i + theta):
                z += 1
        lo = hi + 1
    return z


def sample_block_count_crp(n: int, theta: float, rng: np.random.Generator) -> int:
    """One draw of Z_n (the Chinese-restaurant table count)."""
    _check(n, theta)
    return int(_bernoulli_sum(int(n), float(theta), rng))


def expected_block_count(n: int, theta: float) -> float:
    """sum_{i=1}^n theta / (i + theta), through the digamma function for large n."""
    _check(n, theta)
    if n <= 1000:
        i = np.arange(1, n + 1)
        return float(np.sum(theta / (i + theta)))
    return float(theta * (special.digamma(n + theta + 1) - special.digamma(theta + 1)))


@njit(cache=True, nogil=True)
def _poisson_binomial(n, theta, kmax):
    pmf = np.zeros(kmax + 1)
    pmf[0] = 1.0
    top = 0
    for i in range(1, n + 1):
        p = theta / (i + theta)
        q = 1.0 - p
        top = min(top + 1, kmax)
        for k in range(top, 0, -1):
            pmf[k] = pmf[k] * q + pmf[k - 1] * p
        pmf[0] *= q
    return pmf


def block_count_pmf(n: int, theta: float, kmax: int | None = None) -> np.ndarray:
    """Exact law of Z_n on {0, ..., kmax} (mass above kmax dropped)."""
    _check(n, theta)
    if kmax is None:
        kmax = n
    return _poisson_binomial(int(n), float(theta), int(min(kmax, n)))


def esf_log_pmf(a: Sequence[int], theta: float) -> float:
    """log P(A = a) under the Ewens sampling formula; ``a[i-1]`` is the number of size-i blocks.

    The normaliser is the rising factorial theta (theta + 1) ... (theta + n - 1).
    """
    a = np.asarray(a, dtype=np.int64)
    if a.ndim != 1 or np.any(a < 0):
        raise ValueError("a must be a sequence of nonnegative integers")
    sizes = np.arange(1, len(a) + 1)
    n = int(np.sum(sizes * a))
    if n < 1:
        raise ValueError("sum of i * a_i must be a positive integer n")
    if not theta > 0:
        raise ValueError("theta must be positive")
    log_rising = special.gammaln(theta + n) - special.gammaln(theta)
    terms = a * math.log(theta) - a * np.log(sizes) - special.gammaln(a + 1)
    return float(special.gammaln(n + 1) - log_rising + np.sum(terms))


def partitions(n: int) -> Iterator[np.ndarray]:
    """All allelic partitions of n as count vectors ``(a_1, ..., a_n)``."""

    def rec(rest, largest):
        if rest == 0:
            yield []
            return
        for part in range(min(rest, largest), 0, -1):
            for tail in rec(rest - part, part):
                yield [part] + tail

    for parts in rec(n, n):
        yield np.bincount(parts, minlength=n + 1)[1:]


def esf_block_count_pmf(n: int, theta: float) -> np.ndarray:
    """Law of the number of blocks sum(a_i) under the ESF, by enumeration (small n)."""
    out = np.zeros(n + 1)
    for a in partitions(n):
        out[int(a.sum())] += math.exp(esf_log_pmf(a, theta))
    return out
