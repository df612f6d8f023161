import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalsim.genealogy import (MutationModel, block_count_pmf, esf_block_count_pmf, esf_log_pmf,
                               expected_block_count, partitions, sample_block_count_crp)


def test_theta_from_migration():
    assert MutationModel.from_migration_rate(1.0).theta == 2.0


def test_expected_values():
    assert expected_block_count(1, 1.0) == pytest.approx(0.5)
    assert expected_block_count(5, 2.0) == pytest.approx(2 / 3 + 2 / 4 + 2 / 5 + 2 / 6 + 2 / 7)
    assert expected_block_count(5, 2.0) == pytest.approx(2.1857, abs=1e-4)
    # theta (ln n - psi(theta + 1)) + o(1); psi(3) = 3/2 - euler gamma
    assert expected_block_count(10 ** 8, 2.0) == pytest.approx(
        2.0 * (math.log(10 ** 8) - (1.5 - np.euler_gamma)), abs=1e-3)


def test_expected_digamma_branch_continuous():
    direct = sum(2.0 / (i + 2.0) for i in range(1, 1002))
    assert expected_block_count(1001, 2.0) == pytest.approx(direct, rel=1e-12)


def test_esf_small_cases():
    assert esf_log_pmf([1], 0.7) == pytest.approx(0.0, abs=1e-14)
    assert esf_log_pmf([2, 0], 1.0) == pytest.approx(-math.log(2))
    total = sum(math.exp(esf_log_pmf(a, 2.0)) for a in ([3, 0, 0], [1, 1, 0], [0, 0, 1]))
    assert total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", range(1, 9))
@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_esf_normalises(n, theta):
    s = math.fsum(math.exp(esf_log_pmf(a, theta)) for a in partitions(n))
    assert s == pytest.approx(1.0, abs=1e-10)


def test_partition_count():
    assert sum(1 for _ in partitions(8)) == 22


def test_crp_means(rng):
    z1 = np.array([sample_block_count_crp(1, 2.0, rng) for _ in range(100_000)])
    assert abs(z1.mean() - 2 / 3) < 3 * z1.std() / math.sqrt(len(z1))
    z5 = np.array([sample_block_count_crp(5, 2.0, rng) for _ in range(100_000)])
    assert abs(z5.mean() - expected_block_count(5, 2.0)) < 3 * z5.std() / math.sqrt(len(z5))


@pytest.mark.parametrize("n", [1, 3, 8])
def test_sampler_matches_exact_pmf(rng, n):
    pmf = block_count_pmf(n, 2.0)
    z = np.array([sample_block_count_crp(n, 2.0, rng) for _ in range(200_000)])
    emp = np.bincount(z, minlength=n + 1) / len(z)
    assert 0.5 * np.abs(emp - pmf).sum() < 0.01


@pytest.mark.parametrize("n", range(1, 9))
def test_shifted_esf_marginal(n):
    # Z_n counts i = 1..n with P = theta / (i + theta); this is K_{n+1} - 1 for the ESF count K
    for theta in (0.5, 1.0, 2.0):
        pmf = block_count_pmf(n, theta)
        esf = esf_block_count_pmf(n + 1, theta)
        assert np.allclose(pmf, esf[1:], atol=1e-12)


@given(n=st.integers(1, 400), theta=st.floats(0.1, 10))
@settings(max_examples=60, deadline=None)
def test_pmf_properties(n, theta):
    pmf = block_count_pmf(n, theta)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.all(pmf >= 0)
    mean = float(np.dot(np.arange(len(pmf)), pmf))
    assert mean == pytest.approx(expected_block_count(n, theta), rel=1e-9)


def test_large_n_concentration_exact():
    # exact law at n = 10^6: the mean sits near theta ln n but the fluctuations are of order
    # sqrt(ln n), so fixed-width bands around theta hold only about half the mass
    n = 10 ** 6
    pmf = block_count_pmf(n, 2.0, kmax=200)
    k = np.arange(len(pmf))
    x = k / math.log(n)
    assert pmf[(x > 1.8) & (x < 2.2)].sum() == pytest.approx(0.423718, abs=1e-5)
    assert pmf[(x > 1.7) & (x < 2.3)].sum() == pytest.approx(0.545574, abs=1e-5)


def test_tail_bound(rng):
    z = np.array([sample_block_count_crp(10 ** 4, 2.0, rng) for _ in range(20_000)])
    assert np.mean(z > 40) < 1e-3


def test_bad_args(rng):
    with pytest.raises(ValueError):
        sample_block_count_crp(0, 1.0, rng)
    with pytest.raises(ValueError):
        expected_block_count(3, -1.0)
    with pytest.raises(ValueError):
        esf_log_pmf([0, 0], 1.0)
