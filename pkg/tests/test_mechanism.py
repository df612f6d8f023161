import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalsim.mechanism import (LambdaMeasure, MeasureKind, RateTable, fit_rate_exponent,
                               load_density_file, log_merger_rate, merger_rate,
                               merger_rate_quad, parse_mechanism, sample_merger_size,
                               total_event_rate, total_event_rate_quad)

KINGMAN = LambdaMeasure.kingman()
BS = LambdaMeasure.uniform()
BETA15 = LambdaMeasure.beta(1.5)


# frozen values
def test_kingman_rates():
    assert merger_rate(KINGMAN, 7, 2) == 1.0
    assert merger_rate(KINGMAN, 7, 3) == 0.0
    assert total_event_rate(KINGMAN, 4) == 6.0


def test_uniform_pair_rate():
    assert merger_rate(BS, 3, 2) == pytest.approx(0.5, rel=1e-14)


def test_beta_small_values():
    assert merger_rate(BETA15, 3, 2) == pytest.approx(0.75, rel=1e-12)
    assert merger_rate(BETA15, 3, 3) == pytest.approx(0.25, rel=1e-12)
    assert total_event_rate(BETA15, 3) == pytest.approx(2.5, rel=1e-12)


@pytest.mark.parametrize("m", [KINGMAN, BS, BETA15, LambdaMeasure.beta(1.2)])
def test_two_blocks_total_is_pair_rate(m):
    assert total_event_rate(m, 2) == pytest.approx(merger_rate(m, 2, 2), rel=1e-13)


def test_closed_form_against_quadrature():
    for a in (1.2, 1.5, 1.8):
        lam = LambdaMeasure.beta(a)
        for b in (2, 5, 17, 60):
            for k in (2, 3, b // 2 + 1, b):
                if k > b:
                    continue
                assert merger_rate(lam, b, k) == pytest.approx(merger_rate_quad(lam, b, k),
                                                               rel=1e-9)


@pytest.mark.parametrize("m", [KINGMAN, BS, BETA15, LambdaMeasure.beta(1.8)])
def test_total_rate_two_routes(m):
    # telescoping table against the direct integral of (1 - (1-x)^b - b x (1-x)^(b-1)) / x^2
    for b in (2, 3, 10, 50, 200):
        assert total_event_rate(m, b) == pytest.approx(total_event_rate_quad(m, b), rel=1e-8)


@pytest.mark.parametrize("m", [KINGMAN, BS, BETA15])
def test_total_rate_is_binomial_sum(m):
    for b in (2, 3, 10, 100, 200):
        direct = math.fsum(math.comb(b, k) * merger_rate(m, b, k) for k in range(2, b + 1))
        assert total_event_rate(m, b) == pytest.approx(direct, rel=1e-8)


def test_log_rate_large_b_finite():
    v = log_merger_rate(BETA15, 10 ** 6, 5 * 10 ** 5)
    assert np.isfinite(v) and v < 0


def test_atom_at_one_rejected():
    with pytest.raises(ValueError):
        LambdaMeasure(MeasureKind.BETA, alpha=1.5, atom1_mass=0.1)


def test_flags():
    assert BETA15.comes_down_from_infinity
    assert not BS.comes_down_from_infinity
    assert BS.is_bolthausen_sznitman
    assert KINGMAN.comes_down_from_infinity


def test_total_mass_density():
    m = LambdaMeasure.from_density(lambda x: 6 * x * (1 - x), atom0=0.5)
    assert m.total_mass == pytest.approx(1.5, rel=1e-10)


def test_density_matches_beta():
    a = 1.5
    c = 1.0 / math.gamma(2 - a) / math.gamma(a)  # 1 / B(2-a, a), Gamma(2) = 1
    dens = LambdaMeasure.from_density(lambda x: c * np.ones_like(np.asarray(x, float)),
                                      singular_exponents=(1 - a, a - 1))
    for b, k in ((3, 2), (10, 4), (40, 40)):
        assert merger_rate(dens, b, k) == pytest.approx(merger_rate(BETA15, b, k), rel=1e-8)


# rate table invariants
@pytest.mark.parametrize("m", [KINGMAN, BS, BETA15, LambdaMeasure.beta(1.2)])
def test_rate_table(m):
    t = RateTable.build(m, 120)
    assert t.recursion_defect() < 1e-9
    for b in range(2, 121):
        row = np.exp(t.log_rates[b])
        assert np.all(np.isfinite(row)) and np.all(row >= 0)
    lam = np.array([total_event_rate(m, b) for b in range(2, 121)])
    assert np.all(np.diff(lam) >= 0)


@pytest.mark.parametrize("m", [KINGMAN, BETA15, LambdaMeasure.beta(1.2)])
def test_lower_linearity(m):
    lam2 = total_event_rate(m, 2)
    for b in range(2, 201):
        assert total_event_rate(m, b) >= lam2 / 2 * b * (1 - 1e-12)


@given(a=st.floats(1.01, 1.99), b=st.integers(3, 400), frac=st.floats(0, 1))
@settings(max_examples=80, deadline=None)
def test_recursion_property(a, b, frac):
    lam = LambdaMeasure.beta(a)
    k = 2 + int(frac * (b - 3))
    lhs = merger_rate(lam, b, k)
    rhs = merger_rate(lam, b + 1, k) + merger_rate(lam, b + 1, k + 1)
    assert rhs == pytest.approx(lhs, rel=1e-9)


@given(a=st.floats(1.01, 1.99), b=st.integers(2, 300))
@settings(max_examples=60, deadline=None)
def test_telescoping_property(a, b):
    lam = LambdaMeasure.beta(a)
    d = total_event_rate(lam, b + 1) - total_event_rate(lam, b)
    assert d == pytest.approx(b * merger_rate(lam, b + 1, 2), rel=1e-8)


# sampling
def test_sampling_trivial(rng):
    assert all(sample_merger_size(KINGMAN, 100, rng) == 2 for _ in range(200))
    assert all(sample_merger_size(BETA15, 2, rng) == 2 for _ in range(200))


def test_beta_three_blocks_law(rng):
    n = 200_000
    ks = np.array([sample_merger_size(BETA15, 3, rng) for _ in range(n)])
    p = np.mean(ks == 3)
    assert abs(p - 0.1) < 3 * math.sqrt(0.09 / n) + 1e-9


def test_sampled_law_matches_rates(rng):
    b = 12
    w = np.array([math.comb(b, k) * merger_rate(BETA15, b, k) for k in range(2, b + 1)])
    w /= w.sum()
    n = 100_000
    ks = np.array([sample_merger_size(BETA15, b, rng) for _ in range(n)])
    emp = np.bincount(ks, minlength=b + 1)[2:] / n
    assert np.max(np.abs(emp - w)) < 4 * math.sqrt(w.max() / n)


def test_density_sampling_beyond_cap(rng):
    dens = LambdaMeasure.from_density(lambda x: np.ones_like(np.asarray(x, float)),
                                      table_bmax=20)
    ks = [sample_merger_size(dens, 60, rng) for _ in range(300)]
    assert min(ks) >= 2 and max(ks) <= 60


def test_merger_size_tail(rng):
    from coalsim import _kernels

    mech = BETA15.kernel(10 ** 5)
    ks = np.array([_kernels.sample_k(mech, 10 ** 5, rng) for _ in range(200_000)])
    kk = np.arange(2, 51)
    tail = np.array([np.mean(ks > k) for k in kk])
    slope = np.polyfit(np.log(kk), np.log(tail), 1)[0]
    assert slope <= -1.5 + 0.2


# exponent fits
def test_fit_rate_exponents():
    assert fit_rate_exponent(KINGMAN, [10 ** 2, 10 ** 3, 10 ** 4])[1] == pytest.approx(2, abs=0.01)
    assert fit_rate_exponent(BETA15, [10 ** 2, 10 ** 3, 10 ** 4, 10 ** 5])[1] == \
        pytest.approx(1.5, abs=0.05)
    assert fit_rate_exponent(BS, [10 ** 2, 10 ** 3, 10 ** 4, 10 ** 5])[1] == \
        pytest.approx(1.0, abs=0.05)


def test_fit_rate_exponent_needs_range():
    with pytest.raises(ValueError):
        fit_rate_exponent(KINGMAN, [10, 20])


# parsing
def test_parse_mechanism(tmp_path):
    assert parse_mechanism("kingman").kind is MeasureKind.KINGMAN
    assert parse_mechanism("beta(alpha=1.5)").alpha == 1.5
    assert parse_mechanism("uniform").is_bolthausen_sznitman
    xs = np.linspace(0.01, 0.99, 50)
    np.savetxt(tmp_path / "g.txt", np.column_stack([xs, np.ones_like(xs)]))
    m = parse_mechanism("density(file=g.txt)", base_dir=tmp_path)
    assert m.kind is MeasureKind.DENSITY
    assert merger_rate(m, 3, 2) == pytest.approx(0.5, rel=2e-2)
    with pytest.raises(ValueError):
        parse_mechanism("beta()")
    with pytest.raises(ValueError):
        parse_mechanism("gamma(k=1)")


def test_load_density_file_rejects_bad_grid(tmp_path):
    np.savetxt(tmp_path / "bad.txt", np.array([[0.5, 1.0], [0.2, 1.0]]))
    with pytest.raises(ValueError):
        load_density_file(tmp_path / "bad.txt")
