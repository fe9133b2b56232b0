import numpy as np
import pytest
from scipy import stats

from mhmmx.copula import CopulaParam, copula_cdf
from mhmmx.emission import (
    EmissionParams, emission_log_table, emission_sample, joint_log_pmf_table, joint_pmf,
    joint_pmf_table, trunc_poisson_cdf, trunc_poisson_pmf,
)


def test_trunc_poisson_hand_values():
    assert np.allclose(trunc_poisson_pmf(1.0, 2), [0.4, 0.4, 0.2], atol=1e-15)
    assert np.array_equal(trunc_poisson_pmf(4.2, 0), [1.0])
    assert abs(trunc_poisson_pmf(3.0, 10).sum() - 1) < 1e-12
    assert trunc_poisson_cdf(3.0, 10)[-1] == 1.0


def test_trunc_poisson_matches_scipy():
    for lam in [0.1, 1.0, 3.3, 9.0, 40.0]:
        ref = stats.poisson.pmf(np.arange(11), lam)
        assert np.allclose(trunc_poisson_pmf(lam, 10), ref / ref.sum(), rtol=1e-12, atol=1e-300)


def test_trunc_poisson_invalid_rate():
    with pytest.raises(ValueError):
        trunc_poisson_pmf(0.0, 5)


def _random_emission(rng, S=3):
    return EmissionParams(rng.uniform(0.05, 12, S), rng.uniform(0.05, 9, S),
                          CopulaParam(rng.uniform(1, 8)), 10, 7)


def test_normalization_and_margins_random(rng):
    for _ in range(100):
        e = _random_emission(rng)
        table = joint_pmf_table(e, clamp=False)
        assert table.min() >= -1e-14
        for s in range(e.S):
            assert abs(table[s].sum() - 1) < 1e-10
            assert np.max(np.abs(table[s].sum(axis=1) - trunc_poisson_pmf(e.lambda_p[s], 10))) < 1e-10
            assert np.max(np.abs(table[s].sum(axis=0) - trunc_poisson_pmf(e.lambda_d[s], 7))) < 1e-10


def test_table_matches_inclusion_exclusion(rng):
    e = _random_emission(rng, S=2)
    table = joint_pmf_table(e)
    for s in range(2):
        for yp in range(11):
            for yd in range(8):
                assert table[s, yp, yd] == pytest.approx(joint_pmf(e, s, yp, yd), abs=1e-12)


def test_corner_equals_copula_cdf():
    e = EmissionParams([2.0], [1.5], CopulaParam(2.5), 10, 7)
    FP, FD = trunc_poisson_cdf(2.0, 10), trunc_poisson_cdf(1.5, 7)
    expected = copula_cdf(e.copula, FP[0], FD[0])
    assert joint_pmf(e, 0, 0, 0) == expected
    assert joint_log_pmf_table(e)[0, 0, 0] == pytest.approx(np.log(expected), rel=1e-12)


def test_independence_factorizes(rng):
    e = EmissionParams(rng.uniform(0.5, 5, 3), rng.uniform(0.5, 5, 3), CopulaParam(1.0), 10, 7)
    table = joint_pmf_table(e)
    for s in range(3):
        outer = np.outer(trunc_poisson_pmf(e.lambda_p[s], 10), trunc_poisson_pmf(e.lambda_d[s], 7))
        assert np.allclose(table[s], outer, atol=1e-15)


def test_lower_tail_concentration():
    e1 = EmissionParams([2.0], [2.0], CopulaParam(1.0), 10, 7)
    e3 = EmissionParams([2.0], [2.0], CopulaParam(3.0), 10, 7)
    assert joint_pmf(e3, 0, 0, 0) > joint_pmf(e1, 0, 0, 0)


def test_log_table_floor_and_missing_slots():
    e = EmissionParams([0.01], [0.01], CopulaParam(1.0), 10, 7)
    lt = emission_log_table(e)
    assert lt.shape == (1, 12, 9)
    assert lt.min() >= np.log(1e-300)
    assert lt[0, 11, 8] == 0.0
    assert np.allclose(np.exp(lt[0, :11, 8]), trunc_poisson_pmf(0.01, 10))
    assert np.allclose(np.exp(lt[0, 11, :8]), trunc_poisson_pmf(0.01, 7))


def test_index_errors():
    e = EmissionParams([1.0], [1.0], CopulaParam(1.0), 3, 3)
    with pytest.raises(IndexError):
        joint_pmf(e, 0, 4, 0)
    with pytest.raises(IndexError):
        joint_pmf(e, 1, 0, 0)


def test_sample_goodness_of_fit():
    e = EmissionParams([0.8], [1.2], CopulaParam(1.0), 4, 4)
    yp, yd = emission_sample(e, 0, np.random.default_rng(3), 100_000)
    counts = np.zeros((5, 5))
    np.add.at(counts, (yp, yd), 1)
    expected = joint_pmf_table(e)[0] * 100_000
    keep = expected > 5
    chi2 = np.sum((counts[keep] - expected[keep]) ** 2 / expected[keep])
    p = stats.chi2.sf(chi2, keep.sum() - 1)
    assert p > 0.01


def test_sample_dependent_goodness_of_fit():
    e = EmissionParams([2.0], [1.5], CopulaParam(2.5), 6, 5)
    yp, yd = emission_sample(e, 0, np.random.default_rng(4), 100_000)
    counts = np.zeros((7, 6))
    np.add.at(counts, (yp, yd), 1)
    expected = joint_pmf_table(e)[0] * 100_000
    keep = expected > 5
    chi2 = np.sum((counts[keep] - expected[keep]) ** 2 / expected[keep])
    assert stats.chi2.sf(chi2, keep.sum() - 1) > 0.01


def test_sample_degenerate_and_deterministic():
    e = EmissionParams([3.0], [2.0], CopulaParam(2.0), 0, 7)
    yp, yd = emission_sample(e, 0, np.random.default_rng(9), 500)
    assert np.all(yp == 0)
    yp2, yd2 = emission_sample(e, 0, np.random.default_rng(9), 500)
    assert np.array_equal(yd, yd2)
