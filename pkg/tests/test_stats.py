import math

import numpy as np
import pytest
import scipy.stats

from crossing.stats import (
    Aggregate,
    TestResult,
    aggregate,
    mann_whitney_u,
    normal_sf,
    t_sf,
    welch_t,
)
from crossing.verification import mann_whitney_enumeration_oracle


def test_aggregate_mean_and_standard_error():
    agg = aggregate([5.0, 7.0])
    assert agg.n == 2
    assert agg.mean == 6.0
    assert agg.std_error == pytest.approx(np.std([5.0, 7.0], ddof=1) / math.sqrt(2))


def test_aggregate_single_value_has_zero_se():
    agg = aggregate([3.0])
    assert agg == Aggregate(n=1, mean=3.0, std_error=0.0, values=(3.0,))


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError):
        aggregate([])


def test_mann_whitney_separated_samples():
    result = mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert result.statistic == 0.0  # wins of the first sample
    assert result.p_value == pytest.approx(0.1, abs=1e-12)
    flipped = mann_whitney_u([4, 5, 6], [1, 2, 3])
    assert flipped.statistic == 9.0
    assert flipped.p_value == pytest.approx(0.1, abs=1e-12)


def test_mann_whitney_identical_samples_p_one():
    result = mann_whitney_u([2.0, 2.0, 2.0], [2.0, 2.0, 2.0])
    assert result.p_value == 1.0


def test_mann_whitney_shift_invariance():
    rng = np.random.default_rng(0)
    a = list(rng.normal(size=6))
    b = list(rng.normal(size=5))
    base = mann_whitney_u(a, b)
    shifted = mann_whitney_u([v + 100.0 for v in a], [v + 100.0 for v in b])
    assert shifted.statistic == base.statistic
    assert shifted.p_value == base.p_value


def test_mann_whitney_rejects_empty_sample():
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])


def test_mann_whitney_exact_matches_enumeration_with_ties():
    rng = np.random.default_rng(8)
    for n, m in [(3, 4), (5, 5), (6, 3), (4, 7)]:
        a = [float(v) for v in rng.integers(0, 4, size=n)]
        b = [float(v) for v in rng.integers(0, 4, size=m)]
        got = mann_whitney_u(a, b)
        u_oracle, p_oracle = mann_whitney_enumeration_oracle(a, b)
        assert got.statistic == pytest.approx(u_oracle, abs=1e-12)
        assert got.p_value == pytest.approx(p_oracle, abs=1e-12)


def test_mann_whitney_exact_and_approx_agree_near_cutoff():
    # n = m = 10 sits well under the exact cutoff; compare the exact p to the
    # approximation by calling through a widened sample (force approx path).
    rng = np.random.default_rng(17)
    for _ in range(10):
        a = list(rng.normal(size=10))
        b = list(rng.normal(0.5, 1.0, size=10))
        exact = mann_whitney_u(a, b)
        from crossing import stats as stats_module

        original = stats_module.EXACT_CUTOFF
        try:
            stats_module.EXACT_CUTOFF = 0
            approx = mann_whitney_u(a, b)
        finally:
            stats_module.EXACT_CUTOFF = original
        assert approx.p_value == pytest.approx(exact.p_value, abs=0.02)


def test_mann_whitney_large_samples_use_normal_approximation():
    rng = np.random.default_rng(23)
    a = list(rng.normal(size=30))
    b = list(rng.normal(0.8, 1.0, size=30))
    got = mann_whitney_u(a, b)
    ref = scipy.stats.mannwhitneyu(a, b, alternative="two-sided")
    assert got.statistic == pytest.approx(ref.statistic)
    assert got.p_value == pytest.approx(ref.pvalue, abs=5e-3)


def test_welch_identical_samples():
    result = welch_t([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert result.statistic == 0.0
    assert result.p_value == 1.0


def test_welch_shifted_samples_significant():
    result = welch_t([1, 2, 3, 4], [11, 12, 13, 14])
    assert result.p_value < 0.01
    ref = scipy.stats.ttest_ind([1, 2, 3, 4], [11, 12, 13, 14], equal_var=False)
    assert result.statistic == pytest.approx(ref.statistic, abs=1e-9)
    assert result.p_value == pytest.approx(ref.pvalue, abs=1e-9)


def test_welch_swap_negates_t_preserves_p():
    a, b = [1.0, 3.0, 5.0, 9.0], [2.0, 2.5, 4.0]
    fwd = welch_t(a, b)
    rev = welch_t(b, a)
    assert rev.statistic == pytest.approx(-fwd.statistic)
    assert rev.p_value == pytest.approx(fwd.p_value)


def test_welch_matches_scipy_on_random_samples():
    rng = np.random.default_rng(5)
    for _ in range(25):
        a = list(rng.normal(size=int(rng.integers(2, 30))))
        b = list(rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2.0), size=int(rng.integers(2, 30))))
        got = welch_t(a, b)
        ref = scipy.stats.ttest_ind(a, b, equal_var=False)
        assert got.statistic == pytest.approx(ref.statistic, rel=1e-10)
        assert got.p_value == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-12)


def test_welch_rejects_undersized_samples():
    with pytest.raises(ValueError):
        welch_t([1.0], [2.0, 3.0])


def test_welch_degenerate_constant_samples():
    assert welch_t([2.0, 2.0], [2.0, 2.0]).p_value == 1.0
    assert welch_t([2.0, 2.0], [3.0, 3.0]).p_value == 0.0


def test_t_sf_accuracy_against_scipy():
    for t in (0.0, 0.3, 1.0, 2.5, 7.0, 30.0):
        for df in (1.0, 2.5, 10.0, 100.0):
            assert t_sf(t, df) == pytest.approx(scipy.stats.t.sf(t, df), abs=1e-10)
            assert t_sf(-t, df) == pytest.approx(scipy.stats.t.sf(-t, df), abs=1e-10)


def test_normal_sf_accuracy():
    for x in (0.0, 0.5, 1.96, 4.0):
        assert normal_sf(x) == pytest.approx(scipy.stats.norm.sf(x), abs=1e-14)


def test_test_result_validates_p_value():
    with pytest.raises(ValueError):
        TestResult(statistic=0.0, p_value=1.5, test_kind="welch_t")
