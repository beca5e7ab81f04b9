import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from certpri.metrics import (MetricWarning, deepgini_order, deepgini_score, genrew, method_ranks, metric_report,
                             rauc_classification, rauc_regression, robr, welch_t_test)

# a classic unequal-variance example; the published figures are t = -2.46, dof = 24.99, p = 0.021
WELCH_A = [27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4]
WELCH_B = [27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5, 24.4]


def _enumerated_ratio(flags_in_rank_order):
    """Count, for every prefix, the bugs inside it; compare with bugs packed first."""
    n = len(flags_in_rank_order)
    area = sum(sum(flags_in_rank_order[:k]) for k in range(1, n + 1))
    m = sum(flags_in_rank_order)
    ideal_flags = [1] * m + [0] * (n - m)
    ideal = sum(sum(ideal_flags[:k]) for k in range(1, n + 1))
    return Fraction(area, ideal)


@pytest.mark.parametrize("n", range(1, 8))
def test_rauc_matches_enumeration(n):
    order = np.arange(n)
    for flags in itertools.product([0, 1], repeat=n):
        if not any(flags):
            assert rauc_classification(order, flags) == 1.0
            continue
        assert rauc_classification(order, flags) == float(_enumerated_ratio(list(flags)))


def test_rauc_classification_fixtures():
    assert rauc_classification([0, 1, 2, 3], [1, 1, 0, 0]) == 1.0
    assert rauc_classification([0, 1, 2, 3], [1, 0, 1, 0]) == pytest.approx(6 / 7, abs=1e-15)
    # the order is applied to the flags
    assert rauc_classification([2, 0, 3, 1], [0, 0, 1, 1]) == pytest.approx(6 / 7, abs=1e-15)


def test_rauc_cutoff_and_prefix_reading():
    flags = [0, 1, 0, 1, 1]
    order = np.arange(5)
    # two ranks, one bug found, N' capped at 2
    assert rauc_classification(order, flags, cutoff=2) == pytest.approx(1 / 3)
    assert rauc_classification(order, flags, cutoff=2, prefix_bugs=True) == pytest.approx(1 / 2)
    with pytest.warns(MetricWarning):
        assert rauc_classification(order, flags, cutoff=50) == rauc_classification(order, flags)


def test_rauc_rejects_bad_orders():
    with pytest.raises(ValueError):
        rauc_classification([0, 0, 1], [1, 0, 0])
    with pytest.raises(ValueError):
        rauc_classification([], [])
    with pytest.raises(ValueError):
        rauc_classification([0, 1], [1, 0, 0])


def test_rauc_regression_fixtures():
    mse = [3.0, 1.0, 2.0]
    assert rauc_regression([0, 1, 2], mse) == pytest.approx(13 / 14, abs=1e-12)
    assert rauc_regression([0, 2, 1], mse) == 1.0
    assert rauc_regression([1, 2, 0], mse) == pytest.approx((1 + 3 + 6) / 14, abs=1e-12)
    assert rauc_regression([1, 2, 0], mse, cutoff=2) == pytest.approx((1 + 3) / (3 + 5), abs=1e-12)
    with pytest.warns(MetricWarning):
        assert rauc_regression([0, 1], [0.0, 0.0]) == 1.0


def test_random_orders_hit_analytic_expectation():
    # E[area] = N'(N+1)/2 for a uniformly random order
    n, m = 40, 20
    flags = np.zeros(n, bool)
    flags[:m] = True
    ideal = n * m + (m - m * m) / 2
    expected = m * (n + 1) / 2 / ideal
    rng = np.random.default_rng(0)
    vals = [rauc_classification(rng.permutation(n), flags) for _ in range(20)]
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - expected) < 3 * se


def test_robr():
    assert robr(0.8, 0.8) == 100.0
    assert robr(0.85, 0.9) == pytest.approx(94.444444, abs=1e-5)
    with pytest.raises(ValueError):
        robr(0.5, 0.0)


def test_genrew_fixtures():
    assert genrew([[1, 1], [1, 1]], 6) == 1.0
    assert genrew([[6, 6]], 6) == pytest.approx(1 / 6)
    assert genrew([[1, 2], [2, 1]], 6) == pytest.approx(0.91667, abs=1e-5)
    with pytest.raises(ValueError):
        genrew([[0, 1]], 3)
    with pytest.raises(ValueError):
        genrew([[1.5]], 3)


@given(st.lists(st.integers(1, 5), min_size=1, max_size=10), st.integers(0, 9))
def test_genrew_is_antitone_in_ranks(ranks, pos):
    pos = pos % len(ranks)
    worse = list(ranks)
    if worse[pos] < 5:
        worse[pos] += 1
        assert genrew(worse, 5) < genrew(ranks, 5)


def test_method_ranks():
    assert list(method_ranks([0.9, 0.7, 0.9, 0.1])) == [1, 3, 1, 4]


def test_welch_matches_hand_formula_and_published_values():
    a, b = np.array(WELCH_A), np.array(WELCH_B)
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    t_hand = (a.mean() - b.mean()) / math.sqrt(va + vb)
    dof_hand = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    res = welch_t_test(a, b)
    assert res.t == pytest.approx(t_hand, abs=1e-12)
    assert res.dof == pytest.approx(dof_hand, abs=1e-12)
    assert res.t == pytest.approx(-2.46, abs=5e-3)
    assert res.dof == pytest.approx(24.99, abs=5e-3)
    assert res.p == pytest.approx(0.021, abs=5e-4)
    ref = stats.ttest_ind(a, b, equal_var=False)
    assert res.p == pytest.approx(ref.pvalue, rel=1e-10)


def test_welch_edge_cases():
    r = welch_t_test([1.0, 1.0, 1.0], [1.0, 1.0])
    assert (r.t, r.p) == (0.0, 1.0)
    with pytest.raises(ValueError):
        welch_t_test([1.0, 1.0], [2.0, 2.0])
    with pytest.raises(ValueError):
        welch_t_test([1.0], [1.0, 2.0])


def test_deepgini_fixtures():
    assert deepgini_score([1.0, 0.0, 0.0]) == 0.0
    assert deepgini_score([0.1] * 10) == pytest.approx(0.9, abs=1e-12)
    assert deepgini_score([0.5, 0.3, 0.2]) == pytest.approx(0.62, abs=1e-12)
    assert deepgini_score([0.7, 0.2, 0.1]) == pytest.approx(0.46, abs=1e-12)
    with pytest.raises(ValueError):
        deepgini_score([0.5, 0.6])


def test_deepgini_permutation_invariance_and_order():
    rng = np.random.default_rng(1)
    P = rng.dirichlet(np.ones(4), size=12)
    assert np.allclose(deepgini_score(P), deepgini_score(P[:, ::-1]))
    perm = rng.permutation(12)
    order = deepgini_order(P)
    scores = deepgini_score(P)
    assert np.all(np.diff(scores[order]) <= 0)
    assert np.allclose(np.sort(deepgini_score(P[perm])), np.sort(scores))


def test_metric_report_keys_and_clamping():
    flags = np.array([1, 0, 1, 0, 0, 1])
    with pytest.warns(MetricWarning):
        rep = metric_report(np.arange(6), bug_flags=flags)
    assert set(rep) == {"rauc_100", "rauc_200", "rauc_300", "rauc_500", "rauc_all"}
    assert rep["rauc_100"] == rep["rauc_all"]
    with pytest.raises(ValueError):
        metric_report(np.arange(6))
