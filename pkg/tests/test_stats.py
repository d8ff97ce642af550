"""Signed-rank and Holm-Bonferroni tests against brute-force oracles."""

import itertools

import numpy as np
import pytest

from polyvox.stats import (HolmResult, _average_ranks, holm_bonferroni,
                           wilcoxon_signed_rank)


def brute_force_two_sided_p(x, y):
    """Literal 2^n sign enumeration on the observed (tied, average) ranks."""
    d = np.asarray(x, float) - np.asarray(y, float)
    d = d[d != 0]
    n = d.size
    ranks = _average_ranks(np.abs(d))
    observed = min(ranks[d > 0].sum(), ranks[d < 0].sum())
    count = 0
    for signs in itertools.product((1.0, -1.0), repeat=n):
        s = np.array(signs)
        stat = min(ranks[s > 0].sum(), ranks[s < 0].sum())
        if stat <= observed + 1e-12:
            count += 1
    return count / 2.0 ** n


class TestAverageRanks:
    def test_plain(self):
        assert _average_ranks(np.array([3.0, 1.0, 2.0])).tolist() == [3, 1, 2]

    def test_ties_share_average(self):
        assert _average_ranks(np.array([2.0, 1.0, 2.0, 2.0])).tolist() == [3, 1, 3, 3]


class TestWilcoxon:
    def test_identical_samples_degenerate(self):
        res = wilcoxon_signed_rank([5, 6, 7], [5, 6, 7])
        assert res.degenerate and res.p_value == 1.0 and res.n == 0

    def test_one_through_five(self):
        res = wilcoxon_signed_rank([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
        assert res.statistic == 0.0            # negative-rank sum
        assert res.rank_sum_positive == 15.0
        assert res.p_value == pytest.approx(0.0625, abs=1e-12)
        assert res.exact

    def test_zero_differences_dropped(self):
        res = wilcoxon_signed_rank([1, 2, 3, 7], [1, 2, 3, 4])
        assert res.n == 1

    def test_matches_brute_force_with_ties(self, rng):
        for _ in range(60):
            n = int(rng.integers(1, 13))
            x = rng.integers(0, 6, size=n).astype(float)
            y = rng.integers(0, 6, size=n).astype(float)
            if np.all(x == y):
                continue
            mine = wilcoxon_signed_rank(x, y).p_value
            oracle = brute_force_two_sided_p(x, y)
            assert mine == pytest.approx(oracle, abs=1e-12)

    def test_symmetry_in_arguments(self, rng):
        x = rng.normal(size=10)
        y = rng.normal(size=10)
        assert (wilcoxon_signed_rank(x, y).p_value
                == pytest.approx(wilcoxon_signed_rank(y, x).p_value, abs=1e-12))

    def test_approximation_close_to_exact_at_n30(self, rng):
        for _ in range(40):
            x = rng.normal(size=30)
            y = rng.normal(size=30)
            exact = wilcoxon_signed_rank(x, y, exact_limit=40).p_value
            approx = wilcoxon_signed_rank(x, y, exact_limit=5).p_value
            assert abs(exact - approx) < 0.01

    def test_large_n_uses_approximation(self, rng):
        res = wilcoxon_signed_rank(rng.normal(size=40), rng.normal(size=40))
        assert not res.exact
        assert 0.0 <= res.p_value <= 1.0

    def test_input_validation(self):
        with pytest.raises(ValueError, match="equal-length"):
            wilcoxon_signed_rank([1, 2], [1, 2, 3])
        with pytest.raises(ValueError, match="at least one"):
            wilcoxon_signed_rank([], [])

    def test_p_values_bounded(self, rng):
        for _ in range(80):
            n = int(rng.integers(1, 26))
            x = rng.integers(0, 100, size=n).astype(float)
            y = rng.integers(0, 100, size=n).astype(float)
            p = wilcoxon_signed_rank(x, y).p_value
            assert 0.0 <= p <= 1.0


class TestHolm:
    def test_single_hypothesis_equals_raw(self):
        res = holm_bonferroni([0.03], alpha=0.05)
        assert res == [HolmResult(p_value=0.03, p_adjusted=0.03, reject=True)]
        res = holm_bonferroni([0.06], alpha=0.05)
        assert not res[0].reject

    def test_reference_fixture(self):
        res = holm_bonferroni([0.001, 0.007, 0.02, 0.2], alpha=0.05)
        assert [r.reject for r in res] == [True, True, True, False]
        assert res[0].p_adjusted == pytest.approx(0.004)
        assert res[1].p_adjusted == pytest.approx(0.021)
        assert res[2].p_adjusted == pytest.approx(0.04)
        assert res[3].p_adjusted == pytest.approx(0.2)

    def test_all_ones(self):
        res = holm_bonferroni([1.0, 1.0, 1.0], alpha=0.05)
        assert all(not r.reject for r in res)
        assert all(r.p_adjusted == 1.0 for r in res)

    def test_chain_stops_at_first_acceptance(self):
        # second-smallest p fails its threshold, so the third must not be
        # rejected even though it would pass its own
        res = holm_bonferroni([0.001, 0.04, 0.045], alpha=0.05)
        assert [r.reject for r in res] == [True, False, False]

    def test_adjusted_monotone_in_sorted_order(self, rng):
        for _ in range(50):
            p = rng.uniform(size=int(rng.integers(1, 10))).tolist()
            res = holm_bonferroni(p, alpha=0.05)
            taken = sorted((r.p_value, r.p_adjusted) for r in res)
            adj = [a for _, a in taken]
            assert all(b >= a for a, b in zip(adj, adj[1:]))

    def test_lowering_a_p_value_never_unrejects_others(self, rng):
        for _ in range(60):
            m = int(rng.integers(2, 8))
            p = rng.uniform(size=m).tolist()
            base = holm_bonferroni(p, alpha=0.05)
            k = int(rng.integers(0, m))
            lowered = list(p)
            lowered[k] = lowered[k] * rng.uniform(0, 1)
            after = holm_bonferroni(lowered, alpha=0.05)
            for i in range(m):
                if i != k and base[i].reject:
                    assert after[i].reject

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            holm_bonferroni([0.5, 1.5])

    def test_empty_family(self):
        assert holm_bonferroni([]) == []
