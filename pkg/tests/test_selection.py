import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renyi_ada.entropy import UncertaintyScore
from renyi_ada.model import EvidentialModel, init_model
from renyi_ada.oracles import brute_diversity_filter, brute_select_candidates
from renyi_ada.selection import (diversity_filter, random_selection, score_alphas,
                                 score_unlabeled, select_candidates)


class TestCandidates:
    def test_worked_example(self):
        assert select_candidates({7: 0.9, 3: 0.5, 5: 0.1}, 1, 1) == [7, 3]

    def test_ties_take_lowest_ids(self):
        assert select_candidates({9: 0.4, 2: 0.4, 5: 0.4, 1: 0.4}, 1, 1) == [1, 2]

    def test_clamped_to_pool(self):
        assert sorted(select_candidates({1: 0.2, 2: 0.3, 3: 0.1}, 3, 2)) == [1, 2, 3]

    def test_accepts_score_records(self):
        sc = [(4, UncertaintyScore(0.1, 0.1, 0.2)), (1, UncertaintyScore(0.3, 0.1, 0.9))]
        assert select_candidates(sc, 1, 1) == [1, 4]

    @pytest.mark.parametrize("r, n", [(0, 1), (1, 0)])
    def test_rejects_bad_round(self, r, n):
        with pytest.raises(ValueError):
            select_candidates({1: 0.1}, r, n)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 40), min_size=1, max_size=10),
           st.integers(1, 5), st.integers(1, 3))
    def test_argsort_invariance(self, vals, r, n):
        # values on an exact binary grid so the transform stays strictly increasing in floats
        scores = {i * 3 + 1: v / 8 for i, v in enumerate(vals)}
        moved = {i: 2 * v + 1 for i, v in scores.items()}
        assert select_candidates(scores, r, n) == select_candidates(moved, r, n)
        assert select_candidates(scores, r, n) == brute_select_candidates(scores, r, n)


class TestDiversity:
    def test_full_budget_returns_all(self):
        got = diversity_filter([3, 1, 2], np.eye(3), {1: 0.1, 2: 0.2, 3: 0.3}, 3)
        assert sorted(got) == [1, 2, 3]

    def test_outlier_wins(self):
        f = np.array([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.05]])
        assert diversity_filter([10, 11, 12], f, {10: 0.5, 11: 0.5, 12: 0.5}, 1) == [12]

    def test_equal_features_pick_max_uncertainty(self):
        f = np.ones((3, 2))
        assert diversity_filter([1, 2, 3], f, {1: 0.1, 2: 0.7, 3: 0.3}, 1) == [2]

    def test_budget_above_pool(self):
        with pytest.raises(ValueError):
            diversity_filter([1], np.ones((1, 2)), {1: 0.1}, 2)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 11))
        ids = [int(i) for i in rng.permutation(40)[:n]]
        feats = {i: rng.normal(size=3).tolist() for i in ids}
        scores = {i: float(rng.choice([0.2, 0.5, rng.random()])) for i in ids}
        b = int(rng.integers(1, n + 1))
        assert diversity_filter(ids, feats, scores, b) == brute_diversity_filter(ids, feats, scores, b)


class TestScoring:
    def test_empty_pool(self):
        assert score_unlabeled(init_model(3, 4, 3, seed=0), [], np.empty((0, 3))) == []

    def test_zero_head_gives_equal_scores(self):
        m = init_model(3, 4, 3, seed=0)
        m.wh[:] = 0.0
        x = np.random.default_rng(0).normal(size=(7, 3))
        out = score_unlabeled(m, [6, 5, 4, 3, 2, 1, 0], x)
        assert [i for i, _ in out] == list(range(7))
        assert len({sc for _, sc in out}) == 1

    def test_weights_enter_total_only(self):
        a = np.array([[2.0, 1.0, 4.0]])
        d1, p1, t1 = score_alphas(a, 0.4, 7.0, 0.5)
        d2, p2, t2 = score_alphas(a, 0.4, 1.0, 2.0)
        assert d1 == d2 and p1 == p2 and t1 != t2
        np.testing.assert_allclose(t2, d2 + 2 * p2)

    def test_shannon_variant_differs(self):
        a = np.array([[2.0, 1.0, 4.0]])
        assert score_alphas(a, 0.4, 7, 0.5, "shannon")[2] != score_alphas(a, 0.4, 7, 0.5)[2]

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            score_alphas([[1.0, 1.0]], 0.5, 7, 0.5, "entropy")

    def test_random_is_seeded(self):
        a = random_selection(np.random.default_rng(3), range(50), 5)
        b = random_selection(np.random.default_rng(3), range(50), 5)
        assert a == b and len(set(a)) == 5
