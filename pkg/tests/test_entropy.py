import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from renyi_ada import entropy as E
from renyi_ada.oracles import mp_uncertainties

mp.mp.dps = 40


def mp_renyi(p, s):
    return float(mp.log(mp.fsum(mp.mpf(x) ** s for x in p if x > 0)) / (1 - mp.mpf(s)))


alphas = st.lists(st.floats(1e-3, 1e4), min_size=2, max_size=11).map(np.array)
orders = st.floats(0.01, 0.99)


class TestTypes:
    def test_prob_vector_validation(self):
        E.ProbVector([0.25, 0.75])
        with pytest.raises(ValueError):
            E.ProbVector([0.5, 0.6])
        with pytest.raises(ValueError):
            E.ProbVector([1.2, -0.2])
        with pytest.raises(ValueError):
            E.ProbVector([1.0])

    def test_dirichlet_params(self):
        d = E.DirichletParams([2.0, 1.0, 1.0])
        assert d.alpha0 == 4.0
        assert d.num_classes == 3
        with pytest.raises(ValueError):
            E.DirichletParams([1.0, 0.0])
        with pytest.raises(ValueError):
            E.DirichletParams([1.0, np.inf])

    @pytest.mark.parametrize("s", [0.0, 1.0, -0.1, 1.5])
    def test_order_is_open_interval(self, s):
        with pytest.raises(ValueError):
            E.RenyiOrder(s)
        with pytest.raises(ValueError):
            E.renyi_entropy([0.5, 0.5], s)


class TestRenyiEntropy:
    def test_uniform_is_log_c(self):
        for c in (2, 5, 11):
            for s in (0.1, 0.5, 0.9):
                assert_allclose(E.renyi_entropy(np.full(c, 1 / c), s), np.log(c), rtol=1e-14)

    def test_point_mass_is_zero(self):
        assert E.renyi_entropy([1.0, 0.0, 0.0], 0.5) == 0.0

    def test_worked_value(self):
        # 2 ln(sqrt(0.7) + sqrt(0.3))
        assert_allclose(E.renyi_entropy([0.7, 0.3], 0.5), 0.6505085047, rtol=1e-9)
        assert_allclose(E.renyi_entropy([0.7, 0.3], 0.5), mp_renyi([0.7, 0.3], 0.5), rtol=1e-14)

    def test_shannon_worked_value(self):
        assert_allclose(E.shannon_entropy([0.7, 0.3]), 0.6108643021, rtol=1e-9)

    def test_accepts_prob_vector(self):
        assert_allclose(E.renyi_entropy(E.ProbVector([0.7, 0.3]), 0.5), 0.6505085047, rtol=1e-9)

    def test_batch_matches_rows(self):
        rng = np.random.default_rng(0)
        p = rng.dirichlet(np.ones(4), size=5)
        batch = E.renyi_entropy(p, 0.3)
        assert_allclose(batch, [E.renyi_entropy(r, 0.3) for r in p], rtol=1e-15)

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=11), orders)
    def test_matches_reference(self, w, s):
        p = np.array(w) / np.sum(w)
        assert_allclose(E.renyi_entropy(p, s), mp_renyi(p, s), rtol=1e-12, atol=1e-14)

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=11))
    def test_dominates_shannon_and_decreases(self, w):
        p = np.array(w) / np.sum(w)
        vals = [E.renyi_entropy(p, s) for s in np.linspace(0.05, 0.95, 10)]
        assert min(vals) >= E.shannon_entropy(p) - 1e-12
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


class TestUncertainties:
    def test_worked_values_two_flat_classes(self):
        a = [1.0, 1.0]
        assert_allclose(E.u_pred(a, 0.5), 0.5753641449, rtol=1e-9)
        assert_allclose(E.u_dom(a, 0.5), 0.1177830357, rtol=1e-9)
        score = E.u_total(a, 0.5, 7.0, 0.5)
        assert_allclose(score.u_total, 7 * score.u_dom + 0.5 * score.u_pred, rtol=1e-15)
        assert_allclose(score.u_total, 1.112163322, rtol=1e-9)

    def test_sum_is_renyi_of_predictive(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = rng.uniform(0.1, 20, size=rng.integers(2, 8))
            s = rng.uniform(0.1, 0.9)
            p = E.posterior_predictive(a)
            assert_allclose(E.u_dom(a, s) + E.u_pred(a, s), E.renyi_entropy(p, s), rtol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(alphas, orders)
    def test_match_high_precision_reference(self, a, s):
        with mp.workdps(40):
            dom, pred = mp_uncertainties([mp.mpf(float(x)) for x in a], mp.mpf(s))
        assert_allclose(E.u_pred(a, s), float(pred), rtol=1e-10, atol=1e-12)
        assert abs(E.u_dom(a, s) - max(float(dom), 0.0)) < 1e-9 * max(1.0, float(pred))

    @settings(max_examples=200, deadline=None)
    @given(alphas, orders)
    def test_domain_uncertainty_non_negative(self, a, s):
        assert E.u_dom(a, s) >= 0.0

    def test_sharp_evidence_has_small_domain_uncertainty(self):
        a = np.array([1e6, 1.0, 1.0])
        assert_allclose(E.u_dom(a, 0.5), 4.5423506706834e-4, rtol=1e-9)
        assert_allclose(E.u_pred(a, 0.5), 3.5397702602778e-3, rtol=1e-9)
        assert E.u_dom(a * 1e3, 0.5) < 2e-5

    def test_huge_concentrations_stay_finite(self):
        a = np.array([np.exp(30), np.exp(30) / 3, 2.0])
        assert np.isfinite(E.u_dom(a, 0.3)) and np.isfinite(E.u_pred(a, 0.3))

    def test_domain_uncertainty_shrinks_with_evidence(self):
        vals = [E.u_dom(np.array([2.0, 1.0, 1.0]) * k, 0.5) for k in (1, 10, 100, 1000)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_clamp_and_counter(self):
        stats = E.ClampCounter()
        out = E._clamp(np.array([-5e-9, 0.0, 0.3]), stats)
        assert_allclose(out, [0.0, 0.0, 0.3])
        assert stats.clamped == 1 and stats.evaluated == 3

    def test_below_tolerance_raises(self):
        with pytest.raises(E.NegativeUncertaintyError):
            E._clamp(np.array([-2e-8]), None)

    def test_total_rejects_negative_weights(self):
        with pytest.raises(ValueError):
            E.u_total([1.0, 1.0], 0.5, -1.0, 0.5)

    def test_batch_total_returns_scores(self):
        out = E.u_total(np.array([[1.0, 1.0], [5.0, 1.0]]), 0.5, 7.0, 0.5)
        assert len(out) == 2 and all(isinstance(o, E.UncertaintyScore) for o in out)

    def test_combine(self):
        sc = E.combine(0.1, 0.2, 7.0, 0.5)
        assert_allclose(sc.u_total, 0.8)


class TestShannonAnalogues:
    @pytest.mark.parametrize("a", [[1.0, 1.0], [5.0, 2.0, 0.5], [30.0, 1.0, 1.0, 1.0]])
    def test_expected_entropy_reference(self, a):
        with mp.workdps(40):
            a0 = mp.fsum(a)
            ref = -mp.fsum(mp.mpf(x) / a0 * (mp.digamma(x + 1) - mp.digamma(a0 + 1)) for x in a)
        assert_allclose(E.shannon_u_pred(a), float(ref), rtol=1e-12)

    def test_is_limit_of_renyi(self):
        a = np.array([3.0, 1.5, 0.7])
        assert_allclose(E.u_pred(a, 0.9999), E.shannon_u_pred(a), atol=2e-4)
        assert_allclose(E.u_dom(a, 0.9999), E.shannon_u_dom(a), atol=2e-4)

    def test_mutual_information_non_negative(self):
        rng = np.random.default_rng(4)
        a = np.exp(rng.uniform(-5, 8, size=(500, 4)))
        assert np.all(E.shannon_u_dom(a) >= 0)


class TestMonteCarlo:
    def test_agrees_with_closed_form(self):
        a = np.array([2.0, 0.7, 5.0])
        est, se = E.mc_conditional_entropy(a, 0.4, 200_000, seed=3)
        assert abs(est - E.u_pred(a, 0.4)) < 4 * se
        assert se < 5e-3

    def test_seeded(self):
        a = [1.0, 2.0]
        assert E.mc_conditional_entropy(a, 0.5, 10_000, 9) == E.mc_conditional_entropy(a, 0.5, 10_000, 9)

    def test_requires_enough_samples(self):
        with pytest.raises(ValueError):
            E.mc_conditional_entropy([1.0, 1.0], 0.5, 100, 0)
