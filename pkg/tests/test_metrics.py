import math

import numpy as np
import pytest

from survmix.metrics import (
    EvalHorizons,
    StepFunction,
    brier_score,
    censoring_distribution,
    concordance_index,
    event_time_quantiles,
    kaplan_meier,
    time_dependent_concordance,
)

from _oracles import brier_terms, km_product_limit, pairwise_concordance


def random_instance(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(5, 31))
    times = np.round(rng.uniform(0.1, 10.0, size=n), 1)  # rounding forces ties
    events = (rng.random(n) < 0.6).astype(int)
    scores = np.round(rng.normal(size=n), 1)
    return times, events, scores


class TestStepFunction:
    def test_right_continuity_and_left_limit(self):
        sf = StepFunction(np.array([1.0, 2.0]), np.array([0.6, 0.2]))
        assert sf(0.5) == 1.0
        assert sf(1.0) == 0.6
        assert sf.left_limit(1.0) == 1.0
        assert sf.left_limit(1.5) == 0.6
        assert sf(2.0) == 0.2
        assert sf.left_limit(2.0) == 0.6
        assert sf(99.0) == 0.2

    def test_left_limit_at_zero_is_one(self):
        sf = StepFunction(np.array([1.0]), np.array([0.5]))
        assert sf.left_limit(0.0) == 1.0

    def test_rejects_unsorted_breakpoints(self):
        with pytest.raises(ValueError):
            StepFunction(np.array([2.0, 1.0]), np.array([0.5, 0.2]))


class TestKaplanMeier:
    def test_no_censoring_is_empirical_survival(self):
        sf = kaplan_meier([1.0, 2.0, 3.0, 4.0], [1, 1, 1, 1])
        assert sf(2.0) == pytest.approx(0.5)
        assert sf(4.0) == pytest.approx(0.0)
        assert sf(0.5) == 1.0

    def test_hand_product_limit(self):
        # events at 1 and 3, censorings at 2 and 4: S(1)=3/4, S(3)=3/8
        sf = kaplan_meier([1.0, 2.0, 3.0, 4.0], [1, 0, 1, 0])
        assert sf(1.0) == pytest.approx(0.75)
        assert sf(3.0) == pytest.approx(0.375)

    def test_all_censored_is_identically_one(self):
        sf = kaplan_meier([1.0, 2.0], [0, 0])
        for t in (0.0, 1.0, 5.0):
            assert sf(t) == 1.0

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            kaplan_meier([], [])

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_product_limit_oracle(self, seed):
        times, events, _ = random_instance(seed)
        sf = kaplan_meier(times, events)
        for t, s in km_product_limit(times, events):
            assert float(sf(t)) == pytest.approx(s, abs=1e-15)

    def test_values_start_below_one_and_nonincreasing(self):
        times, events, _ = random_instance(123)
        sf = kaplan_meier(times, events)
        assert np.all(sf.values <= 1.0)
        assert np.all(np.diff(sf.values) <= 0.0)


class TestCensoringDistribution:
    def test_no_censoring_is_identically_one(self):
        sf = censoring_distribution([1.0, 2.0], [1, 1])
        assert sf(10.0) == 1.0

    def test_equals_km_with_flipped_flags(self):
        times, events, _ = random_instance(7)
        flipped = kaplan_meier(times, 1 - events)
        g = censoring_distribution(times, events)
        np.testing.assert_array_equal(g.times, flipped.times)
        np.testing.assert_array_equal(g.values, flipped.values)

    def test_hand_example_roles_swapped(self):
        # censorings at 2 and 4 act as events: G(2)=3/4... wait, at-risk at 2
        # is 3 rows so G(2) = 1 - 1/3 = 2/3; at 4 the last row drops to 0
        g = censoring_distribution([1.0, 2.0, 3.0, 4.0], [1, 0, 1, 0])
        assert g(2.0) == pytest.approx(2.0 / 3.0)
        assert g(3.9) == pytest.approx(2.0 / 3.0)
        assert g(4.0) == pytest.approx(0.0)


class TestEventTimeQuantiles:
    def test_nearest_rank_median(self):
        times = np.arange(1.0, 101.0)
        hz = event_time_quantiles(times, np.ones(100), levels=(0.5,))
        assert hz.times == (50.0,)

    def test_censored_rows_are_excluded(self):
        times = np.arange(1.0, 101.0)
        events = np.ones(100)
        base = event_time_quantiles(times, events)
        with_censored = event_time_quantiles(
            np.concatenate([times, [1000.0, 2000.0]]),
            np.concatenate([events, [0, 0]]),
        )
        assert base == with_censored

    def test_standard_levels(self):
        times = np.arange(1.0, 101.0)
        hz = event_time_quantiles(times, np.ones(100), levels=(0.25, 0.5, 0.75, 1.0))
        assert hz.times == (25.0, 50.0, 75.0, 100.0)

    def test_no_events_rejected(self):
        with pytest.raises(ValueError):
            event_time_quantiles([1.0, 2.0], [0, 0])

    def test_horizons_strictly_increasing_enforced(self):
        with pytest.raises(ValueError):
            EvalHorizons((0.25, 0.5), (3.0, 3.0))


class TestTimeDependentConcordance:
    def test_perfect_ranking(self):
        c = time_dependent_concordance([0.9, 0.5, 0.1], [1.0, 2.0, 3.0], [1, 1, 1], 3.0)
        assert c == 1.0

    def test_reversed_ranking(self):
        c = time_dependent_concordance([0.1, 0.5, 0.9], [1.0, 2.0, 3.0], [1, 1, 1], 3.0)
        assert c == 0.0

    def test_six_subject_mixed_censoring_oracle(self):
        times = np.array([1.0, 2.0, 2.0, 3.0, 4.0, 5.0])
        events = np.array([1, 1, 0, 1, 0, 1])
        scores = np.array([0.9, 0.3, 0.5, 0.5, 0.2, 0.1])
        horizon = 4.0
        g = censoring_distribution(times, events)
        weights = [float(g.left_limit(t)) ** -2 for t in times]
        expected_num, expected_den = pairwise_concordance(
            times, events, scores, horizon, weights
        )
        got = time_dependent_concordance(scores, times, events, horizon, g)
        assert got == expected_num / expected_den

    def test_truncation_excludes_late_anchors(self):
        # only the t=1 event anchors pairs at horizon 1.5
        c = time_dependent_concordance([0.9, 0.1, 0.5], [1.0, 2.0, 3.0], [1, 1, 1], 1.5)
        assert c == 1.0

    def test_no_comparable_pairs_is_none(self):
        assert time_dependent_concordance([0.5], [1.0], [1], 2.0) is None
        assert (
            time_dependent_concordance([0.5, 0.4], [1.0, 2.0], [0, 1], 1.5) is None
        )

    def test_tied_scores_count_half(self):
        c = time_dependent_concordance([0.5, 0.5], [1.0, 2.0], [1, 0], 2.0)
        assert c == 0.5

    def test_tied_times_not_comparable(self):
        c = time_dependent_concordance([0.9, 0.1], [2.0, 2.0], [1, 1], 3.0)
        assert c is None

    def test_monotone_transform_invariance(self):
        times, events, scores = random_instance(11)
        horizon = float(np.quantile(times, 0.8))
        g = censoring_distribution(times, events)
        base = time_dependent_concordance(scores, times, events, horizon, g)
        transformed = time_dependent_concordance(
            np.exp(3.0 * scores), times, events, horizon, g
        )
        assert transformed == base

    def test_weight_scale_invariance(self):
        # scaling G by a constant rescales all pair weights uniformly
        times, events, scores = random_instance(12)
        horizon = float(np.quantile(times, 0.9))
        g = censoring_distribution(times, events)
        scaled = StepFunction(g.times, g.values * 0.5)
        a = time_dependent_concordance(scores, times, events, horizon, g)
        b = time_dependent_concordance(scores, times, events, horizon, scaled)
        assert a == pytest.approx(b, abs=1e-12)

    def test_unweighted_matches_truncated_oracle_exactly(self):
        for seed in range(20):
            times, events, scores = random_instance(seed + 500)
            horizon = float(np.quantile(times, 0.7))
            oracle = pairwise_concordance(times, events, scores, horizon)
            got = time_dependent_concordance(scores, times, events, horizon)
            if oracle is None:
                assert got is None
            else:
                assert got == oracle[0] / oracle[1]

    def test_zero_weight_anchor_dropped_with_warning(self):
        # largest time censored makes G hit zero strictly below later times
        times = np.array([1.0, 2.0, 3.0, 4.0])
        events = np.array([1, 0, 1, 1])
        g = StepFunction(np.array([2.0]), np.array([0.0]))
        with pytest.warns(UserWarning, match="zero censoring"):
            c = time_dependent_concordance([0.9, 0.7, 0.5, 0.1], times, events, 4.0, g)
        # only the t=1 anchor survives
        assert c == 1.0


class TestConcordanceIndex:
    def test_perfect(self):
        assert concordance_index([3.0, 2.0, 1.0], [1.0, 2.0, 3.0], [1, 1, 1]) == 1.0

    def test_random_scores_near_half(self):
        rng = np.random.default_rng(13)
        n = 4000
        times = rng.uniform(0.0, 1.0, size=n)
        events = np.ones(n, dtype=int)
        scores = rng.normal(size=n)
        assert concordance_index(scores, times, events) == pytest.approx(0.5, abs=0.05)

    @pytest.mark.parametrize("seed", range(15))
    def test_matches_pair_oracle_exactly(self, seed):
        times, events, scores = random_instance(seed + 900)
        oracle = pairwise_concordance(times, events, scores)
        got = concordance_index(scores, times, events)
        if oracle is None:
            assert got is None
        else:
            assert got == oracle[0] / oracle[1]

    def test_no_comparable_pairs(self):
        assert concordance_index([0.5, 0.5], [1.0, 1.0], [1, 1]) is None


class TestBrierScore:
    def test_constant_half_prediction_no_censoring(self):
        times = np.array([1.0, 2.0, 3.0, 4.0])
        events = np.ones(4, dtype=int)
        s = np.full(4, 0.5)
        assert brier_score(s, times, events, 2.5) == pytest.approx(0.25)

    def test_oracle_predictions_score_zero(self):
        times = np.array([1.0, 2.0, 5.0, 6.0])
        events = np.ones(4, dtype=int)
        s = np.array([0.0, 0.0, 1.0, 1.0])
        assert brier_score(s, times, events, 3.0) == 0.0

    def test_two_row_hand_sum(self):
        # events at 1 and 3, horizon 2: 0.5 * (0.2^2 + 0.3^2) = 0.065
        got = brier_score([0.2, 0.7], [1.0, 3.0], [1, 1], 2.0)
        assert got == pytest.approx(0.065, abs=1e-15)

    def test_censored_before_horizon_contributes_zero(self):
        with_row = brier_score([0.4, 0.6], [1.0, 5.0], [0, 1], 2.0)
        assert with_row == pytest.approx(0.5 * (1.0 - 0.6) ** 2, abs=1e-15)

    def test_bounded_by_one_without_censoring(self):
        for seed in range(5):
            times, events, _ = random_instance(seed + 40)
            rng = np.random.default_rng(seed)
            s = rng.uniform(0.0, 1.0, size=len(times))
            got = brier_score(s, times, events, float(np.median(times)))
            assert 0.0 <= got <= 1.0

    @pytest.mark.parametrize("seed", range(15))
    def test_matches_term_oracle_exactly(self, seed):
        times, events, scores = random_instance(seed + 60)
        rng = np.random.default_rng(seed)
        s = rng.uniform(0.0, 1.0, size=len(times))
        horizon = float(np.quantile(times, 0.6))
        g = censoring_distribution(times, events)
        g_tminus = [float(g.left_limit(t)) for t in times]
        g_horizon = float(g(horizon))
        expected_terms = brier_terms(s, times, events, horizon, g_tminus, g_horizon)
        kept = [v for v in expected_terms if v is not None]
        expected = math.fsum(kept) / len(kept)
        got = brier_score(s, times, events, horizon, g)
        assert got == expected
