import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from qevents import (ClassificationBand, DeFinettiModel, born_rule_experiment,
                     classify, classify_frequencies, commuting_realization,
                     detection_time, exact_protocol_probability, frequency,
                     lsw_probability, posterior, posterior_entropies,
                     relative_entropy, sample_protocols, sanov_check)
from qevents.histories import MeasurementProtocol
from qevents.mesoscopic import log_band_mass

LN2 = np.log(2.0)


def reference_model(tau=1.0):
    return DeFinettiModel(np.array([0.4, 0.6]), np.array([0.8, 0.3]), tau)


class TestModelValidation:
    def test_accepts_the_reference_model(self):
        m = reference_model()
        assert m.num_hypotheses == 2
        assert m.kappa == pytest.approx(0.5, rel=1e-12)
        np.testing.assert_allclose(m.p_minus, [0.2, 0.7], atol=1e-12)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            DeFinettiModel(np.array([0.4, 0.4]), np.array([0.8, 0.3]))

    def test_weights_must_be_nonnegative(self):
        with pytest.raises(ValueError):
            DeFinettiModel(np.array([1.5, -0.5]), np.array([0.8, 0.3]))

    def test_click_probabilities_must_be_probabilities(self):
        with pytest.raises(ValueError):
            DeFinettiModel(np.array([0.5, 0.5]), np.array([0.8, 1.3]))

    def test_shapes_must_agree(self):
        with pytest.raises(ValueError):
            DeFinettiModel(np.array([0.4, 0.6]), np.array([0.8]))

    def test_time_step_must_be_positive(self):
        with pytest.raises(ValueError):
            DeFinettiModel(np.array([0.4, 0.6]), np.array([0.8, 0.3]), tau=0.0)

    def test_single_hypothesis_has_infinite_gap(self):
        m = DeFinettiModel(np.array([1.0]), np.array([0.8]))
        assert m.kappa == np.inf


class TestBands:
    def test_from_schedule(self):
        band = ClassificationBand.from_schedule(500)
        assert band.n == 500
        assert band.epsilon == pytest.approx(500 ** (-1.0 / 3.0), rel=1e-12)

    def test_schedule_exponent_range(self):
        with pytest.raises(ValueError):
            ClassificationBand.from_schedule(100, exponent=0.5)
        with pytest.raises(ValueError):
            ClassificationBand.from_schedule(100, exponent=0.0)

    def test_half_width_must_be_a_fraction(self):
        with pytest.raises(ValueError):
            ClassificationBand(10, 1.0)
        with pytest.raises(ValueError):
            ClassificationBand(10, 0.0)


class TestSampling:
    def test_outcomes_are_signs_with_the_right_shape(self):
        m = reference_model()
        s = sample_protocols(m, 6, 500, seed=3)
        assert s.outcomes.shape == (500, 6)
        assert set(np.unique(s.outcomes)) <= {-1, 1}
        assert s.latent.shape == (500,)
        assert len(s) == 500 and s.n == 6

    def test_same_seed_reproduces_draws(self):
        m = reference_model()
        a = sample_protocols(m, 5, 200, seed=9)
        b = sample_protocols(m, 5, 200, seed=9)
        np.testing.assert_array_equal(a.outcomes, b.outcomes)
        np.testing.assert_array_equal(a.latent, b.latent)

    def test_streams_differ(self):
        m = reference_model()
        a = sample_protocols(m, 5, 200, seed=9, stream=0)
        b = sample_protocols(m, 5, 200, seed=9, stream=1)
        assert not np.array_equal(a.outcomes, b.outcomes)

    def test_marginal_statistics(self):
        m = reference_model()
        s = sample_protocols(m, 6, 5000, seed=1)
        assert (s.latent == 0).mean() == pytest.approx(0.4, abs=0.02)
        # mixture click probability: 0.4*0.8 + 0.6*0.3 = 0.5
        assert (s.outcomes == 1).mean() == pytest.approx(0.5, abs=0.02)

    def test_law_of_large_numbers_per_latent(self):
        m = reference_model()
        n = 10_000
        hits = total = 0
        for stream in range(10):
            s = sample_protocols(m, n, 1000, seed=21, stream=stream)
            f = s.frequencies()
            target = m.p_plus[s.latent]
            hits += int(np.sum(np.abs(f - target) <= 5.0 / np.sqrt(n)))
            total += len(s)
        assert hits / total >= 0.99

    def test_protocol_accessors(self):
        m = reference_model()
        s = sample_protocols(m, 4, 10, seed=2)
        row = s.protocol(3)
        assert isinstance(row, tuple) and len(row) == 4
        assert frequency(row, 1) == pytest.approx(np.mean(np.array(row) == 1))


class TestExactProbabilities:
    def test_frozen_values(self):
        m = reference_model()
        assert exact_protocol_probability(m, ()) == 1.0
        assert exact_protocol_probability(m, (1,)) == pytest.approx(0.5, rel=1e-12)
        assert exact_protocol_probability(m, (1, 1)) == pytest.approx(0.31, rel=1e-12)
        assert exact_protocol_probability(m, (-1,)) == pytest.approx(0.5, rel=1e-12)

    def test_normalization_over_all_words(self):
        m = reference_model()
        total = sum(exact_protocol_probability(m, tuple(word))
                    for word in np.ndindex(2, 2, 2)
                    for word in [tuple(1 if b else -1 for b in word)])
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_against_per_hypothesis_product_oracle(self):
        m = reference_model()
        proto = (1, -1, -1, 1, -1)
        k = sum(1 for x in proto if x == 1)
        expected = sum(w * p ** k * (1 - p) ** (len(proto) - k)
                       for w, p in zip(m.weights, m.p_plus))
        assert exact_protocol_probability(m, proto) == pytest.approx(expected, rel=1e-12)

    @given(st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=8))
    @settings(max_examples=40, deadline=None)
    def test_exchangeability(self, word):
        # any permutation of the same multiset of clicks has the same mass
        m = reference_model()
        p1 = exact_protocol_probability(m, tuple(word))
        p2 = exact_protocol_probability(m, tuple(sorted(word)))
        assert p1 == pytest.approx(p2, rel=1e-12)

    def test_rejects_labels_other_than_signs(self):
        with pytest.raises(ValueError):
            exact_protocol_probability(reference_model(), (1, 0))


class TestClassification:
    def test_clear_cases(self):
        m = reference_model()
        band = ClassificationBand(10, 0.1)
        assert classify((1,) * 8 + (-1,) * 2, m, band) == 0   # f=0.8
        assert classify((1,) * 3 + (-1,) * 7, m, band) == 1   # f=0.3
        assert classify((1,) * 6 + (-1,) * 4, m, band) is None

    def test_band_edges_are_exclusive(self):
        m = reference_model()
        band = ClassificationBand(10, 0.2)
        # f=0.5 sits exactly on the edge of the band around 0.3
        assert classify((1,) * 5 + (-1,) * 5, m, band) is None

    def test_vectorized_classification(self):
        m = reference_model()
        band = ClassificationBand(10, 0.1)
        out = classify_frequencies(np.array([0.8, 0.3, 0.55, 0.25]), m, band)
        np.testing.assert_array_equal(out, [0, 1, -1, 1])

    def test_wide_bands_warn_about_overlap(self):
        m = reference_model()
        with pytest.warns(UserWarning, match="overlap"):
            born_rule_experiment(m, 10, 0)

    def test_disjoint_bands_classify_at_most_one_way(self):
        gen = np.random.default_rng(14)
        for _ in range(25):
            H = int(gen.integers(2, 5))
            p = np.sort(gen.uniform(0.05, 0.95, H))
            if np.min(np.diff(p)) < 1e-3:
                continue
            w = gen.dirichlet(np.ones(H))
            m = DeFinettiModel(w, p)
            eps = 0.49 * m.kappa
            for f in np.linspace(0.0, 1.0, 101):
                assert np.sum(np.abs(f - p) < eps) <= 1

    def test_protocol_length_must_match_band(self):
        with pytest.raises(ValueError, match="length"):
            classify((1, -1), reference_model(), ClassificationBand(3, 0.1))


class TestBornExperiment:
    def test_exact_masses_approach_the_prior_weights(self):
        m = reference_model()
        exp = born_rule_experiment(m, 500, 0)
        assert exp.empirical is None and exp.coverage is None
        assert exp.exact_mass[0] == pytest.approx(0.4, abs=1e-8)
        assert exp.exact_mass[1] == pytest.approx(0.6, abs=1e-8)
        assert exp.exact_coverage == pytest.approx(1.0, abs=1e-8)
        assert exp.exact_ambiguous == 0.0

    def test_small_n_frozen_values(self):
        m = reference_model()
        with pytest.warns(UserWarning, match="overlap"):
            exp = born_rule_experiment(m, 10, 2000, seed=0)
        assert exp.exact_mass[0] == pytest.approx(0.2720740424, rel=1e-9)
        assert exp.exact_mass[1] == pytest.approx(0.3901121744, rel=1e-9)
        assert exp.exact_coverage == pytest.approx(0.6621862168, rel=1e-9)
        assert exp.exact_ambiguous == pytest.approx(0.3378137832, rel=1e-9)
        # sampled fractions sit near the exact ones
        assert exp.coverage == pytest.approx(exp.exact_coverage, abs=0.05)
        assert exp.ambiguous == pytest.approx(exp.exact_ambiguous, abs=0.05)

    def test_sampled_masses_track_exact_masses(self):
        m = reference_model()
        with pytest.warns(UserWarning, match="overlap"):
            exp = born_rule_experiment(m, 50, 20000, seed=4)
        for nu in (0, 1):
            assert exp.empirical[nu] == pytest.approx(exp.exact_mass[nu], abs=0.02)
        assert exp.coverage == pytest.approx(exp.exact_coverage, abs=0.02)

    def test_coverage_improves_with_n(self):
        m = reference_model()
        with pytest.warns(UserWarning, match="overlap"):
            first = born_rule_experiment(m, 40, 0).exact_coverage
        cov = [first] + [born_rule_experiment(m, n, 0).exact_coverage for n in (100, 400)]
        assert cov[0] < cov[1] < cov[2]


class TestPosterior:
    def test_empty_protocol_returns_the_prior(self):
        m = reference_model()
        post = posterior(m, ())
        assert post.weights[0] == pytest.approx(0.4, rel=1e-12)
        assert post.weights[1] == pytest.approx(0.6, rel=1e-12)
        assert post.entropy_bits == pytest.approx(0.9709505944546688, rel=1e-12)

    def test_two_clicks_frozen_value(self):
        m = reference_model()
        post = posterior(m, (1, 1))
        assert post.weights[0] == pytest.approx(0.8258064516129032, rel=1e-12)
        assert post.weights[1] == pytest.approx(0.1741935483870967, rel=1e-9)
        assert post.entropy_bits == pytest.approx(0.667208517800601, rel=1e-9)

    def test_long_protocols_concentrate(self):
        m = reference_model()
        post = posterior(m, (1,) * 60 + (-1,) * 15)   # f=0.8 for 75 clicks
        assert post.weights[0] > 0.999999
        assert post.entropy_bits < 1e-4

    def test_zero_probability_protocol_rejected(self):
        deterministic = DeFinettiModel(np.array([1.0]), np.array([1.0]))
        with pytest.raises(ValueError, match="zero-probability"):
            posterior(deterministic, (-1,))

    def test_batch_entropies_match_single_calls(self):
        m = reference_model()
        sample = sample_protocols(m, 12, 50, seed=6)
        ents = posterior_entropies(m, sample)
        for i in (0, 17, 49):
            expected = posterior(m, sample.protocol(i)).entropy_bits
            assert ents[i] == pytest.approx(expected, rel=1e-10)

    def test_purification_mean_entropy_is_tiny_at_large_n(self):
        m = reference_model()
        sample = sample_protocols(m, 200, 500, seed=8)
        ents = posterior_entropies(m, sample)
        assert float(ents.mean()) < 0.01


class TestRelativeEntropy:
    def test_frozen_reference_values(self):
        m = reference_model()
        assert relative_entropy(m, 0, 1) == pytest.approx(0.7705590150115544, rel=1e-12)
        assert relative_entropy(m, 1, 0) == pytest.approx(0.8406371956566696, rel=1e-12)

    def test_half_versus_quarter(self):
        m = DeFinettiModel(np.array([0.5, 0.5]), np.array([0.5, 0.25]))
        assert relative_entropy(m, 0, 1) == pytest.approx(0.2075187496394219, rel=1e-12)

    def test_zero_on_the_diagonal(self):
        m = reference_model()
        assert relative_entropy(m, 0, 0) == 0.0

    def test_infinite_on_support_mismatch(self):
        m = DeFinettiModel(np.array([0.5, 0.5]), np.array([0.5, 1.0]))
        assert relative_entropy(m, 0, 1) == np.inf
        assert relative_entropy(m, 1, 0) < np.inf

    @given(st.floats(0.02, 0.98), st.floats(0.02, 0.98))
    @settings(max_examples=60, deadline=None)
    def test_nonnegative_and_faithful(self, p, q_):
        m = DeFinettiModel(np.array([0.5, 0.5]), np.array([p, q_]))
        val = relative_entropy(m, 0, 1)
        assert val >= 0.0
        if abs(p - q_) > 1e-6:
            assert val > 0.0
        # oracle: direct two-point Kullback-Leibler sum in bits
        expected = p * np.log2(p / q_) + (1 - p) * np.log2((1 - p) / (1 - q_))
        assert val == pytest.approx(max(expected, 0.0), rel=1e-9, abs=1e-12)


class TestBandMass:
    def test_frozen_value(self):
        assert log_band_mass(10, 0.2, 0.8, 0.3) == pytest.approx(-4.547648878002189,
                                                                 rel=1e-12)

    def test_empty_band(self):
        assert log_band_mass(4, 0.01, 0.37, 0.5) == -np.inf

    def test_full_band_has_unit_mass(self):
        assert log_band_mass(12, 0.999, 0.5, 0.4) == pytest.approx(0.0, abs=1e-12)

    def test_matches_direct_binomial_sum(self):
        n, eps, center, q_ = 30, 0.12, 0.8, 0.3
        ks = np.arange(n + 1)
        mask = np.abs(ks / n - center) < eps
        direct = float(binom.pmf(ks[mask], n, q_).sum())
        assert np.exp(log_band_mass(n, eps, center, q_)) == pytest.approx(direct, rel=1e-10)


class TestSanov:
    def test_reference_report(self):
        m = reference_model()
        rep = sanov_check(m, 0, 1, [50, 100, 200, 400])
        assert rep.certified
        assert rep.sigma_bits == pytest.approx(0.7705590150115544, rel=1e-12)
        assert rep.sigma_nats == pytest.approx(0.5341108087103075, rel=1e-12)
        rates = {r.n: r for r in rep.rows}
        assert rates[50].empirical_rate == pytest.approx(0.2832764166851083, rel=1e-9)
        assert rates[400].empirical_rate == pytest.approx(0.4085437314902844, rel=1e-9)
        assert rates[400].band_kl_rate == pytest.approx(0.396630735197156, rel=1e-9)
        # the empirical decay rate approaches the large-deviation rate from above
        emp = [rates[n].empirical_rate for n in (50, 100, 200, 400)]
        assert emp == sorted(emp)
        for r in rep.rows:
            assert r.empirical_rate >= r.band_kl_rate - 1e-9
            assert r.mass == pytest.approx(np.exp(-r.n * r.empirical_rate), rel=1e-9)
            # certified inequality: mass <= prefactor * exp(-n * sigma)
            assert r.mass <= rep.prefactor * np.exp(-r.n * r.sigma_rate) * (1 + 1e-9)

    def test_exponent_ratio_tightens_with_n(self):
        m = reference_model()
        rep = sanov_check(m, 0, 1, [400])
        row = rep.rows[0]
        assert row.empirical_rate / row.band_kl_rate == pytest.approx(1.0, abs=0.1)

    def test_reversed_pair_uses_the_other_divergence(self):
        m = reference_model()
        rep = sanov_check(m, 1, 0, [100])
        assert rep.sigma_bits == pytest.approx(0.8406371956566696, rel=1e-12)

    def test_overlapping_bands_rejected(self):
        m = reference_model()
        with pytest.raises(ValueError, match="overlap"):
            sanov_check(m, 0, 1, [2])


class TestDetectionTime:
    def test_reference_frozen_values(self):
        m = reference_model()
        dt = detection_time(m)
        assert dt.tau == 1.0
        assert dt.sigma_min_bits == pytest.approx(0.7705590150115544, rel=1e-12)
        assert dt.time_scale == pytest.approx(1.2977591339775645, rel=1e-12)
        assert dt.n_star == 1
        assert dt.n_star_epsilon == pytest.approx(0.25, rel=1e-9)
        assert dt.n_star_epsilon < 0.25
        assert dt.n_star_mass == pytest.approx(0.3, rel=1e-12)
        assert dt.threshold == pytest.approx(np.exp(-1.0), rel=1e-12)
        product = dt.n_star * dt.sigma_min_bits * LN2
        assert 0.5 <= product <= 3.0

    def test_pairs_table(self):
        dt = detection_time(reference_model())
        table = {(p.nu1, p.nu2): p.sigma_bits for p in dt.pairs}
        assert table[(0, 1)] == pytest.approx(0.7705590150115544, rel=1e-12)
        assert table[(1, 0)] == pytest.approx(0.8406371956566696, rel=1e-12)

    def test_time_scale_is_linear_in_tau(self):
        dt = detection_time(reference_model(tau=2.0))
        assert dt.time_scale == pytest.approx(2.595518267955129, rel=1e-12)
        assert dt.n_star == 1

    def test_stricter_threshold_needs_more_clicks(self):
        dt = detection_time(reference_model(), threshold=1e-3)
        assert dt.n_star == 28
        assert dt.n_star_mass == pytest.approx(7.317811e-04, rel=1e-5)
        assert dt.n_star_mass <= 1e-3

    def test_single_hypothesis_rejected(self):
        with pytest.raises(ValueError, match="two hypotheses"):
            detection_time(DeFinettiModel(np.array([1.0]), np.array([0.8])))

    def test_indistinguishable_hypotheses_rejected(self):
        m = DeFinettiModel(np.array([0.5, 0.5]), np.array([0.3, 0.3]))
        with pytest.raises(ValueError, match="indistinguishable"):
            detection_time(m)


class TestCommutingRealization:
    def test_dimension_and_cap(self):
        m = reference_model()
        frame, state = commuting_realization(m, 5)
        assert frame.dim == 2 * 2 ** 5
        assert frame.times == (1.0, 2.0, 3.0, 4.0, 5.0)
        with pytest.raises(ValueError, match="cap"):
            commuting_realization(m, 12)

    def test_history_measure_equals_the_mixture_exactly(self):
        m = reference_model()
        for n in (1, 2, 3, 4):
            frame, state = commuting_realization(m, n)
            worst = 0.0
            for word in np.ndindex(*(2,) * n):
                proto = tuple(1 if b else -1 for b in word)
                lhs = lsw_probability(frame, state,
                                      MeasurementProtocol(proto, frame.times[:n]))
                rhs = exact_protocol_probability(m, proto)
                worst = max(worst, abs(lhs - rhs))
            assert worst < 1e-12, f"n={n}: residual {worst}"

    def test_three_hypothesis_realization(self):
        m = DeFinettiModel(np.array([0.2, 0.3, 0.5]), np.array([0.9, 0.5, 0.1]))
        frame, state = commuting_realization(m, 3)
        assert frame.dim == 3 * 8
        for word in np.ndindex(2, 2, 2):
            proto = tuple(1 if b else -1 for b in word)
            lhs = lsw_probability(frame, state, MeasurementProtocol(proto, frame.times))
            rhs = exact_protocol_probability(m, proto)
            assert lhs == pytest.approx(rhs, abs=1e-13)

    def test_respects_the_time_step(self):
        m = reference_model(tau=0.5)
        frame, _ = commuting_realization(m, 3)
        assert frame.times == (0.5, 1.0, 1.5)
