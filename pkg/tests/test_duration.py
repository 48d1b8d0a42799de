"""Duration models: hazards, parametric identities, MLE fitting, GRU."""

import numpy as np
import pytest
from scipy.special import gammaln

from chordlattice import duration


def negbinom_log_pmf(d, n, p):
    # C(d-1, n-1) p^n (1-p)^(d-n)
    if d < n:
        return -np.inf
    log_comb = (gammaln(d) - gammaln(n) - gammaln(d - n + 1))
    return log_comb + n * np.log(p) + (d - n) * np.log1p(-p)


class TestGeometric:
    def test_constant_hazard(self):
        model = duration.GeometricDuration(0.1)
        state = model.initial_state()
        for _ in range(10):
            assert model.hazard(state) == pytest.approx(0.1)
            state = model.update(state, False)
        state = model.update(state, True)
        assert model.hazard(state) == pytest.approx(0.1)

    def test_log_pmf(self):
        model = duration.GeometricDuration(0.25)
        assert model.log_pmf(1) == pytest.approx(np.log(0.25))
        assert model.log_pmf(3) == pytest.approx(np.log(0.75 ** 2 * 0.25))


class TestNegBinomial:
    def test_single_stage_equals_geometric(self):
        nb = duration.NegBinomialDuration(1, 0.1)
        geo = duration.GeometricDuration(0.1)
        state_n, state_g = nb.initial_state(), geo.initial_state()
        for _ in range(20):
            assert nb.hazard(state_n) == geo.hazard(state_g)
            state_n = nb.update(state_n, False)
            state_g = geo.update(state_g, False)

    def test_two_stage_hand_hazards(self):
        model = duration.NegBinomialDuration(2, 0.5)
        state = model.initial_state()
        assert model.hazard(state) == pytest.approx(0.0)          # d=1
        state = model.update(state, False)
        assert model.hazard(state) == pytest.approx(0.25)         # d=2
        state = model.update(state, False)
        assert model.hazard(state) == pytest.approx(1 / 3)        # d=3

    def test_reset_on_change(self):
        model = duration.NegBinomialDuration(2, 0.5)
        state = model.initial_state()
        for _ in range(5):
            state = model.update(state, False)
        state = model.update(state, True)
        assert model.hazard(state) == pytest.approx(0.0)

    def test_hazard_increases_after_stays(self):
        model = duration.NegBinomialDuration(2, 0.3)
        state = model.initial_state()
        prev = model.hazard(state)
        for _ in range(6):
            state = model.update(state, False)
            h = model.hazard(state)
            assert h > prev
            prev = h

    def test_hazard_chain_reproduces_pmf(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 9))
            p = float(rng.uniform(0.05, 0.95))
            d = int(rng.integers(n, 200))
            model = duration.NegBinomialDuration(n, p)
            state = model.initial_state()
            log_prob = 0.0
            for _ in range(d - 1):
                log_prob += np.log1p(-model.hazard(state))
                state = model.update(state, False)
            log_prob += np.log(max(model.hazard(state), 1e-300))
            assert log_prob == pytest.approx(negbinom_log_pmf(d, n, p), abs=1e-9)
            assert model.log_pmf(d) == pytest.approx(negbinom_log_pmf(d, n, p),
                                                     abs=1e-9)

    def test_pmf_sums_to_one(self):
        for n, p in [(1, 0.3), (3, 0.2), (5, 0.5), (8, 0.05)]:
            model = duration.NegBinomialDuration(n, p)
            total = sum(np.exp(model.log_pmf(d)) for d in range(1, 2000))
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_hazard_plus_stay_is_one(self):
        model = duration.NegBinomialDuration(3, 0.4)
        state = model.initial_state()
        for _ in range(10):
            h = model.hazard(state)
            assert 0.0 <= h <= 1.0
            state = model.update(state, False)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            duration.NegBinomialDuration(0, 0.5)
        with pytest.raises(ValueError):
            duration.NegBinomialDuration(2, 1.5)


class TestFitting:
    def test_geometric_all_ones(self):
        model = duration.fit_geometric([1, 1, 1, 1])
        assert model.p == pytest.approx(1.0, abs=1e-6)

    def test_geometric_constant_four(self):
        model = duration.fit_geometric([4] * 100)
        assert model.p == pytest.approx(0.25)

    def test_geometric_recovery(self):
        rng = np.random.default_rng(5)
        samples = rng.geometric(0.3, size=100000)
        assert duration.fit_geometric(samples).p == pytest.approx(0.3, abs=0.01)

    def test_negbinomial_recovery(self):
        rng = np.random.default_rng(5)
        samples = rng.negative_binomial(4, 0.5, size=10000) + 4
        model = duration.fit_mle(samples, family='negbinomial')
        assert model.n == 4
        assert model.p == pytest.approx(0.5, abs=0.05)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            duration.fit_geometric([])

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            duration.fit_mle([1, 2], family='weibull')


class TestFlags:
    def test_change_flags(self):
        flags = duration.change_flags([0, 0, 5, 5, 5, 7])
        assert flags == [0, 1, 0, 0, 1]

    def test_durations_from_flags(self):
        assert duration.durations_from_flags([0, 1, 0, 0, 1]) == [2, 3]
        assert duration.durations_from_flags([0, 1, 0, 0, 1],
                                             include_censored=True) == [2, 3, 1]

    def test_flags_durations_round_trip(self):
        labels = [0] * 4 + [5] * 2 + [9] * 7 + [5]
        flags = duration.change_flags(labels)
        assert duration.durations_from_flags(flags, include_censored=True) == \
            [4, 2, 7, 1]


class TestAvgLogProb:
    def test_geometric_single_frame_segments(self):
        model = duration.GeometricDuration(0.5)
        score = duration.avg_duration_log_prob(model, [[1, 1, 1, 1]])
        assert score == pytest.approx(np.log(0.5), abs=1e-12)

    def test_matches_pmf_for_parametric(self):
        rng = np.random.default_rng(1)
        model = duration.NegBinomialDuration(3, 0.3)
        durations = [int(rng.integers(3, 30)) for _ in range(20)]
        flags = []
        for d in durations:
            flags.extend([0] * (d - 1) + [1])
        score = duration.avg_duration_log_prob(model, [flags])
        expected = np.mean([model.log_pmf(d) for d in durations])
        # hazards of exactly 0 (d < n) are clamped before taking logs, so the
        # telescoped sum differs from the closed form by a few ulps per frame
        assert score == pytest.approx(expected, abs=1e-6)

    def test_censored_tail_excluded(self):
        # trailing stays belong to the unfinished final segment and must not
        # contribute to the per-segment average
        model = duration.GeometricDuration(0.5)
        a = duration.avg_duration_log_prob(model, [[1, 1]])
        b = duration.avg_duration_log_prob(model, [[1, 1, 0, 0, 0]])
        assert b == pytest.approx(a, abs=1e-12)


class TestTraces:
    def test_geometric_trace_constant(self):
        trace = duration.hazard_trace(duration.GeometricDuration(0.2),
                                      [0, 0, 1, 0, 1])
        assert np.allclose(trace, 0.2)

    def test_negbinomial_trace_rises_between_changes(self):
        trace = duration.hazard_trace(duration.NegBinomialDuration(3, 0.4),
                                      [0, 0, 0, 0, 0, 1, 0, 0])
        # the final stage is unreachable before frame n, so the hazard is
        # exactly 0 for the first n-1 frames, then rises monotonically
        assert trace[0] == 0.0 and trace[1] == 0.0
        assert np.all(np.diff(trace[1:6]) > 0)
        assert trace[6] < trace[5]   # reset after the change

    def test_sample_duration_matches_mean(self):
        rng = np.random.default_rng(2)
        model = duration.NegBinomialDuration(4, 0.5)
        samples = [duration.sample_duration(model, rng) for _ in range(4000)]
        assert np.mean(samples) == pytest.approx(8.0, rel=0.05)


class TestGruDuration:
    def test_periodic_corpus(self):
        flags = [([0] * 7 + [1]) * 25 for _ in range(16)]
        for f in flags:
            f[-1] = 0
        model, curve = duration.train_gru_duration(
            flags, hidden=16, epochs=150, batch_size=4, lr=0.02, clip=1.0,
            truncate=100, seed=0)
        test = ([0] * 7 + [1]) * 12
        trace = duration.hazard_trace(model, test)[8:]   # skip warm-up period
        truth = np.array(test, dtype=bool)[8:]
        assert trace[truth].min() > 0.9
        assert trace[~truth].max() < 0.2
        assert curve[-1] < 0.1

    def test_constant_stay_corpus(self):
        model, _ = duration.train_gru_duration(
            [[0] * 100 for _ in range(8)], hidden=8, epochs=100, batch_size=2,
            lr=0.05, clip=1.0, truncate=100, seed=0)
        trace = duration.hazard_trace(model, [0] * 50)
        assert trace.max() < 0.01

    def test_update_batch_matches_sequential(self):
        from chordlattice import neural
        model = duration.GruDuration(neural.RecurrentModel(
            neural.GruSpec(vocab_size=2, hidden=6, embed_dim=None,
                           out_classes=1, seed=1)))
        states = [model.initial_state(),
                  model.update(model.initial_state(), False),
                  model.update(model.initial_state(), True)]
        flags = [True, False, True]
        batched = model.update_batch(states, flags)
        for st, (parent, f) in zip(batched, zip(states, flags)):
            assert model.hazard(st) == pytest.approx(
                model.hazard(model.update(parent, f)), abs=1e-12)

    def test_save_load_round_trip(self, tmp_path):
        from chordlattice import neural
        model = duration.GruDuration(neural.RecurrentModel(
            neural.GruSpec(vocab_size=2, hidden=4, embed_dim=None,
                           out_classes=1, seed=2)))
        path = tmp_path / 'dur.json'
        model.save(path)
        loaded = duration.GruDuration.load(path)
        trace_a = duration.hazard_trace(model, [0, 1, 0, 0])
        trace_b = duration.hazard_trace(loaded, [0, 1, 0, 0])
        assert np.allclose(trace_a, trace_b, atol=1e-15)


class TestParametricIO:
    def test_geometric_round_trip(self, tmp_path):
        model = duration.GeometricDuration(0.37)
        path = tmp_path / 'geo.json'
        model.save(path)
        loaded = duration.load_parametric(path)
        assert loaded.p == pytest.approx(0.37)

    def test_negbinomial_round_trip(self, tmp_path):
        model = duration.NegBinomialDuration(5, 0.61)
        path = tmp_path / 'nb.json'
        model.save(path)
        loaded = duration.load_parametric(path)
        assert (loaded.n, loaded.p) == (5, pytest.approx(0.61))
