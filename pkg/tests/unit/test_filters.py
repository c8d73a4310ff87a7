import logging

import numpy as np
import pytest
from scipy import integrate, stats

from mpfilter.config import settings
from mpfilter.exceptions.filter_exceptions import (
    ConfigurationError,
    ContractError,
    DegenerateWeightsError,
)
from mpfilter.services.filter_service import (
    effective_sample_size,
    estimate,
    maximal_coupling_resample,
    multinomial_resample,
    normalize_log_weights,
    resolve_test_functions,
    run_cpf,
    run_pf,
)
from tests.conftest import make_dataset


class TestWeights:
    def test_normalize_log_weights(self):
        w = normalize_log_weights(np.array([0.0, np.log(3.0), -np.inf]))
        np.testing.assert_allclose(w, [0.25, 0.75, 0.0])

    def test_huge_log_weights_do_not_overflow(self):
        w = normalize_log_weights(np.array([1000.0, 1000.0]))
        np.testing.assert_allclose(w, [0.5, 0.5])

    def test_all_zero_weights_abort(self):
        with pytest.raises(DegenerateWeightsError) as exc_info:
            normalize_log_weights(np.full(3, -np.inf), unit_time=2)
        assert exc_info.value.unit_time == 2

    def test_effective_sample_size(self):
        assert effective_sample_size(np.zeros(10)) == pytest.approx(10.0)
        assert effective_sample_size(np.array([0.0, -np.inf])) == pytest.approx(1.0)

    def test_estimate_with_test_functions(self):
        w = np.array([0.2, 0.8])
        x = np.array([1.0, -2.0])
        assert estimate(w, x) == pytest.approx(0.2 - 1.6)
        assert estimate(w, x, "square") == pytest.approx(0.2 + 3.2)
        assert estimate(w, x, lambda v: v + 1) == pytest.approx(0.2 * 2 - 0.8)

    def test_unknown_test_function_raises(self):
        with pytest.raises(ConfigurationError):
            resolve_test_functions(["cube"])
        with pytest.raises(ConfigurationError):
            resolve_test_functions([])


class TestResampling:
    def test_multinomial_frequencies(self):
        w = np.array([0.1, 0.2, 0.3, 0.4])
        idx = multinomial_resample(w, 20000, np.random.default_rng(0))
        counts = np.bincount(idx, minlength=4)
        assert stats.chisquare(counts, 20000 * w).pvalue > 1e-3

    def test_multinomial_never_picks_zero_weight(self):
        w = np.array([0.0, 0.5, 0.0, 0.5])
        idx = multinomial_resample(w, 5000, np.random.default_rng(1))
        assert set(np.unique(idx)) <= {1, 3}

    def test_maximal_coupling_marginals_and_meeting_rate(self):
        W1 = np.array([0.4, 0.3, 0.2, 0.1])
        W2 = np.array([0.1, 0.2, 0.3, 0.4])
        n = 20000
        a1, a2, met = maximal_coupling_resample(W1, W2, n, np.random.default_rng(5))
        for a, w in ((a1, W1), (a2, W2)):
            counts = np.bincount(a, minlength=4)
            assert stats.chisquare(counts, n * w).pvalue > 1e-3
        # overlap sum(min(W1, W2)) = 0.6
        assert met.mean() == pytest.approx(0.6, abs=0.02)
        np.testing.assert_array_equal(a1[met], a2[met])

    def test_identical_weights_always_meet(self):
        W = np.array([0.5, 0.25, 0.25])
        a1, a2, met = maximal_coupling_resample(W, W, 100, np.random.default_rng(2))
        assert met.all()
        np.testing.assert_array_equal(a1, a2)

    def test_disjoint_supports_never_meet(self):
        W1 = np.array([0.5, 0.5, 0.0, 0.0])
        W2 = np.array([0.0, 0.0, 0.3, 0.7])
        n = 20000
        a1, a2, met = maximal_coupling_resample(W1, W2, n, np.random.default_rng(6))
        assert not met.any()
        assert set(np.unique(a1)) <= {0, 1}
        assert set(np.unique(a2)) <= {2, 3}
        for counts, w in ((np.bincount(a1)[:2], W1[:2]), (np.bincount(a2 - 2), W2[2:])):
            assert stats.chisquare(counts, n * w).pvalue > 1e-3
        # residual indices are drawn independently of each other
        table = np.zeros((2, 2))
        np.add.at(table, (a1, a2 - 2), 1)
        assert stats.chi2_contingency(table).pvalue > 1e-3

    def test_unnormalized_weights_rejected(self):
        with pytest.raises(ContractError):
            maximal_coupling_resample(
                np.array([0.5, 0.6]), np.array([0.5, 0.5]), 4, np.random.default_rng()
            )


class TestRunPf:
    def test_deterministic_under_seed(self, ou_spec, ou_dataset):
        a = run_pf(ou_spec, 2, 50, ou_dataset, 3, seed=7)
        b = run_pf(ou_spec, 2, 50, ou_dataset, 3, seed=7)
        np.testing.assert_array_equal(a.estimates["identity"], b.estimates["identity"])
        c = run_pf(ou_spec, 2, 50, ou_dataset, 3, seed=8)
        assert not np.array_equal(a.estimates["identity"], c.estimates["identity"])

    def test_cost_counts_euler_substeps(self, ou_spec, ou_dataset):
        out = run_pf(ou_spec, 3, 40, ou_dataset, 3, seed=1)
        assert out.cost_steps == 3 * 40 * 8
        np.testing.assert_array_equal(out.cumulative_cost, [320, 640, 960])
        np.testing.assert_array_equal(out.times, [1, 2, 3])

    def test_several_test_functions(self, ou_spec, ou_dataset):
        out = run_pf(ou_spec, 1, 30, ou_dataset, 2, ["identity", "square"], seed=1)
        assert set(out.estimates) == {"identity", "square"}
        assert np.all(out.estimates["square"] >= out.estimates["identity"] ** 2 - 1e-12)

    def test_uninformative_weights_reproduce_the_prior(self, prior_spec):
        dataset = make_dataset([0.5, 1.5], [3.0, -3.0], horizon_T=2)
        out = run_pf(prior_spec, 2, 4000, dataset, 2, seed=3)
        # X_2 ~ N(1, 2): standard error of the mean is 0.022
        assert out.estimate_at(2) == pytest.approx(1.0, abs=0.12)

    def test_log_normalizer_with_constant_potential(self, prior_spec):
        out = run_pf(prior_spec, 2, 25, make_dataset(horizon_T=3), 3, seed=0)
        np.testing.assert_allclose(out.log_normalizer, [-2.0, -4.0, -6.0])

    def test_normalizing_constant_is_unbiased(self, ou_spec, sparse_dataset):
        def normalizers(N, seeds):
            return np.array(
                [
                    run_pf(ou_spec, 2, N, sparse_dataset, 2, seed=s).log_normalizer[-1]
                    for s in seeds
                ]
            )

        small = np.exp(normalizers(20, range(400)))
        large = np.exp(normalizers(50000, range(1000, 1004)))
        error = np.hypot(stats.sem(small), stats.sem(large))
        assert abs(small.mean() - large.mean()) < 4 * error

    def test_step_diagnostics_only_at_debug_level(
        self, mocker, caplog, ou_spec, ou_dataset
    ):
        ess = mocker.patch(
            "mpfilter.services.filter_service.effective_sample_size",
            wraps=effective_sample_size,
        )
        name = "mpfilter.services.filter_service"
        caplog.set_level(logging.INFO, logger=name)
        run_pf(ou_spec, 1, 10, ou_dataset, 3, seed=1)
        assert ess.call_count == 0
        caplog.set_level(logging.DEBUG, logger=name)
        run_pf(ou_spec, 1, 10, ou_dataset, 3, seed=1)
        assert ess.call_count == 3

    def test_chunking_does_not_change_results(self, monkeypatch, ou_spec, ou_dataset):
        whole = run_pf(ou_spec, 2, 30, ou_dataset, 3, seed=4)
        monkeypatch.setattr(settings, "chunk_particles", 7)
        chunked = run_pf(ou_spec, 2, 30, ou_dataset, 3, seed=4)
        np.testing.assert_allclose(
            chunked.estimates["identity"], whole.estimates["identity"], rtol=1e-14
        )

    def test_terminal_cloud_keeps_paths_when_small(self, ou_spec, ou_dataset):
        out = run_pf(ou_spec, 2, 10, ou_dataset, 2, seed=1)
        assert out.terminal.current.states.shape == (10, 5)
        assert out.terminal.previous.states.shape == (10, 5)
        np.testing.assert_array_equal(
            out.terminal.previous.endpoints, out.terminal.current.starts
        )
        assert out.terminal.estimate() == pytest.approx(out.estimate_at(2))

    def test_paths_dropped_above_storage_limit(self, monkeypatch, ou_spec, ou_dataset):
        monkeypatch.setattr(settings, "max_stored_states", 10)
        out = run_pf(ou_spec, 2, 10, ou_dataset, 2, seed=1)
        assert out.terminal.current is None
        assert len(out.terminal) == 10

    def test_invalid_arguments(self, ou_spec, ou_dataset):
        with pytest.raises(ConfigurationError):
            run_pf(ou_spec, 2, 0, ou_dataset, 3)
        with pytest.raises(ConfigurationError):
            run_pf(ou_spec, 2, 10, ou_dataset, 4)
        with pytest.raises(ConfigurationError):
            run_pf(ou_spec, 2, 10, ou_dataset, 0)


class TestRunCpf:
    def test_cost_counts_both_levels(self, ou_spec, ou_dataset):
        out = run_cpf(ou_spec, 3, 20, ou_dataset, 2, seed=1)
        assert out.cost_steps == 2 * 20 * (8 + 4)
        assert len(out.meet_rates) == 1
        assert out.coarse_terminal is not None

    def test_deterministic_paths_give_zero_difference(
        self, frozen_spec, sparse_dataset
    ):
        out = run_cpf(frozen_spec, 2, 16, sparse_dataset, 2, seed=5)
        np.testing.assert_array_equal(out.estimates["identity"], 0.0)
        assert out.meet_rates == [1.0]

    def test_level_zero_raises(self, ou_spec, ou_dataset):
        with pytest.raises(ConfigurationError):
            run_cpf(ou_spec, 0, 10, ou_dataset, 1)

    def test_difference_shrinks_with_level(self, ou_spec, ou_dataset):
        coarse = [
            run_cpf(ou_spec, 1, 200, ou_dataset, 3, seed=s).estimate_at(3)
            for s in range(10)
        ]
        fine = [
            run_cpf(ou_spec, 5, 200, ou_dataset, 3, seed=s).estimate_at(3)
            for s in range(10)
        ]
        assert np.mean(np.square(fine)) < np.mean(np.square(coarse))


@pytest.mark.slow
class TestFilterAccuracy:
    def test_one_step_posterior_mean(self, ou_spec):
        # level 0, one unit: x_1 ~ N(1 - theta_b, 1), one event at s = 0.5
        dataset = make_dataset([0.5], [0.8], horizon_T=1)
        b, lam = 0.98, 3.5

        def density(x):
            x_s = 0.5 * (1.0 + x)
            return (
                stats.norm.pdf(x, 1.0 - b, 1.0)
                * np.exp(-lam * abs(x))
                * stats.norm.pdf(0.8, x_s, 1.0)
                * lam
                * abs(x_s)
            )

        def integral(fn):
            return integrate.quad(fn, -12.0, 12.0, points=[-1.0, 0.0], limit=200)[0]

        expected = integral(lambda x: x * density(x)) / integral(density)
        out = run_pf(ou_spec, 0, 10**6, dataset, 1, seed=5, quadrature="right")
        mean = out.estimate_at(1)
        w = out.terminal.normalized_weights()
        error = np.sqrt(np.sum(w * w * (out.terminal.endpoints - mean) ** 2))
        assert abs(mean - expected) < 4 * error

    def test_coupled_difference_matches_independent_filters(
        self, ou_spec, ou_dataset
    ):
        diffs = np.array(
            [
                run_cpf(ou_spec, 3, 500, ou_dataset, 3, seed=s).estimate_at(3)
                for s in range(200)
            ]
        )

        def filtered(level):
            return np.array(
                [
                    run_pf(ou_spec, level, 200000, ou_dataset, 3, seed=100 + s)
                    .estimate_at(3)
                    for s in range(8)
                ]
            )

        fine, coarse = filtered(3), filtered(2)
        error = np.sqrt(
            stats.sem(diffs) ** 2 + stats.sem(fine) ** 2 + stats.sem(coarse) ** 2
        )
        assert abs(diffs.mean() - (fine.mean() - coarse.mean())) < 4 * error
