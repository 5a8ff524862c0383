"""Tempered posteriors, penalized selection, and information complexity."""

import numpy as np
import pytest

from fastrates.estimators import (
    aggregate_priors,
    bayes_ic_marginal_form,
    check_aggregation_overhead,
    erm,
    generalized_bayes_posterior,
    ggv_prior_mass_bound,
    ic_minimizer_check,
    information_complexity,
    two_part_mdl,
    two_part_mdl_approx,
)
from fastrates.examples import random_log_loss_problem, random_problem
from fastrates.problems import FiniteProblem, log_loss_problem


def uniform(n):
    return np.full(n, 1.0 / n)


class TestBayesPosterior:
    def test_empty_sample_returns_prior(self):
        rng = np.random.default_rng(0)
        prob = random_problem(rng)
        prior = rng.dirichlet(np.ones(prob.n_predictors))
        np.testing.assert_allclose(
            generalized_bayes_posterior(prob, prior, [], 1.0), prior)

    def test_hand_computed_weights(self):
        # cumulative losses (0, log 2) at eta 1 with a uniform prior -> (2/3, 1/3)
        loss = np.array([[0.0], [np.log(2.0)]])
        prob = FiniteProblem(probs=np.array([1.0]), loss_matrix=loss)
        post = generalized_bayes_posterior(prob, uniform(2), [0], 1.0)
        np.testing.assert_allclose(post, [2 / 3, 1 / 3], atol=1e-14)

    def test_eta_one_log_loss_is_standard_bayes(self):
        rng = np.random.default_rng(1)
        prob = random_log_loss_problem(rng, n_outcomes=3, n_predictors=3)
        prior = rng.dirichlet(np.ones(3))
        sample = [0, 2, 1]
        post = generalized_bayes_posterior(prob, prior, sample, 1.0)
        lik = np.prod(prob.densities[:, sample], axis=1)
        expected = prior * lik / np.dot(prior, lik)
        np.testing.assert_allclose(post, expected, atol=1e-12)

    def test_sequential_consistency(self):
        """Batch posterior equals chained one-step updates."""
        rng = np.random.default_rng(2)
        for _ in range(20):
            prob = random_problem(rng, 4, 5)
            prior = rng.dirichlet(np.ones(5))
            sample = rng.integers(0, 4, size=6)
            eta = float(rng.uniform(0.1, 3.0))
            batch = generalized_bayes_posterior(prob, prior, sample, eta)
            chain = prior
            for z in sample:
                chain = generalized_bayes_posterior(prob, chain, [z], eta)
            np.testing.assert_allclose(batch, chain, atol=1e-12)

    def test_zero_normalizer_raises(self):
        loss = np.array([[np.inf, 0.0], [1.0, 1.0]])
        prob = FiniteProblem(probs=np.array([0.5, 0.5]), loss_matrix=loss)
        with pytest.raises(ValueError):
            generalized_bayes_posterior(prob, np.array([1.0, 0.0]), [0], 1.0)

    def test_infinite_loss_gets_zero_weight(self):
        loss = np.array([[np.inf, 0.0], [1.0, 1.0]])
        prob = FiniteProblem(probs=np.array([0.5, 0.5]), loss_matrix=loss)
        post = generalized_bayes_posterior(prob, uniform(2), [0], 1.0)
        np.testing.assert_allclose(post, [0.0, 1.0])


class TestTwoPart:
    def test_uniform_prior_is_erm(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            prob = random_problem(rng, int(rng.integers(2, 5)), int(rng.integers(2, 6)))
            sample = rng.integers(0, prob.n_outcomes, size=int(rng.integers(1, 6)))
            eta = float(rng.uniform(0.1, 5.0))
            assert two_part_mdl(prob, uniform(prob.n_predictors), sample, eta) == \
                erm(prob, sample)

    def test_large_eta_ignores_prior(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            prob = random_problem(rng, 3, 4)
            prior = rng.dirichlet(np.ones(4))
            sample = rng.integers(0, 3, size=4)
            assert two_part_mdl(prob, prior, sample, 1e9) == erm(prob, sample)

    def test_prior_breaks_ties(self):
        loss = np.array([[1.0, 1.0], [1.0, 1.0]])
        prob = FiniteProblem(probs=np.array([0.5, 0.5]), loss_matrix=loss)
        assert two_part_mdl(prob, np.array([0.9, 0.1]), [0, 1], 1.0) == 0
        assert two_part_mdl(prob, np.array([0.1, 0.9]), [0, 1], 1.0) == 1

    def test_approx_rule_picks_earlier_index(self):
        # objectives (1.4, 1.0): within 1/n of the min at n = 2 -> index 0
        loss = np.array([[0.7, 0.7], [0.5, 0.5]])
        prob = FiniteProblem(probs=np.array([0.5, 0.5]), loss_matrix=loss)
        assert two_part_mdl(prob, uniform(2), [0, 1], 1e9) == 1
        assert two_part_mdl_approx(prob, uniform(2), [0, 1], 1e9) == 0


class TestErm:
    def test_boundary_mle(self):
        thetas = np.arange(0.1, 0.95, 0.1)
        dens = np.stack([1 - thetas, thetas], axis=1)
        prob = log_loss_problem(dens, true_probs=np.array([0.5, 0.5]))
        # all-ones sample: the largest available success probability wins
        assert prob.predictor_labels[erm(prob, [1, 1, 1, 1])] == \
            prob.predictor_labels[-1]

    def test_single_observation(self):
        loss = np.array([[3.0, 0.0], [1.0, 1.0]])
        prob = FiniteProblem(probs=np.array([0.5, 0.5]), loss_matrix=loss)
        assert erm(prob, [1]) == 0
        assert erm(prob, [0]) == 1


class TestInformationComplexity:
    def test_point_mass_on_comparator(self):
        rng = np.random.default_rng(5)
        prob = random_problem(rng, 3, 4)
        fstar = prob.comparator_index
        prior = np.array([0.4, 0.3, 0.2, 0.1])
        sample = [0, 1, 2]
        point = np.eye(4)[fstar]
        ic = information_complexity(prob, prior, point, sample, eta=2.0)
        assert ic.empirical_excess_term == 0.0
        assert ic.kl_term == pytest.approx(-np.log(prior[fstar]) / (2.0 * 3))
        assert ic.total == ic.empirical_excess_term + ic.kl_term

    def test_posterior_equal_prior_zero_kl(self):
        rng = np.random.default_rng(6)
        prob = random_problem(rng, 3, 3)
        sample = [1, 2]
        ic = information_complexity(prob, uniform(3), uniform(3), sample, eta=1.0)
        assert ic.kl_term == 0.0

    def test_off_support_posterior_flagged(self):
        rng = np.random.default_rng(7)
        prob = random_problem(rng, 3, 3)
        prior = np.array([0.5, 0.5, 0.0])
        post = np.array([0.0, 0.0, 1.0])
        ic = information_complexity(prob, prior, post, [0], eta=1.0)
        assert ic.kl_term == np.inf

    def test_bayes_ic_equals_marginal_form(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            prob = random_problem(rng, int(rng.integers(2, 5)), int(rng.integers(2, 5)))
            prior = rng.dirichlet(np.ones(prob.n_predictors))
            sample = rng.integers(0, prob.n_outcomes, size=int(rng.integers(1, 5)))
            eta = float(rng.uniform(0.1, 3.0))
            post = generalized_bayes_posterior(prob, prior, sample, eta)
            ic = information_complexity(prob, prior, post, sample, eta)
            marginal = bayes_ic_marginal_form(prob, prior, sample, eta)
            assert ic.total == pytest.approx(marginal, abs=1e-10)


class TestIcMinimizerCheck:
    def test_exhaustive_small_instance(self):
        rng = np.random.default_rng(9)
        prob = random_problem(rng, 3, 3)
        rep = ic_minimizer_check(prob, uniform(3), [0, 2], eta=0.7, n_random=100, seed=1)
        assert rep["worst_margin"] >= -1e-10

    def test_point_mass_prior_invariant_in_eta(self):
        prob = FiniteProblem(probs=np.array([0.5, 0.5]),
                             loss_matrix=np.array([[0.3, 0.4], [1.0, 2.0]]))
        prior = np.array([1.0, 0.0])
        vals = [bayes_ic_marginal_form(prob, prior, [0, 1], eta) for eta in (0.1, 1.0, 5.0)]
        np.testing.assert_allclose(vals, vals[0], atol=1e-12)

    def test_ic_non_increasing_in_eta(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            prob = random_problem(rng, 3, 4)
            prior = rng.dirichlet(np.ones(4))
            sample = rng.integers(0, 3, size=3)
            etas = np.geomspace(0.05, 5.0, 30)
            vals = [bayes_ic_marginal_form(prob, prior, sample, e) for e in etas]
            assert np.all(np.diff(vals) <= 1e-10)


class TestAggregation:
    def test_two_equal_models_uniform_overhead(self):
        """With two identical single-predictor blocks the overhead is log(2)/(n eta)."""
        loss = np.array([[0.5, 1.0], [0.5, 1.0]])
        prob = FiniteProblem(probs=np.array([0.5, 0.5]), loss_matrix=loss)
        blocks = [([0], [1.0]), ([1], [1.0])]
        rep = check_aggregation_overhead(prob, blocks, [0.5, 0.5], [0, 1, 1], eta=2.0)
        assert rep["overhead_per_sample"] == pytest.approx(np.log(2) / (3 * 2.0))
        assert rep["holds"]

    def test_single_model_zero_overhead(self):
        rng = np.random.default_rng(11)
        prob = random_problem(rng, 3, 3)
        blocks = [([0, 1, 2], uniform(3))]
        rep = check_aggregation_overhead(prob, blocks, [1.0], [0, 1], eta=1.0)
        assert rep["overhead"] == 0.0
        assert rep["holds"]

    def test_random_block_structures(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            sizes = rng.integers(1, 4, size=3)
            total = int(sizes.sum())
            prob = random_problem(rng, 3, total)
            blocks, start = [], 0
            for s in sizes:
                idx = list(range(start, start + int(s)))
                blocks.append((idx, rng.dirichlet(np.ones(int(s)))))
                start += int(s)
            q = rng.dirichlet(np.ones(3))
            sample = rng.integers(0, 3, size=int(rng.integers(1, 4)))
            rep = check_aggregation_overhead(prob, blocks, q, sample,
                                             eta=float(rng.uniform(0.2, 2.0)))
            assert rep["holds"]

    def test_overlapping_blocks_rejected(self):
        with pytest.raises(ValueError):
            aggregate_priors([([0, 1], [0.5, 0.5]), ([1], [1.0])], [0.5, 0.5], 3)


class TestGgvBound:
    def test_point_mass_on_comparator(self):
        rng = np.random.default_rng(13)
        prob = random_problem(rng, 3, 3)
        prior = np.eye(3)[prob.comparator_index]
        rep = ggv_prior_mass_bound(prob, prior, eps=0.3, C=0.0, eta=1.0, n=3)
        assert rep["hypothesis_holds"]
        assert rep["expected_ic"] <= rep["bound"] + 1e-10
        assert rep["exact"]

    def test_exact_small_log_loss_model(self):
        rng = np.random.default_rng(14)
        prob = random_log_loss_problem(rng, n_outcomes=3, n_predictors=4)
        rep = ggv_prior_mass_bound(prob, uniform(4), eps=0.9, C=2.0, eta=0.5, n=3)
        assert rep["hypothesis_holds"]
        assert rep["holds"]

    def test_hypothesis_failure_reported(self):
        loss = np.array([[0.0, 0.0], [5.0, 5.0]])
        prob = FiniteProblem(probs=np.array([0.5, 0.5]), loss_matrix=loss)
        rep = ggv_prior_mass_bound(prob, np.array([1e-4, 1 - 1e-4]),
                                   eps=0.1, C=0.01, eta=1.0, n=4)
        assert not rep["hypothesis_holds"]
        assert rep["verdict"] == "hypothesis not satisfied"
