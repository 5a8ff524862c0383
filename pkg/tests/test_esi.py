"""Transformed expectations and the exponential-inequality calculus."""

import numpy as np
import pytest

from fastrates.esi import (
    annealed_expectation,
    check_esi,
    esi_implications,
    esi_weak_transitivity,
    hellinger_expectation,
)
from fastrates.examples import random_log_loss_problem, random_problem
from fastrates.numerics import wdot


class TestTransformedExpectations:
    def test_constant_vector(self):
        p = np.array([0.3, 0.7])
        for eta in (0.1, 1.0, 10.0):
            assert annealed_expectation(p, np.full(2, 1.7), eta) == pytest.approx(1.7)
        assert hellinger_expectation(p, np.zeros(2), 2.0) == pytest.approx(0.0, abs=1e-15)

    def test_two_point_values(self):
        p = np.array([0.5, 0.5])
        u = np.array([0.0, 1.0])
        ann = annealed_expectation(p, u, 1.0)
        he = hellinger_expectation(p, u, 1.0)
        assert ann == pytest.approx(-np.log((1 + np.exp(-1)) / 2), abs=1e-12)
        assert he == pytest.approx((1 - np.exp(-1)) / 2, abs=1e-12)
        assert he <= ann <= 0.5  # plain mean

    def test_small_eta_limit(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = rng.dirichlet(np.ones(5))
            u = rng.uniform(-3, 3, size=5)
            plain = float(np.dot(p, u))
            ann = annealed_expectation(p, u, 1e-8)
            he = hellinger_expectation(p, u, 1e-8)
            assert abs(ann - plain) <= 1e-6 * (1 + abs(plain))
            assert abs(he - plain) <= 1e-6 * (1 + abs(plain))

    def test_sandwich_and_monotonicity(self):
        rng = np.random.default_rng(1)
        etas = np.geomspace(0.01, 50.0, 20)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            p = rng.dirichlet(np.ones(n))
            u = rng.uniform(-2, 4, size=n)
            plain = float(np.dot(p, u))
            prev = np.inf
            for eta in etas:
                ann = annealed_expectation(p, u, eta)
                he = hellinger_expectation(p, u, eta)
                assert he <= ann + 1e-12
                assert ann <= plain + 1e-12
                assert ann <= prev + 1e-10   # non-increasing in eta
                prev = ann

    def test_infinite_values(self):
        p = np.array([0.5, 0.5])
        u = np.array([np.inf, 1.0])
        # exp(-eta*inf) = 0: only the finite branch contributes
        assert annealed_expectation(p, u, 1.0) == pytest.approx(1 + np.log(2))
        assert annealed_expectation(p, np.array([np.inf, np.inf]), 1.0) == np.inf

    def test_eta_must_be_positive(self):
        with pytest.raises(ValueError):
            annealed_expectation(np.array([1.0]), np.array([0.0]), 0.0)
        with pytest.raises(ValueError):
            hellinger_expectation(np.array([1.0]), np.array([0.0]), -1.0)


class TestCheckEsi:
    def test_reflexive(self):
        p = np.array([0.2, 0.8])
        u = np.array([1.0, -2.0])
        s = check_esi(u, u, p, eta=3.0)
        assert s.moment == 1.0 and s.holds

    def test_well_specified_log_loss_moment_is_one(self):
        rng = np.random.default_rng(2)
        prob = random_log_loss_problem(rng)
        fstar = prob.comparator_index
        for f in range(prob.n_predictors):
            s = check_esi(prob.loss_matrix[fstar], prob.loss_matrix[f],
                          prob.probs, eta=1.0, tol=1e-10)
            assert s.holds
            assert s.moment == pytest.approx(1.0, abs=1e-12)

    def test_deterministic_shift_fails(self):
        p = np.array([0.5, 0.5])
        u = np.array([1.0, 2.0])
        s = check_esi(u + 0.1, u, p, eta=2.0)
        assert not s.holds
        assert s.moment == pytest.approx(np.exp(0.2), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            check_esi(np.zeros(3), np.zeros(3), np.array([0.5, 0.5]), 1.0)


class TestWeakTransitivity:
    def test_zero_case(self):
        p = np.array([1.0])
        z = np.zeros(1)
        s1 = check_esi(z, z, p, eta=1.0)
        s2 = check_esi(z, z, p, eta=1.0)
        out = esi_weak_transitivity(s1, s2)
        assert out.holds and out.eta == 0.5

    def test_product_space_bernoulli_sums(self):
        # two independent centered excess losses on the 4-point product space
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.uniform(0.2, 2.0)
            pa = rng.uniform(0.2, 0.8)
            # choose b so that E[exp(U)] = 1 at eta = 1: U in {-a, b}
            b = np.log((1 - pa * np.exp(-a)) / (1 - pa))
            u_vals = np.array([-a, b])
            marg = np.array([pa, 1 - pa])
            joint = np.outer(marg, marg).reshape(-1)
            U = np.repeat(u_vals, 2)
            V = np.tile(u_vals, 2)
            s1 = check_esi(U, np.zeros(4), joint, eta=1.0)
            s2 = check_esi(V, np.zeros(4), joint, eta=1.0)
            assert s1.holds and s2.holds
            out = esi_weak_transitivity(s1, s2)
            assert out.holds and out.eta == 0.5

    def test_halving_is_necessary(self):
        # search for a witness: both inputs hold at eta, the sum fails at
        # the full rate but holds at the halved one
        rng = np.random.default_rng(4)
        found = False
        for _ in range(500):
            p0 = rng.uniform(0.05, 0.95)
            a = rng.uniform(0.5, 3.0)
            b = np.log((1 - p0 * np.exp(-a)) / (1 - p0))
            u = np.array([-a, b])
            p = np.array([p0, 1 - p0])
            s = check_esi(u, np.zeros(2), p, eta=1.0)
            if not s.holds:
                continue
            # perfectly correlated copy: U + V = 2U
            full = check_esi(2 * u, np.zeros(2), p, eta=1.0)
            half = check_esi(2 * u, np.zeros(2), p, eta=0.5)
            if not full.holds and half.holds:
                found = True
                break
        assert found, "no witness for the necessity of rate halving"

    def test_mismatched_eta_rejected(self):
        p = np.array([0.5, 0.5])
        s1 = check_esi(np.zeros(2), np.zeros(2), p, eta=1.0)
        s2 = check_esi(np.zeros(2), np.zeros(2), p, eta=2.0)
        with pytest.raises(ValueError):
            esi_weak_transitivity(s1, s2)


class TestImplications:
    def test_degenerate(self):
        p = np.array([0.5, 0.5])
        u = np.array([1.0, 2.0])
        s = check_esi(u, u, p, eta=1.0)
        out = esi_implications(s, K=1.0)
        assert out["mean_gap"] == 0.0
        assert out["tail_probability"] == 0.0

    def test_tail_bound_at_confidence_level(self):
        rng = np.random.default_rng(5)
        K = np.log(1 / 0.05)
        for _ in range(50):
            prob = random_problem(rng, 4, 2)
            L = prob.excess_loss(1)
            s = check_esi(-L, np.zeros(4), prob.probs, eta=2.0)
            if not s.holds:
                continue
            out = esi_implications(s, K=K)
            assert out["tail_bound"] == pytest.approx(0.05)
            assert out["tail_probability"] <= 0.05 + 1e-12

    def test_exhaustive_consistency(self):
        """Whenever the moment check passes, both implications pass."""
        rng = np.random.default_rng(6)
        for _ in range(200):
            n = int(rng.integers(2, 5))
            p = rng.dirichlet(np.ones(n))
            lhs = rng.uniform(-2, 2, size=n)
            rhs = rng.uniform(-2, 2, size=n)
            s = check_esi(lhs, rhs, p, eta=float(rng.uniform(0.1, 3.0)))
            if s.holds:
                for K in (0.5, 1.0, 3.0):
                    esi_implications(s, K=K)  # raises on violation

    def test_requires_holding_statement(self):
        p = np.array([0.5, 0.5])
        s = check_esi(np.array([1.0, 1.0]), np.zeros(2), p, eta=1.0)
        assert not s.holds
        with pytest.raises(ValueError):
            esi_implications(s, K=1.0)


def test_mean_ordering_under_esi():
    """holds implies E[lhs] <= E[rhs], checked over random instances."""
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(2, 6))
        p = rng.dirichlet(np.ones(n))
        lhs = rng.normal(size=n)
        rhs = rng.normal(size=n)
        s = check_esi(lhs, rhs, p, eta=float(rng.uniform(0.2, 4.0)))
        if s.holds:
            assert wdot(p, lhs) <= wdot(p, rhs) + 1e-10
