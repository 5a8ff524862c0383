"""Simplex projection: optimizer correctness against grid oracles and the
certified moment/dominance properties."""

import numpy as np
import pytest

from fastrates.divergences import cu_prime_constant
from fastrates.esi import annealed_expectation
from fastrates.examples import random_nonnegative_problem, random_problem
from fastrates.grip import (
    compute_grip,
    compute_mini_grip,
    grip_objective,
    mix_loss,
    verify_grip_central,
    verify_minigrip_to_grip,
    verify_ppc_smaller_loss,
)
from fastrates.numerics import wdot
from fastrates.problems import FiniteProblem


def grid_oracle_2(problem, eta, step=1e-4):
    """Brute-force mixture objective over alpha for two predictors."""
    alphas = np.arange(0.0, 1.0 + step / 2, step)
    K = np.exp(-eta * problem.loss_matrix)
    mixed = np.stack([1 - alphas, alphas], 1) @ K
    obj = -(problem.probs[None, :] * np.log(mixed)).sum(axis=1) / eta
    return float(obj.min())


def grid_oracle_3(problem, eta, step=1e-3):
    """Brute-force mixture objective over the 2-simplex."""
    ticks = np.arange(0.0, 1.0 + step / 2, step)
    a, b = np.meshgrid(ticks, ticks, indexing="ij")
    keep = a + b <= 1.0 + 1e-12
    Q = np.stack([a[keep], b[keep], 1.0 - a[keep] - b[keep]], axis=1)
    K = np.exp(-eta * problem.loss_matrix)
    mixed = Q @ K
    obj = -(problem.probs[None, :] * np.log(np.maximum(mixed, 1e-300))).sum(axis=1) / eta
    return float(obj.min())


class TestMixLoss:
    def test_point_mass_reproduces_loss(self):
        rng = np.random.default_rng(0)
        prob = random_problem(rng, 4, 3)
        for f in range(3):
            np.testing.assert_allclose(
                mix_loss(prob, np.eye(3)[f], 1.3), prob.loss_matrix[f], atol=1e-12)

    def test_identical_predictors(self):
        loss = np.array([[1.0, 2.0], [1.0, 2.0]])
        prob = FiniteProblem(probs=np.array([0.5, 0.5]), loss_matrix=loss)
        np.testing.assert_allclose(mix_loss(prob, [0.3, 0.7], 2.0), [1.0, 2.0],
                                   atol=1e-12)

    def test_hand_value(self):
        loss = np.array([[0.0], [np.log(4.0)]])
        prob = FiniteProblem(probs=np.array([1.0]), loss_matrix=loss)
        m = mix_loss(prob, [0.5, 0.5], 1.0)
        assert m[0] == pytest.approx(-np.log(5 / 8), abs=1e-12)

    def test_all_infinite_entry(self):
        loss = np.array([[np.inf, 0.0], [np.inf, 1.0], [0.0, 0.0]])
        prob = FiniteProblem(probs=np.array([0.5, 0.5]), loss_matrix=loss)
        m = mix_loss(prob, [0.5, 0.5, 0.0], 1.0)
        assert np.isposinf(m[0])

    def test_pointwise_bounds(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            prob = random_problem(rng, 4, 4)
            Q = rng.dirichlet(np.ones(4))
            m = mix_loss(prob, Q, float(rng.uniform(0.2, 3.0)))
            assert np.all(m >= prob.loss_matrix.min(axis=0) - 1e-10)
            assert np.all(m <= prob.loss_matrix.max(axis=0) + 1e-10)


class TestComputeGrip:
    def test_single_predictor(self):
        prob = FiniteProblem(probs=np.array([0.4, 0.6]),
                             loss_matrix=np.array([[1.0, 3.0]]))
        res = compute_grip(prob, 1.0)
        assert res.opt_gap == 0.0
        np.testing.assert_allclose(res.grip_loss, [1.0, 3.0])

    def test_matches_grid_oracle_two(self):
        rng = np.random.default_rng(2)
        for _ in range(40):
            prob = random_problem(rng, int(rng.integers(2, 6)), 2)
            eta = float(rng.uniform(0.2, 3.0))
            res = compute_grip(prob, eta)
            assert abs(res.objective - grid_oracle_2(prob, eta)) <= 1e-6

    def test_matches_grid_oracle_three(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            prob = random_problem(rng, int(rng.integers(2, 5)), 3)
            eta = float(rng.uniform(0.2, 3.0))
            res = compute_grip(prob, eta)
            oracle = grid_oracle_3(prob, eta)
            assert res.objective <= oracle + 1e-8
            assert oracle <= res.objective + 1e-5

    def test_objective_below_every_risk(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            prob = random_problem(rng, 4, 4)
            res = compute_grip(prob, 1.0)
            risks = [wdot(prob.probs, prob.loss_matrix[f]) for f in range(4)]
            assert res.objective <= min(risks) + res.opt_gap + 1e-10

    def test_infinite_losses_handled(self):
        loss = np.array([[np.inf, 0.0], [0.0, np.inf], [0.5, 0.5]])
        prob = FiniteProblem(probs=np.array([0.5, 0.5]), loss_matrix=loss)
        res = compute_grip(prob, 1.0)
        assert np.isfinite(res.objective)
        assert res.converged

    def test_objective_convex_in_mixture(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            prob = random_problem(rng, 3, 4)
            eta = float(rng.uniform(0.3, 2.0))
            q1 = rng.dirichlet(np.ones(4))
            q2 = rng.dirichlet(np.ones(4))
            lam = float(rng.uniform(0.1, 0.9))
            mix = lam * q1 + (1 - lam) * q2
            assert grip_objective(prob, mix, eta) <= \
                lam * grip_objective(prob, q1, eta) + \
                (1 - lam) * grip_objective(prob, q2, eta) + 1e-12


class TestMiniGrip:
    def test_comparator_itself(self):
        rng = np.random.default_rng(6)
        prob = random_problem(rng, 3, 3)
        res = compute_mini_grip(prob, prob.comparator_index, 1.0)
        assert res.alpha == 0.0

    def test_dominated_predictor_gets_zero(self):
        loss = np.array([[0.0, 0.0], [1.0, 1.0]])
        prob = FiniteProblem(probs=np.array([0.5, 0.5]), loss_matrix=loss)
        res = compute_mini_grip(prob, 1, 1.0)
        assert res.alpha == 0.0
        assert res.objective == pytest.approx(0.0, abs=1e-12)

    def test_agrees_with_full_grip_on_pairs(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            prob = random_problem(rng, 4, 2)
            eta = float(rng.uniform(0.2, 3.0))
            other = 1 - prob.comparator_index
            mini = compute_mini_grip(prob, other, eta)
            full = compute_grip(prob, eta)
            assert abs(mini.objective - full.objective) <= 1e-7


class TestGripCentral:
    def test_exact_single(self):
        prob = FiniteProblem(probs=np.array([1.0]), loss_matrix=np.array([[2.0]]))
        rep = verify_grip_central(prob, compute_grip(prob, 1.0))
        assert rep["max_moment"] == pytest.approx(1.0, abs=1e-12)

    def test_random_instances(self):
        rng = np.random.default_rng(8)
        for _ in range(40):
            prob = random_problem(rng, int(rng.integers(2, 5)), int(rng.integers(2, 5)))
            eta = float(rng.uniform(0.2, 3.0))
            res = compute_grip(prob, eta, tol=1e-8)
            rep = verify_grip_central(prob, res)
            assert rep["holds"]
            assert rep["max_moment"] <= 1.0 + 1e-6

    def test_mean_dominance(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            prob = random_problem(rng, 4, 4)
            res = compute_grip(prob, 1.0)
            fstar_risk = wdot(prob.probs, prob.loss_matrix[prob.comparator_index])
            assert res.objective <= fstar_risk + res.opt_gap + 1e-10


class TestDerivedInequalities:
    def test_minigrip_to_grip(self):
        rng = np.random.default_rng(10)
        for _ in range(25):
            prob = random_problem(rng, 4, 4)
            eta = float(rng.uniform(0.3, 2.0))
            for f in range(prob.n_predictors):
                rep = verify_minigrip_to_grip(prob, f, eta)
                assert rep["holds"]

    def test_minigrip_to_grip_pairs_reduce_to_monotonicity(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            prob = random_problem(rng, 3, 2)
            f = 1 - prob.comparator_index
            rep = verify_minigrip_to_grip(prob, f, 1.0)
            assert rep["holds"]

    def test_comparator_case_nonnegative_rhs(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            prob = random_problem(rng, 3, 3)
            rep = verify_minigrip_to_grip(prob, prob.comparator_index, 1.0)
            assert rep["lhs"] == pytest.approx(0.0, abs=1e-12)
            assert rep["holds"]

    def test_risk_from_annealed_gap(self):
        """Excess risk bounded by the scaled annealed gap to the projection,
        on instances with a certified truncated-mean fraction."""
        rng = np.random.default_rng(13)
        checked = 0
        for _ in range(40):
            prob = random_problem(rng, 4, 4)
            L = np.array([prob.excess_loss(f) for f in range(4)])
            u = float(L.max()) + 0.1
            eta_bar = 1.0
            from fastrates.conditions import check_strong_central, check_witness

            if not check_strong_central(prob, eta_bar).holds:
                continue
            if not check_witness(prob, u, 1.0).holds:
                continue
            full = compute_grip(prob, eta_bar)
            for eta in (0.1 * eta_bar, 0.4 * eta_bar):
                c2u = cu_prime_constant(eta, eta_bar, 2 * u, 1.0)
                for f in range(4):
                    xs = wdot(prob.probs, L[f])
                    ann = annealed_expectation(
                        prob.probs, prob.loss_matrix[f] - full.grip_loss, eta)
                    assert xs <= c2u * (ann + full.opt_gap) + 1e-9
                    checked += 1
        assert checked >= 40

    def test_smaller_loss_transfer(self):
        """Truncating losses above comparator + u preserves the gap condition."""
        from fastrates.conditions import VFunction
        from fastrates.grip import ppc_gap_curve

        rng = np.random.default_rng(14)
        transfers = 0
        for _ in range(10):
            prob = random_nonnegative_problem(rng, 4, 4)
            fstar = prob.comparator_index
            lstar = prob.loss_matrix[fstar]
            u = 0.5
            clipped = np.minimum(prob.loss_matrix, lstar[None, :] + u)
            clipped[fstar] = lstar
            modified = FiniteProblem(probs=prob.probs, loss_matrix=clipped,
                                     comparator_index=fstar)
            # budget derived from the modified problem's own gap curve, so
            # the smaller problem is certified by construction
            etas = [0.1, 0.3, 0.8]
            rows = ppc_gap_curve(modified, etas)
            table = [(0.0, 0.0)]
            eps_prev = 0.0
            for eta, row in zip(etas, rows):
                eps = max(row["gap"] + row["opt_gap"] + 1e-7, eps_prev + 1e-9)
                table.append((eps, eta))
                eps_prev = eps
            v = VFunction.tabulated(table)
            eps_grid = [e for e, _ in table if e > 0]
            rep = verify_ppc_smaller_loss(prob, modified, v, eps_grid)
            assert rep["smaller"]["holds"]
            assert rep["transferred"]
            transfers += 1
        assert transfers == 10

    def test_transfer_precondition_violated(self):
        rng = np.random.default_rng(15)
        prob = random_nonnegative_problem(rng, 3, 3)
        bigger = FiniteProblem(probs=prob.probs, loss_matrix=prob.loss_matrix + 1.0,
                               comparator_index=prob.comparator_index)
        from fastrates.conditions import VFunction

        with pytest.raises(ValueError):
            verify_ppc_smaller_loss(prob, bigger, VFunction.constant(1.0), [0.1])


def test_ppc_gap_curve_nonnegative_and_monotone():
    from fastrates.grip import ppc_gap_curve

    rng = np.random.default_rng(16)
    prob = random_problem(rng, 4, 4)
    rows = ppc_gap_curve(prob, np.geomspace(0.05, 2.0, 8))
    # the measured gap can undershoot zero by at most the optimizer gap
    assert all(r["gap"] >= -(r["opt_gap"] + 1e-12) for r in rows)
    gaps = [r["gap"] + r["opt_gap"] for r in rows]
    slack = [2 * (r["opt_gap"] + 1e-9) for r in rows]
    assert all(b >= a - s for a, b, s in zip(gaps, gaps[1:], slack))
