"""Exponential families on quadrature grids and GLM certificates."""

import numpy as np
import pytest

from fastrates.examples import gaussian_threshold_instance
from fastrates.expfam import (
    GlmSpec,
    bic_diagnostic,
    central_eta_certificate,
    central_moment_expfam,
    discretize_pdf,
    entrobound_check,
    expfam_density,
    expfam_log_loss_problem,
    expfam_projection,
    family_from_config,
    glm_central_certificate,
    glm_conditions_check,
    glm_risk_identity,
    local_variance_ratio_limit,
    make_bernoulli,
    make_gaussian_location,
    make_poisson_style,
)
from fastrates.problems import log_loss_problem


def gaussian_pdf(sigma):
    return lambda y: np.exp(-0.5 * (y / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))


class TestFamilies:
    def test_density_normalizes(self):
        fam = make_gaussian_location()
        dens, defect = expfam_density(fam, 0.7)
        assert defect <= 1e-8
        assert float(dens @ fam.y_weights) == pytest.approx(1.0, abs=1e-12)

    def test_standard_normal_values(self):
        fam = make_gaussian_location()
        dens, _ = expfam_density(fam, 0.0)
        idx = np.argmin(np.abs(fam.y_nodes))
        assert dens[idx] == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-6)

    def test_mean_and_variance_identities(self):
        """Grid mean equals the derivative of the log-partition; grid
        variance equals its second derivative, for every registered family."""
        for fam in (make_gaussian_location(1.3), make_bernoulli(),
                    make_poisson_style()):
            lo, hi = fam.theta_interval
            for theta in np.linspace(lo + 0.05, hi - 0.05, 9):
                dens, _ = expfam_density(fam, theta)
                mass = dens * fam.y_weights
                mean = float(mass @ fam.y_nodes)
                var = float(mass @ (fam.y_nodes - mean) ** 2)
                assert mean == pytest.approx(fam.mean_fn(theta), abs=1e-6)
                assert var == pytest.approx(fam.variance_fn(theta), abs=1e-6)

    def test_theta_outside_interval(self):
        fam = make_gaussian_location()
        with pytest.raises(ValueError):
            expfam_density(fam, 99.0)

    def test_registry(self):
        fam = family_from_config({"family": "gaussian_location", "sigma_star": 1.0,
                                  "interval": [-3, 3]})
        assert fam.name == "gaussian_location"
        with pytest.raises(ValueError):
            family_from_config({"family": "cauchy"})


class TestProjection:
    def test_well_specified_recovers_theta(self):
        fam = make_gaussian_location()
        dens, _ = expfam_density(fam, 1.2)
        P = dens * fam.y_weights
        assert expfam_projection(fam, P / P.sum()) == pytest.approx(1.2, abs=1e-9)

    def test_deterministic_count_data(self):
        fam = make_poisson_style()
        P = np.zeros_like(fam.y_nodes)
        P[4] = 1.0  # point mass at y = 4
        theta = expfam_projection(fam, P)
        assert fam.mean_fn(theta) == pytest.approx(4.0, abs=1e-9)

    def test_gaussian_closed_form(self):
        fam = make_gaussian_location(sigma_star=2.0, interval=(-2, 2))
        P, _ = discretize_pdf(fam, gaussian_pdf(1.0))
        m = float(P @ fam.y_nodes)
        assert expfam_projection(fam, P) == pytest.approx(m / 4.0, abs=1e-9)

    def test_mean_outside_image(self):
        fam = make_gaussian_location(interval=(-0.1, 0.1))
        P = np.zeros_like(fam.y_nodes)
        P[-1] = 1.0
        with pytest.raises(ValueError):
            expfam_projection(fam, P)


class TestCentralMoment:
    def test_theta_star_gives_one(self):
        fam, P, thetas, _ = gaussian_threshold_instance(2.0)
        star = expfam_projection(fam, P)
        rep = central_moment_expfam(fam, P, star, 0.8)
        assert rep["moment"] == pytest.approx(1.0, abs=1e-10)

    def test_closed_form_matches_direct(self):
        fam, P, thetas, _ = gaussian_threshold_instance(2.0)
        rng = np.random.default_rng(0)
        for _ in range(50):
            th = float(rng.uniform(-3, 3))
            eta = float(rng.uniform(0.05, 2.0))
            rep = central_moment_expfam(fam, P, th, eta)
            assert rep["crosscheck_gap"] <= 1e-10

    def test_threshold_bracketing(self):
        fam, P, thetas, _ = gaussian_threshold_instance(2.0)
        below = max(central_moment_expfam(fam, P, t, 0.45)["moment"] for t in thetas)
        above = max(central_moment_expfam(fam, P, t, 0.55)["moment"] for t in thetas)
        assert below <= 1.0 + 1e-9
        assert above > 1.0 + 1e-9

    def test_certificate_in_band(self):
        fam, P, thetas, _ = gaussian_threshold_instance(2.0)
        cert = central_eta_certificate(fam, P, thetas)
        assert 0.48 <= cert["eta_bar"] <= 0.52

    def test_under_dispersed_exceeds_one(self):
        fam, P, thetas, _ = gaussian_threshold_instance(0.5)
        cert = central_eta_certificate(fam, P, thetas)
        assert cert["eta_bar"] > 1.0

    def test_local_limit_gaussian(self):
        fam, P, _, _ = gaussian_threshold_instance(2.0)
        rep = local_variance_ratio_limit(fam, P, radius=1e-3)
        assert abs(rep["eta_local"] - rep["variance_ratio"]) \
            <= 0.02 * rep["variance_ratio"]

    def test_local_limit_non_gaussian(self):
        """Skewed data: the local admissible rate still matches the
        variance ratio at small radius."""
        fam = make_gaussian_location(grid_sd=2.0)
        mix = lambda y: 0.7 * gaussian_pdf(0.8)(y - 0.5) + 0.3 * gaussian_pdf(1.6)(y + 1.0)
        P, _ = discretize_pdf(fam, mix)
        rep = local_variance_ratio_limit(fam, P, radius=1e-3)
        assert abs(rep["eta_local"] - rep["variance_ratio"]) \
            <= 0.02 * rep["variance_ratio"]


def make_identity_glm(noise_sigma=1.0, d=2):
    base = make_gaussian_location(sigma_star=1.0, interval=(-4.0, 4.0),
                                  grid_sd=max(1.0, noise_sigma))
    design = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [1.0, 1.0]])
    x_probs = np.full(4, 0.25)
    grid_1d = np.linspace(-1.0, 1.0, 5)
    beta_grid = np.array([[a, b] for a in grid_1d for b in grid_1d])
    beta_true = np.array([0.4, -0.2])
    glm = GlmSpec(base=base, inv_link=lambda s: s, design=design, x_probs=x_probs,
                  beta_grid=beta_grid, d=d, true_mean_beta=beta_true)
    cond = []
    for x in design:
        mean = float(np.dot(beta_true, x[:d]))
        pdf = lambda y, mu=mean: gaussian_pdf(noise_sigma)(y - mu)
        probs, _ = discretize_pdf(base, pdf)
        cond.append(probs)
    return glm, np.array(cond)


class TestGlm:
    def test_conditions_audit(self):
        glm, cond = make_identity_glm()
        rep = glm_conditions_check(glm, cond)
        assert rep["holds"]
        assert rep["condition1"]["derivative_bound"] == pytest.approx(1.0, rel=1e-4)

    def test_matched_variance_rate_near_one(self):
        glm, cond = make_identity_glm(noise_sigma=1.0)
        rep = glm_central_certificate(glm, cond)
        assert rep["holds"]
        assert rep["eta_bar"] == pytest.approx(1.0, abs=0.02)

    def test_over_dispersed_rate_half(self):
        glm, cond = make_identity_glm(noise_sigma=np.sqrt(2.0))
        rep = glm_central_certificate(glm, cond)
        assert rep["eta_bar"] == pytest.approx(0.5, abs=0.02)

    def test_under_dispersed_rate_above_one(self):
        glm, cond = make_identity_glm(noise_sigma=np.sqrt(0.5))
        rep = glm_central_certificate(glm, cond)
        assert rep["eta_bar"] > 1.0

    def test_risk_identity_well_specified(self):
        glm, cond = make_identity_glm(noise_sigma=1.0)
        for beta in ([0.0, 0.0], [0.5, -0.5], [1.0, 1.0]):
            rep = glm_risk_identity(glm, cond, np.array(beta))
            assert rep["gap"] <= 1e-8

    def test_risk_identity_misspecified_noise(self):
        """Mean-matched but over-dispersed noise: risks still agree."""
        glm, cond = make_identity_glm(noise_sigma=1.5)
        for beta in ([0.2, 0.2], [-1.0, 0.5]):
            rep = glm_risk_identity(glm, cond, np.array(beta))
            assert rep["gap"] <= 1e-6

    def test_missing_mean_flag(self):
        glm, cond = make_identity_glm()
        glm.true_mean_beta = None
        rep = glm_central_certificate(glm, cond)
        assert not rep["holds"]
        assert "condition3" in rep["failed_conditions"]

    def test_exp_tail_feeds_witness(self):
        """The GLM problem's excess losses have a finite exp-moment, so the
        induced threshold map certifies at c = 1/2."""
        from fastrates.conditions import check_tau_witness, check_uniform_exp_tail

        glm, cond = make_identity_glm(noise_sigma=np.sqrt(2.0))
        base = glm.base
        thetas = [glm.theta_x(b, glm.design[0]) for b in glm.beta_grid]
        P = cond[0]
        problem = expfam_log_loss_problem(base, thetas, P)
        tail = check_uniform_exp_tail(problem, kappa=0.25)
        assert tail["holds"]
        assert check_tau_witness(problem, tail["tau"], 0.5).holds


class TestEntrobound:
    def test_well_specified_C_one(self):
        rng = np.random.default_rng(1)
        dens = rng.dirichlet(np.ones(4), size=3)
        prob = log_loss_problem(dens, comparator_index=0)
        rep = entrobound_check(prob)
        assert rep["applicable"]
        assert rep["C"] == pytest.approx(1.0, abs=1e-12)
        assert rep["holds"]

    def test_tilted_bernoulli_family(self):
        dens = np.array([[0.5, 0.5], [0.3, 0.7], [0.8, 0.2]])
        true_probs = np.array([0.6, 0.4])  # ratio vs row0: (1.2, 0.8) -> C = 1.2... scaled
        prob = log_loss_problem(dens, true_probs=true_probs, comparator_index=0)
        rep = entrobound_check(prob)
        assert rep["applicable"]
        assert rep["holds"]
        assert rep["C"] <= 2.0

    def test_pinsker_substep(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            dens = rng.dirichlet(np.ones(5), size=4)
            prob = log_loss_problem(dens, comparator_index=0)
            assert entrobound_check(prob)["pinsker_margin"] >= -1e-9


def test_bic_diagnostic_slope_near_one():
    """Parametric scaling: n E[IC] grows like (d / 2 eta) log n, slope
    within 25% on a dense one-parameter family."""
    from fastrates.examples import bernoulli_grid_problem

    prob = bernoulli_grid_problem(theta_true=0.3, spacing=0.01, lo=0.05, hi=0.95)
    prior = np.full(prob.n_predictors, 1.0 / prob.n_predictors)
    rep = bic_diagnostic(prob, prior, eta=0.5, d=1,
                         ns=[2 ** k for k in range(4, 13)], replicates=24, seed=3)
    assert abs(rep["slope"] - 1.0) <= 0.25
