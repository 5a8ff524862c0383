"""Bundled end-to-end scenarios behind `fastrates run`.

Each scenario builds its instance, runs the relevant checkers and
verifiers, and returns a deterministic report dict: given the same
(config, seed) the JSON serialization is byte-identical.
"""

from __future__ import annotations

import numpy as np

from . import __version__
from .conditions import (
    TauFunction,
    check_bernstein,
    check_small_ball,
    check_strong_central,
    check_tau_witness,
    check_witness,
)
from .divergences import cu_constant, squared_hellinger, kl_divergence
from .esi import hellinger_expectation
from .estimators import generalized_bayes_posterior
from .examples import (
    bounded_ratio_pair,
    gaussian_threshold_instance,
    mkappa_divergence_curve,
    no_bernstein_bounded,
    no_bernstein_bounded_exact,
    no_bernstein_unbounded,
    no_small_ball,
    random_problem,
    refute_bernstein_closed_form,
)
from .expfam import central_eta_certificate, central_moment_expfam, local_variance_ratio_limit
from .problems import excess_risk
from .verify import EnumerationPlan, replicate_rng, verify_zhang

__all__ = ["SCENARIOS", "run_scenario"]


def _summary(results) -> dict:
    n_pass = sum(1 for r in results if r.get("status") == "pass")
    n_fail = sum(1 for r in results if r.get("status") == "fail")
    n_inc = sum(1 for r in results if r.get("status") not in ("pass", "fail"))
    verdict = "fail" if n_fail else ("inconclusive" if n_inc else "pass")
    return {"pass": n_pass, "fail": n_fail, "inconclusive": n_inc, "verdict": verdict}


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def scenario_zhang_exact(seed: int = 0, options=None) -> dict:
    """Exact posterior-risk ESI moments over random problems and estimators."""
    rng = np.random.default_rng(seed)
    results = []
    worst = -np.inf
    for i in range(20):
        problem = random_problem(rng, n_outcomes=int(rng.integers(2, 4)),
                                 n_predictors=int(rng.integers(2, 4)))
        n = int(rng.integers(1, 4))
        for estimator in ("bayes", "twopart", "erm"):
            for eta in (0.1, 0.5, 1.0, 2.0):
                plan = EnumerationPlan(problem=problem, n=n, eta=eta,
                                       estimator=estimator, seed=seed)
                out = verify_zhang(plan)
                worst = max(worst, out.moment_or_frequency)
                if out.status != "pass":
                    results.append({"name": f"zhang[{i},{estimator},{eta}]",
                                    "status": out.status,
                                    "moment": out.moment_or_frequency})
    results.append({"name": "zhang-exact-suite", "worst_moment": float(worst),
                    "threshold": 1.0 + 1e-10, "status": _status(worst <= 1.0 + 1e-10)})
    return {"results": results}


def scenario_no_bernstein_bounded(seed: int = 0, options=None) -> dict:
    """Bounded excess risk, exploding squared excess loss."""
    J = int((options or {}).get("J", 1000))
    problem = no_bernstein_bounded(J)
    exact = no_bernstein_bounded_exact()
    results = []

    gap = abs(excess_risk(problem, 1) - exact["excess_risk_fj"])
    results.append({"name": "excess-risk-closed-form", "gap": float(gap),
                    "status": _status(gap <= 1e-9)})

    central = check_strong_central(problem, 2.0)
    results.append({"name": "central-at-2", "margin": central.margin,
                    "status": _status(central.holds)})

    witness = check_witness(problem, u=1.0, c=0.11)
    results.append({"name": "witness-u1-c0.11", "margin": witness.margin,
                    "status": _status(witness.holds)})

    matrix = check_bernstein(problem, beta=1.0, B=1e6)
    refutations = []
    all_refuted = True
    for beta in (0.25, 0.5, 0.75, 1.0):
        for B in (1e2, 1e4, 1e6):
            r = refute_bernstein_closed_form(beta, B)
            within = r["j_witness"] <= J
            agrees = True
            if within:
                agrees = not check_bernstein(problem, beta=beta, B=B).holds
            all_refuted &= r["refuted"] and agrees
            refutations.append({"beta": beta, "B": B, "j_witness": r["j_witness"],
                                "witness_within_truncation": within,
                                "matrix_check_agrees": agrees})
    results.append({
        "name": "bernstein-refuted",
        "closed_form_refutations": refutations,
        "matrix_check_at_truncation_beta1_B1e6_holds": bool(matrix.holds),
        "status": _status(all_refuted),
    })

    curve = mkappa_divergence_curve(1.0, J=min(J, 200))
    results.append({"name": "exp-moment-divergence", "diverges": curve["diverges"],
                    "status": _status(curve["diverges"])})
    return {"results": results, "J": J}


def scenario_no_small_ball(seed: int = 0, options=None) -> dict:
    """Indicator family: witnessing probabilities vanish along the family."""
    J = int((options or {}).get("J", 40))
    problem = no_small_ball(J=J)
    results = []
    refuted = True
    for kappa in (0.1, 0.3, 1.0, 3.0, 10.0):
        rep = check_small_ball(problem, kappa=kappa, epsilon=0.01,
                               pairs="vs_comparator")
        refuted &= not rep.holds
    results.append({"name": "small-ball-refuted-kappa-grid",
                    "status": _status(refuted)})
    central = check_strong_central(problem, 0.5, tol=1e-6)
    results.append({"name": "central-at-0.5", "margin": central.margin,
                    "status": _status(central.holds)})
    witness = check_witness(problem, u=3.0, c=1.0 - np.sqrt(2.0 / np.pi), tol=1e-9)
    results.append({"name": "witness-u3", "margin": witness.margin,
                    "status": _status(witness.holds)})
    return {"results": results, "J": J}


def scenario_no_bernstein_unbounded(seed: int = 0, options=None) -> dict:
    """Location family under log loss: linear-threshold witness regime."""
    problem = no_bernstein_unbounded()
    results = []
    central = check_strong_central(problem, 1.0, tol=1e-6)
    results.append({"name": "central-at-1", "margin": central.margin,
                    "status": _status(central.holds)})
    tau = TauFunction.linear(4.0, M=2.0)
    witness = check_tau_witness(problem, tau, c=1.0 - np.sqrt(2.0 / np.pi), tol=1e-9)
    results.append({"name": "tau-witness-u4-M2", "margin": witness.margin,
                    "status": _status(witness.holds)})
    return {"results": results}


def scenario_gaussian_threshold(seed: int = 0, options=None) -> dict:
    """Variance-mismatch location model: admissible-rate threshold."""
    ratio = float((options or {}).get("sigma_ratio", 2.0))
    fam, P, thetas, defect = gaussian_threshold_instance(sigma_ratio_sq=ratio)
    results = []
    cert = central_eta_certificate(fam, P, thetas)
    eta_bar = cert["eta_bar"]
    target = 1.0 / ratio
    results.append({"name": "certified-eta-bar", "eta_bar": float(eta_bar),
                    "grid_defect": defect,
                    "status": _status(abs(eta_bar - target) <= 0.02 * max(1.0, target) + 0.02)})
    below = max(central_moment_expfam(fam, P, th, target * 0.9)["moment"] for th in thetas)
    above = max(central_moment_expfam(fam, P, th, target * 1.1)["moment"] for th in thetas)
    results.append({"name": "moment-below-threshold", "max_moment": float(below),
                    "status": _status(below <= 1.0 + 1e-9)})
    results.append({"name": "moment-above-threshold", "max_moment": float(above),
                    "status": _status(above > 1.0 + 1e-9)})
    lim = local_variance_ratio_limit(fam, P, radius=1e-3)
    rel = abs(lim["eta_local"] - lim["variance_ratio"]) / lim["variance_ratio"]
    results.append({"name": "local-variance-ratio-limit",
                    "eta_local": lim["eta_local"],
                    "variance_ratio": lim["variance_ratio"],
                    "status": _status(rel <= 0.02)})
    return {"results": results, "sigma_ratio": ratio}


def scenario_birge_massart(seed: int = 0, options=None) -> dict:
    """Bounded-ratio pairs: risk-to-Hellinger constant log V + 2 at eta 1/2."""
    rng = np.random.default_rng(seed)
    n_pairs = int((options or {}).get("pairs", 500))
    results = []
    V = np.e
    cu = cu_constant(0.5, 1.0, np.log(V), 1.0)
    results.append({"name": "constant-at-logV", "c_u": float(cu),
                    "expected": float(np.log(V) + 2.0),
                    "status": _status(abs(cu - (np.log(V) + 2.0)) <= 1e-12)})
    worst = np.inf
    for _ in range(n_pairs):
        p, q, Vact = bounded_ratio_pair(rng, n_outcomes=int(rng.integers(3, 9)),
                                        V=float(rng.uniform(2.0, 20.0)))
        kl = kl_divergence(p, q)
        h2 = squared_hellinger(p, q)
        # Hellinger-transformed excess log loss at rate 1/2 equals H^2 here
        he = hellinger_expectation(p, np.log(p) - np.log(q), 0.5)
        bound = (np.log(Vact) + 2.0) * he
        worst = min(worst, bound - kl)
        assert abs(he - h2) < 1e-9
    results.append({"name": "kl-bounded-by-hellinger", "worst_margin": float(worst),
                    "pairs": n_pairs, "status": _status(worst >= -1e-9)})
    return {"results": results}


def scenario_eta_sweep_misspec(seed: int = 0, options=None) -> dict:
    """Posterior risk against the learning rate on a variance-mismatched model.

    Report-only: rows show how risk degrades once the rate exceeds the
    certified threshold.
    """
    opts = options or {}
    ratio = float(opts.get("sigma_ratio", 2.0))
    n = int(opts.get("n", 50))
    replicates = int(opts.get("replicates", 50))
    fam, P, thetas, _ = gaussian_threshold_instance(sigma_ratio_sq=ratio, n_theta=25)
    from .expfam import expfam_log_loss_problem

    problem = expfam_log_loss_problem(fam, thetas, P)
    prior = np.full(problem.n_predictors, 1.0 / problem.n_predictors)
    risks = np.array([excess_risk(problem, f) for f in range(problem.n_predictors)])
    rows = []
    for eta in (0.05, 0.1, 0.25, 0.5, 1.0, 2.0):
        acc = 0.0
        for k in range(replicates):
            rng = replicate_rng(seed, (int(eta * 1000), k))
            sample = rng.choice(problem.n_outcomes, size=n, p=problem.probs)
            post = generalized_bayes_posterior(problem, prior, sample, eta)
            acc += float(post @ risks)
        rows.append({"eta": eta, "mean_posterior_excess_risk": acc / replicates})
    return {"results": [{"name": "eta-sweep", "rows": rows, "status": "pass"}],
            "note": "informational sweep; posterior risk by learning rate"}


SCENARIOS = {
    "zhang-exact": scenario_zhang_exact,
    "no-bernstein-bounded": scenario_no_bernstein_bounded,
    "no-small-ball": scenario_no_small_ball,
    "no-bernstein-unbounded": scenario_no_bernstein_unbounded,
    "gaussian-threshold": scenario_gaussian_threshold,
    "birge-massart": scenario_birge_massart,
    "eta-sweep-misspec": scenario_eta_sweep_misspec,
}


def run_scenario(name: str, seed: int = 0, options=None, threads: int = 1) -> dict:
    """Run a bundled scenario and return its canonical report.

    ``threads`` is an execution hint only; it is deliberately not echoed
    into the report, which must be byte-identical across thread counts.
    """
    del threads
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; available: {sorted(SCENARIOS)}")
    body = SCENARIOS[name](seed=seed, options=options)
    report = {
        "tool": "fastrates",
        "version": __version__,
        "scenario": name,
        "config": {"seed": seed, "options": options or {}},
    }
    report.update(body)
    report["summary"] = _summary(body["results"])
    return report
