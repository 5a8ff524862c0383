"""Command-line front end.

Reports are canonical JSON (sorted keys, fixed indentation): identical
(config, seed) pairs produce byte-identical output regardless of the
--threads setting.  Timing goes to stderr so it never perturbs reports.

Exit codes: 0 all pass, 1 any fail, 2 inconclusive/pre-asymptotic,
64 configuration error.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .conditions import (
    TauFunction,
    VFunction,
    check_bernstein,
    check_small_ball,
    check_strong_central,
    check_tau_witness,
    check_uniform_exp_tail,
    check_v_central,
    check_v_ppc,
    check_weakened_small_ball,
    check_witness,
    max_central_eta,
)
from .divergences import kl_divergence, misspec_metric, renyi_divergence
from .estimators import (
    erm,
    generalized_bayes_posterior,
    information_complexity,
    two_part_mdl,
)
from .grip import compute_grip, compute_mini_grip
from .problems import excess_risk, problem_from_json, problem_to_json
from .scenarios import SCENARIOS, run_scenario
from .verify import (
    EnumerationPlan,
    verify_first_risk_bound,
    verify_main_bounded,
    verify_main_unbounded,
    verify_metric_theorem,
    verify_zhang,
)

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_CONFIG = 0, 1, 2, 64


def _canonical(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, default=_jsonify) + "\n"


def _jsonify(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _emit(doc, out: str | None, name: str = "report.json") -> None:
    text = _canonical(doc)
    if out:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        (path / name).write_text(text)
        click.echo(str(path / name), err=True)
    else:
        click.echo(text, nl=False)


def _load_problem(path: str):
    return problem_from_json(Path(path).read_text())


def _parse_v(spec: dict) -> VFunction:
    kind = spec.get("kind")
    if kind == "constant":
        return VFunction.constant(spec["eta_bar"])
    if kind == "power":
        return VFunction.power(spec["coeff"], spec["beta"], spec.get("v_max", 1.0))
    if kind == "tabulated":
        return VFunction.tabulated(spec["table"])
    raise click.UsageError(f"unknown v-function kind {kind!r}")


def _parse_tau(spec: dict) -> TauFunction:
    kind = spec.get("kind")
    if kind == "constant":
        return TauFunction.constant(spec["u"])
    if kind == "power":
        return TauFunction.power(spec["u"], spec["beta"])
    if kind == "logshape":
        return TauFunction.logshape(spec["kappa"], spec["M_kappa"])
    if kind == "linear":
        return TauFunction.linear(spec["u"], spec.get("M", 1.0))
    raise click.UsageError(f"unknown tau-function kind {kind!r}")


@click.group()
@click.version_option(version=__version__, prog_name="fastrates")
def main():
    """Numerical diagnostics for fast-rate learning on finite problems."""


@main.command()
@click.argument("scenario")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Directory for the report file.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Execution hint; results never depend on it.")
@click.option("--sigma-ratio", type=float, default=None,
              help="Variance ratio for the gaussian-threshold scenario.")
@click.option("--option", "options", multiple=True,
              help="Extra scenario option as key=value (repeatable).")
def run(scenario, seed, out, threads, sigma_ratio, options):
    """Run a bundled scenario and emit its report."""
    if scenario not in SCENARIOS:
        raise click.UsageError(
            f"unknown scenario {scenario!r}; available: {', '.join(sorted(SCENARIOS))}")
    opts = {}
    for item in options:
        key, _, value = item.partition("=")
        try:
            opts[key] = json.loads(value)
        except json.JSONDecodeError:
            opts[key] = value
    if sigma_ratio is not None:
        opts["sigma_ratio"] = sigma_ratio
    t0 = time.perf_counter()
    report = run_scenario(scenario, seed=seed, options=opts, threads=threads)
    click.echo(f"wall_time_s={time.perf_counter() - t0:.3f}", err=True)
    _emit(report, out, name=f"{scenario}.json")
    verdict = report["summary"]["verdict"]
    sys.exit(EXIT_PASS if verdict == "pass"
             else EXIT_FAIL if verdict == "fail" else EXIT_INCONCLUSIVE)


_CHECKS = {
    "strong-central": lambda p, a: check_strong_central(
        p, a["eta_bar"], tol=a.get("tol", 1e-9)),
    "max-central-eta": None,  # handled specially: scalar result
    "v-central": lambda p, a: check_v_central(
        p, _parse_v(a["v"]), a["eps_grid"], tol=a.get("tol", 1e-9),
        search_comparator=a.get("search_comparator", False)),
    "v-ppc": lambda p, a: check_v_ppc(
        p, _parse_v(a["v"]), a["eps_grid"], tol=a.get("tol", 1e-9)),
    "witness": lambda p, a: check_witness(p, a["u"], a["c"], tol=a.get("tol", 1e-9)),
    "tau-witness": lambda p, a: check_tau_witness(
        p, _parse_tau(a["tau"]), a["c"], tol=a.get("tol", 1e-9)),
    "bernstein": lambda p, a: check_bernstein(p, a["beta"], a["B"],
                                              tol=a.get("tol", 1e-9)),
    "small-ball": lambda p, a: check_small_ball(
        p, a["kappa"], a["epsilon"], pairs=a.get("pairs", "all")),
    "weakened-small-ball": lambda p, a: check_weakened_small_ball(
        p, a["C1_prime"], a["C2_prime"], pairs=a.get("pairs", "all")),
}


@main.command()
@click.argument("condition")
@click.option("--problem", "problem_path", required=True, type=click.Path(exists=True))
@click.option("--params", default="{}", help="JSON object of condition parameters.")
@click.option("--out", type=click.Path(), default=None)
def check(condition, problem_path, params, out):
    """Test an easiness condition; prints the report JSON."""
    problem = _load_problem(problem_path)
    try:
        args = json.loads(params)
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"--params is not valid JSON: {exc}")
    if condition == "max-central-eta":
        value = max_central_eta(problem, tol=args.get("tol", 1e-6))
        doc = {"condition": condition, "eta_bar": value}
        _emit(doc, out, name="check.json")
        sys.exit(EXIT_PASS if value > 0 else EXIT_FAIL)
    if condition == "uniform-exp-tail":
        rep = check_uniform_exp_tail(problem, args["kappa"])
        rep = {k: (v.to_dict() if hasattr(v, "to_dict") else v) for k, v in rep.items()}
        _emit(rep, out, name="check.json")
        sys.exit(EXIT_PASS if rep["holds"] else EXIT_FAIL)
    if condition not in _CHECKS or _CHECKS[condition] is None:
        raise click.UsageError(
            f"unknown condition {condition!r}; available: "
            f"{', '.join(sorted([*_CHECKS, 'uniform-exp-tail']))}")
    report = _CHECKS[condition](problem, args)
    _emit(report.to_dict(), out, name="check.json")
    sys.exit(EXIT_PASS if report.holds else EXIT_FAIL)


@main.command()
@click.option("--problem", "problem_path", required=True, type=click.Path(exists=True))
@click.option("--eta", type=float, required=True)
@click.option("--mini", type=int, default=None, help="Two-point projection against this index.")
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def grip(problem_path, eta, mini, tol, out):
    """Compute the simplex projection (or a two-point one) for a problem."""
    problem = _load_problem(problem_path)
    if mini is not None:
        res = compute_mini_grip(problem, mini, eta)
        _emit(res.to_dict(), out, name="grip.json")
        return
    cache_dir = os.environ.get("FASTRATES_CACHE_DIR")
    key = None
    if cache_dir:
        digest = hashlib.sha256(problem_to_json(problem).encode()).hexdigest()[:16]
        key = Path(cache_dir) / f"grip-{digest}-{eta!r}-{tol!r}.json"
        if key.exists():
            click.echo(key.read_text(), nl=False)
            return
    res = compute_grip(problem, eta, tol=tol)
    text = _canonical(res.to_dict())
    if key is not None:
        key.parent.mkdir(parents=True, exist_ok=True)
        key.write_text(text)
    _emit(res.to_dict(), out, name="grip.json")


@main.command()
@click.option("--kind", type=click.Choice(["kl", "renyi", "misspec"]), required=True)
@click.option("--problem", "problem_path", type=click.Path(exists=True), default=None)
@click.option("--p", "p_json", default=None, help="Inline JSON probability vector.")
@click.option("--q", "q_json", default=None, help="Inline JSON probability vector.")
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--f", "f_idx", type=int, default=None)
@click.option("--g", "g_idx", type=int, default=None)
@click.option("--eta-bar", type=float, default=1.0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def divergence(kind, problem_path, p_json, q_json, alpha, f_idx, g_idx, eta_bar, out):
    """Scalar divergences: kl, renyi, or the tilted misspecification metric."""
    if kind in ("kl", "renyi"):
        if p_json and q_json:
            p = np.asarray(json.loads(p_json), dtype=float)
            q = np.asarray(json.loads(q_json), dtype=float)
        elif problem_path and f_idx is not None and g_idx is not None:
            problem = _load_problem(problem_path)
            if problem.densities is None:
                raise click.UsageError("problem carries no density table; pass --p/--q")
            w = problem.base_weights
            p = problem.densities[f_idx] * w
            q = problem.densities[g_idx] * w
            p, q = p / p.sum(), q / q.sum()
        else:
            raise click.UsageError("need --p/--q or --problem with --f/--g")
        value = kl_divergence(p, q) if kind == "kl" else renyi_divergence(p, q, alpha)
        _emit({"kind": kind, "value": value, "alpha": alpha if kind == "renyi" else None},
              out, name="divergence.json")
        return
    if problem_path is None or f_idx is None or g_idx is None:
        raise click.UsageError("misspec needs --problem, --f, and --g")
    problem = _load_problem(problem_path)
    value = misspec_metric(problem, f_idx, g_idx, eta_bar)
    _emit({"kind": "misspec", "value": value, "eta_bar": eta_bar}, out,
          name="divergence.json")


@main.command()
@click.argument("inequality",
                type=click.Choice(["zhang", "metric", "first-risk",
                                   "main-bounded", "main-unbounded"]))
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
def verify(inequality, plan_path, out):
    """Verify a headline inequality from a JSON plan."""
    spec = json.loads(Path(plan_path).read_text())
    problem = (_load_problem(spec["problem"]) if isinstance(spec["problem"], str)
               else problem_from_json(json.dumps(spec["problem"])))
    params = spec.get("params", {})
    if inequality == "main-unbounded":
        outcome = verify_main_unbounded(
            problem, spec.get("prior"), _parse_v(params["v"]),
            [tuple(row) for row in params["schedule"]],
            u=params["u"], c=params["c"], delta=params["delta"],
            estimator=spec.get("estimator", "erm"),
            mc_replicates=spec.get("mc_replicates", 2000),
            seed=spec.get("seed", 0))
    else:
        plan = EnumerationPlan(
            problem=problem, n=spec["n"], eta=spec["eta"],
            prior=np.asarray(spec["prior"], dtype=float) if spec.get("prior") else None,
            estimator=spec.get("estimator", "bayes"), seed=spec.get("seed", 0))
        if inequality == "zhang":
            outcome = verify_zhang(plan)
        elif inequality == "metric":
            outcome = verify_metric_theorem(plan, eta_bar=params["eta_bar"])
        elif inequality == "first-risk":
            outcome = verify_first_risk_bound(plan, eta_bar=params["eta_bar"],
                                              u=params["u"], c=params["c"])
        else:
            outcome = verify_main_bounded(plan, _parse_v(params["v"]),
                                          eps=params["eps"], u=params["u"],
                                          c=params["c"],
                                          branch=params.get("branch", "v_central"))
    _emit(outcome.to_dict(), out, name="verify.json")
    sys.exit(EXIT_PASS if outcome.status == "pass"
             else EXIT_FAIL if outcome.status == "fail" else EXIT_INCONCLUSIVE)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
def estimate(config_path, out):
    """Run one estimator on a sampled dataset from an experiment descriptor.

    Descriptor: {"problem": path, "prior": [...], "eta": x, "n": k,
    "estimator": "bayes"|"twopart"|"erm", "seed": s}.
    """
    cfg = json.loads(Path(config_path).read_text())
    problem = _load_problem(cfg["problem"])
    prior = (np.asarray(cfg["prior"], dtype=float) if cfg.get("prior")
             else np.full(problem.n_predictors, 1.0 / problem.n_predictors))
    rng = np.random.default_rng(cfg.get("seed", 0))
    sample = rng.choice(problem.n_outcomes, size=cfg["n"], p=problem.probs)
    eta = cfg["eta"]
    kind = cfg.get("estimator", "bayes")
    if kind == "bayes":
        post = generalized_bayes_posterior(problem, prior, sample, eta)
    elif kind == "twopart":
        post = np.eye(problem.n_predictors)[two_part_mdl(problem, prior, sample, eta)]
    elif kind == "erm":
        post = np.eye(problem.n_predictors)[erm(problem, sample)]
    else:
        raise click.UsageError(f"unknown estimator {kind!r}")
    ic = information_complexity(problem, prior, post, sample, eta)
    risks = np.array([excess_risk(problem, f) for f in range(problem.n_predictors)])
    doc = {
        "config": cfg,
        "sample": sample.tolist(),
        "posterior": post.tolist(),
        "information_complexity": ic.to_dict(),
        "posterior_excess_risk": float(post @ risks),
    }
    _emit(doc, out, name="estimate.json")


@main.command()
@click.option("--param", type=click.Choice(["eta", "n", "epsilon"]), required=True)
@click.option("--grid", required=True, help="Comma-separated parameter values.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="Inner estimate-style descriptor.")
@click.option("--out", type=click.Path(), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="csv",
              show_default=True)
def sweep(param, grid, config_path, out, fmt):
    """Sweep one parameter over an inner experiment; emit one row per value."""
    values = [v for v in grid.split(",") if v.strip()]
    if not values:
        raise click.UsageError("empty grid")
    cfg = json.loads(Path(config_path).read_text())
    problem = _load_problem(cfg["problem"])
    prior = (np.asarray(cfg["prior"], dtype=float) if cfg.get("prior")
             else np.full(problem.n_predictors, 1.0 / problem.n_predictors))
    risks = np.array([excess_risk(problem, f) for f in range(problem.n_predictors)])
    header = [param, "ic_total", "ic_empirical", "ic_kl", "posterior_excess_risk", "error"]
    rows = []
    for raw in values:
        row = {k: "" for k in header}
        row[param] = raw
        try:
            value = float(raw)
            eta = value if param == "eta" else cfg["eta"]
            n = int(value) if param == "n" else cfg["n"]
            rng = np.random.default_rng(cfg.get("seed", 0))
            sample = rng.choice(problem.n_outcomes, size=n, p=problem.probs)
            post = generalized_bayes_posterior(problem, prior, sample, eta)
            ic = information_complexity(problem, prior, post, sample, eta)
            row.update(ic_total=repr(ic.total), ic_empirical=repr(ic.empirical_excess_term),
                       ic_kl=repr(ic.kl_term), posterior_excess_risk=repr(float(post @ risks)))
        except Exception as exc:  # noqa: BLE001 - row-level error reporting
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    if fmt == "json":
        _emit({"param": param, "rows": rows}, out, name="sweep.json")
        return
    lines = [",".join(header)]
    lines += [",".join(str(r[k]) for k in header) for r in rows]
    text = "\n".join(lines) + "\n"
    if out:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        (path / "sweep.csv").write_text(text)
        click.echo(str(path / "sweep.csv"), err=True)
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
