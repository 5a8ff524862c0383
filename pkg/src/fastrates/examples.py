"""Bundled problem constructions.

Random generators for property sweeps plus the named desk-scale
instances the CLI scenarios run: a bounded-excess-risk family whose
squared excess loss grows without bound (Bernstein fails), an indicator
family whose pairwise small-ball probabilities vanish, a well-specified
location family with unbounded excess risk, variance-mismatch location
instances, and bounded-density-ratio pairs.

Truncated countable families carry closed-form tail formulas so checks
can reason past the truncation index.
"""

from __future__ import annotations

import numpy as np

from .expfam import discretize_pdf, expfam_log_loss_problem, make_gaussian_location
from .problems import FiniteProblem, log_loss_problem, squared_loss_problem

__all__ = [
    "random_problem",
    "random_log_loss_problem",
    "random_nonnegative_problem",
    "tied_risk_problem",
    "heavy_lower_tail_problem",
    "no_bernstein_bounded",
    "no_bernstein_bounded_exact",
    "refute_bernstein_closed_form",
    "mkappa_divergence_curve",
    "no_small_ball",
    "no_bernstein_unbounded",
    "gaussian_threshold_instance",
    "bounded_ratio_pair",
    "unwitnessable_instance",
    "heavy_tailed_regression",
    "growing_risk_regression",
    "bernoulli_grid_problem",
]

A_CONST = 2.0 - np.pi ** 2 / 6.0          # total mass at x in {0, 1}


# ---------------------------------------------------------------------------
# Random generators
# ---------------------------------------------------------------------------

def random_problem(rng, n_outcomes: int = 3, n_predictors: int = 3,
                   loss_scale: float = 1.0) -> FiniteProblem:
    """Generic finite problem with Dirichlet outcome law and uniform losses."""
    probs = rng.dirichlet(np.ones(n_outcomes))
    loss = rng.uniform(0.0, loss_scale, size=(n_predictors, n_outcomes))
    return FiniteProblem(probs=probs, loss_matrix=loss)


def random_log_loss_problem(rng, n_outcomes: int = 4, n_predictors: int = 4,
                            concentration: float = 1.0) -> FiniteProblem:
    """Well-specified density model: the data law is the comparator row."""
    dens = rng.dirichlet(np.full(n_outcomes, concentration), size=n_predictors)
    dens = np.maximum(dens, 1e-12)
    dens = dens / dens.sum(axis=1, keepdims=True)
    fstar = int(rng.integers(n_predictors))
    return log_loss_problem(dens, comparator_index=fstar)


def random_nonnegative_problem(rng, n_outcomes: int = 4, n_predictors: int = 4,
                               scale: float = 2.0) -> FiniteProblem:
    """Nonnegative losses with full-support outcome law (slow-rate tests)."""
    probs = rng.dirichlet(np.ones(n_outcomes)) * 0.9 + 0.1 / n_outcomes
    probs = probs / probs.sum()
    loss = rng.uniform(0.0, scale, size=(n_predictors, n_outcomes))
    return FiniteProblem(probs=probs, loss_matrix=loss)


def tied_risk_problem(spread: float = 1.2) -> FiniteProblem:
    """Two risk-tied predictors with a symmetric nonzero excess loss.

    The lower-tail moment cosh(eta * spread) exceeds 1 at every rate, so
    the strict condition fails while the slack-indexed one holds for the
    identity rate budget whenever spread^2 <= 2.
    """
    loss = np.array([[0.0, 0.0], [-spread, spread]])
    return FiniteProblem(probs=np.array([0.5, 0.5]), loss_matrix=loss,
                         comparator_index=0)


def heavy_lower_tail_problem() -> FiniteProblem:
    """Rare large negative excess loss: slack-linear rate budgets fail at
    moderate eps while the projection-gap condition holds."""
    probs = np.array([0.01, 0.99])
    loss = np.array([[10.0, 0.0], [0.0, 0.2]])
    return FiniteProblem(probs=probs, loss_matrix=loss, comparator_index=0)


# ---------------------------------------------------------------------------
# Bounded excess risk, unbounded squared excess loss
# ---------------------------------------------------------------------------

def no_bernstein_bounded(J: int = 1000) -> FiniteProblem:
    """Spike regression family on x in {0, 1, 2, ...}, truncated at J.

    X has mass a/2 at 0 and 1 (a = 2 - pi^2/6) and 1/j^2 at j >= 2;
    y = 0 surely; squared loss.  Predictor 0 maps x=1 to 0.5 (else 0);
    predictor j maps 0 to 1 and j to j (else 0).  All predictors vanish
    beyond J, so the truncation tail collapses into one outcome with
    zero loss for everyone and risks are exact for every j <= J.
    """
    if J < 2:
        raise ValueError("J must be at least 2")
    j = np.arange(2, J + 1)
    probs = np.concatenate([[A_CONST / 2, A_CONST / 2], 1.0 / j ** 2])
    tail = 1.0 - probs.sum()            # = pi^2/6 - H_J^(2), all-zero losses
    probs = np.concatenate([probs, [tail]])
    n_z = J + 2                          # x = 0, 1, 2..J, tail
    n_f = J                              # f_1 .. f_J
    loss = np.zeros((n_f, n_z))
    loss[0, 1] = 0.25                    # f_1(1) = 0.5, y = 0
    loss[1:, 0] = 1.0                    # f_j(0) = 1
    loss[np.arange(1, n_f), np.arange(2, J + 1)] = j.astype(float) ** 2
    preds = np.zeros((n_f, n_z))
    preds[0, 1] = 0.5
    preds[1:, 0] = 1.0
    preds[np.arange(1, n_f), np.arange(2, J + 1)] = j.astype(float)
    labels = [f"f_{k}" for k in range(1, J + 1)]
    outcomes = ["x=0", "x=1"] + [f"x={k}" for k in j] + ["x>J"]
    return FiniteProblem(probs=probs, loss_matrix=loss, outcomes=outcomes,
                         predictor_labels=labels, predictions=preds,
                         loss_kind="squared")


def no_bernstein_bounded_exact() -> dict:
    """Closed forms for the spike family: risks and excess moments."""
    a = A_CONST
    return {
        "a": a,
        "risk_f1": a / 8.0,
        "excess_risk_fj": 3.0 * a / 8.0 + 1.0,
        "witness_truncated_mean_u1": 3.0 * a / 8.0,
        "max_feasible_witness_c": (3.0 * a / 8.0) / (3.0 * a / 8.0 + 1.0),
        "second_moment_fj": lambda jj: a / 2.0 + a / 32.0 + float(jj) ** 2,
    }


def refute_bernstein_closed_form(beta: float, B: float) -> dict:
    """Second-moment growth refutes the (beta, B) condition for some index.

    E[L_{f_j}^2] = a/2 + a/32 + j^2 grows without bound while the excess
    risk stays at 3a/8 + 1, so for any pair a witness index exists; it
    may exceed any finite truncation.
    """
    exact = no_bernstein_bounded_exact()
    risk = exact["excess_risk_fj"]
    need = B * risk ** beta - (A_CONST / 2.0 + A_CONST / 32.0)
    j_witness = 2 if need <= 0 else int(np.ceil(np.sqrt(need)))
    while exact["second_moment_fj"](j_witness) <= B * risk ** beta:
        j_witness += 1
    return {
        "beta": beta,
        "B": B,
        "j_witness": j_witness,
        "second_moment_at_witness": exact["second_moment_fj"](j_witness),
        "bound_at_witness": B * risk ** beta,
        "refuted": True,
    }


def mkappa_divergence_curve(kappa: float, J: int = 200) -> dict:
    """Per-index exp-moment of the excess loss; diverges along j.

    E[exp(kappa L_{f_j})] >= exp(kappa j^2) / j^2, so the sup over the
    family is infinite for every kappa > 0; on a truncation the curve is
    finite but grows monotonically once j exceeds a small threshold.
    """
    a = A_CONST
    js = np.arange(2, J + 1)
    rest = 1.0 - a - 1.0 / js ** 2
    with np.errstate(over="ignore"):
        curve = (a / 2.0 * np.exp(kappa) + a / 2.0 * np.exp(-0.25 * kappa)
                 + np.exp(kappa * js ** 2.0) / js ** 2 + rest)
    if np.isinf(curve).any():
        return {"kappa": kappa, "curve_max": float("inf"), "diverges": True}
    tail = curve[-min(20, J - 2):]
    tail_grows = bool(np.all(np.diff(tail) > 0))
    return {"kappa": kappa, "curve_max": float(np.max(curve)),
            "diverges": bool(tail_grows and (curve[-1] > 1e12 or curve[-1] > 10 * curve[0]))}


# ---------------------------------------------------------------------------
# Indicator family without the small-ball property
# ---------------------------------------------------------------------------

def no_small_ball(J: int = 40, n_y: int = 401, span: float = 12.0) -> FiniteProblem:
    """Indicator regression with vanishing pairwise witnessing probability.

    X has mass 1/(a j^2) at j = 1..J (a = pi^2/6; tail collapsed), Y is
    standard normal on a grid, predictors are f_0 = 0 and the indicators
    f_j(x) = 1{x = j}; squared loss; f_0 is the regression function.
    """
    a = np.pi ** 2 / 6.0
    j = np.arange(1, J + 1)
    x_probs = 1.0 / (a * j ** 2)
    tail = 1.0 - x_probs.sum()
    x_probs = np.concatenate([x_probs, [tail]])
    y = np.linspace(-span, span, n_y)
    h = y[1] - y[0]
    y_pdf = np.exp(-0.5 * y ** 2) / np.sqrt(2 * np.pi) * h
    y_probs = y_pdf / y_pdf.sum()
    joint = np.outer(x_probs, y_probs)
    preds = np.zeros((J + 1, J + 1))     # row 0: f_0; row k: indicator of x=k
    for k in range(1, J + 1):
        preds[k, k - 1] = 1.0
    labels = ["f_0"] + [f"f_{k}" for k in j]
    x_values = [f"x={k}" for k in j] + ["x>J"]
    return squared_loss_problem(joint, x_values, y, preds, labels=labels)


# ---------------------------------------------------------------------------
# Well-specified location family (unbounded excess risk regime)
# ---------------------------------------------------------------------------

def no_bernstein_unbounded(mu_max: float = 3.0, n_mu: int = 13,
                           n_y: int = 401, span: float = 12.0) -> FiniteProblem:
    """Unit-variance location densities under log loss, truth at zero.

    Excess risks mu^2/2 range well past 1, exercising both branches of
    the linear threshold map; the squared excess loss grows like mu^2
    times the risk, so no fixed-(beta, B) second-moment bound holds
    across widening grids.
    """
    fam = make_gaussian_location(sigma_star=1.0, interval=(-mu_max - 0.5, mu_max + 0.5),
                                 n_nodes=n_y, span_sds=span)
    mus = np.linspace(0.0, mu_max, n_mu)
    P, _ = discretize_pdf(fam, lambda yy: np.exp(-0.5 * yy ** 2) / np.sqrt(2 * np.pi))
    return expfam_log_loss_problem(fam, mus, P)


# ---------------------------------------------------------------------------
# Variance-mismatch location instance
# ---------------------------------------------------------------------------

def gaussian_threshold_instance(sigma_ratio_sq: float = 2.0, sigma_star: float = 1.0,
                                n_theta: int = 61, interval=(-3.0, 3.0),
                                n_nodes: int = 401, span_sds: float = 12.0):
    """Location model with variance sigma_star^2 against data of variance
    sigma_ratio_sq * sigma_star^2; admissible rates cross at 1/sigma_ratio_sq.

    Returns (family, data probabilities, theta grid).
    """
    sigma_true = sigma_star * np.sqrt(sigma_ratio_sq)
    fam = make_gaussian_location(sigma_star=sigma_star, interval=interval,
                                 n_nodes=n_nodes, span_sds=span_sds,
                                 grid_sd=max(sigma_star, sigma_true))
    P, defect = discretize_pdf(
        fam, lambda y: np.exp(-0.5 * (y / sigma_true) ** 2)
        / (sigma_true * np.sqrt(2 * np.pi)))
    thetas = np.linspace(interval[0], interval[1], n_theta)
    return fam, P, thetas, defect


# ---------------------------------------------------------------------------
# Bounded-ratio density pairs
# ---------------------------------------------------------------------------

def bounded_ratio_pair(rng, n_outcomes: int = 6, V: float = 8.0):
    """Density pair (p, q) with p/q <= V pointwise; returns (p, q, V_actual)."""
    q = rng.dirichlet(np.ones(n_outcomes))
    q = np.maximum(q, 1e-6)
    q = q / q.sum()
    t = rng.uniform(1.0, V, size=n_outcomes)
    p = q * t
    p = p / p.sum()
    return p, q, float(np.max(p / q))


# ---------------------------------------------------------------------------
# A family whose badness is never witnessed
# ---------------------------------------------------------------------------

def unwitnessable_instance(j: int) -> FiniteProblem:
    """Two-outcome problem: the alternative wins with probability 1 - 1/j
    but loses 2j on the rest, keeping its excess risk at exactly 1."""
    if j < 2:
        raise ValueError("j must be at least 2")
    probs = np.array([1.0 - 1.0 / j, 1.0 / j])
    loss = np.array([[1.0 / (1.0 - 1.0 / j), 0.0],   # comparator
                     [0.0, 2.0 * j]])
    return FiniteProblem(probs=probs, loss_matrix=loss, comparator_index=0)


# ---------------------------------------------------------------------------
# Regression instances
# ---------------------------------------------------------------------------

def heavy_tailed_regression(rng, r: float = 1.0, C: float = 4.0,
                            n_x: int = 3, n_f: int = 5, n_y: int = 9):
    """Bounded predictions |f| <= r, E[Y^2 | X] <= C, well-specified mean.

    Returns (problem, C_actual, r): the second-moment condition holds
    with exponent one and constant 8 (sqrt(C) + r)^2.
    """
    x_probs = rng.dirichlet(np.ones(n_x))
    fstar_vals = rng.uniform(-r, r, size=n_x)
    preds = np.vstack([fstar_vals,
                       rng.uniform(-r, r, size=(n_f - 1, n_x))])
    # symmetric bounded noise around fstar keeps the comparator optimal
    # over the convex hull (well-specified mean)
    noise = np.linspace(-1.0, 1.0, n_y)
    noise_probs = np.full(n_y, 1.0 / n_y)
    y_sup, joint_rows, c_actual = [], [], 0.0
    for i in range(n_x):
        ys = fstar_vals[i] + noise
        y_sup.append(ys)
        c_actual = max(c_actual, float(np.dot(noise_probs, ys ** 2)))
    # flatten to a per-x y grid: outcomes are (x_i, noise_k)
    probs = np.outer(x_probs, noise_probs).reshape(-1)
    loss = np.empty((n_f, n_x * n_y))
    pred_mat = np.empty((n_f, n_x * n_y))
    for f in range(n_f):
        for i in range(n_x):
            ys = y_sup[i]
            loss[f, i * n_y:(i + 1) * n_y] = (ys - preds[f, i]) ** 2
            pred_mat[f, i * n_y:(i + 1) * n_y] = preds[f, i]
    problem = FiniteProblem(probs=probs, loss_matrix=loss, predictions=pred_mat,
                            loss_kind="squared", comparator_index=0)
    return problem, c_actual, r


def growing_risk_regression(c_grid=None, noise=(-1.0, 1.0)) -> FiniteProblem:
    """Linear predictors c * x on x in {1, 2}; excess risks (c - 1)^2 E[X^2]
    span far past one, driving the linear-threshold witness regime."""
    if c_grid is None:
        c_grid = np.linspace(-3.0, 5.0, 9)
    c_grid = np.asarray(c_grid, dtype=float)
    x_vals = np.array([1.0, 2.0])
    x_probs = np.array([0.5, 0.5])
    noise = np.asarray(noise, dtype=float)
    n_y = noise.size
    probs = np.outer(x_probs, np.full(n_y, 1.0 / n_y)).reshape(-1)
    loss = np.empty((c_grid.size, x_vals.size * n_y))
    preds = np.empty_like(loss)
    for k, cc in enumerate(c_grid):
        for i, x in enumerate(x_vals):
            ys = 1.0 * x + noise           # truth: y = x + symmetric noise
            loss[k, i * n_y:(i + 1) * n_y] = (ys - cc * x) ** 2
            preds[k, i * n_y:(i + 1) * n_y] = cc * x
    labels = [f"c={cc:g}" for cc in c_grid]
    comp = int(np.argmin(np.abs(c_grid - 1.0)))
    return FiniteProblem(probs=probs, loss_matrix=loss, predictions=preds,
                         predictor_labels=labels, loss_kind="squared",
                         comparator_index=comp)


def bernoulli_grid_problem(theta_true: float = 0.3, spacing: float = 0.002,
                           lo: float = 0.05, hi: float = 0.95) -> FiniteProblem:
    """Dense Bernoulli log-loss grid containing the truth; the scaling
    diagnostic regresses posterior risk against 1/n on this instance."""
    grid = np.arange(lo, hi + spacing / 2, spacing)
    if not np.any(np.abs(grid - theta_true) < 1e-12):
        raise ValueError("theta_true must lie on the grid")
    dens = np.stack([1.0 - grid, grid], axis=1)
    truth = np.array([1.0 - theta_true, theta_true])
    return log_loss_problem(dens, true_probs=truth,
                            comparator_index=int(np.argmin(np.abs(grid - theta_true))),
                            labels=[float(g) for g in grid])
