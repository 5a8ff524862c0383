"""Machine-checkable easiness conditions.

Each checker returns a ConditionReport carrying the verdict, the
constants used, the worst margin (slack of the tightest inequality,
negative means violated), and the violating predictor when there is
one.  Exact checks default to tol = 1e-9 so near-misses stay visible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .esi import annealed_expectation
from .numerics import expect_exp, wdot
from .problems import FiniteProblem, comparator_losses, excess_loss_matrix, find_comparator

__all__ = [
    "ConditionReport",
    "VFunction",
    "TauFunction",
    "check_strong_central",
    "max_central_eta",
    "check_v_central",
    "check_v_ppc",
    "check_witness",
    "check_tau_witness",
    "check_bernstein",
    "check_uniform_exp_tail",
    "check_small_ball",
    "smallball_to_weakened",
    "check_weakened_small_ball",
    "check_slowrate",
]

DEFAULT_TOL = 1e-9
DEGENERATE_EPS = 1e-13


@dataclass
class ConditionReport:
    """Outcome of one condition test."""

    condition: str
    holds: bool
    constants: dict
    margin: float
    violator: int | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "condition": self.condition,
            "holds": bool(self.holds),
            "constants": {k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                          for k, v in self.constants.items()},
            "margin": float(self.margin),
            "violator": None if self.violator is None else int(self.violator),
        }
        if self.details:
            out["details"] = self.details
        return out


def _finish(condition, constants, margins, tol, details=None) -> ConditionReport:
    margins = np.asarray(margins, dtype=float)
    worst = float(np.min(margins)) if margins.size else 0.0
    holds = worst >= -tol
    violator = None if holds or not margins.size else int(np.argmin(margins))
    return ConditionReport(condition=condition, holds=holds, constants=constants,
                           margin=worst, violator=violator, details=details or {})


# ---------------------------------------------------------------------------
# Lower-tail (central) conditions
# ---------------------------------------------------------------------------

def central_moments(problem: FiniteProblem, eta_bar: float, comparator=None) -> np.ndarray:
    """E[exp(-eta_bar * L_f)] for every f."""
    L = excess_loss_matrix(problem, comparator)
    return np.array([expect_exp(problem.probs, -eta_bar * L[f])
                     for f in range(problem.n_predictors)])


def check_strong_central(problem: FiniteProblem, eta_bar: float,
                         tol: float = DEFAULT_TOL, comparator=None) -> ConditionReport:
    """max_f E[exp(-eta_bar (loss_f - loss_fstar))] <= 1 + tol."""
    if eta_bar <= 0:
        raise ValueError("eta_bar must be positive")
    moments = central_moments(problem, eta_bar, comparator)
    return _finish("strong_central", {"eta_bar": eta_bar}, 1.0 - moments, tol,
                   details={"max_moment": float(np.max(moments))})


def max_central_eta(problem: FiniteProblem, tol: float = 1e-6,
                    eta_max: float = 1e6, check_tol: float = DEFAULT_TOL,
                    comparator=None) -> float:
    """Largest rate at which the lower-tail condition holds, by bisection.

    The admissible set is downward closed (the annealed transform is
    non-increasing in eta), which justifies bisection.  Returns 0 when
    no positive rate is admissible and the ``eta_max`` sentinel when the
    cap itself passes.
    """
    def holds(eta):
        return check_strong_central(problem, eta, tol=check_tol, comparator=comparator).holds

    if holds(eta_max):
        return eta_max
    lo = 0.0
    hi = eta_max
    probe = 1.0
    if holds(probe):
        lo = probe
    else:
        hi = probe
        if not holds(1e-12):
            return 0.0
    while lo == 0.0 and hi > 1e-12:
        probe = hi / 2.0
        if holds(probe):
            lo = probe
        else:
            hi = probe
    while hi - lo > tol * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if holds(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class VFunction:
    """Rate budget epsilon -> eta: bounded, non-decreasing, positive off 0.

    kinds: "constant" eta_bar; "power" coeff * eps^(1-beta) clamped at
    v_max; "tabulated" step interpolation of (eps, eta) pairs.
    """

    kind: str
    eta_bar: float = None
    coeff: float = None
    beta: float = None
    v_max: float = np.inf
    table: tuple = None

    @classmethod
    def constant(cls, eta_bar: float) -> "VFunction":
        if eta_bar <= 0:
            raise ValueError("constant rate must be positive")
        return cls(kind="constant", eta_bar=eta_bar)

    @classmethod
    def power(cls, coeff: float, beta: float, v_max: float = 1.0) -> "VFunction":
        if coeff <= 0 or not 0 <= beta <= 1 or v_max <= 0:
            raise ValueError("need coeff > 0, beta in [0, 1], v_max > 0")
        return cls(kind="power", coeff=coeff, beta=beta, v_max=v_max)

    @classmethod
    def tabulated(cls, pairs) -> "VFunction":
        pts = sorted((float(e), float(h)) for e, h in pairs)
        etas = [h for _, h in pts]
        if any(b < a - 1e-15 for a, b in zip(etas, etas[1:])):
            raise ValueError("tabulated rates must be non-decreasing")
        if any(h <= 0 for (e, h) in pts if e > 0):
            raise ValueError("rates must be positive for eps > 0")
        return cls(kind="tabulated", table=tuple(pts))

    def __call__(self, eps: float) -> float:
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.kind == "constant":
            return self.eta_bar
        if self.kind == "power":
            return min(self.coeff * eps ** (1.0 - self.beta), self.v_max)
        eps_pts = [e for e, _ in self.table]
        idx = int(np.searchsorted(eps_pts, eps, side="right")) - 1
        if idx < 0:
            return 0.0
        return self.table[idx][1]

    def scaled(self, factor: float) -> "VFunction":
        if self.kind == "constant":
            return VFunction.constant(self.eta_bar * factor)
        if self.kind == "power":
            return VFunction.power(self.coeff * factor, self.beta, self.v_max * factor)
        return VFunction.tabulated([(e, h * factor) for e, h in self.table])

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "eta_bar": self.eta_bar}
        if self.kind == "power":
            return {"kind": "power", "coeff": self.coeff, "beta": self.beta,
                    "v_max": self.v_max}
        return {"kind": "tabulated", "table": [list(p) for p in self.table]}


def check_v_central(problem: FiniteProblem, v, eps_grid,
                    tol: float = DEFAULT_TOL, search_comparator: bool = False,
                    comparator=None) -> ConditionReport:
    """Slack-indexed lower-tail condition.

    For each eps on the grid, with eta = v(eps):
    max_f E[exp(eta (loss_fstar - loss_f - eps))] <= 1 + tol.  By
    default the comparator is the global risk minimizer; with
    ``search_comparator`` every predictor is tried as the reference for
    each eps (the definition permits an eps-dependent one).
    """
    eps_grid = list(eps_grid)
    if not eps_grid or any(e < 0 for e in eps_grid):
        raise ValueError("eps_grid must be nonempty with nonnegative entries")
    candidates = (range(problem.n_predictors) if search_comparator
                  else [problem.comparator_index if comparator is None else comparator])
    margins = []
    per_eps = []
    for eps in eps_grid:
        eta = float(v(eps))
        if eta <= 0:
            per_eps.append({"eps": eps, "eta": eta, "skipped": True})
            continue
        best = -np.inf
        for cand in candidates:
            L = excess_loss_matrix(problem, cand)
            moments = np.array([
                expect_exp(problem.probs, eta * (-L[f] - eps))
                for f in range(problem.n_predictors)
            ])
            best = max(best, float(1.0 - np.max(moments)))
        margins.append(best)
        per_eps.append({"eps": eps, "eta": eta, "margin": best})
    constants = {"v": v.to_dict() if hasattr(v, "to_dict") else repr(v)}
    report = _finish("v_central", constants, margins, tol, details={"per_eps": per_eps})
    if not report.holds and margins:
        bad = [row["eps"] for row in per_eps if "margin" in row and row["margin"] < -tol]
        report.details["breaking_eps"] = bad[0] if bad else None
        report.violator = None
    return report


def check_v_ppc(problem: FiniteProblem, v, eps_grid, tol: float = DEFAULT_TOL,
                grip_tol: float = 1e-8, max_iter: int = 50_000) -> ConditionReport:
    """Pseudo-convexity condition: comparator risk within eps of the
    projection objective at rate eta = v(eps).

    The optimizer's certified gap is folded into the tolerance, so a
    pass means the exact infimum satisfies the inequality.
    """
    from .grip import compute_grip

    eps_grid = list(eps_grid)
    if not eps_grid:
        raise ValueError("eps_grid must be nonempty")
    fstar_risk = problem.risk(problem.comparator_index)
    margins = []
    per_eps = []
    for eps in eps_grid:
        eta = float(v(eps))
        if eta <= 0:
            per_eps.append({"eps": eps, "eta": eta, "skipped": True})
            continue
        res = compute_grip(problem, eta, max_iter=max_iter, tol=grip_tol)
        gap = fstar_risk - res.objective + res.opt_gap  # upper bound on the true gap
        margins.append(eps - gap)
        per_eps.append({"eps": eps, "eta": eta, "gap_upper": float(gap),
                        "opt_gap": res.opt_gap, "margin": float(eps - gap)})
    constants = {"v": v.to_dict() if hasattr(v, "to_dict") else repr(v)}
    return _finish("v_ppc", constants, margins, tol, details={"per_eps": per_eps})


# ---------------------------------------------------------------------------
# Upper-tail (witness) conditions
# ---------------------------------------------------------------------------

def _truncated_mean(probs, L, threshold) -> float:
    sel = L <= threshold
    return wdot(probs * sel, np.where(sel, L, 0.0))


def check_witness(problem: FiniteProblem, u: float, c: float,
                  comparator=None, tol: float = DEFAULT_TOL) -> ConditionReport:
    """E[L_f 1{L_f <= u}] >= c E[L_f] for every non-degenerate f.

    Predictors with |E[L_f]| below machine noise pass by the 0 >= 0
    convention.  The equivalent reverse form with c' = 1 - c is reported
    alongside.
    """
    if u <= 0 or not 0 < c <= 1:
        raise ValueError("need u > 0 and c in (0, 1]")
    L = excess_loss_matrix(problem, comparator)
    probs = problem.probs
    margins = []
    for f in range(problem.n_predictors):
        xs = wdot(probs, L[f])
        if abs(xs) <= DEGENERATE_EPS:
            margins.append(0.0)
            continue
        trunc = _truncated_mean(probs, L[f], u)
        margins.append(trunc - c * xs if np.isfinite(xs) else -np.inf)
    return _finish("witness", {"u": u, "c": c, "c_prime": 1.0 - c}, margins, tol)


@dataclass(frozen=True)
class TauFunction:
    """Per-risk truncation threshold, clamped into [1, inf).

    kinds: "constant" u; "power" u * x^-(1-beta); "logshape"
    1 v (1/kappa) log(2 M / (kappa x)); "linear" u * (1 v x/M).
    """

    kind: str
    u: float = None
    beta: float = None
    kappa: float = None
    M_kappa: float = None
    M: float = 1.0

    @classmethod
    def constant(cls, u: float) -> "TauFunction":
        return cls(kind="constant", u=u)

    @classmethod
    def power(cls, u: float, beta: float) -> "TauFunction":
        return cls(kind="power", u=u, beta=beta)

    @classmethod
    def logshape(cls, kappa: float, M_kappa: float) -> "TauFunction":
        return cls(kind="logshape", kappa=kappa, M_kappa=M_kappa)

    @classmethod
    def linear(cls, u: float, M: float = 1.0) -> "TauFunction":
        if u < 1:
            raise ValueError("linear threshold needs u >= 1")
        return cls(kind="linear", u=u, M=M)

    def raw(self, x: float) -> float:
        if self.kind == "constant":
            return self.u
        if self.kind == "power":
            return self.u * x ** -(1.0 - self.beta) if x > 0 else np.inf
        if self.kind == "logshape":
            if x <= 0:
                return np.inf
            return max(1.0, np.log(2.0 * self.M_kappa / (self.kappa * x)) / self.kappa)
        return self.u * max(1.0, x / self.M)

    def __call__(self, x: float) -> float:
        return max(1.0, self.raw(x))

    def clamped_at(self, x: float) -> bool:
        return self.raw(x) < 1.0

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for k in ("u", "beta", "kappa", "M_kappa", "M"):
            v = getattr(self, k)
            if v is not None:
                out[k] = float(v)
        return out


def check_tau_witness(problem: FiniteProblem, tau, c: float,
                      comparator=None, tol: float = DEFAULT_TOL) -> ConditionReport:
    """Witness condition with per-predictor threshold tau(E[L_f])."""
    if not 0 < c <= 1:
        raise ValueError("c must lie in (0, 1]")
    L = excess_loss_matrix(problem, comparator)
    probs = problem.probs
    margins = []
    clamped = False
    skipped = []
    for f in range(problem.n_predictors):
        xs = wdot(probs, L[f])
        if abs(xs) <= DEGENERATE_EPS:
            margins.append(0.0)
            continue
        thr = tau(xs) if callable(tau) else float(tau)
        if hasattr(tau, "clamped_at") and np.isfinite(xs) and tau.clamped_at(xs):
            clamped = True
        if not np.isfinite(xs):
            if np.isposinf(thr):
                skipped.append(f)
                margins.append(0.0)
            else:
                margins.append(-np.inf)
            continue
        margins.append(_truncated_mean(probs, L[f], thr) - c * xs)
    constants = {"c": c, "tau": tau.to_dict() if hasattr(tau, "to_dict") else repr(tau)}
    details = {"tau_clamped": clamped}
    if skipped:
        details["skipped_infinite_risk"] = skipped
    return _finish("tau_witness", constants, margins, tol, details=details)


# ---------------------------------------------------------------------------
# Second-moment and tail conditions
# ---------------------------------------------------------------------------

def check_bernstein(problem: FiniteProblem, beta: float, B: float,
                    comparator=None, tol: float = DEFAULT_TOL) -> ConditionReport:
    """E[L_f^2] <= B (E[L_f])^beta for all f with nonnegative excess risk.

    The comparator is skipped (self-comparison); degenerate E[L_f] = 0
    passes by convention, and negative-excess-risk predictors are
    outside the condition's domain.
    """
    if not 0 < beta <= 1 or B <= 0:
        raise ValueError("need beta in (0, 1] and B > 0")
    fstar = problem.comparator_index if comparator is None else comparator
    L = excess_loss_matrix(problem, comparator)
    probs = problem.probs
    margins = []
    for f in range(problem.n_predictors):
        if f == fstar:
            margins.append(0.0)
            continue
        xs = wdot(probs, L[f])
        if xs < 0 or abs(xs) <= DEGENERATE_EPS:
            margins.append(0.0)
            continue
        second = wdot(probs, L[f] ** 2)
        bound = B * xs ** beta if np.isfinite(xs) else np.inf
        margins.append(bound - second if np.isfinite(second) else -np.inf)
    return _finish("bernstein", {"beta": beta, "B": B}, margins, tol)


def check_uniform_exp_tail(problem: FiniteProblem, kappa: float,
                           comparator=None) -> dict:
    """M_kappa = sup_f E[exp(kappa L_f)] and the threshold map it induces.

    When finite, the logshape threshold with c = 1/2 certifies a
    tau-witness condition (verified separately by check_tau_witness).
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    L = excess_loss_matrix(problem, comparator)
    values = np.array([expect_exp(problem.probs, kappa * L[f])
                       for f in range(problem.n_predictors)])
    M = float(np.max(values))
    out = {"kappa": kappa, "M_kappa": M, "holds": bool(np.isfinite(M)),
           "per_predictor": values.tolist()}
    if np.isfinite(M):
        out["tau"] = TauFunction.logshape(kappa, M)
        out["c"] = 0.5
    return out


# ---------------------------------------------------------------------------
# Small-ball family
# ---------------------------------------------------------------------------

def _pairs(problem: FiniteProblem, pairs):
    F = problem.n_predictors
    if pairs == "vs_comparator":
        fstar = problem.comparator_index
        return [(f, fstar) for f in range(F) if f != fstar]
    if pairs == "all":
        return [(f, h) for f in range(F) for h in range(f + 1, F)]
    return list(pairs)


def check_small_ball(problem: FiniteProblem, kappa: float, epsilon: float,
                     pairs="all", tol: float = DEFAULT_TOL) -> ConditionReport:
    """P(|f - h| >= kappa ||f - h||_{L2(P)}) >= epsilon over predictor pairs.

    Needs the problem's prediction matrix; identical pairs are skipped
    by convention.
    """
    if problem.predictions is None:
        raise ValueError("problem has no prediction matrix attached")
    if kappa <= 0 or not 0 < epsilon < 1:
        raise ValueError("need kappa > 0 and epsilon in (0, 1)")
    preds = problem.predictions
    probs = problem.probs
    margins = []
    checked = []
    for f, h in _pairs(problem, pairs):
        diff = np.abs(preds[f] - preds[h])
        norm = np.sqrt(wdot(probs, diff ** 2))
        if norm <= 0:
            continue
        prob = float(probs[diff >= kappa * norm - 1e-15].sum())
        margins.append(prob - epsilon)
        checked.append((f, h, prob))
    report = _finish("small_ball", {"kappa": kappa, "epsilon": epsilon}, margins, tol)
    report.details["n_pairs"] = len(checked)
    if not report.holds and checked:
        worst = min(checked, key=lambda t: t[2])
        report.details["worst_pair"] = [int(worst[0]), int(worst[1])]
        report.details["worst_probability"] = worst[2]
        report.violator = int(worst[0])
    return report


def smallball_to_weakened(C1: float, C2: float) -> tuple:
    """Constants of the weakened form: (C1', C2') = (2/C2, C1*C2/2)."""
    if C1 <= 0 or not 0 < C2 < 1:
        raise ValueError("need C1 > 0 and C2 in (0, 1)")
    return 2.0 / C2, C1 * C2 / 2.0


def check_weakened_small_ball(problem: FiniteProblem, C1p: float, C2p: float,
                              pairs="all", tol: float = DEFAULT_TOL) -> ConditionReport:
    """E[S 1{S < C1' E[S]}] >= C2' E[S] for S = (f - h)^2 over pairs."""
    if problem.predictions is None:
        raise ValueError("problem has no prediction matrix attached")
    preds = problem.predictions
    probs = problem.probs
    margins = []
    for f, h in _pairs(problem, pairs):
        S = (preds[f] - preds[h]) ** 2
        mean = wdot(probs, S)
        if mean <= 0:
            continue
        sel = S < C1p * mean
        margins.append(wdot(probs * sel, np.where(sel, S, 0.0)) - C2p * mean)
    return _finish("weakened_small_ball", {"C1_prime": C1p, "C2_prime": C2p},
                   margins, tol)


# ---------------------------------------------------------------------------
# Slow-rate gap bound
# ---------------------------------------------------------------------------

def check_slowrate(problem: FiniteProblem, u: float, eta: float,
                   grip_tol: float = 1e-8, tol: float = DEFAULT_TOL) -> dict:
    """Projection-gap bound for nonnegative losses.

    Preconditions: losses >= 0 on the support, eta <= 1/E[loss_fstar],
    and a positive truncated excess mean at level u for every predictor
    with positive excess risk.  Then
    E[loss_fstar] - E[projection loss] <= eta * e * (u^2 + 1.5 E[loss_fstar^2]).
    """
    from .grip import compute_grip

    mask = problem.probs > 0
    if np.any(problem.loss_matrix[:, mask][np.isfinite(problem.loss_matrix[:, mask])] < 0):
        raise ValueError("slow-rate bound needs nonnegative losses")
    fstar = problem.comparator_index
    lstar = problem.loss_matrix[fstar]
    mean_star = wdot(problem.probs, lstar)
    if eta > 1.0 / mean_star + 1e-12:
        raise ValueError("eta must be at most 1/E[loss_fstar]")
    L = excess_loss_matrix(problem)
    for f in range(problem.n_predictors):
        xs = wdot(problem.probs, L[f])
        if xs > DEGENERATE_EPS and _truncated_mean(problem.probs, L[f], u) <= 0:
            raise ValueError(f"positive truncated-mean precondition fails at f={f}")
    res = compute_grip(problem, eta, tol=grip_tol)
    gap = mean_star - res.objective + res.opt_gap
    second = wdot(problem.probs, lstar ** 2)
    bound = eta * np.e * (u ** 2 + 1.5 * second)
    return {
        "gap_upper": float(gap),
        "bound": float(bound),
        "eta": eta,
        "u": u,
        "holds": bool(gap <= bound + tol),
    }
