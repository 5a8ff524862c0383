"""KL, Renyi, Hellinger, the tilted-density misspecification metric, and
the ratio constants that convert Hellinger-type control into risk control."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .esi import annealed_expectation, hellinger_expectation
from .numerics import wdot
from .problems import FiniteProblem, comparator_losses

__all__ = [
    "kl_divergence",
    "renyi_divergence",
    "hellinger_affinity",
    "squared_hellinger",
    "tilted_density",
    "misspec_metric",
    "g_ratio",
    "h_ratio",
    "RatioConstants",
    "ratio_constant",
    "cu_constant",
    "cu_prime_constant",
    "kl_vs_hellinger_bound",
    "kl_vs_hellinger_tau_bound",
]


def kl_divergence(p, q) -> float:
    """sum p log(p/q) with 0 log(0/.) = 0; +inf where p > 0 and q = 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    mask = p > 0
    if np.any(q[mask] <= 0):
        return float("inf")
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def renyi_divergence(p, q, alpha: float) -> float:
    """(1/(alpha-1)) log sum p^alpha q^(1-alpha) for alpha in (0, 1)."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = (p > 0) & (q > 0)
    if not mask.any():
        return float("inf")
    s = logsumexp(alpha * np.log(p[mask]) + (1 - alpha) * np.log(q[mask]))
    return float(s / (alpha - 1.0))


def hellinger_affinity(p, q) -> float:
    """sum sqrt(p q); entries are already normalized so this is direct."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(np.sum(np.sqrt(p * q)))


def squared_hellinger(p, q) -> float:
    """2 (1 - affinity); the metric-squared normalization used throughout."""
    return 2.0 * (1.0 - hellinger_affinity(p, q))


def tilted_density(problem: FiniteProblem, f: int, eta: float, comparator=None) -> np.ndarray:
    """Exponentially tilted data density p(z) e^{-eta L_f(z)} / E[e^{-eta L_f}].

    Sums to one within 1e-12 and is strictly positive wherever the data
    distribution is and the excess loss is finite.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    L = problem.excess_loss(f, comparator)
    probs = problem.probs
    mask = probs > 0
    with np.errstate(divide="ignore"):
        logp = np.where(mask, np.log(probs, where=mask, out=np.full_like(probs, -np.inf)), -np.inf)
    logtilt = logp - eta * L
    z = logsumexp(logtilt[mask])
    if z == -np.inf:
        raise ValueError("degenerate tilt: E[exp(-eta L)] is zero")
    out = np.zeros_like(probs)
    out[mask] = np.exp(logtilt[mask] - z)
    return out / out.sum()


def misspec_metric(problem: FiniteProblem, f: int, f_prime: int, eta_bar: float,
                   comparator=None) -> float:
    """Squared tilted-Hellinger distance (2/eta_bar)(1 - affinity of tilts).

    The square root is a metric: it is a Hellinger distance between the
    eta_bar-tilted data densities, scaled by sqrt(2/eta_bar).
    """
    pf = tilted_density(problem, f, eta_bar, comparator)
    pg = tilted_density(problem, f_prime, eta_bar, comparator)
    return (2.0 / eta_bar) * (1.0 - hellinger_affinity(pf, pg))


# ---------------------------------------------------------------------------
# Ratio constants
# ---------------------------------------------------------------------------

_SERIES_CUTOFF = 1e-4


def g_ratio(eta: float, r) -> np.ndarray:
    """g_eta(r) = (1/eta)(1 - r^eta) - (1 - r), extended to eta = 0 by
    g_0(r) = -log r - (1 - r).  Positive for r != 1, eta in [0, 1).

    Near r = 1 the direct formula cancels catastrophically, so a series
    in log r takes over: g = sum_{k>=2} (1 - eta^{k-1}) (log r)^k / k!.
    """
    if not 0 <= eta < 1:
        raise ValueError("eta must lie in [0, 1)")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    L = np.log(r)
    out = np.empty_like(L)
    near = np.abs(L) < _SERIES_CUTOFF
    if near.any():
        Ln = L[near]
        term = np.zeros_like(Ln)
        Lpow = Ln ** 2
        fact = 2.0
        for k in range(2, 9):
            coeff = 1.0 - eta ** (k - 1)
            term += coeff * Lpow / fact
            Lpow = Lpow * Ln
            fact *= (k + 1)
        out[near] = term
    far = ~near
    if far.any():
        rf = r[far]
        if eta == 0:
            out[far] = -np.log(rf) - (1.0 - rf)
        else:
            out[far] = (1.0 - rf ** eta) / eta - (1.0 - rf)
    return out if out.shape else float(out)


def h_ratio(eta_prime: float, eta: float, r) -> np.ndarray:
    """h(r) = g_{eta'}(r) / g_eta(r), with the removable singularity at
    r = 1 filled by (1 - eta') / (1 - eta).  Strictly decreasing in r."""
    if not 0 <= eta_prime < eta < 1:
        raise ValueError("need 0 <= eta' < eta < 1")
    r = np.asarray(r, dtype=float)
    num = np.atleast_1d(g_ratio(eta_prime, r))
    den = np.atleast_1d(g_ratio(eta, r))
    out = np.empty_like(num)
    tiny = np.abs(np.log(np.atleast_1d(r))) < 1e-9
    out[tiny] = (1.0 - eta_prime) / (1.0 - eta)
    ok = ~tiny
    out[ok] = num[ok] / den[ok]
    return out if np.asarray(r).shape else float(out[0])


@dataclass(frozen=True)
class RatioConstants:
    """C such that g_{eta'}(r) <= C g_eta(r) for all r >= 1/V."""

    eta_prime: float
    eta: float
    V: float
    C: float
    upper_bound: float

    def to_dict(self) -> dict:
        return {"eta_prime": self.eta_prime, "eta": self.eta, "V": self.V,
                "C": self.C, "upper_bound": self.upper_bound}


def ratio_constant(eta_prime: float, eta: float, V: float) -> RatioConstants:
    """Sharp constant C = h_{eta',eta}(1/V) plus its closed-form bound.

    For eta' = 0 the constant has the closed form
    (log V - (1 - 1/V)) / ((1/eta)(1 - V^-eta) - (1 - 1/V)) and is
    bounded by (eta/(1-eta)) log V + 1/(1-eta); for eta' > 0 the bound
    is ((1/eta') - 1) / ((1/eta) - 1).
    """
    if not 0 <= eta_prime < eta < 1:
        raise ValueError("need 0 <= eta' < eta < 1")
    if V <= 1:
        raise ValueError("V must exceed 1")
    C = float(h_ratio(eta_prime, eta, 1.0 / V))
    if eta_prime == 0:
        bound = (eta / (1 - eta)) * np.log(V) + 1.0 / (1 - eta)
    else:
        bound = ((1.0 / eta_prime) - 1.0) / ((1.0 / eta) - 1.0)
    return RatioConstants(eta_prime=eta_prime, eta=eta, V=V, C=C,
                          upper_bound=float(bound))


def cu_constant(eta: float, eta_bar: float, u: float, c: float) -> float:
    """c_u = (1/c) (eta u + 1) / (1 - eta/eta_bar); diverges as eta -> eta_bar."""
    if not 0 < eta < eta_bar:
        raise ValueError("need 0 < eta < eta_bar")
    if u <= 0 or not 0 < c <= 1:
        raise ValueError("need u > 0 and c in (0, 1]")
    return (1.0 / c) * (eta * u + 1.0) / (1.0 - eta / eta_bar)


def cu_prime_constant(eta: float, eta_bar: float, u: float, c: float) -> float:
    """c'_{2u} = (1/c) (2 eta u + 1) / (1 - 2 eta / eta_bar) for eta < eta_bar/2."""
    if not 0 < eta < eta_bar / 2.0:
        raise ValueError("need 0 < eta < eta_bar / 2")
    if u <= 0 or not 0 < c <= 1:
        raise ValueError("need u > 0 and c in (0, 1]")
    return (1.0 / c) * (2.0 * eta * u + 1.0) / (1.0 - 2.0 * eta / eta_bar)


# ---------------------------------------------------------------------------
# Risk vs transformed-risk comparisons
# ---------------------------------------------------------------------------

def kl_vs_hellinger_bound(problem: FiniteProblem, f: int, eta: float,
                          eta_bar: float, u: float, c: float,
                          assume_certified: bool = False, tol: float = 1e-9) -> dict:
    """Assert excess risk <= c_u * Hellinger-transformed <= c_u * annealed.

    Requires the lower-tail condition at eta_bar and the truncated-mean
    condition at (u, c); both are re-checked unless ``assume_certified``.
    """
    from .conditions import check_strong_central, check_witness

    if not assume_certified:
        central = check_strong_central(problem, eta_bar)
        witness = check_witness(problem, u, c)
        if not central.holds:
            raise ValueError("lower-tail condition not certified at eta_bar")
        if not witness.holds:
            raise ValueError(f"witness condition not certified at (u={u}, c={c})")
    L = problem.excess_loss(f)
    xs = wdot(problem.probs, L)
    he = hellinger_expectation(problem, L, eta)
    ann = annealed_expectation(problem, L, eta)
    cu = cu_constant(eta, eta_bar, u, c)
    return {
        "excess_risk": xs,
        "hellinger": he,
        "annealed": ann,
        "c_u": cu,
        "margin_hellinger": cu * he - xs,
        "margin_annealed": cu * ann - cu * he,
        "holds": bool(xs <= cu * he + tol and cu * he <= cu * ann + tol),
    }


def _wong_shen_constant(problem: FiniteProblem, kappa: float, he_value: float) -> dict:
    """Small-Hellinger-regime comparison constant, logged for reference only."""
    fstar = problem.comparator_index
    if problem.densities is None:
        return {"applicable": False}
    dens = problem.densities
    w = problem.base_weights
    pstar = dens[fstar]
    mprime = 0.0
    for f in range(problem.n_predictors):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dens[f] > 0, pstar / dens[f], np.inf)
        sel = (dens[f] >= np.exp(1.0 / kappa) * np.finfo(float).tiny) & \
              (ratio > 0) & (dens[f] / np.maximum(pstar, np.finfo(float).tiny) >= np.exp(1.0 / kappa))
        contrib = np.sum(pstar[sel] * np.minimum(ratio[sel], np.inf) ** kappa * w[sel])
        mprime = max(mprime, float(contrib))
    regime = he_value <= 0.5 * (1.0 - np.exp(-1.0)) ** 2
    if he_value <= 0:
        return {"applicable": False, "regime": bool(regime), "M_prime": mprime}
    const = (6.0 + 2.0 * np.log(2.0) / (1.0 - np.exp(-1.0)) ** 2
             + (4.0 / kappa) * max(2.0, np.log(max(mprime, np.finfo(float).tiny) / he_value)))
    return {"applicable": True, "regime": bool(regime), "M_prime": mprime,
            "constant": float(const)}


def kl_vs_hellinger_tau_bound(problem: FiniteProblem, f: int, eta: float,
                              eta_bar: float, tau, c: float, lam: float,
                              kappa: float = None, tol: float = 1e-9) -> dict:
    """Threshold-function variant: excess risk <= lam v (c_{tau(lam)} * transformed).

    ``tau`` is a callable threshold map (nonincreasing on the exercised
    range).  When ``kappa`` is given, the comparison constant of the
    small-Hellinger regime is logged alongside (informational; no
    ordering asserted).
    """
    L = problem.excess_loss(f)
    xs = wdot(problem.probs, L)
    he = hellinger_expectation(problem, L, eta)
    ann = annealed_expectation(problem, L, eta)
    u_eff = float(tau(lam))
    cu = cu_constant(eta, eta_bar, u_eff, c)
    rhs_he = max(lam, cu * he)
    rhs_ann = max(lam, cu * ann)
    out = {
        "excess_risk": xs,
        "lambda": lam,
        "tau_at_lambda": u_eff,
        "c_tau": cu,
        "hellinger": he,
        "annealed": ann,
        "rhs_hellinger": rhs_he,
        "rhs_annealed": rhs_ann,
        "holds": bool(xs <= rhs_he + tol and rhs_he <= rhs_ann + tol),
    }
    if kappa is not None:
        out["comparison"] = _wong_shen_constant(problem, kappa, he)
    return out
