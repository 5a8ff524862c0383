"""Annealed/Hellinger-transformed expectations and ESI calculus.

An exponential stochastic inequality U <=_eta U' asserts
E[exp(eta (U - U'))] <= 1; it packages an in-expectation statement and
an exponential tail bound at once.  On finite spaces the defining
moment is computed exactly, so verdicts carry a 1e-10 default
tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import expect_exp, log_expect_exp, wdot
from .problems import FiniteProblem

__all__ = [
    "annealed_expectation",
    "hellinger_expectation",
    "EsiStatement",
    "check_esi",
    "esi_weak_transitivity",
    "esi_implications",
]

DEFAULT_ESI_TOL = 1e-10


def _probs_of(dist) -> np.ndarray:
    if isinstance(dist, FiniteProblem):
        return dist.probs
    return np.asarray(dist, dtype=float)


def annealed_expectation(dist, values, eta: float) -> float:
    """-(1/eta) log E[exp(-eta U)].

    Always <= the plain expectation; +inf entries of ``values``
    contribute exp(-eta*inf) = 0, and the result is +inf when the inner
    sum vanishes.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    probs = _probs_of(dist)
    values = np.asarray(values, dtype=float)
    s = log_expect_exp(probs, -eta * values)
    if s == float("-inf"):
        return float("inf")
    return -s / eta


def hellinger_expectation(dist, values, eta: float) -> float:
    """(1/eta)(1 - E[exp(-eta U)]); always <= min(1/eta, annealed)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    probs = _probs_of(dist)
    values = np.asarray(values, dtype=float)
    m = expect_exp(probs, -eta * values)
    if m == float("inf"):
        return float("-inf")
    return (1.0 - m) / eta


@dataclass
class EsiStatement:
    """A verified statement lhs <=_eta rhs over a finite space."""

    lhs: np.ndarray
    rhs: np.ndarray
    probs: np.ndarray
    eta: float
    moment: float
    tol: float
    holds: bool
    note: str = field(default="")

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "moment": self.moment,
            "tol": self.tol,
            "holds": bool(self.holds),
            "note": self.note,
        }


def check_esi(lhs, rhs, dist, eta: float, tol: float = DEFAULT_ESI_TOL) -> EsiStatement:
    """Exact ESI verdict: moment = E[exp(eta (lhs - rhs))], holds iff <= 1 + tol."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    probs = _probs_of(dist)
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    rhs_b = np.broadcast_to(rhs, lhs.shape) if rhs.shape != lhs.shape else rhs
    if lhs.shape != probs.shape or rhs_b.shape != probs.shape:
        raise ValueError("lhs/rhs/probs dimension mismatch")
    with np.errstate(invalid="ignore"):
        diff = lhs - rhs_b
    moment = expect_exp(probs, eta * diff)
    return EsiStatement(lhs=lhs, rhs=rhs_b, probs=probs, eta=eta,
                        moment=moment, tol=tol, holds=moment <= 1.0 + tol)


def esi_weak_transitivity(stmt1: EsiStatement, stmt2: EsiStatement) -> EsiStatement:
    """Combine U <=_eta a and V <=_eta b into (U + V) <=_{eta/2} (a + b).

    Both inputs must live on the same space, share eta, and have
    constant right-hand sides.  The output is re-verified by direct
    moment computation; it must hold whenever the inputs do.
    """
    if stmt1.eta != stmt2.eta:
        raise ValueError("mismatched eta")
    if stmt1.probs.shape != stmt2.probs.shape or not np.allclose(stmt1.probs, stmt2.probs):
        raise ValueError("statements live on different spaces")
    for s in (stmt1, stmt2):
        if np.ptp(s.rhs) != 0:
            raise ValueError("weak transitivity needs constant right-hand sides")
    combined = check_esi(stmt1.lhs + stmt2.lhs, stmt1.rhs + stmt2.rhs,
                         stmt1.probs, eta=stmt1.eta / 2.0,
                         tol=max(stmt1.tol, stmt2.tol))
    combined.note = "weak transitivity at halved rate"
    if stmt1.holds and stmt2.holds and not combined.holds:
        raise AssertionError(
            f"weak transitivity violated: combined moment {combined.moment}")
    return combined


def esi_implications(stmt: EsiStatement, K: float) -> dict:
    """Consequences of a holding ESI: mean ordering and the e^{-K} tail.

    Returns the measured mean gap E[lhs] - E[rhs] (must be <= 0) and
    the exact probability P(lhs > rhs + K/eta) together with its bound
    exp(-K).
    """
    if not stmt.holds:
        raise ValueError("statement does not hold; implications unavailable")
    if K <= 0:
        raise ValueError("K must be positive")
    mean_gap = wdot(stmt.probs, stmt.lhs) - wdot(stmt.probs, stmt.rhs)
    exceed = stmt.lhs > stmt.rhs + K / stmt.eta
    tail_probability = float(stmt.probs[exceed].sum())
    tail_bound = float(np.exp(-K))
    if mean_gap > stmt.tol:
        raise AssertionError(f"mean implication violated: gap {mean_gap}")
    if tail_probability > tail_bound + stmt.tol:
        raise AssertionError(
            f"tail implication violated: {tail_probability} > {tail_bound}")
    return {
        "mean_gap": mean_gap,
        "tail_probability": tail_probability,
        "tail_bound": tail_bound,
        "K": K,
    }
