"""Shared numerical kernels.

All expectations in this package run over finite spaces whose values may
contain the +inf sentinel.  The conventions are:

* ``p * inf = inf`` for ``p > 0`` and ``0 * inf = 0`` (measure-zero points
  never contribute),
* ``exp(-eta * inf) = 0`` and ``exp(+eta * inf) = inf``,
* log/exp aggregation goes through log-sum-exp so that exponents up to
  ~1e3 in magnitude stay representable.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

PROB_TOL = 1e-12


def as_prob_vector(p, name: str = "probs") -> np.ndarray:
    """Validate and return a probability vector as a float64 array."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector")
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"{name} sums to {p.sum()!r}, not 1 within {PROB_TOL}")
    return p


def as_weight_vector(w, n: int | None = None, name: str = "weights") -> np.ndarray:
    """Validate a distribution over predictors (prior/posterior/mixture)."""
    w = as_prob_vector(w, name=name)
    if n is not None and w.shape[0] != n:
        raise ValueError(f"{name} has length {w.shape[0]}, expected {n}")
    return w


def wdot(probs: np.ndarray, values: np.ndarray) -> float:
    """Expectation sum(p * v) under the 0 * inf = 0 convention.

    Returns +inf as soon as any mass-carrying entry is +inf.
    """
    probs = np.asarray(probs, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = probs > 0
    if not mask.any():
        return 0.0
    v = values[mask]
    if np.any(np.isposinf(v)):
        return float("inf")
    return float(np.dot(probs[mask], v))


def log_expect_exp(probs: np.ndarray, exponents: np.ndarray) -> float:
    """log E[exp(X)] over the support of ``probs``, stabilised.

    ``exponents`` may contain -inf (contributes 0) or +inf (result +inf).
    """
    probs = np.asarray(probs, dtype=float)
    exponents = np.asarray(exponents, dtype=float)
    mask = probs > 0
    if not mask.any():
        return float("-inf")
    x = exponents[mask]
    if np.any(np.isposinf(x)):
        return float("inf")
    with np.errstate(divide="ignore"):
        return float(logsumexp(np.log(probs[mask]) + x))


def expect_exp(probs: np.ndarray, exponents: np.ndarray) -> float:
    """E[exp(X)], possibly +inf; never raises on overflow."""
    s = log_expect_exp(probs, exponents)
    if s == float("inf"):
        return float("inf")
    with np.errstate(over="ignore"):
        return float(np.exp(s))


def posterior_weighted(weights: np.ndarray, values: np.ndarray) -> float:
    """sum(w * v) over predictors with 0 * (+-inf) = 0."""
    weights = np.asarray(weights, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = weights > 0
    if not mask.any():
        return 0.0
    v = values[mask]
    if np.any(np.isposinf(v)):
        return float("inf")
    if np.any(np.isneginf(v)):
        return float("-inf")
    return float(np.dot(weights[mask], v))


def kl_weights(post: np.ndarray, prior: np.ndarray) -> float:
    """KL(post || prior) for weight vectors; +inf off the prior support."""
    post = np.asarray(post, dtype=float)
    prior = np.asarray(prior, dtype=float)
    mask = post > 0
    if np.any(prior[mask] <= 0):
        return float("inf")
    return float(np.sum(post[mask] * (np.log(post[mask]) - np.log(prior[mask]))))
