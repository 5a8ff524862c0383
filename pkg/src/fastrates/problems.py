"""Finite learning problems.

A problem is a distribution over finitely many outcomes together with a
loss table over a finite predictor set.  Entries of the loss table are
extended reals (finite or +inf); -inf is rejected at construction.  The
comparator is the risk minimizer unless supplied explicitly.

Everything downstream (estimators, condition checkers, projections,
verifiers) consumes these objects, so they are immutable value types.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import as_prob_vector, wdot

__all__ = [
    "FiniteProblem",
    "risk",
    "excess_risk",
    "find_comparator",
    "comparator_losses",
    "excess_loss_matrix",
    "log_loss_problem",
    "squared_loss_problem",
    "zero_one_problem",
    "problem_to_json",
    "problem_from_json",
]


@dataclass(frozen=True)
class FiniteProblem:
    """A learning problem on finite outcome and predictor sets.

    Parameters
    ----------
    probs : array, shape (n_outcomes,)
        Outcome probabilities; nonnegative, sum to one within 1e-12.
    loss_matrix : array, shape (n_predictors, n_outcomes)
        Loss of each predictor at each outcome.  Finite or +inf; -inf
        is invalid.  At least one predictor must have finite risk.
    outcomes, predictor_labels : list, optional
        Display labels.  Default to integer ranges.
    comparator_index : int, optional
        Index of the reference predictor.  Computed as the risk
        minimizer (smallest index on ties) when absent.
    predictions : array, shape (n_predictors, n_outcomes), optional
        Point predictions f(x) per outcome; required only by the
        small-ball checker.
    loss_kind : str
        Tag: "squared", "zero_one", "log", or "generic".
    densities, base_weights : arrays, optional
        For log-loss problems, the density table and base-measure
        weights the losses were derived from.
    """

    probs: np.ndarray
    loss_matrix: np.ndarray
    outcomes: list = None
    predictor_labels: list = None
    comparator_index: int = None
    predictions: np.ndarray = None
    loss_kind: str = "generic"
    densities: np.ndarray = field(default=None, repr=False)
    base_weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        probs = as_prob_vector(self.probs)
        loss = np.asarray(self.loss_matrix, dtype=float)
        if loss.ndim != 2:
            raise ValueError("loss_matrix must be 2-d (predictors x outcomes)")
        if loss.shape[1] != probs.shape[0]:
            raise ValueError("loss_matrix width does not match probs length")
        if np.any(np.isneginf(loss)) or np.any(np.isnan(loss)):
            raise ValueError("loss entries must be finite or +inf")
        probs.flags.writeable = False
        loss.flags.writeable = False
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "loss_matrix", loss)
        if self.outcomes is None:
            object.__setattr__(self, "outcomes", list(range(loss.shape[1])))
        if self.predictor_labels is None:
            object.__setattr__(self, "predictor_labels", list(range(loss.shape[0])))
        if self.predictions is not None:
            preds = np.asarray(self.predictions, dtype=float)
            if preds.shape != loss.shape:
                raise ValueError("predictions must match loss_matrix shape")
            preds.flags.writeable = False
            object.__setattr__(self, "predictions", preds)
        risks = self.risks()
        if not np.any(np.isfinite(risks)):
            raise ValueError("nontrivial problem required: every predictor has infinite risk")
        if self.comparator_index is None:
            object.__setattr__(self, "comparator_index", int(np.argmin(risks)))
        elif not 0 <= self.comparator_index < loss.shape[0]:
            raise ValueError("comparator_index out of range")

    @property
    def n_outcomes(self) -> int:
        return self.loss_matrix.shape[1]

    @property
    def n_predictors(self) -> int:
        return self.loss_matrix.shape[0]

    def risk(self, f: int) -> float:
        return risk(self, f)

    def risks(self) -> np.ndarray:
        """Vector of all predictor risks (entries may be +inf)."""
        mask = self.probs > 0
        loss = self.loss_matrix[:, mask]
        out = np.empty(self.n_predictors)
        inf_rows = np.isposinf(loss).any(axis=1)
        out[inf_rows] = np.inf
        if np.any(~inf_rows):
            out[~inf_rows] = loss[~inf_rows] @ self.probs[mask]
        return out

    def excess_loss(self, f: int, comparator=None) -> np.ndarray:
        """Excess-loss vector loss_f - loss_comparator over outcomes.

        ``comparator`` is a predictor index or a pseudo-loss vector
        (e.g. a projection loss); defaults to the problem comparator.
        Entries off the support are zeroed (measure-zero convention).
        """
        base = comparator_losses(self, comparator)
        lf = self.loss_matrix[f]
        mask = self.probs > 0
        if np.any(np.isposinf(base[mask])):
            raise ValueError("comparator loss must be finite on the support")
        out = np.zeros(self.n_outcomes)
        out[mask] = lf[mask] - base[mask]
        return out


def comparator_losses(problem: FiniteProblem, comparator=None) -> np.ndarray:
    """Resolve a comparator spec (index, pseudo-loss vector, or None)."""
    if comparator is None:
        comparator = problem.comparator_index
    if np.isscalar(comparator) or isinstance(comparator, (int, np.integer)):
        idx = int(comparator)
        if not 0 <= idx < problem.n_predictors:
            raise IndexError(f"comparator index {idx} out of range")
        return problem.loss_matrix[idx]
    vec = np.asarray(comparator, dtype=float)
    if vec.shape != (problem.n_outcomes,):
        raise ValueError("pseudo-loss comparator has wrong length")
    return vec


def risk(problem: FiniteProblem, f: int) -> float:
    """Expected loss of predictor ``f``; +inf if any mass-carrying entry is."""
    if not 0 <= f < problem.n_predictors:
        raise IndexError(f"predictor index {f} out of range")
    return wdot(problem.probs, problem.loss_matrix[f])


def excess_risk(problem: FiniteProblem, f: int, comparator=None) -> float:
    """risk(f) minus the comparator's risk.

    The comparator must have finite risk; the result is never -inf when
    the comparator is the risk minimizer.
    """
    base = comparator_losses(problem, comparator)
    base_risk = wdot(problem.probs, base)
    if not np.isfinite(base_risk):
        raise ValueError("comparator has infinite risk")
    r = risk(problem, f)
    return r - base_risk


def find_comparator(problem: FiniteProblem) -> int:
    """Index of the risk minimizer; ties broken by smallest index."""
    risks = problem.risks()
    if not np.any(np.isfinite(risks)):
        raise ValueError("all predictors have infinite risk")
    return int(np.argmin(risks))


def excess_loss_matrix(problem: FiniteProblem, comparator=None) -> np.ndarray:
    """Stack of excess-loss vectors, one row per predictor."""
    base = comparator_losses(problem, comparator)
    mask = problem.probs > 0
    if np.any(np.isposinf(base[mask])):
        raise ValueError("comparator loss must be finite on the support")
    out = np.zeros_like(problem.loss_matrix)
    out[:, mask] = problem.loss_matrix[:, mask] - base[mask]
    return out


# ---------------------------------------------------------------------------
# Standard loss constructions
# ---------------------------------------------------------------------------

def log_loss_problem(densities, true_probs=None, base_weights=None,
                     comparator_index=None, outcomes=None, labels=None) -> FiniteProblem:
    """Conditional-density estimation under log loss on a finite grid.

    ``densities`` is an (n_predictors, n_outcomes) table of nonnegative
    density values w.r.t. the base measure with weights ``base_weights``
    (counting measure by default).  Losses are -log(density); zero
    density maps to +inf loss.  When ``true_probs`` is omitted the
    problem is well specified: the data distribution is the comparator
    row's induced mass function.
    """
    dens = np.asarray(densities, dtype=float)
    if np.any(dens < 0):
        raise ValueError("density entries must be nonnegative")
    w = np.ones(dens.shape[1]) if base_weights is None else np.asarray(base_weights, dtype=float)
    row_sums = dens @ w
    if base_weights is not None or true_probs is None:
        defect = np.max(np.abs(row_sums - 1.0))
        if defect > 1e-6:
            raise ValueError(f"density rows are not normalized (defect {defect:.3g})")
    if true_probs is None:
        idx = 0 if comparator_index is None else comparator_index
        true_probs = dens[idx] * w
        true_probs = true_probs / true_probs.sum()
    with np.errstate(divide="ignore"):
        loss = np.where(dens > 0, -np.log(dens), np.inf)
    return FiniteProblem(
        probs=true_probs, loss_matrix=loss, outcomes=outcomes,
        predictor_labels=labels, comparator_index=comparator_index,
        loss_kind="log", densities=dens, base_weights=w,
    )


def squared_loss_problem(joint_probs, x_values, y_values, predictor_values,
                         labels=None) -> FiniteProblem:
    """Regression with squared loss on a finite (x, y) grid.

    ``joint_probs`` is (n_x, n_y); ``predictor_values`` is (n_predictors,
    n_x) of predictions f(x).  Outcomes are flattened (x, y) pairs and
    the problem carries the prediction matrix, so small-ball checks
    apply.
    """
    joint = np.asarray(joint_probs, dtype=float)
    xv = np.asarray(x_values)
    yv = np.asarray(y_values, dtype=float)
    preds_x = np.asarray(predictor_values, dtype=float)
    if joint.shape != (len(xv), len(yv)):
        raise ValueError("joint_probs shape must be (n_x, n_y)")
    if preds_x.shape[1] != len(xv):
        raise ValueError("predictor_values must have one column per x")
    probs = joint.reshape(-1)
    # outcome (i, j) -> prediction depends on x only
    preds = np.repeat(preds_x, len(yv), axis=1)
    ygrid = np.tile(yv, len(xv))
    loss = (ygrid[None, :] - preds) ** 2
    outcomes = [(x, y) for x in xv.tolist() for y in yv.tolist()]
    return FiniteProblem(
        probs=probs / probs.sum() if abs(probs.sum() - 1) > 0 else probs,
        loss_matrix=loss, outcomes=outcomes, predictor_labels=labels,
        predictions=preds, loss_kind="squared",
    )


def zero_one_problem(joint_probs, x_values, predictor_values, labels=None) -> FiniteProblem:
    """Binary classification with 0-1 loss; y in {0, 1}.

    For binary y and binary predictions, |y - f(x)| coincides with the
    squared loss, so this reuses the regression construction.
    """
    preds = np.asarray(predictor_values)
    if not np.isin(preds, (0, 1)).all():
        raise ValueError("0-1 loss needs binary predictions")
    p = squared_loss_problem(joint_probs, x_values, [0.0, 1.0], preds, labels=labels)
    return FiniteProblem(
        probs=p.probs, loss_matrix=p.loss_matrix, outcomes=p.outcomes,
        predictor_labels=p.predictor_labels, predictions=p.predictions,
        loss_kind="zero_one",
    )


# ---------------------------------------------------------------------------
# JSON round trip; +inf is encoded as the string "inf"
# ---------------------------------------------------------------------------

def _encode_matrix(m: np.ndarray):
    return [["inf" if np.isposinf(v) else float(v) for v in row] for row in m]


def _decode_matrix(rows):
    return np.array(
        [[np.inf if v == "inf" else float(v) for v in row] for row in rows], dtype=float
    )


def problem_to_json(problem: FiniteProblem) -> str:
    doc = {
        "outcomes": [list(o) if isinstance(o, tuple) else o for o in problem.outcomes],
        "probs": [float(p) for p in problem.probs],
        "loss_matrix": _encode_matrix(problem.loss_matrix),
        "labels": list(problem.predictor_labels),
        "comparator_index": int(problem.comparator_index),
        "loss_kind": problem.loss_kind,
    }
    if problem.predictions is not None:
        doc["predictions"] = _encode_matrix(problem.predictions)
    if problem.densities is not None:
        doc["densities"] = _encode_matrix(problem.densities)
        doc["base_weights"] = [float(w) for w in problem.base_weights]
    return json.dumps(doc, sort_keys=True)


def problem_from_json(text: str) -> FiniteProblem:
    doc = json.loads(text)
    preds = doc.get("predictions")
    dens = doc.get("densities")
    return FiniteProblem(
        probs=np.array(doc["probs"], dtype=float),
        loss_matrix=_decode_matrix(doc["loss_matrix"]),
        outcomes=doc.get("outcomes"),
        predictor_labels=doc.get("labels"),
        comparator_index=doc.get("comparator_index"),
        predictions=_decode_matrix(preds) if preds is not None else None,
        loss_kind=doc.get("loss_kind", "generic"),
        densities=_decode_matrix(dens) if dens is not None else None,
        base_weights=(np.array(doc["base_weights"], dtype=float)
                      if dens is not None else None),
    )
