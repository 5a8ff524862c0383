"""fastrates: numerical verification of fast-rate learning machinery on
finite problems — tempered posteriors, information complexity,
exponential stochastic inequalities, reversed projections, and
machine-checkable easiness conditions."""

__version__ = "0.1.0"

from .problems import (  # noqa: F401
    FiniteProblem,
    excess_risk,
    find_comparator,
    log_loss_problem,
    problem_from_json,
    problem_to_json,
    risk,
    squared_loss_problem,
)
