"""Sketched global Newton (SGN) and baseline second-order methods."""

from .geometry import GeometryContext, ProjectionOperator, RangeViolationError, pseudo_inverse
from .objectives import (
    LogisticRegression,
    LogSumExp,
    Quadratic,
    SmoothnessEstimates,
    estimate_constants,
    estimate_semi_strong,
    log_sum_exp,
    logistic_regression,
    quadratic,
)
from .sketching import SketchDistribution, SketchMatrix, coordinate, gaussian, identity, whiten
from .solvers import SolverConfig, SolverState, TraceRecord, run, sgn_step, sgn_stepsize

__version__ = "0.1.0"
