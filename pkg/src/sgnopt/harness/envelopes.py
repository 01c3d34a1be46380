"""Empirical rates and the convergence envelopes they are checked against."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from ..geometry import GeometryContext, GeometryError
from ..objectives import SmoothnessEstimates
from ..sketching import SketchDistribution, stream, whitening_transform
from ..solvers import sgn_stepsize

SUBOPT_FLOOR = 1e-15


class PreconditionError(ValueError):
    pass


def estimate_rate(subopt: Sequence[float], window: Optional[tuple[int, int]] = None) -> tuple[float, float]:
    """Least-squares fit of ``log subopt_k = intercept + slope * log k``.

    ``subopt[k]`` is indexed by iteration; ``window = (start, stop)`` selects
    ``start <= k < stop`` and must exclude ``k = 0``.
    """
    y = np.asarray(subopt, dtype=float)
    start, stop = window if window is not None else (1, y.size)
    if start < 1 or stop > y.size or stop - start < 2:
        raise ValueError(f"window {start, stop} invalid for a sequence of length {y.size}")
    ks = np.arange(start, stop)
    vals = y[start:stop]
    if np.any(~(vals > 0)):
        raise ValueError("suboptimalities in the window must be positive")
    slope, intercept = np.polyfit(np.log(ks), np.log(vals), 1)
    return float(slope), float(intercept)


def global_envelope(k, delta0: float, radius: float, l_cubic: float, l_semi: float, tau: int, d: int):
    """``4 d^3 delta0 / (tau^3 k^3) + 9 (l_cubic + l_semi) d^2 R^3 / (2 tau^2 k^2)``; inf at ``k = 0``."""
    k = np.asarray(k, dtype=float)
    q = d / tau
    with np.errstate(divide="ignore"):
        bound = 4.0 * q**3 * delta0 / k**3 + 4.5 * (l_cubic + l_semi) * q**2 * radius**3 / k**2
    return np.where(k > 0, bound, np.inf)


def check_global_envelope(mean_subopt, constants: SmoothnessEstimates, R_hat: float, delta0: float,
                          tau: int, d: int) -> np.ndarray:
    """Per-``k`` flags: is the mean suboptimality under the global envelope?

    The cubic constant is ``constants.l_s`` when available, else ``l_alg``.
    """
    if mean_subopt is None:
        raise PreconditionError("suboptimality requires a known f*")
    y = np.asarray(mean_subopt, dtype=float)
    if np.any(np.isnan(y)):
        raise PreconditionError("suboptimality contains NaN (f* missing?)")
    l_cubic = constants.l_s if constants.l_s is not None else constants.l_alg
    if l_cubic is None or constants.l_semi is None:
        raise PreconditionError("need l_semi and one of l_s / l_alg")
    bound = global_envelope(np.arange(y.size), delta0, R_hat, l_cubic, constants.l_semi, tau, d)
    return y <= bound


def local_rate_b(l_alg: float, l_sc: float, gamma: float = 1.0) -> float:
    """``2 max{sqrt(l_alg / (2 (1 + 1/gamma) l_sc)), 1}``; equals ``max{sqrt(l_alg/l_sc), 2}`` at gamma = 1."""
    return 2.0 * max(math.sqrt(l_alg / (2.0 * (1.0 + 1.0 / gamma) * l_sc)), 1.0)


def local_linear_margins(ensemble, tau: int, d: int, b: float):
    """Return ``(mean, allowed)`` per ``k`` for the local linear envelope."""
    e = np.atleast_2d(np.asarray(ensemble, dtype=float))
    reps = e.shape[0]
    mean = e.mean(axis=0)
    if reps > 1:
        se = e.std(axis=0, ddof=1) / math.sqrt(reps)
    else:
        se = np.zeros_like(mean)
    rse = np.divide(se, mean, out=np.zeros_like(se), where=mean > 0)
    ks = np.arange(e.shape[1])
    allowed = (1.0 - tau / (b * d)) ** ks * mean[0] * (1.0 + 3.0 * rse)
    return mean, allowed


def check_local_linear(ensemble, tau: int, d: int, b: float, in_neighborhood=None,
                       min_replications: int = 100, window: Optional[tuple[int, int]] = None) -> bool:
    """Does the ensemble mean stay under ``(1 - tau/(b d))^k delta0`` with 3-SE slack?

    ``ensemble`` is replications x iterations; ``in_neighborhood`` holds the
    neighborhood gate result for each start iterate.
    """
    e = np.atleast_2d(np.asarray(ensemble, dtype=float))
    if in_neighborhood is not None and not all(in_neighborhood):
        raise PreconditionError("a start iterate lies outside the local neighborhood gate")
    if e.shape[0] < min_replications:
        raise PreconditionError(f"need >= {min_replications} replications, got {e.shape[0]}")
    mean, allowed = local_linear_margins(e, tau, d, b)
    lo, hi = window if window is not None else (0, e.shape[1])
    return bool(np.all(mean[lo:hi] <= allowed[lo:hi] * (1.0 + 1e-12)))


def estimate_rho(oracle, x, dist: SketchDistribution, samples: int, l_alg: float, seed: int = 0,
                 series_threshold: float = 1e-8) -> float:
    """Smallest nonzero eigenvalue of the Monte-Carlo mean of ``alpha_{x,S} P_x``.

    The mean is H-self-adjoint, so it is symmetrized as ``H^{1/2} M H^{-1/2}``
    before the eigenvalue solve. The result is clamped to (0, 1].
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    ctx = GeometryContext(oracle.hessian(x))
    if not ctx.is_full_rank:
        raise GeometryError("estimate_rho needs a positive definite Hessian")
    transform = whitening_transform(ctx) if dist.adaptive else None
    grad = oracle.gradient(x)
    rng = stream(seed)
    acc = np.zeros((ctx.dim, ctx.dim))
    for _ in range(samples):
        s = dist.draw(rng, transform).matrix
        proj = ctx.projection(s)
        g = ctx.dual_norm(proj.apply_transpose(grad))
        acc += sgn_stepsize(l_alg, g, series_threshold) * proj.matrix
    acc /= samples
    root, inv_root = ctx.sqrt_factors()
    sym = root @ acc @ inv_root
    w = np.linalg.eigvalsh(0.5 * (sym + sym.T))
    positive = w[w > 1e-10 * max(w[-1], 0.0)]
    if positive.size == 0 or w[-1] <= 0:
        raise GeometryError("expected scaled projection has no positive eigenvalue")
    return float(min(positive[0], 1.0))
