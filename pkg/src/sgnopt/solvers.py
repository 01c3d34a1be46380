"""SGN and its baseline family as single-step operations plus an iteration driver.

SGN takes the subspace Newton direction ``S (S^T H S)^+ S^T grad`` and damps
it with the positive root of ``1 - a - (c/2) a^2 = 0``, ``c = L_alg * G``,
where ``G`` is the sketched dual gradient norm. The same iterate is produced
by the local-norm projection of the full Newton step and by minimizing the
sketched cubic model; :func:`sgn_step_sap_form` and
:func:`sgnopt.validation.brute_model_argmin` compute those routes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import DEFAULT_RANK_TOL, GeometryContext, RangeViolationError
from .objectives import ObjectiveOracle, SmoothnessEstimates
from .sketching import SketchDistribution, SketchMatrix, stream, whitening_transform

ALGORITHMS = ("sgn", "rsn", "aicn", "sscn", "newton-exact-descent", "coordinate-descent")
SKETCHED = ("sgn", "rsn", "sscn")


class SolverError(RuntimeError):
    def __init__(self, k: int, cause: Exception):
        super().__init__(f"iteration {k}: {cause}")
        self.k = k
        self.cause = cause


class SubproblemError(RuntimeError):
    pass


@dataclass
class SolverConfig:
    algorithm: str
    constants: SmoothnessEstimates = field(default_factory=SmoothnessEstimates)
    distribution: Optional[SketchDistribution] = None
    max_iters: int = 1000
    grad_tol: Optional[float] = 1e-10
    subopt_tol: Optional[float] = None
    f_star: Optional[float] = None
    small_g_series_threshold: float = 1e-8
    sigma: Optional[float] = None
    coord_lipschitz: Optional[np.ndarray] = None
    rank_tolerance: float = DEFAULT_RANK_TOL
    replica: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        c = self.constants
        if self.algorithm in ("sgn", "aicn") and not (c.l_alg is not None and c.l_alg > 0):
            raise ValueError(f"{self.algorithm} requires constants.l_alg > 0")
        if self.algorithm == "rsn" and not (c.l_hat is not None and c.l_hat > 0):
            raise ValueError("rsn requires constants.l_hat > 0")
        if self.algorithm == "sscn" and not (c.l_s is not None and c.l_s >= 0):
            raise ValueError("sscn requires constants.l_s")
        if self.algorithm == "newton-exact-descent" and not (self.sigma is not None and self.sigma > 0):
            raise ValueError("newton-exact-descent requires sigma > 0")
        if self.algorithm in SKETCHED and self.distribution is None:
            raise ValueError(f"{self.algorithm} requires a sketch distribution")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass
class SolverState:
    x: np.ndarray
    k: int = 0
    last_alpha: float = 1.0
    last_sketched_dual_norm: float = math.nan
    f: Optional[float] = None

    def value(self, oracle: ObjectiveOracle) -> float:
        if self.f is None:
            self.f = oracle.value(self.x)
        return self.f


@dataclass
class StepReport:
    new_x: np.ndarray
    alpha: float
    sketched_dual_norm: float
    model_decrease: float
    function_decrease: float
    f_old: float
    f_new: float
    rank: int


@dataclass
class TraceRecord:
    k: int
    f_value: float
    suboptimality: float
    g_dual: float
    alpha: float
    cost_dtau2: float
    wall_ns: int


def sgn_stepsize(l_alg: float, g_dual: float, series_threshold: float = 1e-8) -> float:
    """Positive root of ``1 - a - (l_alg * g_dual / 2) a^2 = 0``.

    Evaluated as ``2 / (1 + sqrt(1 + 2c))``, which equals
    ``(-1 + sqrt(1 + 2c)) / c`` without the cancellation; below
    ``series_threshold`` the series ``1 - c/2 + c^2/2`` is used.
    """
    if l_alg < 0 or g_dual < 0 or math.isnan(l_alg) or math.isnan(g_dual):
        raise ValueError("l_alg and g_dual must be nonnegative")
    c = l_alg * g_dual
    if c <= series_threshold:
        return 1.0 - 0.5 * c + 0.5 * c * c
    return 2.0 / (1.0 + math.sqrt(1.0 + 2.0 * c))


def _matrix(sketch) -> np.ndarray:
    s = np.asarray(getattr(sketch, "matrix", sketch), dtype=float)
    return s[:, None] if s.ndim == 1 else s


def _model_decrease(alpha: float, g: float, l_alg: float) -> float:
    # f(x) - T_S(x, h) at h = -alpha (S^T H S)^+ grad_S, using ||h||_{x,S} = alpha G
    return alpha * g * g - 0.5 * (alpha * g) ** 2 - l_alg / 6.0 * (alpha * g) ** 3


def _subspace_newton(oracle, x, s, rank_tol):
    """Return ``(grad_S, (H_S)^+ grad_S, G)`` after checking the range condition."""
    gs = oracle.sketched_gradient(x, s)
    sub = GeometryContext(oracle.sketched_hessian(x, s), rank_tol)
    if not sub.range_check(gs):
        raise RangeViolationError(
            "sketched gradient lies outside the range of the sketched Hessian; "
            "the damped subspace Newton update is undefined there"
        )
    direction = sub.apply_pinv(gs)
    g = float(math.sqrt(max(gs @ direction, 0.0)))
    return gs, direction, g


def _report(oracle, state, new_x, alpha, g, l_alg, rank) -> StepReport:
    f_old = state.value(oracle)
    f_new = oracle.value(new_x)
    md = _model_decrease(alpha, g, l_alg) if l_alg is not None else math.nan
    return StepReport(new_x, alpha, g, md, f_old - f_new, f_old, f_new, rank)


def _sgn(oracle, state, s, l_alg, series_threshold, rank_tol) -> StepReport:
    x = state.x
    gs, direction, g = _subspace_newton(oracle, x, s, rank_tol)
    if g == 0.0:
        return _report(oracle, state, x.copy(), 1.0, 0.0, l_alg, s.shape[1])
    alpha = sgn_stepsize(l_alg, g, series_threshold)
    new_x = x - alpha * (s @ direction)
    return _report(oracle, state, new_x, alpha, g, l_alg, s.shape[1])


def sgn_step(oracle: ObjectiveOracle, state: SolverState, sketch, config: SolverConfig) -> StepReport:
    """One SGN step in damped subspace Newton form."""
    return _sgn(
        oracle, state, _matrix(sketch), config.constants.l_alg,
        config.small_g_series_threshold, config.rank_tolerance,
    )


def sgn_step_sap_form(oracle: ObjectiveOracle, state: SolverState, sketch, config: SolverConfig) -> StepReport:
    """The same step computed as ``x - alpha P_x H^+ grad`` in the full space."""
    x = state.x
    s = _matrix(sketch)
    grad = oracle.gradient(x)
    ctx = GeometryContext(oracle.hessian(x), config.rank_tolerance)
    if not ctx.range_check(grad):
        raise RangeViolationError(
            "gradient lies outside the range of the Hessian; the projected Newton form is undefined"
        )
    proj = ctx.projection(s)
    g = ctx.dual_norm(proj.apply_transpose(grad))
    l_alg = config.constants.l_alg
    if g == 0.0:
        return _report(oracle, state, x.copy(), 1.0, 0.0, l_alg, s.shape[1])
    alpha = sgn_stepsize(l_alg, g, config.small_g_series_threshold)
    new_x = x - alpha * proj.apply(ctx.apply_pinv(grad))
    return _report(oracle, state, new_x, alpha, g, l_alg, s.shape[1])


def model_value(oracle: ObjectiveOracle, x, sketch, h, l_alg: float) -> float:
    """Sketched cubic model ``f + <grad_S, h> + |h|^2/2 + (L/6)|h|^3`` in the
    local subspace norm ``|h| = (h^T S^T H S h)^{1/2}``."""
    s = _matrix(sketch)
    h = np.atleast_1d(np.asarray(h, dtype=float))
    q = max(float(h @ oracle.sketched_hessian(x, s) @ h), 0.0)
    return oracle.value(x) + float(oracle.sketched_gradient(x, s) @ h) + 0.5 * q + l_alg / 6.0 * q**1.5


def rsn_step(oracle: ObjectiveOracle, state: SolverState, sketch, l_hat: float,
             rank_tol: float = DEFAULT_RANK_TOL) -> StepReport:
    """Randomized subspace Newton with fixed stepsize ``1 / l_hat``."""
    if l_hat <= 0:
        raise ValueError("l_hat must be positive")
    s = _matrix(sketch)
    _, direction, g = _subspace_newton(oracle, state.x, s, rank_tol)
    new_x = state.x - (s @ direction) / l_hat
    return _report(oracle, state, new_x, 1.0 / l_hat, g, None, s.shape[1])


def aicn_step(oracle: ObjectiveOracle, state: SolverState, l_alg: float,
              series_threshold: float = 1e-8, rank_tol: float = DEFAULT_RANK_TOL) -> StepReport:
    """Full-space SGN (identity sketch)."""
    return _sgn(oracle, state, np.eye(oracle.dim), l_alg, series_threshold, rank_tol)


def sscn_subproblem(g, hess, gram, l_s: float, tol: float = 1e-12, max_bisect: int = 200):
    """Minimize ``<g,h> + h^T H h / 2 + (l_s/6) (h^T G h)^{3/2}`` over ``h``.

    ``G = S^T S``. Solved through the scalar fixed point ``r = |h(r)|_G`` with
    ``h(r) = -(H + (l_s r / 2) G)^{-1} g`` by bisection. Returns ``(h, r)``.
    """
    g = np.atleast_1d(np.asarray(g, dtype=float))
    hess = np.atleast_2d(np.asarray(hess, dtype=float))
    gram = np.atleast_2d(np.asarray(gram, dtype=float))

    def h_of(r):
        m = hess + (0.5 * l_s * r) * gram
        if r == 0.0:
            return -np.linalg.pinv(m, hermitian=True) @ g
        return -np.linalg.solve(m, g)

    def size(h):
        return math.sqrt(max(float(h @ gram @ h), 0.0))

    h0 = h_of(0.0)
    hi = size(h0)
    if hi == 0.0 or l_s == 0.0:
        return h0, hi
    while size(h_of(hi)) - hi > 0:
        hi *= 2.0
    lo = 0.0
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        h = h_of(mid)
        phi = size(h) - mid
        if abs(phi) <= tol * (1.0 + mid):
            return h, mid
        if phi > 0:
            lo = mid
        else:
            hi = mid
    raise SubproblemError(f"cubic subproblem bisection did not converge in {max_bisect} steps")


def sscn_step(oracle: ObjectiveOracle, state: SolverState, sketch, l_s: float,
              rank_tol: float = DEFAULT_RANK_TOL) -> StepReport:
    """Stochastic subspace cubic Newton: cubic term in the l2 norm of ``S h``."""
    if l_s < 0:
        raise ValueError("l_s must be nonnegative")
    s = _matrix(sketch)
    x = state.x
    gs = oracle.sketched_gradient(x, s)
    hs = oracle.sketched_hessian(x, s)
    sub = GeometryContext(hs, rank_tol)
    g = sub.dual_norm(gs)
    h, _ = sscn_subproblem(gs, hs, s.T @ s, l_s)
    step_norm = math.sqrt(max(float(h @ hs @ h), 0.0))
    alpha = step_norm / g if g > 0 else 1.0
    return _report(oracle, state, x + s @ h, alpha, g, None, s.shape[1])


def newton_exact_descent_step(oracle: ObjectiveOracle, state: SolverState, sigma: float,
                              rank_tol: float = DEFAULT_RANK_TOL) -> StepReport:
    """``x - (1/sigma) H^+ grad``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = state.x
    ctx = GeometryContext(oracle.hessian(x), rank_tol)
    grad = oracle.gradient(x)
    g = ctx.dual_norm(grad)
    return _report(oracle, state, x - ctx.apply_pinv(grad) / sigma, 1.0 / sigma, g, None, oracle.dim)


def coordinate_descent_step(oracle: ObjectiveOracle, state: SolverState, coord_lipschitz,
                            rng: Optional[np.random.Generator] = None,
                            coord: Optional[int] = None) -> StepReport:
    """Random coordinate descent ``x_i -= d_i f / L_i`` with uniform ``i``."""
    lip = np.asarray(coord_lipschitz, dtype=float)
    if lip.shape != (oracle.dim,) or np.any(lip <= 0):
        raise ValueError("coord_lipschitz must be a positive vector of length d")
    if coord is None:
        rng = rng if rng is not None else np.random.default_rng()
        coord = int(rng.integers(oracle.dim))
    x = state.x
    e = np.zeros(oracle.dim)
    e[coord] = 1.0
    gi = float(oracle.sketched_gradient(x, e)[0])
    hii = float(oracle.sketched_hessian(x, e)[0, 0])
    new_x = x.copy()
    new_x[coord] -= gi / lip[coord]
    g = abs(gi) / math.sqrt(hii) if hii > 0 else math.nan
    return _report(oracle, state, new_x, hii / lip[coord], g, None, 1)


def _draw_sketch(oracle, state, config, k) -> SketchMatrix:
    dist = config.distribution
    if dist.adaptive:
        t = whitening_transform(GeometryContext(oracle.hessian(state.x), config.rank_tolerance))
        return dist.sample(config.replica, k, transform=t)
    return dist.sample(config.replica, k)


def take_step(oracle: ObjectiveOracle, state: SolverState, config: SolverConfig, k: int) -> StepReport:
    """Dispatch one step of the configured algorithm at iteration ``k``."""
    alg, c = config.algorithm, config.constants
    if alg in SKETCHED:
        s = _draw_sketch(oracle, state, config, k).matrix
        if alg == "sgn":
            return sgn_step(oracle, state, s, config)
        if alg == "rsn":
            return rsn_step(oracle, state, s, c.l_hat, config.rank_tolerance)
        return sscn_step(oracle, state, s, c.l_s, config.rank_tolerance)
    if alg == "aicn":
        return aicn_step(oracle, state, c.l_alg, config.small_g_series_threshold, config.rank_tolerance)
    if alg == "newton-exact-descent":
        return newton_exact_descent_step(oracle, state, config.sigma, config.rank_tolerance)
    lip = config.coord_lipschitz if config.coord_lipschitz is not None else oracle.coordinate_lipschitz()
    seed = config.distribution.seed if config.distribution is not None else 0
    return coordinate_descent_step(oracle, state, lip, stream(seed, config.replica, k))


def run(
    oracle: ObjectiveOracle,
    config: SolverConfig,
    x0,
    callback: Optional[Callable[[int, np.ndarray, StepReport], None]] = None,
    timing: bool = False,
) -> list[TraceRecord]:
    """Iterate until ``max_iters`` or a stopping threshold; one record per iterate.

    Record ``k`` holds ``f(x^k)`` together with the stepsize and sketched dual
    norm of the step taken from ``x^k``. Wall time is recorded only when
    ``timing`` is set, so traces are reproducible by default.
    """
    x0 = np.array(x0, dtype=float)
    if x0.shape != (oracle.dim,) or not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be a finite vector of length d")
    state = SolverState(x0)
    records: list[TraceRecord] = []
    cost = 0.0
    start = time.perf_counter_ns()
    for k in range(config.max_iters + 1):
        state.k = k
        try:
            rep = take_step(oracle, state, config, k)
        except Exception as exc:
            raise SolverError(k, exc) from exc
        f = rep.f_old
        subopt = f - config.f_star if config.f_star is not None else math.nan
        wall = time.perf_counter_ns() - start if timing else 0
        records.append(TraceRecord(k, f, subopt, rep.sketched_dual_norm, rep.alpha, cost, wall))
        if callback is not None:
            callback(k, state.x, rep)
        if k == config.max_iters:
            break
        if config.grad_tol is not None and rep.sketched_dual_norm <= config.grad_tol:
            break
        if config.subopt_tol is not None and subopt <= config.subopt_tol:
            break
        state.x = rep.new_x
        state.f = rep.f_new
        state.last_alpha = rep.alpha
        state.last_sketched_dual_norm = rep.sketched_dual_norm
        cost += oracle.dim * rep.rank**2
    return records
