"""Independent oracles for testing: finite differences, brute-force model
minimization and Monte-Carlo expectations. Solvers never import this module."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import GeometryContext, pseudo_inverse
from .sketching import stream

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class OracleReport:
    max_abs_error: float
    max_rel_error: float
    probe_count: int
    worst_probe: Optional[np.ndarray]


def default_step(x) -> float:
    return np.finfo(float).eps ** (1.0 / 3.0) * (1.0 + np.max(np.abs(x), initial=0.0))


def fd_gradient(oracle, x, step: Optional[float] = None) -> np.ndarray:
    """Central-difference gradient, one coordinate at a time."""
    x = np.asarray(x, dtype=float)
    s = default_step(x) if step is None else step
    if s <= 0:
        raise ValueError("step must be positive")
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = s
        g[i] = (oracle.value(x + e) - oracle.value(x - e)) / (2.0 * s)
    return g


def fd_hessian(oracle, x, step: Optional[float] = None) -> np.ndarray:
    """Central differences of the analytic gradient, symmetrized."""
    x = np.asarray(x, dtype=float)
    s = default_step(x) if step is None else step
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = s
        cols.append((oracle.gradient(x + e) - oracle.gradient(x - e)) / (2.0 * s))
    h = np.column_stack(cols)
    return 0.5 * (h + h.T)


def compare_derivatives(oracle, probes: int = 20, seed: int = 0, radius: float = 1.0, which: str = "gradient"):
    """Worst analytic-vs-finite-difference error over random points."""
    worst_abs = worst_rel = 0.0
    worst = None
    for i in range(probes):
        x = radius * stream(seed, i).standard_normal(oracle.dim)
        if which == "gradient":
            exact, approx = oracle.gradient(x), fd_gradient(oracle, x)
        else:
            exact, approx = oracle.hessian(x), fd_hessian(oracle, x)
        err = float(np.max(np.abs(exact - approx)))
        rel = err / max(float(np.max(np.abs(exact))), 1e-300)
        if rel >= worst_rel:
            worst_rel, worst = rel, x
        worst_abs = max(worst_abs, err)
    return OracleReport(worst_abs, worst_rel, probes, worst)


def _sketched_model(oracle, x, sketch):
    s = np.asarray(getattr(sketch, "matrix", sketch), dtype=float)
    s = s[:, None] if s.ndim == 1 else s
    return oracle.sketched_gradient(x, s), oracle.sketched_hessian(x, s)


def model_gradient(g, hess, l_alg: float, h) -> np.ndarray:
    """Gradient in ``h`` of the sketched cubic model (without the f(x) term)."""
    hh = hess @ h
    q = math.sqrt(max(float(h @ hh), 0.0))
    return g + hh + 0.5 * l_alg * q * hh


def _golden(fun, a: float, b: float, iters: int) -> float:
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if b - a <= 1e-15 * max(abs(a), abs(b), 1e-300):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    return c if fc <= fd else d


def brute_model_argmin(oracle, x, sketch, l_alg: float, grid: int = 41, refine_iters: int = 200) -> np.ndarray:
    """Minimize the sketched cubic model by grid search and golden-section refinement.

    Supports ``tau <= 2``. The search box has radius 4x the unregularized
    subspace Newton coefficient; only model values are used.
    """
    g, hess = _sketched_model(oracle, x, sketch)
    tau = g.size
    if tau > 2:
        raise NotImplementedError("brute-force model minimization supports tau <= 2")
    newton = pseudo_inverse(hess) @ g
    radius = 4.0 * float(np.linalg.norm(newton))
    if radius == 0.0:
        return np.zeros(tau)

    def model(h):
        q = max(float(h @ hess @ h), 0.0)
        return float(g @ h) + 0.5 * q + l_alg / 6.0 * q**1.5

    axis = np.linspace(-radius, radius, grid)
    step = axis[1] - axis[0]
    if tau == 1:
        vals = [model(np.array([t])) for t in axis]
        i = int(np.argmin(vals))
        t = _golden(lambda u: model(np.array([u])), axis[i] - step, axis[i] + step, refine_iters)
        return np.array([t])

    pts = np.array([[a, b] for a in axis for b in axis])
    h = pts[int(np.argmin([model(p) for p in pts]))].copy()
    directions = [np.array([1.0, 0.0]), np.array([0.0, 1.0]),
                  np.array([1.0, 1.0]) / math.sqrt(2), np.array([1.0, -1.0]) / math.sqrt(2)]
    width = 2.0 * radius
    best = model(h)
    for _ in range(refine_iters):
        start = h.copy()
        for u in directions:
            t = _golden(lambda a: model(h + a * u), -width, width, 200)
            h = h + t * u
        move = h - start
        nm = float(np.linalg.norm(move))
        if nm > 0:
            u = move / nm
            t = _golden(lambda a: model(h + a * u), -2 * nm, 2 * nm, 200)
            h = h + t * u
        new = model(h)
        if best - new <= 1e-16 * max(abs(best), 1e-300):
            break
        best = new
        width = max(4.0 * nm, 1e-12 * radius)
    return h


def mc_expectation(sampler: Callable, statistic: Callable, samples: int, seed: int = 0):
    """Streaming mean and per-entry standard error of ``statistic(sampler(rng))``."""
    if samples < 2:
        raise ValueError("samples must be >= 2")
    rng = stream(seed)
    mean = m2 = None
    for n in range(1, samples + 1):
        v = np.asarray(statistic(sampler(rng)), dtype=float)
        if mean is None:
            mean = np.zeros_like(v)
            m2 = np.zeros_like(v)
        delta = v - mean
        mean += delta / n
        m2 += delta * (v - mean)
    stderr = np.sqrt(np.maximum(m2, 0.0) / (samples - 1) / samples)
    return mean, stderr


def neighborhood_check(oracle, x, l_sc: float, gamma: float = 1.0) -> bool:
    """Whether ``||grad f(x)||*_x < 2 / ((1 + 1/gamma) l_sc)``."""
    if l_sc <= 0 or gamma <= 0:
        raise ValueError("l_sc and gamma must be positive")
    ctx = GeometryContext(oracle.hessian(x))
    return ctx.dual_norm(oracle.gradient(x)) < 2.0 / ((1.0 + 1.0 / gamma) * l_sc)
