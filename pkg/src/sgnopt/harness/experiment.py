"""Experiment execution: objectives from configs, reference optima, traces on disk."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..data_io import parse_libsvm, synth_logistic
from ..geometry import GeometryContext
from ..objectives import (
    LogisticRegression, ObjectiveOracle, SmoothnessEstimates, default_reg, estimate_semi_strong,
    relative_constants,
)
from ..sketching import SketchDistribution, coordinate, gaussian, identity, whiten
from ..solvers import SolverConfig, SolverError, SolverState, TraceRecord, aicn_step, run
from .config import ExperimentConfig
from .envelopes import SUBOPT_FLOOR, estimate_rate

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("k", "f", "subopt", "g_dual", "alpha", "cost_dtau2", "wall_ns")


class ExperimentError(RuntimeError):
    pass


@dataclass
class ReplicationResult:
    replica: int
    records: list
    error: Optional[str] = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    f_star: float
    x_star: np.ndarray
    replications: list
    mean_subopt: np.ndarray
    median_subopt: np.ndarray
    out_dir: Optional[Path] = None

    @property
    def failures(self) -> list:
        return [r for r in self.replications if r.error is not None]


def build_objective(cfg: ExperimentConfig) -> LogisticRegression:
    """The l2-regularized logistic objective named by ``cfg``.

    ``lambda = auto`` picks 1e-3 times the mean squared row norm.
    """
    if cfg.dataset is not None:
        data = parse_libsvm(cfg.dataset)
    else:
        data = synth_logistic(cfg.synth_n, cfg.synth_d, cfg.synth_kappa, seed=cfg.seed)
    reg = cfg.reg if cfg.reg is not None else default_reg(data.features)
    return LogisticRegression(data.features, data.labels, reg)


def build_distribution(cfg: ExperimentConfig, d: int) -> SketchDistribution:
    if cfg.sketch == "identity":
        return identity(d, seed=cfg.seed)
    if cfg.sketch == "gaussian":
        return gaussian(d, cfg.tau, seed=cfg.seed)
    base = coordinate(d, cfg.tau, seed=cfg.seed)
    return whiten(base) if cfg.sketch == "whitened" else base


def build_solver_config(cfg: ExperimentConfig, oracle: ObjectiveOracle, f_star: Optional[float] = None) -> SolverConfig:
    """Resolve ``auto`` constants from the oracle and assemble a solver config.

    Defaults: ``l_alg`` is the semi-strong upper bound; ``l_hat`` and ``sigma``
    are the global ratio ``L / mu``; ``l_s`` (for SSCN) is the Euclidean
    Hessian-Lipschitz constant.
    """
    alg = cfg.algorithm
    l_semi = estimate_semi_strong(oracle)
    l_alg = cfg.l_alg if cfg.l_alg is not None else l_semi
    ratio = None
    try:
        ratio = relative_constants(oracle)
    except ValueError:
        pass
    l_hat = cfg.l_hat if cfg.l_hat is not None else (ratio[0] if ratio else None)
    sigma = cfg.sigma if cfg.sigma is not None else l_hat
    l_s = cfg.l_s if cfg.l_s is not None else oracle.hessian_lipschitz()
    constants = SmoothnessEstimates(
        l_alg=l_alg, l_semi=l_semi, l_sc=l_semi, l_s=l_s, l_hat=l_hat,
        mu_hat=ratio[1] if ratio else None,
    )
    dist = build_distribution(cfg, oracle.dim)
    return SolverConfig(
        algorithm=alg, constants=constants, distribution=dist, max_iters=cfg.max_iters,
        grad_tol=None, f_star=f_star, sigma=sigma,
    )


def compute_fstar(oracle: ObjectiveOracle, tol: float = 1e-12, max_iters: int = 10_000,
                  x0=None, l_alg: Optional[float] = None):
    """Reference optimum by full-space SGN until ``||grad f||*_x <= tol``.

    Returns ``(f_star, x_star)``. ``l_alg`` defaults to the semi-strong bound
    when the oracle supplies the ingredients, else 1.
    """
    if l_alg is None:
        try:
            l_alg = estimate_semi_strong(oracle)
        except ValueError:
            l_alg = 1.0
        l_alg = l_alg if l_alg > 0 else 1e-12
    x = np.zeros(oracle.dim) if x0 is None else np.array(x0, dtype=float)
    state = SolverState(x)
    for k in range(max_iters + 1):
        g = GeometryContext(oracle.hessian(state.x)).dual_norm(oracle.gradient(state.x))
        if g <= tol:
            return state.value(oracle), state.x
        if k == max_iters:
            break
        rep = aicn_step(oracle, state, l_alg)
        state = SolverState(rep.new_x, k + 1, f=rep.f_new)
    raise ExperimentError(f"reference solve did not reach dual gradient norm {tol:g} in {max_iters} iterations")


def _replicate(args) -> ReplicationResult:
    oracle, solver_cfg, x0, replica, timing = args
    cfg = replace(solver_cfg, replica=replica)
    try:
        return ReplicationResult(replica, run(oracle, cfg, x0, timing=timing))
    except SolverError as exc:
        return ReplicationResult(replica, [], str(exc))


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_trace(path, records: Sequence[TraceRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in records:
            w.writerow([_fmt(r.k), _fmt(r.f_value), _fmt(r.suboptimality), _fmt(r.g_dual),
                        _fmt(r.alpha), _fmt(r.cost_dtau2), str(int(r.wall_ns))])


def read_trace(path) -> dict:
    """Columns of a trace CSV as float arrays keyed by header name."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_COLUMNS:
        raise ExperimentError(f"{path}: unexpected header {rows[0] if rows else None}")
    data = np.array(rows[1:], dtype=float).reshape(-1, len(TRACE_COLUMNS))
    return {name: data[:, i] for i, name in enumerate(TRACE_COLUMNS)}


def _aggregate(reps, length):
    ok = [r for r in reps if r.error is None and len(r.records) == length]
    if not ok:
        return np.full(length, np.nan), np.full(length, np.nan)
    m = np.array([[rec.suboptimality for rec in r.records] for r in ok])
    return m.mean(axis=0), np.median(m, axis=0)


def _rates(mean_subopt) -> dict:
    y = np.maximum(np.asarray(mean_subopt, dtype=float), SUBOPT_FLOOR)
    n = y.size
    out = {}
    if n < 3 or np.any(np.isnan(y)):
        return out
    for name, window in (("full", (1, n)), ("early", (1, max(3, n // 4))), ("late", (max(1, n // 2), n))):
        if window[1] - window[0] >= 2:
            slope, intercept = estimate_rate(y, window)
            out[name] = {"window": list(window), "slope": slope, "intercept": intercept}
    return out


def _write_outputs(out: Path, res: ExperimentResult, length: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for r in res.replications:
        if r.error is None:
            write_trace(out / f"trace_{r.replica:03d}.csv", r.records)
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("k", "mean_subopt", "median_subopt"))
        for k in range(length):
            w.writerow((k, _fmt(res.mean_subopt[k]), _fmt(res.median_subopt[k])))
    with open(out / "long.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("algorithm", "replica", "k", "subopt"))
        for r in res.replications:
            for rec in r.records:
                w.writerow((res.config.algorithm, r.replica, rec.k, _fmt(rec.suboptimality)))
    summary = {
        "algorithm": res.config.algorithm,
        "f_star": res.f_star,
        "replications": len(res.replications),
        "failures": [{"replica": r.replica, "error": r.error} for r in res.failures],
        "final_mean_subopt": float(res.mean_subopt[-1]),
        "rates": _rates(res.mean_subopt),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int = 1, timing: bool = False,
                   write: bool = True, f_star: Optional[tuple] = None) -> ExperimentResult:
    """Run all replications from ``x0 = 0`` and optionally write traces.

    Files in ``out_dir`` (default ``cfg.out_dir``): ``trace_NNN.csv`` per
    replication, ``summary.csv`` with mean and median suboptimality per
    iteration, ``long.csv`` in plot-ready long format, and ``summary.json``
    with fitted log-log rates and any per-replication failures.
    """
    oracle = build_objective(cfg)
    fs, xs = f_star if f_star is not None else compute_fstar(oracle)
    solver_cfg = build_solver_config(cfg, oracle, fs)
    x0 = np.zeros(oracle.dim)
    jobs = [(oracle, solver_cfg, x0, r, timing) for r in range(cfg.replications)]
    if workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(_replicate, jobs))
    else:
        reps = [_replicate(j) for j in jobs]
    length = cfg.max_iters + 1
    for r in reps:
        if r.error is not None:
            log.warning("replication %d failed: %s", r.replica, r.error)
    mean, median = _aggregate(reps, length)
    res = ExperimentResult(cfg, fs, xs, reps, mean, median)
    if write:
        res.out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
        _write_outputs(res.out_dir, res, length)
    return res


TUNABLE = ("l_alg", "l_hat", "sigma", "l_s")


def select_best(grid: Sequence[float], metric: Callable[[float], Optional[float]]) -> float:
    """Grid value with the smallest ``metric``; ties go to the larger value.

    ``metric`` returns ``None`` (or a non-finite value) for a failed run;
    values are floored at 1e-15 before comparison.
    """
    grid = sorted(float(v) for v in grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    best = None
    for value in grid:
        m = metric(value)
        if m is None or not math.isfinite(m):
            log.info("grid value %g failed", value)
            continue
        m = max(float(m), SUBOPT_FLOOR)
        if best is None or m <= best[0]:
            best = (m, value)
    if best is None:
        raise ExperimentError("every run in the grid failed")
    return best[1]


def tune_constant(cfg: ExperimentConfig, param: str, grid: Sequence[float], workers: int = 1) -> float:
    """Grid value of ``param`` minimizing the final mean suboptimality.

    Every grid point reuses ``cfg`` (same seed, same data).
    """
    if param not in TUNABLE:
        raise ValueError(f"param must be one of {TUNABLE}")
    oracle = build_objective(cfg)
    ref = compute_fstar(oracle)

    def metric(value):
        res = run_experiment(cfg.with_value(param, value), workers=workers, write=False, f_star=ref)
        return None if res.failures else float(res.mean_subopt[-1])

    return select_best(grid, metric)


def iterations_to(subopt, target: float) -> Optional[int]:
    """First ``k`` with ``subopt[k] <= target``; ``None`` if never reached."""
    hits = np.nonzero(np.asarray(subopt, dtype=float) <= target)[0]
    return int(hits[0]) if hits.size else None
