"""Named verification suites behind ``sgnopt verify``.

Each suite returns a :class:`SuiteResult`; the acceptance tests call the same
functions, so the command line and the test run agree by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..data_io import synth_logistic
from ..geometry import GeometryContext
from ..objectives import LogisticRegression, Quadratic, SmoothnessEstimates, estimate_semi_strong
from ..sketching import coordinate, gaussian, identity, stream, whiten
from ..solvers import SolverConfig, SolverState, run, sgn_step, sgn_step_sap_form
from ..validation import brute_model_argmin, neighborhood_check
from .envelopes import (
    check_global_envelope, check_local_linear, estimate_rho, global_envelope, local_linear_margins,
    local_rate_b,
)
from .experiment import compute_fstar

SUITES = ("equivalence", "envelope", "local", "rho")


@dataclass
class SuiteResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        info = ", ".join(f"{k}={_short(v)}" for k, v in self.details.items() if not isinstance(v, (list, np.ndarray)))
        return f"{status} {self.name}: {info}"


def _short(v):
    return f"{v:.3g}" if isinstance(v, float) else v


def random_spd(rng, d, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * np.geomspace(1.0, cond, d)) @ q.T


def equivalence_instances(count: int = 100, seed: int = 0):
    """Random ``(oracle, x, sketch, l_alg)`` cases over quadratic and logistic
    objectives, ``d in {5, 20}`` and ``tau in {1, 2}``."""
    cases = []
    for i in range(count):
        rng = stream(seed, i)
        d = (5, 20)[i % 2]
        tau = (1, 2)[(i // 2) % 2]
        if (i // 4) % 2 == 0:
            oracle = Quadratic(random_spd(rng, d), rng.standard_normal(d))
        else:
            data = synth_logistic(4 * d, d, condition=10.0, seed=seed * 1000 + i)
            oracle = LogisticRegression(data.features, data.labels, 1e-2)
        x = rng.standard_normal(d)
        s = rng.standard_normal((d, tau))
        l_alg = float(10.0 ** rng.uniform(-2, 1))
        cases.append((oracle, x, s, l_alg))
    return cases


def equivalence_suite(count: int = 100, seed: int = 0, rtol: float = 1e-6) -> SuiteResult:
    """Damped-Newton, projected and brute-force cubic-model iterates agree."""
    worst_sap = worst_brute = 0.0
    for oracle, x, s, l_alg in equivalence_instances(count, seed):
        cfg = SolverConfig("sgn", SmoothnessEstimates(l_alg=l_alg), identity(oracle.dim))
        state = SolverState(x)
        a = sgn_step(oracle, state, s, cfg).new_x
        b = sgn_step_sap_form(oracle, state, s, cfg).new_x
        c = x + s @ brute_model_argmin(oracle, x, s, l_alg)
        scale = max(np.linalg.norm(a), 1e-300)
        worst_sap = max(worst_sap, float(np.linalg.norm(a - b)) / scale)
        worst_brute = max(worst_brute, float(np.linalg.norm(a - c)) / scale)
    return SuiteResult(
        "equivalence", worst_sap <= rtol and worst_brute <= rtol,
        {"instances": count, "max_rel_sap": worst_sap, "max_rel_brute": worst_brute, "rtol": rtol},
    )


def _envelope_instance(n: int = 500, d: int = 20, seed: int = 0):
    data = synth_logistic(n, d, condition=10.0, seed=seed)
    return LogisticRegression(data.features, data.labels, 1e-2)


def envelope_suite(replications: int = 50, iters: int = 2000, seed: int = 0, n: int = 500, d: int = 20) -> SuiteResult:
    """SGN with whitened coordinate sketches (tau = 1) from ``x0 = 0`` against
    the global envelope at every ``k``."""
    oracle = _envelope_instance(n, d, seed)
    f_star, x_star = compute_fstar(oracle)
    l_semi = estimate_semi_strong(oracle)
    constants = SmoothnessEstimates(l_alg=l_semi, l_semi=l_semi, l_sc=l_semi)
    dist = whiten(coordinate(d, 1, seed=seed))
    x0 = np.zeros(d)
    radius = 0.0
    ensemble = np.empty((replications, iters + 1))

    def track(k, x, rep):
        nonlocal radius
        radius = max(radius, GeometryContext(oracle.hessian(x)).local_norm(x - x_star))

    for r in range(replications):
        cfg = SolverConfig("sgn", constants, dist, max_iters=iters, grad_tol=None, f_star=f_star, replica=r)
        ensemble[r] = [rec.suboptimality for rec in run(oracle, cfg, x0, callback=track)]
    mean = ensemble.mean(axis=0)
    delta0 = float(mean[0])
    flags = check_global_envelope(mean, constants, radius, delta0, 1, d)
    bound = global_envelope(np.arange(iters + 1), delta0, radius, l_semi, l_semi, 1, d)
    ratio = np.max(mean[1:] / bound[1:])
    return SuiteResult(
        "envelope", bool(np.all(flags)),
        {"replications": replications, "iters": iters, "delta0": delta0, "R_hat": radius,
         "l_alg": l_semi, "violations": int(np.sum(~flags)), "max_mean_over_bound": float(ratio),
         "final_mean_subopt": float(mean[-1])},
    )


def local_suite(replications: int = 200, iters: int = 300, seed: int = 0, n: int = 500, d: int = 20,
                radius_fraction: float = 0.5) -> SuiteResult:
    """Warm starts at local distance ``radius_fraction / L_sc`` from ``x*``;
    ensemble mean against ``(1 - tau/(b d))^k delta0`` with 3-SE slack."""
    oracle = _envelope_instance(n, d, seed)
    f_star, x_star = compute_fstar(oracle)
    l_semi = estimate_semi_strong(oracle)
    constants = SmoothnessEstimates(l_alg=l_semi, l_semi=l_semi, l_sc=l_semi)
    b = local_rate_b(constants.l_alg, constants.l_sc)
    dist = whiten(coordinate(d, 1, seed=seed))
    ctx = GeometryContext(oracle.hessian(x_star))
    _, inv_root = ctx.sqrt_factors()
    ensemble = np.empty((replications, iters + 1))
    gates = []
    for r in range(replications):
        u = stream(seed, 0x10CA1, r).standard_normal(d)
        x0 = x_star + inv_root @ (u / np.linalg.norm(u)) * (radius_fraction / constants.l_sc)
        gates.append(neighborhood_check(oracle, x0, constants.l_sc))
        cfg = SolverConfig("sgn", constants, dist, max_iters=iters, grad_tol=None, f_star=f_star, replica=r)
        ensemble[r] = [rec.suboptimality for rec in run(oracle, cfg, x0)]
    passed = check_local_linear(ensemble, 1, d, b, gates, min_replications=min(100, replications))
    mean, allowed = local_linear_margins(ensemble, 1, d, b)
    ks = np.arange(1, iters + 1)
    positive = mean[1:] > 1e-14
    observed = float(np.exp(np.polyfit(ks[positive], np.log(mean[1:][positive]), 1)[0]))
    return SuiteResult(
        "local", passed,
        {"replications": replications, "iters": iters, "b": b, "bound_ratio": 1.0 - 1.0 / (b * d),
         "observed_ratio": observed, "delta0": float(mean[0]), "max_mean_over_allowed": float(np.max(mean[1:] / allowed[1:]))},
    )


def rho_suite(samples: int = 100_000, probes: int = 10, seed: int = 0) -> SuiteResult:
    """Identity sketches give 1; whitened rank-1 sketches on a quadratic give
    ``1/d`` within 5%; random probes stay in (0, 1]."""
    d = 10
    rng = stream(seed, 0xB0)
    quad = Quadratic(random_spd(rng, d), rng.standard_normal(d))
    x = rng.standard_normal(d)
    tiny = 1e-12
    rho_identity = estimate_rho(quad, x, identity(d, seed), 10, tiny, seed)
    rho_whitened = estimate_rho(quad, x, whiten(coordinate(d, 1, seed)), samples, tiny, seed)
    probe_values = []
    data = synth_logistic(60, 8, condition=10.0, seed=seed)
    logistic = LogisticRegression(data.features, data.labels, 1e-2)
    l_semi = estimate_semi_strong(logistic)
    for i in range(probes):
        xp = stream(seed, 0xB1, i).standard_normal(8)
        for dist in (coordinate(8, 1 + i % 3, seed), gaussian(8, 2, seed), whiten(coordinate(8, 2, seed))):
            probe_values.append(estimate_rho(logistic, xp, dist, 200, l_semi, seed + i))
    in_range = all(0.0 < v <= 1.0 for v in probe_values)
    ok_identity = math.isclose(rho_identity, 1.0, rel_tol=1e-9)
    ok_whitened = abs(rho_whitened - 1.0 / d) <= 0.05 / d
    return SuiteResult(
        "rho", ok_identity and ok_whitened and in_range,
        {"rho_identity": rho_identity, "rho_whitened": rho_whitened, "target": 1.0 / d,
         "probes": len(probe_values), "probe_min": min(probe_values), "probe_max": max(probe_values)},
    )


def run_suite(name: str, **kwargs) -> SuiteResult:
    funcs = {"equivalence": equivalence_suite, "envelope": envelope_suite, "local": local_suite, "rho": rho_suite}
    if name not in funcs:
        raise ValueError(f"unknown suite {name!r}; expected one of {SUITES}")
    return funcs[name](**kwargs)
