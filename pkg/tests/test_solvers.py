import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgnopt.data_io import synth_logistic
from sgnopt.geometry import GeometryContext, RangeViolationError
from sgnopt.objectives import LogisticRegression, ObjectiveOracle, Quadratic, SmoothnessEstimates, estimate_semi_strong
from sgnopt.sketching import coordinate, gaussian, identity, whiten
from sgnopt.solvers import (
    SolverConfig, SolverError, SolverState, aicn_step, coordinate_descent_step, model_value,
    newton_exact_descent_step, rsn_step, run, sgn_step, sgn_step_sap_form, sgn_stepsize, sscn_step,
    sscn_subproblem,
)
from sgnopt.validation import brute_model_argmin

from conftest import spd

GOLDEN_R = 0.6180339887498949  # (sqrt(5) - 1) / 2 evaluated with mpmath at 30 digits


def logistic(seed=0, n=80, d=8, reg=1e-2):
    data = synth_logistic(n, d, condition=10.0, seed=seed)
    return LogisticRegression(data.features, data.labels, reg)


def sgn_cfg(l_alg, dist=None, d=1, **kw):
    return SolverConfig("sgn", SmoothnessEstimates(l_alg=l_alg), dist or identity(d), **kw)


class Degenerate(ObjectiveOracle):
    """f(x) = x1^2/2 + x2: the gradient leaves the Hessian's range."""

    dim = 2

    def value(self, x):
        return 0.5 * x[0] ** 2 + x[1]

    def gradient(self, x):
        return np.array([x[0], 1.0])

    def hessian(self, x):
        return np.diag([1.0, 0.0])


def test_stepsize_exact_values():
    assert sgn_stepsize(1.0, 4.0) == 0.5
    assert sgn_stepsize(2.0, 6.0) == pytest.approx(1.0 / 3.0, rel=1e-15)
    assert sgn_stepsize(1.0, 0.0) == 1.0
    assert sgn_stepsize(1e-20, 1.0) == pytest.approx(1.0, abs=1e-19)
    with pytest.raises(ValueError):
        sgn_stepsize(-1.0, 1.0)
    with pytest.raises(ValueError):
        sgn_stepsize(1.0, -1e-3)


@given(st.floats(-8, 6), st.floats(-8, 6))
def test_stepsize_root_and_bounds(log_l, log_g):
    l_alg, g = 10.0**log_l, 10.0**log_g
    a = sgn_stepsize(l_alg, g)
    c = l_alg * g
    assert 0.0 < a <= 1.0
    assert abs(1.0 - a - 0.5 * c * a * a) <= 1e-12
    assert a <= math.sqrt(2.0) / math.sqrt(c) * (1 + 1e-15)


def test_series_branch_continuity():
    below = sgn_stepsize(1.0, 0.999e-8)
    above = sgn_stepsize(1.0, 1.001e-8)
    assert abs(below - above) < 1e-10


def test_sgn_quadratic_one_step():
    r = np.random.default_rng(0)
    q = Quadratic(spd(r, 6, 100.0), r.standard_normal(6))
    state = SolverState(r.standard_normal(6))
    rep = sgn_step(q, state, np.eye(6), sgn_cfg(1e-12, d=6))
    np.testing.assert_allclose(rep.new_x, q.minimizer(), rtol=1e-10, atol=1e-10)
    assert rep.alpha == pytest.approx(1.0, abs=1e-10)


def test_sgn_null_subspace_gradient():
    q = Quadratic(np.eye(3), np.zeros(3))
    x = np.array([0.0, 2.0, 0.0])
    rep = sgn_step(q, SolverState(x), np.array([[1.0], [0.0], [0.0]]), sgn_cfg(1.0, d=3))
    np.testing.assert_array_equal(rep.new_x, x)
    assert rep.sketched_dual_norm == 0.0


def test_step_length_identity_and_alpha_range():
    f = logistic(1)
    r = np.random.default_rng(3)
    for _ in range(20):
        x = r.standard_normal(f.dim)
        s = r.standard_normal((f.dim, 2))
        rep = sgn_step(f, SolverState(x), s, sgn_cfg(1.5, d=f.dim))
        step = GeometryContext(f.hessian(x)).local_norm(rep.new_x - x)
        assert step == pytest.approx(rep.alpha * rep.sketched_dual_norm, rel=1e-10)
        assert 0 < rep.alpha <= 1


def test_golden_section_tau1_logistic():
    f = logistic(2)
    r = np.random.default_rng(7)
    for _ in range(10):
        x = r.standard_normal(f.dim)
        s = r.standard_normal((f.dim, 1))
        rep = sgn_step(f, SolverState(x), s, sgn_cfg(2.0, d=f.dim))
        brute = x + s @ brute_model_argmin(f, x, s, 2.0)
        assert np.linalg.norm(rep.new_x - brute) <= 1e-6 * np.linalg.norm(rep.new_x)


def test_sap_form_agrees():
    r = np.random.default_rng(4)
    for i in range(100):
        q = Quadratic(spd(r, 7, 30.0), r.standard_normal(7))
        x = r.standard_normal(7)
        s = r.standard_normal((7, 2))
        cfg = sgn_cfg(float(10 ** r.uniform(-2, 2)), d=7)
        a = sgn_step(q, SolverState(x), s, cfg).new_x
        b = sgn_step_sap_form(q, SolverState(x), s, cfg).new_x
        assert np.max(np.abs(a - b)) <= 1e-8


def test_sap_trajectory_logistic():
    f = logistic(3, n=200, d=20)
    dist = coordinate(20, 1, seed=5)
    l_alg = estimate_semi_strong(f)
    cfg = sgn_cfg(l_alg, dist)
    xa = xb = np.zeros(20)
    for k in range(50):
        s = dist.sample(0, k).matrix
        xa = sgn_step(f, SolverState(xa), s, cfg).new_x
        xb = sgn_step_sap_form(f, SolverState(xb), s, cfg).new_x
    assert np.linalg.norm(xa - xb) <= 1e-7 * max(1.0, np.linalg.norm(xa))


def test_aicn_equals_identity_sgn():
    f = logistic(4)
    x = np.random.default_rng(1).standard_normal(f.dim)
    a = aicn_step(f, SolverState(x), 3.0)
    b = sgn_step(f, SolverState(x), np.eye(f.dim), sgn_cfg(3.0, d=f.dim))
    np.testing.assert_array_equal(a.new_x, b.new_x)
    assert a.sketched_dual_norm == pytest.approx(GeometryContext(f.hessian(x)).dual_norm(f.gradient(x)), rel=1e-12)


def test_model_value_properties():
    r = np.random.default_rng(2)
    q = Quadratic(spd(r, 4), r.standard_normal(4))
    x = r.standard_normal(4)
    s = r.standard_normal((4, 2))
    assert model_value(q, x, s, np.zeros(2), 5.0) == q.value(x)
    h = r.standard_normal(2)
    assert model_value(q, x, s, h, 0.0) == pytest.approx(q.value(x + s @ h), rel=1e-12)
    f = logistic(5)
    x = r.standard_normal(f.dim)
    s = r.standard_normal((f.dim, 2))
    rep = sgn_step(f, SolverState(x), s, sgn_cfg(1.0, d=f.dim))
    coef, *_ = np.linalg.lstsq(s, rep.new_x - x, rcond=None)
    assert model_value(f, x, s, coef, 1.0) <= model_value(f, x, s, np.zeros(2), 1.0)


def test_rsn_and_newton_descent_scaling():
    r = np.random.default_rng(6)
    q = Quadratic(spd(r, 5), r.standard_normal(5))
    x = r.standard_normal(5)
    newton = q.minimizer() - x
    np.testing.assert_allclose(rsn_step(q, SolverState(x), np.eye(5), 1.0).new_x, q.minimizer(), atol=1e-10)
    np.testing.assert_allclose(rsn_step(q, SolverState(x), np.eye(5), 2.0).new_x, x + 0.5 * newton, atol=1e-10)
    np.testing.assert_allclose(newton_exact_descent_step(q, SolverState(x), 1.0).new_x, q.minimizer(), atol=1e-10)
    np.testing.assert_allclose(newton_exact_descent_step(q, SolverState(x), 2.0).new_x, x + 0.5 * newton, atol=1e-10)
    f = logistic(6)
    x = r.standard_normal(f.dim)
    s = r.standard_normal((f.dim, 2))
    d_rsn = rsn_step(f, SolverState(x), s, 3.0).new_x - x
    d_sgn = sgn_step(f, SolverState(x), s, sgn_cfg(3.0, d=f.dim)).new_x - x
    cos = d_rsn @ d_sgn / (np.linalg.norm(d_rsn) * np.linalg.norm(d_sgn))
    assert cos == pytest.approx(1.0, abs=1e-10)
    d_nd = newton_exact_descent_step(f, SolverState(x), 2.0).new_x - x
    d_ai = aicn_step(f, SolverState(x), 2.0).new_x - x
    assert d_nd @ d_ai / (np.linalg.norm(d_nd) * np.linalg.norm(d_ai)) == pytest.approx(1.0, abs=1e-10)


def test_sscn_scalar_golden():
    h, r = sscn_subproblem(np.array([1.0]), np.array([[1.0]]), np.array([[1.0]]), 2.0)
    assert r == pytest.approx(GOLDEN_R, abs=1e-10)
    assert h[0] == pytest.approx(-GOLDEN_R, abs=1e-10)
    # grid search of the scalar model as a cross-check
    t = np.linspace(-2, 2, 400_001)
    model = t + 0.5 * t**2 + (2.0 / 6.0) * np.abs(t) ** 3
    assert t[np.argmin(model)] == pytest.approx(-GOLDEN_R, abs=1e-5)


@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_sscn_stationarity(seed, tau):
    r = np.random.default_rng(seed)
    hess = spd(r, tau, 100.0)
    b = r.standard_normal((tau + 2, tau))
    gram = b.T @ b + 1e-3 * np.eye(tau)
    g = r.standard_normal(tau) * 10 ** r.uniform(-3, 3)
    l_s = 10 ** r.uniform(-3, 3)
    h, rr = sscn_subproblem(g, hess, gram, l_s)
    size = math.sqrt(h @ gram @ h)
    resid = g + hess @ h + 0.5 * l_s * size * (gram @ h)
    assert np.linalg.norm(resid) <= 1e-8 * max(1.0, np.linalg.norm(g))


def test_sscn_zero_regularizer_is_newton():
    r = np.random.default_rng(8)
    f = logistic(7)
    x = r.standard_normal(f.dim)
    s = r.standard_normal((f.dim, 2))
    a = sscn_step(f, SolverState(x), s, 0.0).new_x
    b = rsn_step(f, SolverState(x), s, 1.0).new_x
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_coordinate_descent_cases():
    lip = np.array([1.0, 4.0, 9.0])
    q = Quadratic(np.diag(lip), np.array([1.0, 2.0, 3.0]))
    x = np.zeros(3)
    for i in range(3):
        new = coordinate_descent_step(q, SolverState(x), lip, coord=i).new_x
        assert new[i] == pytest.approx(q.minimizer()[i], rel=1e-15)
    one = Quadratic(np.array([[2.0]]), np.array([1.0]))
    rep = coordinate_descent_step(one, SolverState(np.array([3.0])), np.array([5.0]), coord=0)
    assert rep.new_x[0] == pytest.approx(3.0 - one.gradient(np.array([3.0]))[0] / 5.0, rel=1e-15)
    f = logistic(8)
    state = SolverState(np.random.default_rng(1).standard_normal(f.dim))
    rng = np.random.default_rng(2)
    for _ in range(200):
        rep = coordinate_descent_step(f, state, f.coordinate_lipschitz(), rng)
        assert rep.f_new <= rep.f_old + 1e-15
        state = SolverState(rep.new_x, f=rep.f_new)


def test_range_violation_raises():
    f = Degenerate()
    cfg = sgn_cfg(1.0, d=2)
    with pytest.raises(RangeViolationError):
        sgn_step(f, SolverState(np.zeros(2)), np.array([[0.0], [1.0]]), cfg)
    with pytest.raises(RangeViolationError):
        sgn_step_sap_form(f, SolverState(np.zeros(2)), np.array([[0.0], [1.0]]), cfg)
    cfg_run = SolverConfig("sgn", SmoothnessEstimates(l_alg=1.0), identity(2), max_iters=3)
    with pytest.raises(SolverError, match="iteration 0"):
        run(f, cfg_run, np.zeros(2))


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig("sgn", SmoothnessEstimates(), identity(2))
    with pytest.raises(ValueError):
        SolverConfig("rsn", SmoothnessEstimates(l_hat=1.0))
    with pytest.raises(ValueError):
        SolverConfig("newton-exact-descent")
    with pytest.raises(ValueError):
        SolverConfig("bfgs")


def test_run_quadratic_stops_after_one_iteration():
    r = np.random.default_rng(9)
    q = Quadratic(spd(r, 5), r.standard_normal(5))
    cfg = SolverConfig("sgn", SmoothnessEstimates(l_alg=1e-12), identity(5), max_iters=50, f_star=q.min_value())
    trace = run(q, cfg, np.zeros(5))
    assert len(trace) == 2
    assert trace[1].g_dual <= 1e-10
    assert trace[1].suboptimality <= 1e-10


def test_run_trace_contract_and_determinism():
    f = logistic(9)
    l_alg = estimate_semi_strong(f)
    cfg = SolverConfig("sgn", SmoothnessEstimates(l_alg=l_alg), whiten(coordinate(f.dim, 2, seed=3)),
                       max_iters=60, grad_tol=None, f_star=0.0)
    a = run(f, cfg, np.zeros(f.dim))
    b = run(f, cfg, np.zeros(f.dim))
    assert a == b
    assert [rec.k for rec in a] == list(range(61))
    assert all(y.f_value <= x.f_value + 1e-15 for x, y in zip(a, a[1:]))
    assert a[1].cost_dtau2 == f.dim * 4
    assert all(rec.wall_ns == 0 for rec in a)
    assert run(f, cfg, np.zeros(f.dim), timing=True)[-1].wall_ns > 0


def test_run_logs_step_identity():
    f = logistic(10, d=5)
    cfg = SolverConfig("sgn", SmoothnessEstimates(l_alg=estimate_semi_strong(f)), gaussian(5, 2, seed=1),
                       max_iters=30, grad_tol=None)
    xs = []
    trace = run(f, cfg, np.ones(5), callback=lambda k, x, rep: xs.append(x.copy()))
    for k in range(30):
        step = GeometryContext(f.hessian(xs[k])).local_norm(xs[k + 1] - xs[k])
        assert step == pytest.approx(trace[k].alpha * trace[k].g_dual, rel=1e-10)


@pytest.mark.parametrize("alg", ["rsn", "sscn", "aicn", "newton-exact-descent", "coordinate-descent"])
def test_baselines_decrease(alg):
    f = logistic(11)
    c = SmoothnessEstimates(l_alg=estimate_semi_strong(f), l_hat=f.smoothness() / f.reg, l_s=f.hessian_lipschitz())
    cfg = SolverConfig(alg, c, coordinate(f.dim, 2, seed=1), max_iters=100, grad_tol=None,
                       sigma=f.smoothness() / f.reg)
    trace = run(f, cfg, np.zeros(f.dim))
    assert trace[-1].f_value < trace[0].f_value
    assert len(trace) == 101
