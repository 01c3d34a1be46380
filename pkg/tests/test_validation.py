import math

import numpy as np
import pytest

from sgnopt.data_io import synth_logistic
from sgnopt.objectives import LogisticRegression, ObjectiveOracle, Quadratic
from sgnopt.sketching import coordinate
from sgnopt.validation import (
    brute_model_argmin, compare_derivatives, fd_gradient, fd_hessian, mc_expectation, model_gradient,
    neighborhood_check,
)

from conftest import spd


class Constant(ObjectiveOracle):
    dim = 3

    def value(self, x):
        return 2.5

    def gradient(self, x):
        return np.zeros(3)

    def hessian(self, x):
        return np.zeros((3, 3))


def test_fd_gradient_cases():
    r = np.random.default_rng(0)
    q = Quadratic(spd(r, 4), r.standard_normal(4))
    x = r.standard_normal(4)
    np.testing.assert_allclose(fd_gradient(q, x), q.gradient(x), atol=1e-9)
    np.testing.assert_array_equal(fd_gradient(Constant(), np.ones(3)), np.zeros(3))
    data = synth_logistic(50, 5, seed=1)
    f = LogisticRegression(data.features, data.labels, 1e-3)
    assert compare_derivatives(f, probes=10).max_rel_error <= 1e-5
    np.testing.assert_allclose(fd_hessian(q, x), q.a, atol=1e-7)
    with pytest.raises(ValueError):
        fd_gradient(q, x, step=0.0)


def test_brute_argmin_closed_form_and_limits():
    r = np.random.default_rng(1)
    q = Quadratic(spd(r, 5), r.standard_normal(5))
    x = r.standard_normal(5)
    s = r.standard_normal((5, 1))
    g = s.T @ q.gradient(x)
    hs = s.T @ q.a @ s
    h = brute_model_argmin(q, x, s, 0.0)
    assert h[0] == pytest.approx(-g[0] / hs[0, 0], rel=1e-7)
    big = brute_model_argmin(q, x, s, 1e8)
    assert abs(big[0]) < 1e-2 * abs(h[0])
    with pytest.raises(NotImplementedError):
        brute_model_argmin(q, x, r.standard_normal((5, 3)), 1.0)


def test_brute_argmin_is_stationary_tau2():
    r = np.random.default_rng(2)
    data = synth_logistic(40, 6, seed=2)
    f = LogisticRegression(data.features, data.labels, 1e-2)
    for _ in range(5):
        x = r.standard_normal(6)
        s = r.standard_normal((6, 2))
        h = brute_model_argmin(f, x, s, 3.0)
        g = f.sketched_gradient(x, s)
        resid = model_gradient(g, f.sketched_hessian(x, s), 3.0, h)
        assert np.linalg.norm(resid) <= 1e-6 * max(1.0, np.linalg.norm(g))


def test_mc_expectation_cases():
    mean, se = mc_expectation(lambda rng: rng.standard_normal(), lambda v: np.ones((2, 2)), 50)
    np.testing.assert_array_equal(se, np.zeros((2, 2)))
    np.testing.assert_array_equal(mean, np.ones((2, 2)))
    dist = coordinate(4, 1)

    def proj(s):
        return s @ np.linalg.pinv(s)

    mean, se = mc_expectation(lambda rng: dist.draw(rng).matrix, proj, 4000, seed=3)
    assert np.all(np.abs(mean - 0.25 * np.eye(4)) <= 3 * se + 1e-15)
    _, se_small = mc_expectation(lambda rng: rng.standard_normal(), lambda v: v, 20_000, seed=4)
    _, se_large = mc_expectation(lambda rng: rng.standard_normal(), lambda v: v, 40_000, seed=4)
    assert se_small / se_large == pytest.approx(math.sqrt(2), rel=0.05)
    with pytest.raises(ValueError):
        mc_expectation(lambda rng: 0.0, lambda v: v, 1)


def test_neighborhood_check_cases():
    r = np.random.default_rng(5)
    q = Quadratic(spd(r, 3), r.standard_normal(3))
    assert neighborhood_check(q, q.minimizer(), 10.0)
    # threshold 1/l_sc at gamma = 1: dual norm of gradient at x equals local distance to x*
    x = q.minimizer() + np.linalg.solve(np.linalg.cholesky(q.a).T, np.array([0.5, 0.0, 0.0]))
    assert neighborhood_check(q, x, 1.9)
    assert not neighborhood_check(q, x, 2.1)
    data = synth_logistic(300, 10, condition=1e3, seed=6)
    f = LogisticRegression(data.features, data.labels, 1e-4)
    far = 50.0 * np.ones(10)
    l_sc = f.hessian_lipschitz() / f.reg**1.5
    assert not neighborhood_check(f, far, l_sc)
    with pytest.raises(ValueError):
        neighborhood_check(q, x, 0.0)
