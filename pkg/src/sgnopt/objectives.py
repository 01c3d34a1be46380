"""Convex test objectives with full and sketched derivative oracles, and
estimators for the smoothness constants the solvers take as parameters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, log_expit, logsumexp, softmax

from .sketching import SketchDistribution, stream

# max |sigma''(z)| for the logistic sigmoid, attained at z = log(2 +- sqrt 3)
SIGMOID_D2_MAX = 1.0 / (6.0 * np.sqrt(3.0))


class DataError(ValueError):
    pass


def _as_sketch(s) -> np.ndarray:
    s = getattr(s, "matrix", s)
    s = np.asarray(s, dtype=float)
    return s[:, None] if s.ndim == 1 else s


class ObjectiveOracle:
    """Base class: subclasses provide value, gradient and Hessian.

    The sketched oracles default to ``S^T grad`` and ``S^T H S``; separable
    objectives override them to avoid forming the full Hessian.
    """

    dim: int

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sketched_gradient(self, x, s) -> np.ndarray:
        return _as_sketch(s).T @ self.gradient(x)

    def sketched_hessian(self, x, s) -> np.ndarray:
        s = _as_sketch(s)
        return s.T @ (self.hessian(x) @ s)

    # Constants used by the estimators below. ``None`` means unknown.
    def hessian_lipschitz(self) -> Optional[float]:
        """Euclidean Lipschitz constant of the Hessian."""
        return None

    def strong_convexity(self) -> Optional[float]:
        return None

    def smoothness(self) -> Optional[float]:
        """Global upper bound on the largest Hessian eigenvalue."""
        return None

    def coordinate_lipschitz(self) -> np.ndarray:
        raise NotImplementedError


class LogisticRegression(ObjectiveOracle):
    """``(1/n) sum log(1 + exp(-b_i a_i^T x)) + (reg/2) ||x||^2``."""

    def __init__(self, features, labels, reg: float = 0.0):
        a = sp.csr_matrix(features, dtype=float)
        b = np.asarray(labels, dtype=float).ravel()
        if a.shape[0] != b.size:
            raise DataError(f"{a.shape[0]} feature rows but {b.size} labels")
        if a.shape[1] < 1:
            raise DataError("feature dimension must be >= 1")
        if not np.all(np.isin(b, (-1.0, 1.0))):
            raise DataError("labels must be -1 or +1")
        if reg < 0:
            raise ValueError("reg must be nonnegative")
        self.features = a
        self.labels = b
        self.reg = float(reg)
        self.n, self.dim = a.shape

    def _margins(self, x):
        return self.labels * (self.features @ x)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(-np.mean(log_expit(self._margins(x))) + 0.5 * self.reg * (x @ x))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        w = -self.labels * expit(-self._margins(x)) / self.n
        return self.features.T @ w + self.reg * x

    def _curvature(self, x):
        z = self.features @ np.asarray(x, dtype=float)
        p = expit(z)
        return p * (1.0 - p) / self.n

    def hessian(self, x):
        a = self.features
        h = (a.T @ a.multiply(self._curvature(x)[:, None])).toarray()
        h = 0.5 * (h + h.T)
        h[np.diag_indices_from(h)] += self.reg
        return h

    def sketched_hessian(self, x, s):
        s = _as_sketch(s)
        a_s = np.asarray(self.features @ s)
        h = a_s.T @ (self._curvature(x)[:, None] * a_s) + self.reg * (s.T @ s)
        return 0.5 * (h + h.T)

    def hessian_lipschitz(self):
        if self.n == 0:
            return 0.0
        row_norm = np.sqrt(np.max(np.asarray(self.features.multiply(self.features).sum(axis=1))))
        gram = _spectral_norm_sq(self.features) / self.n
        return SIGMOID_D2_MAX * row_norm * gram

    def strong_convexity(self):
        return self.reg

    def smoothness(self):
        return 0.25 * _spectral_norm_sq(self.features) / max(self.n, 1) + self.reg

    def coordinate_lipschitz(self):
        col_sq = np.asarray(self.features.multiply(self.features).sum(axis=0)).ravel()
        return 0.25 * col_sq / max(self.n, 1) + self.reg


def _spectral_norm_sq(a) -> float:
    a = a.toarray() if sp.issparse(a) else np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2) ** 2)


def default_reg(features) -> float:
    """1e-3 times the mean squared row norm of the feature matrix."""
    a = sp.csr_matrix(features)
    if a.shape[0] == 0:
        return 0.0
    return 1e-3 * float(a.multiply(a).sum()) / a.shape[0]


def logistic_regression(data, reg: Optional[float] = None) -> LogisticRegression:
    """Logistic loss on a :class:`~sgnopt.data_io.Dataset`."""
    if reg is None:
        reg = default_reg(data.features)
    return LogisticRegression(data.features, data.labels, reg)


class Quadratic(ObjectiveOracle):
    """``0.5 x^T A x - b^T x`` with ``A`` symmetric positive definite."""

    def __init__(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape != (a.shape[0],):
            raise ValueError("a must be d x d and b of length d")
        if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(np.max(np.abs(a)), 1.0)):
            raise ValueError("a must be symmetric")
        a = 0.5 * (a + a.T)
        try:
            self._chol = np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            raise ValueError("a must be positive definite") from None
        self.a, self.b = a, b
        self.dim = a.shape[0]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.a @ x) - self.b @ x)

    def gradient(self, x):
        return self.a @ np.asarray(x, dtype=float) - self.b

    def hessian(self, x):
        return self.a.copy()

    def minimizer(self) -> np.ndarray:
        return np.linalg.solve(self.a, self.b)

    def min_value(self) -> float:
        return float(-0.5 * self.b @ self.minimizer())

    def hessian_lipschitz(self):
        return 0.0

    def strong_convexity(self):
        return float(np.linalg.eigvalsh(self.a)[0])

    def smoothness(self):
        return float(np.linalg.eigvalsh(self.a)[-1])

    def coordinate_lipschitz(self):
        return np.diag(self.a).copy()


def quadratic(a, b) -> Quadratic:
    return Quadratic(a, b)


class LogSumExp(ObjectiveOracle):
    """``t * log sum_i exp((a_i^T x + c_i) / t) + (reg/2) ||x||^2``."""

    def __init__(self, rows, shifts, scale: float = 1.0, reg: float = 0.0):
        a = np.asarray(rows, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        c = np.asarray(shifts, dtype=float).ravel()
        if a.shape[0] < 2:
            raise ValueError("log-sum-exp needs at least two rows")
        if c.size != a.shape[0]:
            raise ValueError("one shift per row required")
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.rows, self.shifts, self.scale, self.reg = a, c, float(scale), float(reg)
        self.dim = a.shape[1]

    def _logits(self, x):
        return (self.rows @ np.asarray(x, dtype=float) + self.shifts) / self.scale

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(self.scale * logsumexp(self._logits(x)) + 0.5 * self.reg * (x @ x))

    def gradient(self, x):
        return self.rows.T @ softmax(self._logits(x)) + self.reg * np.asarray(x, dtype=float)

    def hessian(self, x):
        p = softmax(self._logits(x))
        ap = self.rows.T @ p
        h = (self.rows.T @ (p[:, None] * self.rows) - np.outer(ap, ap)) / self.scale
        h = 0.5 * (h + h.T)
        h[np.diag_indices_from(h)] += self.reg
        return h

    def sketched_hessian(self, x, s):
        s = _as_sketch(s)
        p = softmax(self._logits(x))
        a_s = self.rows @ s
        ap = a_s.T @ p
        h = (a_s.T @ (p[:, None] * a_s) - np.outer(ap, ap)) / self.scale + self.reg * (s.T @ s)
        return 0.5 * (h + h.T)

    def hessian_lipschitz(self):
        # |sum p (u - mean u)^3| <= max|u - mean u| * var(u) <= 2 r^3 for ||v|| = 1
        r = np.max(np.linalg.norm(self.rows, axis=1))
        return 2.0 * r**3 / self.scale**2

    def strong_convexity(self):
        return self.reg

    def smoothness(self):
        return float(np.linalg.norm(self.rows, 2) ** 2) / self.scale + self.reg

    def coordinate_lipschitz(self):
        return np.max(self.rows**2, axis=0) / self.scale + self.reg


def log_sum_exp(rows, shifts, scale: float = 1.0, reg: float = 0.0) -> LogSumExp:
    return LogSumExp(rows, shifts, scale, reg)


class AffineComposition(ObjectiveOracle):
    """``y -> f(A y)`` for an invertible ``A``."""

    def __init__(self, base: ObjectiveOracle, a):
        a = np.asarray(a, dtype=float)
        if a.shape != (base.dim, base.dim):
            raise ValueError("A must be d x d")
        self.base, self.a = base, a
        self.dim = base.dim

    def value(self, y):
        return self.base.value(self.a @ y)

    def gradient(self, y):
        return self.a.T @ self.base.gradient(self.a @ y)

    def hessian(self, y):
        h = self.a.T @ self.base.hessian(self.a @ y) @ self.a
        return 0.5 * (h + h.T)

    def sketched_gradient(self, y, s):
        return self.base.sketched_gradient(self.a @ y, self.a @ _as_sketch(s))

    def sketched_hessian(self, y, s):
        return self.base.sketched_hessian(self.a @ y, self.a @ _as_sketch(s))


@dataclass
class SmoothnessEstimates:
    """Constants consumed by the solvers; ``None`` where unknown."""

    l_alg: Optional[float] = None
    l_semi: Optional[float] = None
    l_sc: Optional[float] = None
    l_s: Optional[float] = None
    l_hat: Optional[float] = None
    mu_hat: Optional[float] = None

    def global_linear_l_alg(self) -> float:
        """``(9/2) L_S l_hat^2``, the choice giving the global linear rate."""
        if self.l_s is None or self.l_hat is None:
            raise ValueError("need l_s and l_hat")
        return 4.5 * self.l_s * self.l_hat**2


def estimate_semi_strong(oracle: Optional[ObjectiveOracle] = None, l2=None, mu=None) -> float:
    """Upper bound ``l2 / mu^{3/2}`` on the semi-strong self-concordance constant.

    ``l2`` is a Euclidean Hessian-Lipschitz constant and ``mu`` a strong
    convexity modulus; either is taken from ``oracle`` when omitted.
    """
    if l2 is None:
        l2 = oracle.hessian_lipschitz() if oracle is not None else None
    if mu is None:
        mu = oracle.strong_convexity() if oracle is not None else None
    if l2 is None or mu is None:
        raise ValueError("l2 and mu are required (oracle does not provide them)")
    if mu <= 0:
        raise ValueError("mu must be positive")
    if l2 < 0:
        raise ValueError("l2 must be nonnegative")
    return float(l2) / float(mu) ** 1.5


def _fd_step(x) -> float:
    return np.finfo(float).eps ** (1.0 / 3.0) * (1.0 + np.max(np.abs(x), initial=0.0))


def third_directional(oracle: ObjectiveOracle, x, u) -> float:
    """``D^3 f(x)[u]^3`` by central differences of the Hessian quadratic form."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    nu = np.linalg.norm(u)
    if nu == 0:
        return 0.0
    v = u / nu
    eps = _fd_step(x)
    q_plus = v @ oracle.hessian(x + eps * v) @ v
    q_minus = v @ oracle.hessian(x - eps * v) @ v
    return float((q_plus - q_minus) / (2.0 * eps)) * nu**3


def empirical_ls(
    oracle: ObjectiveOracle,
    dist: SketchDistribution,
    probes: int,
    seed: int = 0,
    radius: float = 1.0,
    points: Optional[Sequence[np.ndarray]] = None,
) -> float:
    """Sampled lower bound on the subspace self-concordance constant.

    Max over probes of ``|D^3 f(x)[Sh]^3| / ||Sh||_x^3``. Points are drawn from
    ``N(0, radius^2 I)`` unless ``points`` is given (then cycled). The probe
    sequence is a prefix-stable stream, so the estimate is nondecreasing in
    ``probes``.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    best = 0.0
    for i in range(probes):
        rng = stream(seed, i)
        if points is not None:
            x = np.asarray(points[i % len(points)], dtype=float)
        else:
            x = radius * rng.standard_normal(oracle.dim)
        s = dist.draw(rng).matrix
        u = s @ rng.standard_normal(s.shape[1])
        nu = np.linalg.norm(u)
        if nu == 0:
            continue
        v = u / nu
        q = v @ oracle.hessian(x) @ v
        if q <= 0:
            continue
        best = max(best, abs(third_directional(oracle, x, v)) / q**1.5)
    return best


def relative_constants(oracle: ObjectiveOracle) -> tuple[float, float]:
    """Conservative ``(l_hat, mu_hat) = (L/mu, mu/L)`` from global curvature bounds."""
    big, mu = oracle.smoothness(), oracle.strong_convexity()
    if big is None or mu is None or mu <= 0:
        raise ValueError("oracle needs finite smoothness and positive strong convexity")
    return big / mu, mu / big


def estimate_constants(
    oracle: ObjectiveOracle, dist: Optional[SketchDistribution] = None, probes: int = 200, seed: int = 0
) -> SmoothnessEstimates:
    """Fill a :class:`SmoothnessEstimates` from the oracle's known bounds.

    ``l_alg`` defaults to the semi-strong upper bound, and ``l_sc`` is set to
    that same bound (a valid, conservative upper estimate).
    """
    l_semi = estimate_semi_strong(oracle)
    l_s = empirical_ls(oracle, dist, probes, seed) if dist is not None else None
    try:
        l_hat, mu_hat = relative_constants(oracle)
    except ValueError:
        l_hat = mu_hat = None
    return SmoothnessEstimates(l_alg=l_semi, l_semi=l_semi, l_sc=l_semi, l_s=l_s, l_hat=l_hat, mu_hat=mu_hat)
