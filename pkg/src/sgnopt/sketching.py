"""Sketch distributions and Monte-Carlo checks of projection unbiasedness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import GeometryContext, GeometryError

KINDS = ("coordinate", "gaussian", "identity", "transformed")


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator keyed by ``(seed, *key)``.

    Keys are typically ``(replication, iteration)``; distinct keys give
    statistically independent streams and the same key replays exactly.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


@dataclass(frozen=True)
class SketchMatrix:
    matrix: np.ndarray
    coords: Optional[np.ndarray] = None  # set for coordinate sketches

    @property
    def rank(self) -> int:
        return self.matrix.shape[1]

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class SketchDistribution:
    """Immutable descriptor of a sketch distribution.

    ``transformed`` samples ``S = T M`` with ``M`` drawn from ``base``. With
    ``T = H^{-1/2}`` this is the whitened construction that makes the
    local-norm projection unbiased at the point where ``H`` was taken. A
    transformed distribution with ``transform=None`` is whitened lazily at
    each iterate by the solver driver.
    """

    kind: str
    dimension: int
    tau: int = 1
    seed: int = 0
    base: Optional["SketchDistribution"] = None
    transform: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sketch kind {self.kind!r}; expected one of {KINDS}")
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.kind == "identity":
            object.__setattr__(self, "tau", self.dimension)
        if self.kind == "transformed":
            if self.base is None:
                raise ValueError("transformed distribution needs a base distribution")
            object.__setattr__(self, "tau", self.base.tau)
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if self.tau > self.dimension:
            raise ValueError(f"tau={self.tau} exceeds dimension d={self.dimension}")

    @property
    def adaptive(self) -> bool:
        return self.kind == "transformed" and self.transform is None

    def with_seed(self, seed: int) -> "SketchDistribution":
        base = self.base.with_seed(seed) if self.base is not None else None
        return SketchDistribution(self.kind, self.dimension, self.tau, seed, base, self.transform)

    def draw(self, rng: np.random.Generator, transform: Optional[np.ndarray] = None) -> SketchMatrix:
        """Draw one sketch from an explicit generator."""
        d, tau = self.dimension, self.tau
        if self.kind == "identity":
            return SketchMatrix(np.eye(d), np.arange(d))
        if self.kind == "coordinate":
            coords = np.sort(rng.choice(d, size=tau, replace=False))
            s = np.zeros((d, tau))
            s[coords, np.arange(tau)] = 1.0
            return SketchMatrix(s, coords)
        if self.kind == "gaussian":
            return SketchMatrix(rng.standard_normal((d, tau)))
        t = self.transform if transform is None else transform
        if t is None:
            raise ValueError("adaptive transformed distribution needs a transform at sampling time")
        return SketchMatrix(t @ self.base.draw(rng).matrix)

    def sample(self, *key: int, transform: Optional[np.ndarray] = None) -> SketchMatrix:
        return self.draw(stream(self.seed, *key), transform)


def coordinate(d: int, tau: int = 1, seed: int = 0) -> SketchDistribution:
    return SketchDistribution("coordinate", d, tau, seed)


def gaussian(d: int, tau: int = 1, seed: int = 0) -> SketchDistribution:
    return SketchDistribution("gaussian", d, tau, seed)


def identity(d: int, seed: int = 0) -> SketchDistribution:
    return SketchDistribution("identity", d, d, seed)


def transformed(base: SketchDistribution, transform: Optional[np.ndarray]) -> SketchDistribution:
    if transform is not None:
        transform = np.asarray(transform, dtype=float)
        if transform.shape != (base.dimension, base.dimension):
            raise ValueError("transform must be d x d")
    return SketchDistribution("transformed", base.dimension, base.tau, base.seed, base, transform)


def whitening_transform(ctx: GeometryContext) -> np.ndarray:
    """``H^{-1/2}``; raises :class:`GeometryError` for a singular Hessian."""
    return ctx.sqrt_factors()[1]


def whiten(base: SketchDistribution, ctx: Optional[GeometryContext] = None) -> SketchDistribution:
    """Whitened distribution ``S = H^{-1/2} M`` with ``M ~ base``.

    ``base`` should be unbiased in the l2 sense, E[M (M^T M)^+ M^T] = (tau/d) I.
    Without ``ctx`` the distribution is re-whitened at every iterate.
    """
    if ctx is None:
        return transformed(base, None)
    if ctx.dim != base.dimension:
        raise GeometryError("geometry and distribution dimensions differ")
    return transformed(base, whitening_transform(ctx))


def sample(dist: SketchDistribution, *key: int) -> SketchMatrix:
    return dist.sample(*key)


def projection_bias(dist: SketchDistribution, ctx: GeometryContext, samples: int, seed: int = 0):
    """Monte-Carlo mean of ``P_x`` and its Frobenius distance to ``(tau/d) I``."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = stream(seed)
    mean = np.zeros((ctx.dim, ctx.dim))
    for _ in range(samples):
        mean += ctx.projection(dist.draw(rng).matrix).matrix
    mean /= samples
    target = (dist.tau / dist.dimension) * np.eye(ctx.dim)
    return mean, float(np.linalg.norm(mean - target))


def expected_rank(dist: SketchDistribution, ctx: GeometryContext, samples: int, seed: int = 0) -> float:
    """Monte-Carlo mean of ``trace(P_x)``."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = stream(seed)
    return float(np.mean([ctx.projection(dist.draw(rng).matrix).trace() for _ in range(samples)]))
