"""Hessian-weighted geometry: local norms, dual norms, pseudoinverses and the
local-norm projection onto the range of a sketch."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DEFAULT_RANK_TOL = 1e-10
SYMMETRY_TOL = 1e-12
DENSE_PROJECTION_MAX_DIM = 512


class GeometryError(ValueError):
    """Malformed input to a geometry routine."""


class RangeViolationError(GeometryError):
    """A gradient has a component outside the range of the Hessian.

    Raised when the precondition grad f(x) in Range(hess f(x)) needed for the
    damped-Newton / sketch-and-project equivalence does not hold.
    """


def _symmetrize(m: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise GeometryError(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.max(np.abs(m), initial=0.0), np.finfo(float).tiny)
    asym = np.max(np.abs(m - m.T), initial=0.0)
    if asym > tol * scale:
        raise GeometryError(f"matrix is not symmetric (relative asymmetry {asym / scale:.3e})")
    return 0.5 * (m + m.T)


def _eig_retained(m: np.ndarray, rel_tol: float) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(m)
    lam_max = w[-1] if w.size else 0.0
    if lam_max <= 0.0:
        return w[:0], v[:, :0]
    keep = w > rel_tol * lam_max
    return w[keep], v[:, keep]


def pseudo_inverse(m: np.ndarray, rel_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric PSD matrix.

    Eigenvalues at or below ``rel_tol * lambda_max`` are treated as zero.
    Raises :class:`GeometryError` for non-symmetric input.
    """
    m = _symmetrize(m)
    w, v = _eig_retained(m, rel_tol)
    return (v / w) @ v.T


@dataclass(frozen=True, eq=False)
class GeometryContext:
    """Local geometry at a point, built from the Hessian there.

    The eigendecomposition is computed once at construction; every norm and
    projection afterwards reuses it. Instances are immutable.
    """

    hessian: np.ndarray
    rank_tolerance: float = DEFAULT_RANK_TOL
    eigvals: np.ndarray = field(init=False, repr=False)
    eigvecs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h = _symmetrize(self.hessian)
        h.setflags(write=False)
        w, v = _eig_retained(h, self.rank_tolerance)
        object.__setattr__(self, "hessian", h)
        object.__setattr__(self, "eigvals", w)
        object.__setattr__(self, "eigvecs", v)

    @property
    def dim(self) -> int:
        return self.hessian.shape[0]

    @property
    def rank(self) -> int:
        return self.eigvals.size

    @property
    def is_full_rank(self) -> bool:
        return self.rank == self.dim

    def _vec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise GeometryError(f"expected a vector of length {self.dim}, got shape {v.shape}")
        return v

    @cached_property
    def pinv(self) -> np.ndarray:
        return (self.eigvecs / self.eigvals) @ self.eigvecs.T

    def apply_pinv(self, g) -> np.ndarray:
        g = self._vec(g)
        return self.eigvecs @ ((self.eigvecs.T @ g) / self.eigvals)

    def local_norm(self, v) -> float:
        v = self._vec(v)
        return float(np.sqrt(max(v @ (self.hessian @ v), 0.0)))

    def range_residual(self, g) -> float:
        g = self._vec(g)
        return float(np.linalg.norm(g - self.eigvecs @ (self.eigvecs.T @ g)))

    def range_check(self, g) -> bool:
        g = self._vec(g)
        return self.range_residual(g) <= self.rank_tolerance * np.linalg.norm(g)

    def dual_norm(self, g) -> float:
        g = self._vec(g)
        if not self.range_check(g):
            raise RangeViolationError(
                "gradient is not in the range of the Hessian "
                f"(residual {self.range_residual(g):.3e})"
            )
        c = self.eigvecs.T @ g
        return float(np.sqrt(np.sum(c * c / self.eigvals)))

    def sqrt_factors(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(H^{1/2}, H^{-1/2})``; requires a positive definite Hessian."""
        if not self.is_full_rank:
            raise GeometryError("Hessian is singular; inverse square root undefined")
        v, s = self.eigvecs, np.sqrt(self.eigvals)
        return (v * s) @ v.T, (v / s) @ v.T

    def projection(self, sketch) -> "ProjectionOperator":
        return ProjectionOperator(np.asarray(sketch, dtype=float), self)


@dataclass(frozen=True, eq=False)
class ProjectionOperator:
    """The local-norm projector ``S (S^T H S)^+ S^T H`` onto Range(S).

    With ``H = V diag(w) V^T`` and ``B = diag(w)^{1/2} V^T S = U diag(sig) W^T``
    the projector equals ``S W diag(1/sig) U^T diag(w)^{1/2} V^T``. Working
    with ``B`` instead of ``B^T B = S^T H S`` halves the condition number
    exponent. ``matrix`` materializes it for small ``d``.
    """

    sketch: np.ndarray
    geometry: GeometryContext

    def __post_init__(self):
        s = self.sketch
        if s.ndim == 1:
            s = s[:, None]
            object.__setattr__(self, "sketch", s)
        if s.ndim != 2 or s.shape[0] != self.geometry.dim or s.shape[1] < 1:
            raise GeometryError(
                f"sketch must be {self.geometry.dim} x tau with tau >= 1, got {self.sketch.shape}"
            )

    @cached_property
    def _factors(self):
        g = self.geometry
        root = np.sqrt(g.eigvals)
        b = root[:, None] * (g.eigvecs.T @ self.sketch)
        u, sig, wt = np.linalg.svd(b, full_matrices=False)
        # sig^2 are the eigenvalues of S^T H S; keep them on the same relative scale
        keep = sig**2 > g.rank_tolerance * (sig[0] ** 2 if sig.size else 0.0)
        u, sig, wt = u[:, keep], sig[keep], wt[keep]
        left = self.sketch @ (wt.T / sig)          # S W diag(1/sig), d x r
        right = g.eigvecs @ (root[:, None] * u)    # V diag(w)^{1/2} U, d x r
        return left, right

    def apply(self, h) -> np.ndarray:
        h = self.geometry._vec(h)
        left, right = self._factors
        return left @ (right.T @ h)

    def apply_transpose(self, g) -> np.ndarray:
        g = self.geometry._vec(g)
        left, right = self._factors
        return right @ (left.T @ g)

    @cached_property
    def matrix(self) -> np.ndarray:
        if self.geometry.dim > DENSE_PROJECTION_MAX_DIM:
            raise GeometryError(
                f"refusing to materialize a {self.geometry.dim}-dimensional projection"
            )
        left, right = self._factors
        return left @ right.T

    def trace(self) -> float:
        # tr(P) = rank of S^T H S
        return float(self._factors[0].shape[1])


def local_norm(ctx: GeometryContext, v) -> float:
    return ctx.local_norm(v)


def dual_norm(ctx: GeometryContext, g) -> float:
    return ctx.dual_norm(g)


def range_check(ctx: GeometryContext, g) -> bool:
    return ctx.range_check(g)


def projection(ctx: GeometryContext, sketch) -> ProjectionOperator:
    return ctx.projection(sketch)
