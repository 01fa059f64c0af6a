"""Closed convex constraint sets used for states, controls and lifted rate states.

Four variants are supported: axis-aligned boxes (bounds may be infinite),
norm balls in the max- or Euclidean norm, singletons and the whole space.
Besides membership, every set can measure how far a covector is from its
normal cone at a point, which is what the first-order maximization and the
multiplier sign conditions reduce to for convex sets (the supporting cone
of a convex set is a local tent of it).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS_SET = 1e-9
"""Absolute tolerance for set membership."""

NORMS = ("inf", "two")


def _frozen(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float, ndmin=1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


def _as_point(p, dim: int) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.shape[0] != dim:
        raise ValueError(f"dimension mismatch: point has {p.shape[0]} entries, set has {dim}")
    return p


class ConvexSet:
    """Base class; concrete variants are frozen dataclasses."""

    dim: int

    def contains(self, p, tol: float = EPS_SET) -> bool:
        raise NotImplementedError

    def distance(self, p) -> float:
        """Euclidean distance from ``p`` to the set."""
        p = _as_point(p, self.dim)
        return float(np.linalg.norm(p - self.project(p)))

    def project(self, p) -> np.ndarray:
        raise NotImplementedError

    def tangent_projection(self, p, g, active_tol: float = EPS_SET) -> np.ndarray:
        """Project ``g`` onto the supporting (tangent) cone of the set at ``p``."""
        raise NotImplementedError

    @property
    def is_bounded(self) -> bool:
        raise NotImplementedError

    # every variant here is closed
    is_closed = True

    @property
    def is_degenerate(self) -> bool:
        """True when the set has empty interior in its ambient space."""
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def reflect(self) -> "ConvexSet":
        """The set ``{-v : v in self}``."""
        raise NotImplementedError

    def __eq__(self, other):
        if type(self) is not type(other):
            return NotImplemented
        for name in self.__dataclass_fields__:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray):
                if not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _frozen(self.lower, "lower")
        hi = _frozen(self.upper, "upper")
        if lo.shape != hi.shape:
            raise ValueError("Box bounds must have equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("Box bounds must not be NaN")
        if np.any(lo > hi):
            raise ValueError("Box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, p, tol: float = EPS_SET) -> bool:
        p = _as_point(p, self.dim)
        return bool(np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol))

    def project(self, p) -> np.ndarray:
        return np.clip(_as_point(p, self.dim), self.lower, self.upper)

    def tangent_projection(self, p, g, active_tol: float = EPS_SET) -> np.ndarray:
        p = _as_point(p, self.dim)
        g = _as_point(g, self.dim).copy()
        at_lo = p <= self.lower + active_tol
        at_hi = p >= self.upper - active_tol
        # at an active upper bound only non-positive directions are feasible
        g[at_hi] = np.minimum(g[at_hi], 0.0)
        g[at_lo] = np.maximum(g[at_lo], 0.0)
        return g

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    @property
    def is_degenerate(self) -> bool:
        return bool(np.any(self.lower == self.upper))

    def bounding_box(self):
        return self.lower, self.upper

    def reflect(self) -> "Box":
        return Box(-self.upper, -self.lower)


@dataclass(frozen=True, eq=False)
class NormBall(ConvexSet):
    center: np.ndarray
    radius: float
    norm: str = "inf"

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(self.center, "center"))
        radius = float(self.radius)
        if not radius >= 0:
            raise ValueError("NormBall radius must be >= 0")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")
        object.__setattr__(self, "radius", radius)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def _offset_norm(self, p) -> float:
        v = p - self.center
        return float(np.max(np.abs(v)) if self.norm == "inf" else np.linalg.norm(v))

    def as_box(self) -> Box:
        if self.norm != "inf" and self.dim > 1:
            raise ValueError("only max-norm (or 1-D) balls are boxes")
        return Box(self.center - self.radius, self.center + self.radius)

    def contains(self, p, tol: float = EPS_SET) -> bool:
        p = _as_point(p, self.dim)
        return self._offset_norm(p) <= self.radius + tol

    def project(self, p) -> np.ndarray:
        p = _as_point(p, self.dim)
        if self.norm == "inf" or self.dim == 1:
            return self.as_box().project(p)
        v = p - self.center
        n = np.linalg.norm(v)
        if n <= self.radius:
            return p
        return self.center + v * (self.radius / n)

    def tangent_projection(self, p, g, active_tol: float = EPS_SET) -> np.ndarray:
        if self.norm == "inf" or self.dim == 1:
            return self.as_box().tangent_projection(p, g, active_tol)
        p = _as_point(p, self.dim)
        g = _as_point(g, self.dim)
        if self.radius <= active_tol:
            return np.zeros(self.dim)
        v = p - self.center
        n = np.linalg.norm(v)
        if n < self.radius - active_tol:
            return g.copy()
        normal = v / n
        return g - max(float(normal @ g), 0.0) * normal

    @property
    def is_bounded(self) -> bool:
        return True

    @property
    def is_degenerate(self) -> bool:
        return self.radius == 0.0

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def reflect(self) -> "NormBall":
        return NormBall(-self.center, self.radius, self.norm)


@dataclass(frozen=True, eq=False)
class Singleton(ConvexSet):
    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", _frozen(self.point, "point"))

    @property
    def dim(self) -> int:
        return self.point.shape[0]

    def contains(self, p, tol: float = EPS_SET) -> bool:
        p = _as_point(p, self.dim)
        return bool(np.all(np.abs(p - self.point) <= tol))

    def project(self, p) -> np.ndarray:
        _as_point(p, self.dim)
        return self.point.copy()

    def tangent_projection(self, p, g, active_tol: float = EPS_SET) -> np.ndarray:
        _as_point(g, self.dim)
        return np.zeros(self.dim)

    @property
    def is_bounded(self) -> bool:
        return True

    @property
    def is_degenerate(self) -> bool:
        return True

    def bounding_box(self):
        return self.point, self.point

    def reflect(self) -> "Singleton":
        return Singleton(-self.point)


@dataclass(frozen=True, eq=False)
class Whole(ConvexSet):
    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("Whole.dim must be a positive integer")
        object.__setattr__(self, "dim", int(self.dim))

    def contains(self, p, tol: float = EPS_SET) -> bool:
        p = _as_point(p, self.dim)
        return bool(np.all(np.isfinite(p)))

    def project(self, p) -> np.ndarray:
        return _as_point(p, self.dim).copy()

    def tangent_projection(self, p, g, active_tol: float = EPS_SET) -> np.ndarray:
        return _as_point(g, self.dim).copy()

    @property
    def is_bounded(self) -> bool:
        return False

    @property
    def is_degenerate(self) -> bool:
        return False

    def bounding_box(self):
        return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)

    def reflect(self) -> "Whole":
        return self


def membership(s: ConvexSet, p, tol: float = EPS_SET) -> bool:
    """Return True iff ``p`` lies in ``s`` up to ``tol`` (absolute)."""
    return s.contains(p, tol)


def normal_cone_residual(s: ConvexSet, p, grad, tol: float = EPS_SET,
                         active_tol: float | None = None) -> float:
    """Largest rate of increase of ``<grad, .>`` along a unit feasible direction.

    Feasible directions are those of the supporting cone of ``s`` at ``p``.
    The value is the Euclidean norm of the projection of ``grad`` onto that
    cone, so it is zero exactly when ``grad`` lies in the normal cone, and it
    is positively homogeneous in ``grad``.

    ``active_tol`` decides when a bound counts as active; it defaults to
    ``tol``.  Raises ``ValueError`` if ``p`` is not in ``s`` within ``tol``.
    """
    if not s.contains(p, tol):
        raise ValueError("normal_cone_residual requires p in the set")
    if active_tol is None:
        active_tol = tol
    return float(np.linalg.norm(s.tangent_projection(p, grad, active_tol)))


def dual_cone_residual(s: ConvexSet, p, eta, tol: float = EPS_SET,
                       active_tol: float | None = None) -> float:
    """Violation of ``<eta, v> >= 0`` for all supporting-cone directions ``v``.

    This is the sign condition on state-constraint multipliers in the adjoint
    recursion ``eta_f(t-1) = dH/dx + eta_x(t)``: ``eta_x`` must lie in the
    negated normal cone. Zero for inactive constraints requires ``eta = 0``.
    """
    return normal_cone_residual(s, p, -np.asarray(eta, dtype=float), tol, active_tol)


def set_from_bounds(lower, upper) -> ConvexSet:
    """Convenience: Singleton when bounds coincide, Whole when unbounded, else Box."""
    lo = np.asarray(lower, dtype=float).reshape(-1)
    hi = np.asarray(upper, dtype=float).reshape(-1)
    if np.array_equal(lo, hi):
        return Singleton(lo)
    if np.all(np.isneginf(lo)) and np.all(np.isposinf(hi)):
        return Whole(lo.shape[0])
    return Box(lo, hi)
