"""State lifting that turns control-rate bounds into state constraints.

For every k = 0..T-2 an auxiliary state y_k in R^m is carried along:

    y_k(t) = 0                      t <= k
    y_k(k+1) = -u(k)
    y_k(k+2) = y_k(k+1) + u(k+1)    (= u(k+1) - u(k))
    y_k(t) = y_k(t-1)               t >= k+3

so the bound ||u(k+1) - u(k)|| <= R_k becomes y_k(t) in Ball(R_k) for
t >= k+2. The extended state w(t) = (x(t), y_0(t), .., y_{T-2}(t)) lives in
R^q with q = d + (T-1) m.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import OcpSpec, Trajectory, total_cost
from .sets import ConvexSet, NormBall, Singleton

LIFT_TOL = 1e-9

READINGS = ("reflect", "literal")


@dataclass(frozen=True, eq=False)
class ExtendedTrajectory:
    """x: (T+1, d), y: (T-1, T+1, m) indexed [k, t], u: (T, m)."""

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray

    @property
    def T(self) -> int:
        return self.u.shape[0]

    def w(self, t: int) -> np.ndarray:
        """Stacked extended state at time t."""
        return np.concatenate([self.x[t], self.y[:, t, :].reshape(-1)])


@dataclass(frozen=True)
class LiftedProblem:
    """Extended-state view of an :class:`OcpSpec`.

    ``reading`` selects the constraint set on y_k(k+1): ``"reflect"`` uses
    -U(k), which is what y_k(k+1) = -u(k) and u(k) in U(k) imply;
    ``"literal"`` uses U(k+1).
    """

    base: OcpSpec
    reading: str = "reflect"

    def __post_init__(self):
        if self.reading not in READINGS:
            raise ValueError(f"reading must be one of {READINGS}")

    @property
    def q(self) -> int:
        return self.base.d + (self.base.T - 1) * self.base.m

    def y_set(self, k: int, t: int) -> ConvexSet:
        """Constraint set Y_t^k."""
        spec = self.base
        _check_k(k, spec.T)
        if not 0 <= t <= spec.T:
            raise IndexError(f"t={t} outside 0..{spec.T}")
        if t <= k:
            return Singleton(np.zeros(spec.m))
        if t == k + 1:
            if self.reading == "reflect":
                return spec.control_sets[k].reflect()
            return spec.control_sets[k + 1]
        return NormBall(np.zeros(spec.m), spec.rate_bounds[k], spec.rate_norm)

    def extended_sets(self, t: int) -> list[ConvexSet]:
        """Factors of W(t) = M(t) x Y_t^0 x ... x Y_t^{T-2}."""
        return [self.base.state_sets[t]] + [self.y_set(k, t) for k in range(self.base.T - 1)]

    def dynamics(self, t: int, w, u) -> np.ndarray:
        """Extended vector field F(t, w, u)."""
        spec = self.base
        w = np.asarray(w, dtype=float)
        x = w[:spec.d]
        ys = w[spec.d:].reshape(spec.T - 1, spec.m)
        nxt = [spec.dynamics[t].value(t, x, u)]
        nxt += [g_step(k, t, ys[k], u, spec.T) for k in range(spec.T - 1)]
        return np.concatenate(nxt)

    def contains(self, ext: ExtendedTrajectory, tol: float = 1e-9) -> bool:
        """Whether every w(t) lies in W(t)."""
        for t in range(self.base.T + 1):
            if not self.base.state_sets[t].contains(ext.x[t], tol):
                return False
            for k in range(self.base.T - 1):
                if not self.y_set(k, t).contains(ext.y[k, t], tol):
                    return False
        return True


def _check_k(k, T):
    if not 0 <= k <= T - 2:
        raise IndexError(f"k={k} outside 0..{T - 2}")


def g_step(k: int, t: int, y, u, T: int | None = None) -> np.ndarray:
    """One step of the auxiliary dynamics y_k(t+1) = g_k(t, y_k(t), u(t))."""
    if T is not None:
        _check_k(k, T)
        if not 0 <= t <= T - 1:
            raise IndexError(f"t={t} outside 0..{T - 1}")
    elif k < 0 or t < 0:
        raise IndexError("negative index")
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if t == k:
        return -u
    if t == k + 1:
        return y + u
    return y.copy()


def lift_trajectory(spec: OcpSpec, traj: Trajectory) -> ExtendedTrajectory:
    traj.check_consistent(spec)
    T, m = spec.T, spec.m
    y = np.zeros((T - 1, T + 1, m))
    for k in range(T - 1):
        y[k, k + 1] = -traj.u[k]
        y[k, k + 2] = y[k, k + 1] + traj.u[k + 1]
        y[k, k + 3:] = y[k, k + 2]
    return ExtendedTrajectory(np.array(traj.x), y, np.array(traj.u))


def build_rate_matrix(k: int, T: int, m: int) -> np.ndarray:
    """Block matrix A_k with A_k [y_k(0); ..; y_k(T)] = rate_rhs(k, u).

    Block row 0 reads y_k(0) = 0, block row k+1 reads y_k(k+1) = -u(k), and
    every other block row t reads y_k(t) - y_k(t-1) = (rhs)_t.
    """
    _check_k(k, T)
    n = T + 1
    A = np.zeros((n * m, n * m))
    eye = np.eye(m)
    for t in range(n):
        A[t * m:(t + 1) * m, t * m:(t + 1) * m] = eye
        if t not in (0, k + 1):
            A[t * m:(t + 1) * m, (t - 1) * m:t * m] = -eye
    return A


def rate_rhs(k: int, u) -> np.ndarray:
    """Right-hand side for :func:`build_rate_matrix`: -u(k) at block k+1, u(k+1) at k+2."""
    u = np.asarray(u, dtype=float)
    T, m = u.shape
    _check_k(k, T)
    rhs = np.zeros((T + 1, m))
    rhs[k + 1] = -u[k]
    rhs[k + 2] = u[k + 1]
    return rhs.reshape(-1)


def f12(spec: OcpSpec, traj: Trajectory) -> ExtendedTrajectory:
    return lift_trajectory(spec, traj)


def f21(spec: OcpSpec, ext: ExtendedTrajectory, tol: float = LIFT_TOL) -> Trajectory:
    """Drop the auxiliary states after checking they match the lift of (x, u)."""
    expected = lift_trajectory(spec, Trajectory(ext.x, ext.u)).y
    if ext.y.shape != expected.shape:
        raise ValueError(f"y has shape {ext.y.shape}, expected {expected.shape}")
    err = np.max(np.abs(ext.y - expected), initial=0.0)
    if err > tol:
        k, t, _ = np.unravel_index(np.argmax(np.abs(ext.y - expected)), expected.shape)
        raise ValueError(f"inconsistent lift: y_{k}({t}) off by {err:.3e}")
    return Trajectory(ext.x, ext.u)


def lifted_cost_equivalence(spec: OcpSpec, traj: Trajectory) -> tuple[float, float]:
    """Objective of the original and of the lifted problem at ``traj``.

    The lifted objective does not depend on the y states, so it is evaluated
    on ``f21(f12(traj))``.
    """
    ext = f12(spec, traj)
    return total_cost(spec, traj), total_cost(spec, f21(spec, ext))


def write_rate_matrix_csv(path, k: int, T: int, m: int) -> None:
    A = build_rate_matrix(k, T, m)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in A:
            w.writerow([format(v, ".17g") for v in row])
