"""Problem model for discrete-time optimal control with control-rate bounds.

The problem is

    minimize    sum_{t<T} c(t, x(t), u(t)) + c_F(x(T))
    subject to  x(t+1) = f(t, x(t), u(t)),         t = 0..T-1
                x(t) in M(t),  u(t) in U(t)
                ||u(t+1) - u(t)|| <= R_t,          t = 0..T-2

with x(0) either fixed or free in M(0).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .sets import NORMS, ConvexSet, Singleton

EPS_FEAS = 1e-6
"""Constraint-satisfaction tolerance for solver output."""

SYMMETRY_TOL = 1e-12
PD_TOL = 1e-10


def _matrix(a, shape, name):
    arr = np.array(a, dtype=float, ndmin=2)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    arr.flags.writeable = False
    return arr


def _vector(a, n, name):
    arr = np.zeros(n) if a is None else np.array(a, dtype=float).reshape(-1)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got {arr.shape[0]}")
    arr.flags.writeable = False
    return arr


def _check_symmetric_psd(M, name):
    if np.max(np.abs(M - M.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError(f"{name} must be symmetric")
    if M.size and np.linalg.eigvalsh(M).min() < -1e-9:
        raise ValueError(f"{name} must be positive semidefinite")


def is_positive_definite(M) -> bool:
    M = np.asarray(M, dtype=float)
    return bool(M.size == 0 or np.linalg.eigvalsh(M).min() > PD_TOL)


class _ValueEq:
    """Field-wise equality that understands numpy arrays."""

    def __eq__(self, other):
        if type(self) is not type(other):
            return NotImplemented
        for name in self.__dataclass_fields__:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None


# --------------------------------------------------------------------------
# dynamics

class StageDynamics:
    """x(t+1) = value(t, x, u) with Jacobians in x and u."""

    def value(self, t, x, u) -> np.ndarray:
        raise NotImplementedError

    def jac_x(self, t, x, u) -> np.ndarray:
        raise NotImplementedError

    def jac_u(self, t, x, u) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class LinearDynamics(_ValueEq, StageDynamics):
    """x(t+1) = A x + B u + c."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray | None = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        d = A.shape[0]
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        object.__setattr__(self, "A", _matrix(A, (d, d), "A"))
        object.__setattr__(self, "B", _matrix(B, (d, B.shape[1]), "B"))
        object.__setattr__(self, "c", _vector(self.c, d, "c"))

    @property
    def dims(self):
        return self.B.shape

    def value(self, t, x, u):
        return self.A @ x + self.B @ u + self.c

    def jac_x(self, t, x, u):
        return np.array(self.A)

    def jac_u(self, t, x, u):
        return np.array(self.B)


@dataclass(frozen=True, eq=False)
class ControlAffineDynamics(StageDynamics):
    """x(t+1) = f(x) + G(x) u.

    ``f_jac(x)`` is the d x d Jacobian of ``f``; ``G_jac(x)`` returns the
    d x m x d array of partials ``dG[i, j] / dx[k]``.
    """

    f: Callable
    f_jac: Callable
    G: Callable
    G_jac: Callable

    def value(self, t, x, u):
        return np.asarray(self.f(x), dtype=float) + np.asarray(self.G(x), dtype=float) @ u

    def jac_x(self, t, x, u):
        dG = np.asarray(self.G_jac(x), dtype=float)
        return np.asarray(self.f_jac(x), dtype=float) + np.einsum("ijk,j->ik", dG, u)

    def jac_u(self, t, x, u):
        return np.asarray(self.G(x), dtype=float)


@dataclass(frozen=True, eq=False)
class SmoothDynamics(StageDynamics):
    """General smooth map ``f(t, x, u)`` with user Jacobians."""

    f: Callable
    fx: Callable
    fu: Callable

    def value(self, t, x, u):
        return np.asarray(self.f(t, x, u), dtype=float)

    def jac_x(self, t, x, u):
        return np.asarray(self.fx(t, x, u), dtype=float)

    def jac_u(self, t, x, u):
        return np.asarray(self.fu(t, x, u), dtype=float)


# --------------------------------------------------------------------------
# costs

class StageCost:
    def value(self, t, x, u) -> float:
        raise NotImplementedError

    def grad_x(self, t, x, u) -> np.ndarray:
        raise NotImplementedError

    def grad_u(self, t, x, u) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class QuadraticCost(_ValueEq, StageCost):
    """c(x, u) = 1/2 x'Qx + 1/2 u'Ru + q'x + r'u + offset."""

    Q: np.ndarray
    R: np.ndarray
    q: np.ndarray | None = None
    r: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float, ndmin=2)
        R = np.array(self.R, dtype=float, ndmin=2)
        d, m = Q.shape[0], R.shape[0]
        object.__setattr__(self, "Q", _matrix(Q, (d, d), "Q"))
        object.__setattr__(self, "R", _matrix(R, (m, m), "R"))
        _check_symmetric_psd(self.Q, "Q")
        _check_symmetric_psd(self.R, "R")
        object.__setattr__(self, "q", _vector(self.q, d, "q"))
        object.__setattr__(self, "r", _vector(self.r, m, "r"))
        object.__setattr__(self, "offset", float(self.offset))

    def value(self, t, x, u):
        return float(0.5 * x @ self.Q @ x + 0.5 * u @ self.R @ u
                     + self.q @ x + self.r @ u + self.offset)

    def grad_x(self, t, x, u):
        return self.Q @ x + self.q

    def grad_u(self, t, x, u):
        return self.R @ u + self.r


@dataclass(frozen=True, eq=False)
class SmoothCost(StageCost):
    """General smooth stage cost ``c(t, x, u)`` with user gradients."""

    c: Callable
    cx: Callable
    cu: Callable

    def value(self, t, x, u):
        return float(self.c(t, x, u))

    def grad_x(self, t, x, u):
        return np.asarray(self.cx(t, x, u), dtype=float).reshape(-1)

    def grad_u(self, t, x, u):
        return np.asarray(self.cu(t, x, u), dtype=float).reshape(-1)


class TerminalCost:
    def value(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class QuadraticTerminalCost(_ValueEq, TerminalCost):
    """c_F(x) = 1/2 x'Qx + q'x + offset."""

    Q: np.ndarray
    q: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float, ndmin=2)
        d = Q.shape[0]
        object.__setattr__(self, "Q", _matrix(Q, (d, d), "Q"))
        _check_symmetric_psd(self.Q, "terminal Q")
        object.__setattr__(self, "q", _vector(self.q, d, "q"))
        object.__setattr__(self, "offset", float(self.offset))

    def value(self, x):
        return float(0.5 * x @ self.Q @ x + self.q @ x + self.offset)

    def grad(self, x):
        return self.Q @ x + self.q


@dataclass(frozen=True, eq=False)
class SmoothTerminalCost(TerminalCost):
    c: Callable
    cx: Callable

    def value(self, x):
        return float(self.c(x))

    def grad(self, x):
        return np.asarray(self.cx(x), dtype=float).reshape(-1)


# --------------------------------------------------------------------------
# problem and trajectory

def _per_stage(item, n, name):
    if isinstance(item, (list, tuple)):
        if len(item) != n:
            raise ValueError(f"{name} must have exactly {n} entries, got {len(item)}")
        return tuple(item)
    return (item,) * n


@dataclass(frozen=True, eq=False)
class OcpSpec(_ValueEq):
    """Full problem data.

    Per-stage items (``dynamics``, ``stage_costs``, ``state_sets``,
    ``control_sets``) may be given as a single object, which is broadcast
    over the horizon, or as a sequence of the exact length: T, T, T+1 and T
    respectively. ``rate_bounds`` holds R_0..R_{T-2} (a scalar is broadcast).
    ``x0`` fixes the initial state; ``None`` leaves it free in M(0).
    """

    T: int
    d: int
    m: int
    dynamics: Sequence[StageDynamics]
    stage_costs: Sequence[StageCost]
    terminal_cost: TerminalCost
    state_sets: Sequence[ConvexSet]
    control_sets: Sequence[ConvexSet]
    rate_bounds: np.ndarray
    rate_norm: str = "inf"
    x0: np.ndarray | None = None

    def __post_init__(self):
        T = int(self.T)
        if T != self.T or T < 2:
            raise ValueError("horizon T must be an integer >= 2")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "dynamics", _per_stage(self.dynamics, T, "dynamics"))
        object.__setattr__(self, "stage_costs", _per_stage(self.stage_costs, T, "stage_costs"))
        object.__setattr__(self, "state_sets", _per_stage(self.state_sets, T + 1, "state_sets"))
        object.__setattr__(self, "control_sets", _per_stage(self.control_sets, T, "control_sets"))
        R = np.array(self.rate_bounds, dtype=float).reshape(-1)
        if R.shape[0] == 1 and T - 1 != 1:
            R = np.full(T - 1, R[0])
        if R.shape[0] != T - 1:
            raise ValueError(f"rate_bounds must have exactly T-1 = {T - 1} entries, got {R.shape[0]}")
        if not np.all(R > 0):
            raise ValueError("rate_bounds must be positive")
        R.flags.writeable = False
        object.__setattr__(self, "rate_bounds", R)
        if self.rate_norm not in NORMS:
            raise ValueError(f"rate_norm must be one of {NORMS}")
        for t, s in enumerate(self.state_sets):
            if s.dim != self.d:
                raise ValueError(f"state_sets[{t}] has dimension {s.dim}, expected {self.d}")
        for t, s in enumerate(self.control_sets):
            if s.dim != self.m:
                raise ValueError(f"control_sets[{t}] has dimension {s.dim}, expected {self.m}")
        for t, dyn in enumerate(self.dynamics):
            if isinstance(dyn, LinearDynamics) and dyn.dims != (self.d, self.m):
                raise ValueError(f"dynamics[{t}] has shape {dyn.dims}, expected {(self.d, self.m)}")
        for t, c in enumerate(self.stage_costs):
            if isinstance(c, QuadraticCost) and (c.Q.shape[0], c.R.shape[0]) != (self.d, self.m):
                raise ValueError(f"stage_costs[{t}] has wrong dimensions")
        if isinstance(self.terminal_cost, QuadraticTerminalCost) and self.terminal_cost.Q.shape[0] != self.d:
            raise ValueError("terminal_cost has wrong dimension")
        if self.x0 is not None:
            x0 = _vector(self.x0, self.d, "x0")
            object.__setattr__(self, "x0", x0)

    @property
    def x0_mode(self) -> str:
        return "free" if self.x0 is None else "fixed"

    def initial_set(self) -> ConvexSet:
        """Effective constraint set on x(0)."""
        return self.state_sets[0] if self.x0 is None else Singleton(self.x0)

    @property
    def is_linear_quadratic(self) -> bool:
        return (all(isinstance(f, LinearDynamics) for f in self.dynamics)
                and all(isinstance(c, QuadraticCost) for c in self.stage_costs)
                and isinstance(self.terminal_cost, QuadraticTerminalCost))


@dataclass(frozen=True, eq=False)
class Trajectory(_ValueEq):
    """States x(0..T) as a (T+1, d) array and controls u(0..T-1) as (T, m)."""

    x: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        u = np.array(self.u, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if u.ndim == 1:
            u = u[:, None]
        if x.shape[0] != u.shape[0] + 1:
            raise ValueError("need exactly one more state than controls")
        x.flags.writeable = False
        u.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)

    @property
    def T(self) -> int:
        return self.u.shape[0]

    def check_consistent(self, spec: OcpSpec):
        if self.x.shape != (spec.T + 1, spec.d) or self.u.shape != (spec.T, spec.m):
            raise ValueError(
                f"trajectory shapes x{self.x.shape}, u{self.u.shape} do not match "
                f"T={spec.T}, d={spec.d}, m={spec.m}")


def rollout(spec: OcpSpec, x0, u) -> Trajectory:
    """Propagate the dynamics from ``x0`` under the control sequence ``u``."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float)
    if u.size != spec.T * spec.m or x0.shape[0] != spec.d:
        raise ValueError("rollout: dimension mismatch")
    u = u.reshape(spec.T, spec.m)
    x = np.empty((spec.T + 1, spec.d))
    x[0] = x0
    for t in range(spec.T):
        x[t + 1] = spec.dynamics[t].value(t, x[t], u[t])
    return Trajectory(x, u)


def total_cost(spec: OcpSpec, traj: Trajectory) -> float:
    """Sum of stage costs plus terminal cost."""
    traj.check_consistent(spec)
    J = 0.0
    for t in range(spec.T):
        J += spec.stage_costs[t].value(t, traj.x[t], traj.u[t])
    return J + spec.terminal_cost.value(traj.x[spec.T])


def rate_magnitudes(u, norm: str = "inf") -> np.ndarray:
    """||u(t+1) - u(t)|| for t = 0..T-2."""
    du = np.diff(np.asarray(u, dtype=float).reshape(len(u), -1), axis=0)
    if norm == "inf":
        return np.max(np.abs(du), axis=1)
    return np.linalg.norm(du, axis=1)


@dataclass
class Violations:
    """Maximum constraint violations (all >= 0)."""

    dynamics: float
    state: float
    control: float
    rate: float
    initial: float

    @property
    def worst(self) -> float:
        return max(self.dynamics, self.state, self.control, self.rate, self.initial)


def constraint_violations(spec: OcpSpec, traj: Trajectory) -> Violations:
    traj.check_consistent(spec)
    dyn = max(float(np.max(np.abs(traj.x[t + 1] - spec.dynamics[t].value(t, traj.x[t], traj.u[t]))))
              for t in range(spec.T))
    state = max(s.distance(traj.x[t]) for t, s in enumerate(spec.state_sets))
    control = max(s.distance(traj.u[t]) for t, s in enumerate(spec.control_sets))
    rate = float(np.max(np.maximum(rate_magnitudes(traj.u, spec.rate_norm) - spec.rate_bounds, 0.0)))
    initial = 0.0 if spec.x0 is None else float(np.max(np.abs(traj.x[0] - spec.x0)))
    return Violations(dyn, state, control, rate, initial)


def is_feasible(spec: OcpSpec, traj: Trajectory, tol: float = EPS_FEAS) -> bool:
    return constraint_violations(spec, traj).worst <= tol


# --------------------------------------------------------------------------
# derivative checks

def central_difference(fun: Callable, z, step: float = 1e-5) -> np.ndarray:
    """Jacobian of ``fun`` at ``z`` by central differences (rows = outputs)."""
    z = np.asarray(z, dtype=float).reshape(-1)
    cols = []
    for j in range(z.shape[0]):
        e = np.zeros_like(z)
        e[j] = step
        cols.append((np.atleast_1d(fun(z + e)) - np.atleast_1d(fun(z - e))) / (2 * step))
    return np.stack(cols, axis=-1)


def relative_error(analytic, numeric) -> float:
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float).reshape(analytic.shape)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)
                 / max(1.0, float(np.max(np.abs(numeric), initial=0.0))))


@dataclass
class DerivativeReport:
    dynamics_x: float = 0.0
    dynamics_u: float = 0.0
    cost_x: float = 0.0
    cost_u: float = 0.0
    terminal: float = 0.0
    probes: int = 0

    @property
    def worst(self) -> float:
        return max(self.dynamics_x, self.dynamics_u, self.cost_x, self.cost_u, self.terminal)


def check_derivatives(spec: OcpSpec, n_probes: int = 100, rng=None, scale: float = 1.0,
                      step: float = 1e-5) -> DerivativeReport:
    """Compare analytic Jacobians/gradients against central differences.

    Probes are drawn uniformly at random: time index in 0..T-1 and
    ``x``, ``u`` standard normal times ``scale``.
    """
    rng = np.random.default_rng(rng)
    rep = DerivativeReport(probes=n_probes)
    for _ in range(n_probes):
        t = int(rng.integers(spec.T))
        x = scale * rng.standard_normal(spec.d)
        u = scale * rng.standard_normal(spec.m)
        f, c = spec.dynamics[t], spec.stage_costs[t]
        rep.dynamics_x = max(rep.dynamics_x, relative_error(
            f.jac_x(t, x, u), central_difference(lambda z: f.value(t, z, u), x, step)))
        rep.dynamics_u = max(rep.dynamics_u, relative_error(
            f.jac_u(t, x, u), central_difference(lambda z: f.value(t, x, z), u, step)))
        rep.cost_x = max(rep.cost_x, relative_error(
            c.grad_x(t, x, u), central_difference(lambda z: c.value(t, z, u), x, step)))
        rep.cost_u = max(rep.cost_u, relative_error(
            c.grad_u(t, x, u), central_difference(lambda z: c.value(t, x, z), u, step)))
        rep.terminal = max(rep.terminal, relative_error(
            spec.terminal_cost.grad(x), central_difference(spec.terminal_cost.value, x, step)))
    return rep
