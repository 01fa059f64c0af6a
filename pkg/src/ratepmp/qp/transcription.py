"""Direct transcription of linear-quadratic rate-constrained problems to a QP.

Decision vector z = (x(0), .., x(T), u(0), .., u(T-1)). Rows, in order:

    dynamics(t, i)     x(t+1) - A_t x(t) - B_t u(t) = c_t
    state-box(t, i)    l <= x(t)_i <= u        (fixed x0 makes t = 0 rows equalities)
    control-box(t, i)  l <= u(t)_i <= u
    rate(t, i)         -R_t <= u(t+1)_i - u(t)_i <= R_t
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..lifting import LiftedProblem, build_rate_matrix
from ..model import (EPS_FEAS, LinearDynamics, OcpSpec, QuadraticCost, QuadraticTerminalCost,
                     Trajectory, constraint_violations, rollout)
from ..sets import Box, ConvexSet, NormBall, Singleton, Whole
from .solver import QpProblem, QpSettings, QpSolution, solve


class UnsupportedProblem(ValueError):
    """The problem is outside the linear-quadratic, polyhedral class."""


class SolveError(RuntimeError):
    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


def _box_bounds(s: ConvexSet, what: str):
    """Componentwise bounds of a polyhedral box-like set, or None for Whole."""
    if isinstance(s, Whole):
        return None
    if isinstance(s, Box):
        return s.lower, s.upper
    if isinstance(s, Singleton):
        return s.point, s.point
    if isinstance(s, NormBall) and (s.norm == "inf" or s.dim == 1):
        b = s.as_box()
        return b.lower, b.upper
    raise UnsupportedProblem(f"{what}: {type(s).__name__} with norm "
                             f"{getattr(s, 'norm', '')!r} is not polyhedral")


@dataclass(frozen=True, eq=False)
class Layout:
    T: int
    d: int
    m: int

    @property
    def n(self) -> int:
        return (self.T + 1) * self.d + self.T * self.m

    def x(self, t: int) -> slice:
        return slice(t * self.d, (t + 1) * self.d)

    def u(self, t: int) -> slice:
        off = (self.T + 1) * self.d
        return slice(off + t * self.m, off + (t + 1) * self.m)

    def unpack(self, z) -> Trajectory:
        z = np.asarray(z, dtype=float)
        x = z[:(self.T + 1) * self.d].reshape(self.T + 1, self.d)
        u = z[(self.T + 1) * self.d:].reshape(self.T, self.m)
        return Trajectory(x.copy(), u.copy())

    def pack(self, traj: Trajectory) -> np.ndarray:
        return np.concatenate([traj.x.reshape(-1), traj.u.reshape(-1)])


@dataclass(frozen=True, eq=False)
class RateOcpQp:
    """A transcribed problem. ``tags[i]`` = (kind, t, component) for row i."""

    spec: OcpSpec
    qp: QpProblem
    tags: tuple
    layout: Layout

    def rows(self, kind: str, t: int | None = None) -> np.ndarray:
        return np.array([i for i, tag in enumerate(self.tags)
                         if tag[0] == kind and (t is None or tag[1] == t)], dtype=int)

    def count(self, kind: str) -> int:
        return sum(1 for tag in self.tags if tag[0] == kind)


def _check_supported(spec: OcpSpec):
    if not all(isinstance(f, LinearDynamics) for f in spec.dynamics):
        raise UnsupportedProblem("transcription requires linear dynamics")
    if not all(isinstance(c, QuadraticCost) for c in spec.stage_costs):
        raise UnsupportedProblem("transcription requires quadratic stage costs")
    if not isinstance(spec.terminal_cost, QuadraticTerminalCost):
        raise UnsupportedProblem("transcription requires a quadratic terminal cost")
    if spec.rate_norm == "two" and spec.m > 1:
        raise UnsupportedProblem("Euclidean rate bounds with m > 1 are not polyhedral")


def _objective(spec: OcpSpec, lay: Layout, n_total: int):
    P = np.zeros((n_total, n_total))
    q = np.zeros(n_total)
    const = 0.0
    for t in range(spec.T):
        c = spec.stage_costs[t]
        P[lay.x(t), lay.x(t)] += c.Q
        P[lay.u(t), lay.u(t)] += c.R
        q[lay.x(t)] += c.q
        q[lay.u(t)] += c.r
        const += c.offset
    cf = spec.terminal_cost
    P[lay.x(spec.T), lay.x(spec.T)] += cf.Q
    q[lay.x(spec.T)] += cf.q
    return P, q, const + cf.offset


def transcribe(spec: OcpSpec) -> RateOcpQp:
    """Build the QP whose objective equals :func:`total_cost` at every z."""
    _check_supported(spec)
    T, d, m = spec.T, spec.d, spec.m
    lay = Layout(T, d, m)
    n = lay.n
    P, q, const = _objective(spec, lay, n)
    rows, lo, hi, tags = [], [], [], []

    def add(coeffs, l, u, tag):
        row = np.zeros(n)
        for sl, M in coeffs:
            row[sl] += M
        rows.append(row)
        lo.append(l)
        hi.append(u)
        tags.append(tag)

    for t in range(T):
        f = spec.dynamics[t]
        for i in range(d):
            ex = np.zeros(d)
            ex[i] = 1.0
            add([(lay.x(t + 1), ex), (lay.x(t), -f.A[i]), (lay.u(t), -f.B[i])],
                f.c[i], f.c[i], ("dynamics", t, i))
    for t in range(T + 1):
        s = spec.initial_set() if t == 0 else spec.state_sets[t]
        bounds = _box_bounds(s, f"state_sets[{t}]")
        if t == 0 and spec.x0 is not None:
            sb = _box_bounds(spec.state_sets[0], "state_sets[0]")
            if sb is not None and not spec.state_sets[0].contains(spec.x0):
                raise UnsupportedProblem("fixed x0 lies outside M(0)")
        if bounds is None:
            continue
        for i in range(d):
            if np.isneginf(bounds[0][i]) and np.isposinf(bounds[1][i]):
                continue
            e = np.zeros(d)
            e[i] = 1.0
            add([(lay.x(t), e)], bounds[0][i], bounds[1][i], ("state-box", t, i))
    for t in range(T):
        bounds = _box_bounds(spec.control_sets[t], f"control_sets[{t}]")
        if bounds is None:
            continue
        for i in range(m):
            if np.isneginf(bounds[0][i]) and np.isposinf(bounds[1][i]):
                continue
            e = np.zeros(m)
            e[i] = 1.0
            add([(lay.u(t), e)], bounds[0][i], bounds[1][i], ("control-box", t, i))
    for t in range(T - 1):
        R = spec.rate_bounds[t]
        if np.isinf(R):
            continue
        for i in range(m):
            e = np.zeros(m)
            e[i] = 1.0
            add([(lay.u(t + 1), e), (lay.u(t), -e)], -R, R, ("rate", t, i))

    A = np.array(rows) if rows else np.zeros((0, n))
    qp = QpProblem(P, q, A, np.array(lo), np.array(hi), const)
    return RateOcpQp(spec, qp, tuple(tags), lay)


def solve_ocp(spec: OcpSpec, settings: QpSettings | None = None,
              eps_feas: float = EPS_FEAS) -> tuple[Trajectory, QpSolution, RateOcpQp]:
    """Transcribe, solve and unpack. Raises :class:`SolveError` on failure."""
    rq = transcribe(spec)
    sol = solve(rq.qp, settings)
    if not sol.ok:
        raise SolveError(f"QP solver returned status {sol.status!r} "
                         f"({sol.info.get('reason', '')})", sol)
    traj = rq.layout.unpack(sol.z)
    replay = rollout(spec, traj.x[0], traj.u)
    drift = float(np.max(np.abs(replay.x - traj.x)))
    if drift > 1e-6:
        raise SolveError(f"solution inconsistent with a rollout (drift {drift:.2e})", sol)
    worst = constraint_violations(spec, traj).worst
    if worst > eps_feas:
        raise SolveError(f"constraint violation {worst:.2e} exceeds {eps_feas:.1e}", sol)
    return traj, sol, rq


# --------------------------------------------------------------------------
# explicit lifted transcription

@dataclass(frozen=True, eq=False)
class LiftedQp:
    """QP over (x, u, y) with y_k(0..T) stacked per k after the base layout."""

    lifted: LiftedProblem
    qp: QpProblem
    layout: Layout

    def y(self, k: int) -> slice:
        T, m = self.layout.T, self.layout.m
        off = self.layout.n + k * (T + 1) * m
        return slice(off, off + (T + 1) * m)


def transcribe_lifted(spec: OcpSpec, reading: str = "reflect") -> LiftedQp:
    """Transcription of the lifted problem with explicit y variables.

    The y blocks are tied to u through A_k y_k = rhs_k(u) and constrained
    to the sets Y_t^k; there are no direct rate rows.
    """
    _check_supported(spec)
    lifted = LiftedProblem(spec, reading)
    base = transcribe(spec)
    T, m = spec.T, spec.m
    lay = base.layout
    ny = (T - 1) * (T + 1) * m
    n = lay.n + ny
    keep = [i for i, tag in enumerate(base.tags) if tag[0] != "rate"]
    A0 = np.hstack([base.qp.A[keep], np.zeros((len(keep), ny))])
    rows, lo, hi = [A0], [base.qp.l[keep]], [base.qp.u[keep]]
    for k in range(T - 1):
        off = lay.n + k * (T + 1) * m
        Ak = build_rate_matrix(k, T, m)
        blk = np.zeros(((T + 1) * m, n))
        blk[:, off:off + (T + 1) * m] = Ak
        # rhs: -u(k) in block k+1, +u(k+1) in block k+2, moved to the left side
        blk[(k + 1) * m:(k + 2) * m, lay.u(k)] += np.eye(m)
        blk[(k + 2) * m:(k + 3) * m, lay.u(k + 1)] -= np.eye(m)
        rows.append(blk)
        lo.append(np.zeros((T + 1) * m))
        hi.append(np.zeros((T + 1) * m))
        for t in range(T + 1):
            bounds = _box_bounds(lifted.y_set(k, t), f"Y[{k}][{t}]")
            if bounds is None:
                continue
            sel = np.zeros((m, n))
            sel[:, off + t * m:off + (t + 1) * m] = np.eye(m)
            rows.append(sel)
            lo.append(bounds[0])
            hi.append(bounds[1])
    P = np.zeros((n, n))
    P[:lay.n, :lay.n] = base.qp.P
    q = np.concatenate([base.qp.q, np.zeros(ny)])
    qp = QpProblem(P, q, np.vstack(rows), np.concatenate(lo), np.concatenate(hi),
                   base.qp.constant)
    return LiftedQp(lifted, qp, lay)
