"""Exhaustive grid search over control sequences, used as an optimality oracle."""

from __future__ import annotations

import itertools

import numpy as np

from ..model import OcpSpec, Trajectory, rollout, total_cost
from ..sets import Box, ConvexSet, NormBall, Singleton, Whole

MAX_CANDIDATES = 10**7
_CHUNK = 1 << 18


class SearchSpaceTooLarge(ValueError):
    pass


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    if lo == hi:
        return np.array([lo])
    k = int(np.floor((hi - lo) / step + 1e-9))
    pts = lo + step * np.arange(k + 1)
    if hi - pts[-1] > 1e-12 * max(1.0, abs(hi)):
        pts = np.append(pts, hi)
    return pts


def control_grid(s: ConvexSet, step: float) -> np.ndarray:
    """Componentwise grid over ``s`` in lexicographic order, shape (N, m)."""
    if isinstance(s, Singleton):
        return s.point[None, :].copy()
    if isinstance(s, Whole) or not s.is_bounded:
        raise ValueError("grid search needs bounded control sets")
    lo, hi = s.bounding_box()
    axes = [_axis(a, b, step) for a, b in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, s.dim)
    if isinstance(s, Box) or (isinstance(s, NormBall) and s.norm == "inf"):
        return mesh
    return mesh[[s.contains(p) for p in mesh]]


def _rate_ok(du: np.ndarray, R: float, norm: str) -> np.ndarray:
    mag = np.max(np.abs(du), axis=1) if norm == "inf" else np.linalg.norm(du, axis=1)
    return mag <= R + 1e-12


def _states_ok(s: ConvexSet, X: np.ndarray) -> np.ndarray:
    if isinstance(s, Whole):
        return np.ones(len(X), dtype=bool)
    if isinstance(s, (Box, Singleton)) or (isinstance(s, NormBall) and s.norm == "inf"):
        lo, hi = s.bounding_box()
        return np.all((X >= lo - 1e-9) & (X <= hi + 1e-9), axis=1)
    return np.array([s.contains(x) for x in X], dtype=bool)


def _vectorizable(spec: OcpSpec) -> bool:
    return spec.is_linear_quadratic


def _stage_costs(spec, t, X, U):
    c = spec.stage_costs[t]
    return (0.5 * np.einsum("ni,ij,nj->n", X, c.Q, X) + 0.5 * np.einsum("ni,ij,nj->n", U, c.R, U)
            + X @ c.q + U @ c.r + c.offset)


def brute_force_oracle(spec: OcpSpec, grid_step: float,
                       max_candidates: int = MAX_CANDIDATES) -> tuple[Trajectory, float]:
    """Minimize over all grid control sequences that satisfy every constraint.

    Candidates are scanned in lexicographic order of (u(0), .., u(T-1)) and
    the first minimizer wins ties. Requires a fixed initial state.
    """
    if spec.x0 is None:
        raise ValueError("brute-force oracle needs a fixed x0")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    grids = [control_grid(s, grid_step) for s in spec.control_sets]
    total = float(np.prod([len(g) for g in grids], dtype=float))
    if total > max_candidates:
        raise SearchSpaceTooLarge(f"{total:.3g} candidate sequences exceed the cap {max_candidates}")
    if _vectorizable(spec):
        return _search_linear(spec, grids)
    return _search_generic(spec, grids)


def _search_linear(spec, grids):
    T = spec.T
    # prefixes over the first T-1 controls, then the last stage in chunks
    x0 = spec.x0
    if not spec.state_sets[0].contains(x0):
        raise ValueError("no feasible candidate on the grid")
    X = x0[None, :]
    U_hist = np.zeros((1, 0, spec.m))
    J = np.zeros(1)
    for t in range(T - 1):
        g = grids[t]
        n_pre = len(X)
        Xr = np.repeat(X, len(g), axis=0)
        Ur = np.tile(g, (n_pre, 1))
        Hr = np.repeat(U_hist, len(g), axis=0)
        ok = np.ones(len(Xr), dtype=bool)
        if t > 0:
            ok &= _rate_ok(Ur - Hr[:, -1], spec.rate_bounds[t - 1], spec.rate_norm)
        f = spec.dynamics[t]
        Jr = np.repeat(J, len(g)) + _stage_costs(spec, t, Xr, Ur)
        Xn = Xr @ f.A.T + Ur @ f.B.T + f.c
        ok &= _states_ok(spec.state_sets[t + 1], Xn)
        X, J = Xn[ok], Jr[ok]
        U_hist = np.concatenate([Hr[ok], Ur[ok][:, None, :]], axis=1)
        if len(X) == 0:
            raise ValueError("no feasible candidate on the grid")

    t = T - 1
    g = grids[t]
    f = spec.dynamics[t]
    best_cost, best_idx = np.inf, None
    per = max(1, _CHUNK // len(g))
    for start in range(0, len(X), per):
        Xc, Jc, Hc = X[start:start + per], J[start:start + per], U_hist[start:start + per]
        Xr = np.repeat(Xc, len(g), axis=0)
        Ur = np.tile(g, (len(Xc), 1))
        ok = _rate_ok(Ur - np.repeat(Hc[:, -1], len(g), axis=0), spec.rate_bounds[t - 1], spec.rate_norm)
        Xn = Xr @ f.A.T + Ur @ f.B.T + f.c
        ok &= _states_ok(spec.state_sets[T], Xn)
        cost = np.repeat(Jc, len(g)) + _stage_costs(spec, t, Xr, Ur) + _terminal(spec, Xn)
        cost = np.where(ok, cost, np.inf)
        i = int(np.argmin(cost))
        if cost[i] < best_cost:
            best_cost, best_idx = float(cost[i]), (start + i // len(g), i % len(g))
    if best_idx is None:
        raise ValueError("no feasible candidate on the grid")
    pre, last = best_idx
    u = np.concatenate([U_hist[pre], g[last][None, :]], axis=0)
    traj = rollout(spec, x0, u)
    return traj, total_cost(spec, traj)


def _terminal(spec, X):
    cf = spec.terminal_cost
    return 0.5 * np.einsum("ni,ij,nj->n", X, cf.Q, X) + X @ cf.q + cf.offset


def _search_generic(spec, grids):
    best, best_u = np.inf, None
    for combo in itertools.product(*[range(len(g)) for g in grids]):
        u = np.array([grids[t][i] for t, i in enumerate(combo)])
        du = np.diff(u, axis=0)
        if not all(_rate_ok(du[t:t + 1], spec.rate_bounds[t], spec.rate_norm)[0] for t in range(spec.T - 1)):
            continue
        traj = rollout(spec, spec.x0, u)
        if not all(s.contains(traj.x[t]) for t, s in enumerate(spec.state_sets)):
            continue
        J = total_cost(spec, traj)
        if J < best:
            best, best_u = J, u
    if best_u is None:
        raise ValueError("no feasible candidate on the grid")
    return rollout(spec, spec.x0, best_u), best
