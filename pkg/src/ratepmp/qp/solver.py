"""Operator-splitting (ADMM) solver for convex quadratic programs

    minimize    1/2 z'Pz + q'z
    subject to  l <= Az <= u

with dual recovery and an active-set polish. Duals follow the convention

    Pz + q + A'y = 0,   y_i >= 0 at an active upper bound,
                        y_i <= 0 at an active lower bound,

i.e. the Lagrangian is 1/2 z'Pz + q'z + y'(Az - b) where b picks the
active bound row by row.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
MAX_ITER = "max-iter"
INFEASIBLE = "infeasible-certificate"

EPS_QP = 1e-7


@dataclass(frozen=True, eq=False)
class QpProblem:
    """Problem data. ``constant`` is added to the objective value only."""

    P: np.ndarray
    q: np.ndarray
    A: np.ndarray
    l: np.ndarray
    u: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        P = np.array(self.P, dtype=float, ndmin=2)
        n = P.shape[0]
        q = np.array(self.q, dtype=float).reshape(-1)
        A = np.array(self.A, dtype=float).reshape(-1, n)
        l = np.array(self.l, dtype=float).reshape(-1)
        u = np.array(self.u, dtype=float).reshape(-1)
        if P.shape != (n, n) or q.shape != (n,):
            raise ValueError("P must be n x n and q of length n")
        if l.shape != (A.shape[0],) or u.shape != (A.shape[0],):
            raise ValueError("l and u must have one entry per constraint row")
        if np.any(l > u):
            raise ValueError("QP requires l <= u")
        if np.max(np.abs(P - P.T), initial=0.0) > 1e-12 * max(1.0, np.abs(P).max(initial=0.0)):
            raise ValueError("P must be symmetric")
        if n and np.linalg.eigvalsh(P).min() < -1e-9:
            raise ValueError("P must be positive semidefinite")
        for name, arr in (("P", P), ("q", q), ("A", A), ("l", l), ("u", u)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "constant", float(self.constant))

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def p(self) -> int:
        return self.A.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.P @ z + self.q @ z + self.constant)

    def scaled(self, lam: float) -> "QpProblem":
        """Same constraints, objective (P, q) multiplied by ``lam``."""
        return replace(self, P=lam * self.P, q=lam * self.q, constant=lam * self.constant)


@dataclass(frozen=True)
class QpSettings:
    eps: float = EPS_QP
    max_iter: int = 200_000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho: bool = True
    adapt_interval: int = 25
    adapt_tolerance: float = 5.0
    ratio_bounds: tuple[float, float] = (1e-4, 1e4)
    rho_bounds: tuple[float, float] = (1e-6, 1e6)
    eq_rho_scale: float = 1e3
    polish: bool = True
    polish_interval: int = 50
    active_tol: float = 1e-6
    stall_iters: int = 5000
    eps_infeas: float = 1e-5


@dataclass
class QpSolution:
    z: np.ndarray
    dual: np.ndarray
    status: str
    primal_residual: float
    dual_residual: float
    iterations: int = 0
    polished: bool = False
    objective: float = float("nan")
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def primal_residual(qp: QpProblem, z) -> float:
    Az = qp.A @ z
    viol = np.maximum(Az - qp.u, 0.0) + np.maximum(qp.l - Az, 0.0)
    return float(np.max(viol, initial=0.0))


def dual_residual(qp: QpProblem, z, y) -> float:
    return float(np.max(np.abs(qp.P @ z + qp.q + qp.A.T @ y), initial=0.0))


def complementarity(qp: QpProblem, z, y) -> float:
    """max_i |y_i * slack_i|, slack measured to the bound y_i pushes against."""
    Az = qp.A @ z
    up = np.where(np.isfinite(qp.u), qp.u - Az, 0.0)
    lo = np.where(np.isfinite(qp.l), Az - qp.l, 0.0)
    slack = np.where(y > 0, up, np.where(y < 0, lo, 0.0))
    return float(np.max(np.abs(y * slack), initial=0.0))


def dual_sign_violation(qp: QpProblem, z, y, active_tol: float = 1e-6) -> float:
    """How far duals are from the sign pattern implied by the active bounds."""
    Az = qp.A @ z
    eq = qp.l == qp.u
    at_u = np.abs(Az - qp.u) <= active_tol * (1 + np.abs(np.where(np.isfinite(qp.u), qp.u, 0)))
    at_l = np.abs(Az - qp.l) <= active_tol * (1 + np.abs(np.where(np.isfinite(qp.l), qp.l, 0)))
    viol = np.zeros_like(y)
    free = ~eq
    # a dual may only be positive where the upper bound is active, etc.
    viol[free & ~at_u] = np.maximum(y[free & ~at_u], 0.0)
    viol[free & ~at_l] = np.maximum(viol[free & ~at_l], np.maximum(-y[free & ~at_l], 0.0))
    return float(np.max(viol, initial=0.0))


def kkt_residuals(qp: QpProblem, z, y) -> dict:
    return {"primal": primal_residual(qp, z), "stationarity": dual_residual(qp, z, y),
            "complementarity": complementarity(qp, z, y),
            "dual_sign": dual_sign_violation(qp, z, y)}


def _rho_vector(qp: QpProblem, rho: float, settings: QpSettings) -> np.ndarray:
    r = np.full(qp.p, rho)
    r[qp.l == qp.u] = rho * settings.eq_rho_scale
    r[np.isneginf(qp.l) & np.isposinf(qp.u)] = settings.rho_bounds[0]
    return r


def _factor(qp, rho_vec, sigma):
    K = qp.P + sigma * np.eye(qp.n) + qp.A.T @ (rho_vec[:, None] * qp.A)
    return sla.cho_factor(K)


def _polish(qp: QpProblem, z_admm, z_slack, y_admm, settings: QpSettings):
    """Solve the equality-constrained KKT system on a detected active set.

    The active set starts from bounds within ``active_tol`` of the ADMM
    slack iterate and is corrected for violated rows and wrong-sign duals.
    Returns (z, y) or None.
    """
    tol_u = settings.active_tol * (1 + np.abs(np.where(np.isfinite(qp.u), qp.u, 0.0)))
    tol_l = settings.active_tol * (1 + np.abs(np.where(np.isfinite(qp.l), qp.l, 0.0)))
    eq = qp.l == qp.u
    upper = eq | (qp.u - z_slack <= tol_u)
    lower = ~upper & (z_slack - qp.l <= tol_l)
    n = qp.n
    for _ in range(50):
        rows = np.flatnonzero(upper | lower)
        b = np.where(upper, qp.u, qp.l)[rows]
        Aa = qp.A[rows]
        K = np.block([[qp.P, Aa.T], [Aa, np.zeros((rows.size, rows.size))]])
        rhs = np.concatenate([-qp.q, b])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        z = sol[:n]
        y = np.zeros(qp.p)
        y[rows] = sol[n:]
        Az = qp.A @ z
        changed = False
        over = ~(upper | lower) & (Az > qp.u + tol_u)
        under = ~(upper | lower) & (Az < qp.l - tol_l)
        if over.any() or under.any():
            upper |= over
            lower |= under
            changed = True
        wrong_u = upper & ~eq & (y < -settings.eps)
        wrong_l = lower & (y > settings.eps)
        if wrong_u.any() or wrong_l.any():
            # drop the single worst offender to avoid cycling
            score = np.where(wrong_u, -y, 0.0) + np.where(wrong_l, y, 0.0)
            i = int(np.argmax(score))
            upper[i] = lower[i] = False
            changed = True
        if not changed:
            return z, y
    return None


def _infeasibility_certificate(qp: QpProblem, dy, dx, eps) -> str | None:
    ndy = np.max(np.abs(dy), initial=0.0)
    if ndy > 0:
        u_fin = np.where(np.isfinite(qp.u), qp.u, 0.0)
        l_fin = np.where(np.isfinite(qp.l), qp.l, 0.0)
        support = u_fin @ np.maximum(dy, 0) + l_fin @ np.minimum(dy, 0)
        unbounded_dir = (np.isposinf(qp.u) & (dy > eps * ndy)) | (np.isneginf(qp.l) & (dy < -eps * ndy))
        if (np.max(np.abs(qp.A.T @ dy), initial=0.0) <= eps * ndy and support <= -eps * ndy
                and not unbounded_dir.any()):
            return "primal infeasible"
    ndx = np.max(np.abs(dx), initial=0.0)
    if ndx > 0:
        Adx = qp.A @ dx
        in_rec = np.all(np.where(np.isfinite(qp.u), Adx <= eps * ndx, True)
                        & np.where(np.isfinite(qp.l), Adx >= -eps * ndx, True))
        if (np.max(np.abs(qp.P @ dx), initial=0.0) <= eps * ndx and qp.q @ dx <= -eps * ndx
                and in_rec):
            return "dual infeasible (unbounded)"
    return None


def _finish(qp, z, y, status, it, polished, info):
    return QpSolution(z=z, dual=y, status=status, primal_residual=primal_residual(qp, z),
                      dual_residual=dual_residual(qp, z, y), iterations=it, polished=polished,
                      objective=qp.objective(z), info=info)


def _polished_if_better(qp, x, z, y, settings, force=False):
    """Polish and return (z, y) when it meets the tolerance, else None."""
    res = _polish(qp, x, z, y, settings)
    if res is None:
        return None
    zp, yp = res
    pr, dr = primal_residual(qp, zp), dual_residual(qp, zp, yp)
    sign = dual_sign_violation(qp, zp, yp, settings.active_tol)
    if max(pr, dr, sign) <= settings.eps:
        return zp, yp
    if force and max(pr, dr) < max(primal_residual(qp, x), dual_residual(qp, x, y)):
        return zp, yp
    return None


def solve(qp: QpProblem, settings: QpSettings | None = None) -> QpSolution:
    """Solve ``qp`` with over-relaxed ADMM, adaptive penalty and polishing."""
    s = settings or QpSettings()
    n, p = qp.n, qp.p
    info: dict = {}
    if p == 0:
        # unconstrained: the stationarity system alone
        z = np.linalg.lstsq(qp.P, -qp.q, rcond=None)[0]
        y = np.zeros(0)
        status = OPTIMAL if dual_residual(qp, z, y) <= s.eps else INFEASIBLE
        if status != OPTIMAL:
            info["reason"] = "dual infeasible (unbounded)"
        return _finish(qp, z, y, status, 0, False, info)

    rho = s.rho
    rho_vec = _rho_vector(qp, rho, s)
    factor = _factor(qp, rho_vec, s.sigma)
    x = np.zeros(n)
    z = np.clip(np.zeros(p), qp.l, qp.u)
    y = np.zeros(p)
    best, stall = np.inf, 0
    x_prev, y_prev = x, y
    it = 0
    for it in range(1, s.max_iter + 1):
        x_prev, y_prev, z_prev = x, y, z
        rhs = s.sigma * x - qp.q + qp.A.T @ (rho_vec * z - y)
        x_t = sla.cho_solve(factor, rhs)
        z_t = qp.A @ x_t
        x = s.alpha * x_t + (1 - s.alpha) * x_prev
        zh = s.alpha * z_t + (1 - s.alpha) * z_prev
        z = np.clip(zh + y / rho_vec, qp.l, qp.u)
        y = y + rho_vec * (zh - z)

        Ax = qp.A @ x
        Px = qp.P @ x
        Aty = qp.A.T @ y
        r_p = float(np.max(np.abs(Ax - z)))
        r_d = float(np.max(np.abs(Px + qp.q + Aty)))
        if r_p <= s.eps and r_d <= s.eps:
            if s.polish:
                pol = _polished_if_better(qp, x, z, y, s, force=True)
                if pol is not None:
                    return _finish(qp, *pol, OPTIMAL, it, True, info)
            return _finish(qp, x, y, OPTIMAL, it, False, info)
        if s.polish and it % s.polish_interval == 0 and max(r_p, r_d) < 1e-2:
            pol = _polished_if_better(qp, x, z, y, s)
            if pol is not None:
                return _finish(qp, *pol, OPTIMAL, it, True, info)

        r = max(r_p, r_d)
        if r < best * (1 - 1e-6):
            best, stall = r, 0
        else:
            stall += 1
        if stall >= s.stall_iters:
            reason = _infeasibility_certificate(qp, y - y_prev, x - x_prev, s.eps_infeas)
            if reason is not None:
                info["reason"] = reason
                return _finish(qp, x, y, INFEASIBLE, it, False, info)
            stall = 0

        if s.adaptive_rho and it % s.adapt_interval == 0:
            p_scale = max(np.max(np.abs(Ax)), np.max(np.abs(z)), 1e-12)
            d_scale = max(np.max(np.abs(Px)), np.max(np.abs(Aty)), np.max(np.abs(qp.q)), 1e-12)
            ratio = np.sqrt((r_p / p_scale) / max(r_d / d_scale, 1e-30))
            ratio = float(np.clip(ratio, *s.ratio_bounds))
            new_rho = float(np.clip(rho * ratio, *s.rho_bounds))
            if new_rho > rho * s.adapt_tolerance or new_rho < rho / s.adapt_tolerance:
                rho = new_rho
                rho_vec = _rho_vector(qp, rho, s)
                factor = _factor(qp, rho_vec, s.sigma)
                logger.debug("iter %d: rho -> %.3e", it, rho)

    if s.polish:
        pol = _polished_if_better(qp, x, z, y, s)
        if pol is not None:
            return _finish(qp, *pol, OPTIMAL, it, True, info)
    info["reason"] = "iteration cap reached"
    return _finish(qp, x, y, MAX_ITER, it, False, info)


def _g(v) -> str:
    return format(float(v), ".17g")


def export_triplets(qp: QpProblem, path) -> None:
    """Write the problem as plain text: sections of (row, col, value) triplets and vectors.

    Layout: a header ``# n <n> p <p> constant <c>``, then the sections P, q,
    A, l and u, each introduced by its name on a line of its own. Matrix
    sections hold zero-based ``row col value`` lines for nonzero entries;
    vector sections hold one value per line (``inf``/``-inf`` allowed).
    """
    lines = [f"# n {qp.n} p {qp.p} constant {_g(qp.constant)}", "P"]
    lines += [f"{i} {j} {_g(qp.P[i, j])}" for i, j in zip(*np.nonzero(qp.P))]
    lines.append("q")
    lines += [_g(v) for v in qp.q]
    lines.append("A")
    lines += [f"{i} {j} {_g(qp.A[i, j])}" for i, j in zip(*np.nonzero(qp.A))]
    lines.append("l")
    lines += [_g(v) for v in qp.l]
    lines.append("u")
    lines += [_g(v) for v in qp.u]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def import_triplets(path) -> QpProblem:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    head = lines[0].split()
    n, p, const = int(head[2]), int(head[4]), float(head[6])
    P, A = np.zeros((n, n)), np.zeros((p, n))
    vecs: dict[str, list] = {"q": [], "l": [], "u": []}
    section = None
    for ln in lines[1:]:
        if ln in ("P", "q", "A", "l", "u"):
            section = ln
            continue
        if section in ("P", "A"):
            i, j, v = ln.split()
            (P if section == "P" else A)[int(i), int(j)] = float(v)
        else:
            vecs[section].append(float(ln))
    return QpProblem(P, vecs["q"], A, vecs["l"], vecs["u"], const)
