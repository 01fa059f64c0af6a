"""Maximum-principle certificates for rate-constrained problems.

A certificate bundles the multipliers (psi0, eta_f, eta_x, eta_g, eta_y)
attached to a candidate trajectory. The Hamiltonian at stage t is

    H = <eta_f(t), f(t, x, u)> + <lam_prev - lam_cur, u> - psi0 c(t, x, u)

with lam_prev = eta_g^{t-1}(t) and lam_cur = eta_g^t(t); either term is
zero when its superscript falls outside 0..T-2.

Sign conventions (fixed here and used throughout):

* QP duals satisfy P z + q + A^T y = 0, so y >= 0 on an active upper bound
  and y <= 0 on an active lower bound.
* eta_f(t) is the dual of the dynamics row x(t+1) - A x - B u = c.
* eta_x(t) = -(state-box duals at t); state multipliers lie in the negated
  normal cone of their set, which makes the adjoint recursion
  eta_f(t-1) = dH/dx(t) + eta_x(t) hold.
* A rate row u(k+1) - u(k) with dual mu gives eta_y^k(k+2) = RATE_DUAL_SIGN * mu,
  and the chain recursion then yields eta_g^k(k) = eta_g^k(k+1) = RATE_DUAL_SIGN * mu.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .lifting import LiftedProblem, lift_trajectory
from .model import ControlAffineDynamics, LinearDynamics, OcpSpec, QuadraticCost, Trajectory
from .sets import ConvexSet, NormBall, Singleton, normal_cone_residual

EPS_CERT = 1e-5
RATE_DUAL_SIGN = -1.0
PASS = "pass"
FAIL = "fail"


@dataclass(frozen=True, eq=False)
class PmpCertificate:
    """Multiplier bundle.

    Storage is offset so every array starts at its first time index:
    ``eta_f[t + 1]`` is eta_f(t) for t = -1..T-1, ``eta_x[t]`` for t = 0..T,
    ``eta_g[k, t + 1]`` is eta_g^k(t) for t = -1..T-1 and ``eta_y[k, t]``
    for t = 0..T.
    """

    psi0: float
    eta_f: np.ndarray
    eta_x: np.ndarray
    eta_g: np.ndarray
    eta_y: np.ndarray

    def __post_init__(self):
        for name in ("eta_f", "eta_x", "eta_g", "eta_y"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        object.__setattr__(self, "psi0", float(self.psi0))
        T1, d = self.eta_f.shape
        if self.eta_x.shape != (T1, d):
            raise ValueError(f"eta_x has shape {self.eta_x.shape}, expected {(T1, d)}")
        if self.eta_g.ndim != 3 or self.eta_g.shape[:2] != (T1 - 2, T1):
            raise ValueError(f"eta_g has shape {self.eta_g.shape}, expected ({T1 - 2}, {T1}, m)")
        if self.eta_y.shape != self.eta_g.shape:
            raise ValueError(f"eta_y has shape {self.eta_y.shape}, expected {self.eta_g.shape}")

    @property
    def T(self) -> int:
        return self.eta_f.shape[0] - 1

    @property
    def d(self) -> int:
        return self.eta_f.shape[1]

    @property
    def m(self) -> int:
        return self.eta_g.shape[2]

    @classmethod
    def zeros(cls, T: int, d: int, m: int, psi0: float = 1.0) -> "PmpCertificate":
        return cls(psi0, np.zeros((T + 1, d)), np.zeros((T + 1, d)),
                   np.zeros((T - 1, T + 1, m)), np.zeros((T - 1, T + 1, m)))

    def f(self, t: int) -> np.ndarray:
        """eta_f(t), t = -1..T-1."""
        return self.eta_f[t + 1]

    def g(self, k: int, t: int) -> np.ndarray:
        """eta_g^k(t), t = -1..T-1."""
        return self.eta_g[k, t + 1]

    def lam_prev(self, t: int) -> np.ndarray:
        """eta_g^{t-1}(t), zero at t = 0."""
        if 1 <= t <= self.T - 1:
            return self.eta_g[t - 1, t + 1]
        return np.zeros(self.m)

    def lam_cur(self, t: int) -> np.ndarray:
        """eta_g^t(t), zero at t = T-1."""
        if 0 <= t <= self.T - 2:
            return self.eta_g[t, t + 1]
        return np.zeros(self.m)

    def scaled(self, lam: float) -> "PmpCertificate":
        return PmpCertificate(lam * self.psi0, lam * self.eta_f, lam * self.eta_x,
                              lam * self.eta_g, lam * self.eta_y)

    def check_shapes(self, spec: OcpSpec):
        if (self.T, self.d, self.m) != (spec.T, spec.d, spec.m):
            raise ValueError(f"certificate is for T={self.T}, d={self.d}, m={self.m}; "
                             f"problem has T={spec.T}, d={spec.d}, m={spec.m}")

    def to_dict(self) -> dict:
        return {"T": self.T, "d": self.d, "m": self.m, "psi0": self.psi0,
                "eta_f": self.eta_f.tolist(), "eta_x": self.eta_x.tolist(),
                "eta_g": self.eta_g.tolist(), "eta_y": self.eta_y.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PmpCertificate":
        try:
            T, d, m = int(data["T"]), int(data["d"]), int(data["m"])
            cert = cls(data["psi0"], data["eta_f"], data["eta_x"],
                       np.array(data["eta_g"], dtype=float).reshape(T - 1, T + 1, m),
                       np.array(data["eta_y"], dtype=float).reshape(T - 1, T + 1, m))
        except KeyError as exc:
            raise ValueError(f"certificate: missing field {exc.args[0]!r}") from None
        if (cert.T, cert.d) != (T, d):
            raise ValueError("certificate: eta_f does not match the declared T, d")
        return cert


# --------------------------------------------------------------------------
# Hamiltonian

def _zeros_if_none(v, m):
    return np.zeros(m) if v is None else np.asarray(v, dtype=float).reshape(-1)


def hamiltonian(spec: OcpSpec, t: int, psi0: float, eta_f_t, lam_prev, lam_cur, x, u) -> float:
    """Stage Hamiltonian. ``None`` for a lambda term means the zero covector."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    eta = np.asarray(eta_f_t, dtype=float).reshape(-1)
    dlam = _zeros_if_none(lam_prev, spec.m) - _zeros_if_none(lam_cur, spec.m)
    return float(eta @ spec.dynamics[t].value(t, x, u) + dlam @ u
                 - psi0 * spec.stage_costs[t].value(t, x, u))


def hamiltonian_grad_x(spec: OcpSpec, t: int, psi0: float, eta_f_t, lam_prev, lam_cur,
                       x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    eta = np.asarray(eta_f_t, dtype=float).reshape(-1)
    return eta @ spec.dynamics[t].jac_x(t, x, u) - psi0 * spec.stage_costs[t].grad_x(t, x, u)


def hamiltonian_grad_u(spec: OcpSpec, t: int, psi0: float, eta_f_t, lam_prev, lam_cur,
                       x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    eta = np.asarray(eta_f_t, dtype=float).reshape(-1)
    dlam = _zeros_if_none(lam_prev, spec.m) - _zeros_if_none(lam_cur, spec.m)
    return (eta @ spec.dynamics[t].jac_u(t, x, u) + dlam
            - psi0 * spec.stage_costs[t].grad_u(t, x, u))


def _stage_args(cert: PmpCertificate, traj: Trajectory, t: int):
    return (cert.psi0, cert.f(t), cert.lam_prev(t), cert.lam_cur(t), traj.x[t], traj.u[t])


# --------------------------------------------------------------------------
# residuals

def chain_violations(cert: PmpCertificate) -> np.ndarray:
    """Violation norms of the eta_g / eta_y chain, shape (T-1, T+1).

    Column t (t = 0..T-1) checks eta_g^k(t-1) against eta_y^k(t) when t = k
    and against eta_g^k(t) + eta_y^k(t) otherwise; column T checks the
    terminal tie eta_g^k(T-1) = eta_y^k(T).
    """
    T = cert.T
    out = np.zeros((T - 1, T + 1))
    for k in range(T - 1):
        for t in range(T):
            rhs = cert.eta_y[k, t] if t == k else cert.g(k, t) + cert.eta_y[k, t]
            out[k, t] = np.linalg.norm(cert.g(k, t - 1) - rhs)
        out[k, T] = np.linalg.norm(cert.g(k, T - 1) - cert.eta_y[k, T])
    return out


def chain_residual(cert: PmpCertificate) -> float:
    v = chain_violations(cert)
    return float(v.max()) if v.size else 0.0


def _sign_residual(s: ConvexSet, p, eta, active_tol: float) -> float:
    """Distance of ``eta`` from the negated normal cone of ``s`` at ``p``."""
    eta = np.asarray(eta, dtype=float)
    if not np.any(eta):
        return 0.0
    if not s.contains(p, active_tol):
        # multiplier attached to a point outside its set: the sign is meaningless
        return float("inf")
    return normal_cone_residual(s, p, -eta, tol=active_tol, active_tol=active_tol)


@dataclass
class ResidualReport:
    """Per-condition residuals of a certificate check."""

    r_state_dyn: float
    r_state_dyn_argmax: int
    r_adjoint: float
    r_chain: float
    r_transversality: float
    r_hmax: float
    r_nontriv: float
    r_sign: float
    eps_cert: float = EPS_CERT
    per_time: dict = field(default_factory=dict)
    transversality: dict = field(default_factory=dict)
    informational: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    FIELDS = ("r_state_dyn", "r_adjoint", "r_chain", "r_transversality", "r_hmax",
              "r_nontriv", "r_sign")

    def residuals(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS}

    @property
    def passed(self) -> bool:
        return all(v <= self.eps_cert for v in self.residuals().values())

    @property
    def verdict(self) -> str:
        return PASS if self.passed else FAIL

    def failing(self) -> list[str]:
        return [k for k, v in self.residuals().items() if not v <= self.eps_cert]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "eps_cert": self.eps_cert,
            "residuals": {k: _json_float(v) for k, v in self.residuals().items()},
            "r_state_dyn_argmax": self.r_state_dyn_argmax,
            "transversality": {k: _json_float(v) for k, v in self.transversality.items()},
            "informational": {k: _json_float(v) for k, v in self.informational.items()},
            "per_time": {k: [_json_float(x) for x in v] for k, v in self.per_time.items()},
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ResidualReport":
        r = data["residuals"]
        return cls(**{k: float(r[k]) for k in cls.FIELDS},
                   r_state_dyn_argmax=int(data.get("r_state_dyn_argmax", -1)),
                   eps_cert=float(data.get("eps_cert", EPS_CERT)),
                   per_time={k: [float(x) for x in v] for k, v in data.get("per_time", {}).items()},
                   transversality={k: float(v) for k, v in data.get("transversality", {}).items()},
                   informational={k: float(v) for k, v in data.get("informational", {}).items()},
                   notes=list(data.get("notes", [])))

    def render(self) -> str:
        rows = [(k, f"{v:.3e}", "ok" if v <= self.eps_cert else "FAIL")
                for k, v in self.residuals().items()]
        rows += [(f"  {k}", f"{v:.3e}", "") for k, v in self.transversality.items()]
        rows += [(f"{k} (info)", f"{v:.3e}", "") for k, v in self.informational.items()]
        w = max(len(r[0]) for r in rows)
        lines = [f"certificate verdict: {self.verdict} (eps_cert = {self.eps_cert:.1e})"]
        lines += [f"{a:<{w}}  {b:>10}  {c}".rstrip() for a, b, c in rows]
        if self.r_state_dyn_argmax >= 0:
            lines.append(f"largest dynamics defect at t = {self.r_state_dyn_argmax}")
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def _json_float(v):
    v = float(v)
    return v if np.isfinite(v) else str(v)


def check_certificate(spec: OcpSpec, traj: Trajectory, cert: PmpCertificate, tents=None,
                      eps_cert: float = EPS_CERT, active_tol: float = 1e-6,
                      reading: str = "reflect") -> ResidualReport:
    """Evaluate every maximum-principle condition for ``(traj, cert)``.

    ``tents`` optionally replaces U(t) by user-supplied convex sets in the
    maximization check. ``active_tol`` decides which bounds count as active
    for the cone computations.
    """
    traj.check_consistent(spec)
    cert.check_shapes(spec)
    T = spec.T
    notes = []
    if tents is not None and len(tents) != T:
        raise ValueError(f"tents must have {T} entries")

    dyn = np.array([np.linalg.norm(traj.x[t + 1] - spec.dynamics[t].value(t, traj.x[t], traj.u[t]))
                    for t in range(T)])
    adj = np.zeros(T)
    hmax = np.zeros(T)
    for t in range(T):
        hx = hamiltonian_grad_x(spec, t, *_stage_args(cert, traj, t))
        adj[t] = np.linalg.norm(cert.f(t - 1) - hx - cert.eta_x[t])
        hu = hamiltonian_grad_u(spec, t, *_stage_args(cert, traj, t))
        s = spec.control_sets[t] if tents is None else tents[t]
        if s.contains(traj.u[t], active_tol):
            hmax[t] = normal_cone_residual(s, traj.u[t], hu, tol=active_tol, active_tol=active_tol)
        else:
            hmax[t] = float("inf")
            notes.append(f"u({t}) lies outside its control set")

    # sign conditions on state and lifted-state multipliers
    sign_x = np.zeros(T + 1)
    for t in range(T + 1):
        s = spec.initial_set() if t == 0 else spec.state_sets[t]
        sign_x[t] = _sign_residual(s, traj.x[t], cert.eta_x[t], active_tol)
    lifted = LiftedProblem(spec, reading)
    ext = lift_trajectory(spec, traj)
    sign_y = 0.0
    for k in range(T - 1):
        for t in range(T + 1):
            sign_y = max(sign_y, _sign_residual(lifted.y_set(k, t), ext.y[k, t],
                                                cert.eta_y[k, t], active_tol))
    if spec.rate_norm == "two" and spec.m > 1:
        notes.append("sign condition on Euclidean rate balls checked through the ball's normal cone")

    hx0 = hamiltonian_grad_x(spec, 0, *_stage_args(cert, traj, 0))
    cf_grad = spec.terminal_cost.grad(traj.x[T])
    trans = {
        "eta_f(-1)": float(np.linalg.norm(cert.f(-1))),
        "initial": float(np.linalg.norm(hx0 + cert.eta_x[0])),
        "terminal": float(np.linalg.norm(cert.f(T - 1) + cert.psi0 * cf_grad - cert.eta_x[T])),
        "sign_state": float(sign_x.max()),
        "sign_rate": float(sign_y),
    }

    # time-T Hamiltonian with eta_f(T) := eta_x(T), u(T) := u(T-1) and the
    # stage T-1 maps; convention-dependent, kept out of the verdict
    h_T = hamiltonian(spec, T - 1, cert.psi0, cert.eta_x[T], None, None, traj.x[T], traj.u[T - 1])
    info = {
        "H(T) (convention-dependent)": abs(h_T),
        "eta_x(T) - eta_x(T-1) (as literally stated)": float(np.linalg.norm(cert.eta_x[T] - cert.eta_x[T - 1])),
    }

    nontriv = cert.psi0 > 0 or any(np.any(cert.f(t)) for t in range(T))
    degenerate = [t for t, s in enumerate(spec.control_sets) if s.is_degenerate]
    if degenerate:
        notes.append("control sets with empty interior at t = "
                     + ", ".join(map(str, degenerate)) + " (relative-interior assumption flagged)")

    return ResidualReport(
        r_state_dyn=float(dyn.max()),
        r_state_dyn_argmax=int(np.argmax(dyn)),
        r_adjoint=float(adj.max()),
        r_chain=chain_residual(cert),
        r_transversality=max(trans.values()),
        r_hmax=float(hmax.max()),
        r_nontriv=0.0 if nontriv else 1.0,
        r_sign=max(0.0, -cert.psi0),
        eps_cert=eps_cert,
        per_time={"state_dyn": dyn.tolist(), "adjoint": adj.tolist(), "hmax": hmax.tolist(),
                  "sign_state": sign_x.tolist()},
        transversality=trans,
        informational=info,
        notes=notes,
    )


# --------------------------------------------------------------------------
# multiplier recovery from QP duals

def recover_multipliers(spec: OcpSpec, rateqp, sol) -> PmpCertificate:
    """Build a normal (psi0 = 1) certificate from the duals of a solved QP.

    ``rateqp`` is the transcription returned by ``transcribe`` and ``sol`` an
    optimal solution of it.
    """
    if not sol.ok:
        raise ValueError(f"multiplier recovery needs an optimal solution, got {sol.status!r}")
    T, d, m = spec.T, spec.d, spec.m
    cert = PmpCertificate.zeros(T, d, m, psi0=1.0)
    eta_f, eta_x, eta_g, eta_y = cert.eta_f, cert.eta_x, cert.eta_g, cert.eta_y
    for i, (kind, t, j) in enumerate(rateqp.tags):
        y = sol.dual[i]
        if kind == "dynamics":
            eta_f[t + 1, j] = y
        elif kind == "state-box":
            eta_x[t, j] = -y
        elif kind == "rate":
            eta_y[t, t + 2, j] = RATE_DUAL_SIGN * y
    # eta_g from the chain, run backward so it holds exactly
    for k in range(T - 1):
        eta_g[k, T] = eta_y[k, T]
        for t in range(T - 1, -1, -1):
            eta_g[k, t] = eta_y[k, t] if t == k else eta_g[k, t + 1] + eta_y[k, t]
    return cert


# --------------------------------------------------------------------------
# exact maximization over sampled controls

class NotApplicable(ValueError):
    """The exact maximization check needs control-affine data, convex costs in u and compact U."""


def _qualifies(spec: OcpSpec, assume_convex_cost: bool):
    for t in range(spec.T):
        if not isinstance(spec.dynamics[t], (LinearDynamics, ControlAffineDynamics)):
            raise NotApplicable(f"dynamics[{t}] is not control-affine")
        c = spec.stage_costs[t]
        if not (isinstance(c, QuadraticCost) or assume_convex_cost):
            raise NotApplicable(f"stage_costs[{t}]: convexity in u cannot be verified")
        if isinstance(c, QuadraticCost) and np.min(np.linalg.eigvalsh(c.R)) < -1e-9:
            raise NotApplicable(f"stage_costs[{t}] is not convex in u")
        if not spec.control_sets[t].is_bounded:
            raise NotApplicable(f"control_sets[{t}] is not compact")


def control_samples(s: ConvexSet, n_samples: int, seed: int = 0) -> np.ndarray:
    """Deterministic low-discrepancy points in ``s`` plus its box vertices."""
    if isinstance(s, Singleton):
        return s.point[None, :].copy()
    lo, hi = s.bounding_box()
    pts = qmc.Halton(d=s.dim, scramble=True, seed=seed).random(n_samples)
    pts = lo + pts * (hi - lo)
    if s.dim <= 12:
        verts = np.array(list(itertools.product(*zip(lo, hi))))
        pts = np.vstack([verts, pts])
    if isinstance(s, NormBall) and s.norm == "two":
        pts = np.array([s.project(p) for p in pts])
    return pts


def exact_max_check(spec: OcpSpec, traj: Trajectory, cert: PmpCertificate, n_samples: int = 1000,
                    seed: int = 0, assume_convex_cost: bool = False) -> float:
    """Largest sampled gap max_v H(t, v) - H(t, u(t)) over t, clipped at zero."""
    _qualifies(spec, assume_convex_cost)
    traj.check_consistent(spec)
    cert.check_shapes(spec)
    gap = 0.0
    for t in range(spec.T):
        psi0, eta, lp, lc, x, u = _stage_args(cert, traj, t)
        h_star = hamiltonian(spec, t, psi0, eta, lp, lc, x, u)
        for v in control_samples(spec.control_sets[t], n_samples, seed + t):
            gap = max(gap, hamiltonian(spec, t, psi0, eta, lp, lc, x, v) - h_star)
    return gap


__all__ = [
    "EPS_CERT", "RATE_DUAL_SIGN", "PmpCertificate", "ResidualReport", "NotApplicable",
    "hamiltonian", "hamiltonian_grad_x", "hamiltonian_grad_u", "chain_violations",
    "chain_residual", "check_certificate", "recover_multipliers", "control_samples",
    "exact_max_check",
]
