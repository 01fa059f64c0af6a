"""The rotating-integrator benchmark: rate-aware design versus naive clipping."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .existence import check_existence
from .io import dump_certificate, dump_trajectory
from .model import (EPS_FEAS, LinearDynamics, OcpSpec, QuadraticCost, QuadraticTerminalCost,
                    Trajectory, constraint_violations, rate_magnitudes, rollout, total_cost)
from .pmp import EPS_CERT, PmpCertificate, ResidualReport, check_certificate, exact_max_check, recover_multipliers
from .qp import QpSettings, solve_ocp
from .sets import Box, NormBall, Whole

log = logging.getLogger(__name__)

DEFAULT_X0 = (2.0, 2.0, 1.0)
RATE_ACTIVE_TOL = 1e-3
CLIP_ORDERS = ("magnitude-rate", "rate-magnitude")


def benchmark_problem(x0=DEFAULT_X0, T: int = 30, angle: float = np.pi / 4,
                      u_bound: float = 1.0, rate: float = 0.75) -> OcpSpec:
    """Rotation by ``angle`` in (x1, x2) plus an integrator x3, scalar input on x2 and x3.

    Stage cost 0.5 (x'x + 0.5 u^2), terminal cost ||x||^2, box -8 <= x1, x2 <= 8,
    -0.2 <= x3 <= 8, |u| <= u_bound and |u(t+1) - u(t)| <= rate.
    """
    c, s = np.cos(angle), np.sin(angle)
    A = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    B = np.array([[0.0], [1.0], [1.0]])
    return OcpSpec(
        T=T, d=3, m=1,
        dynamics=LinearDynamics(A, B),
        stage_costs=QuadraticCost(np.eye(3), np.array([[0.5]])),
        terminal_cost=QuadraticTerminalCost(2.0 * np.eye(3)),
        state_sets=Box([-8.0, -8.0, -0.2], [8.0, 8.0, 8.0]),
        control_sets=Box([-u_bound], [u_bound]),
        rate_bounds=rate,
        x0=None if x0 is None else np.asarray(x0, dtype=float),
    )


def naive_clip(u_raw, u_set, R, u_prev_init=None, order: str = "magnitude-rate",
               norm: str = "inf") -> np.ndarray:
    """Sequential actuator model: saturate the magnitude, then the slew.

    ``u_set`` is one set or one per step, ``R`` a scalar or one bound per
    step (the bound at step t limits u(t) - u(t-1), with u(-1) = u_prev_init).
    ``order="rate-magnitude"`` applies the slew limit first.
    """
    u_raw = np.asarray(u_raw, dtype=float)
    if u_raw.ndim == 1:
        u_raw = u_raw[:, None]
    T, m = u_raw.shape
    if order not in CLIP_ORDERS:
        raise ValueError(f"order must be one of {CLIP_ORDERS}")
    sets = list(u_set) if isinstance(u_set, (list, tuple)) else [u_set] * T
    Rs = np.broadcast_to(np.asarray(R, dtype=float), (T,))
    if len(sets) != T:
        raise ValueError("need one control set per step")
    prev = np.zeros(m) if u_prev_init is None else np.asarray(u_prev_init, dtype=float).reshape(m)
    out = np.empty_like(u_raw)
    for t in range(T):
        slew = NormBall(prev, Rs[t], norm)
        first, second = (sets[t], slew) if order == "magnitude-rate" else (slew, sets[t])
        out[t] = second.project(first.project(u_raw[t]))
        prev = out[t]
    return out


def _unconstrained_controls(spec: OcpSpec) -> OcpSpec:
    return replace(spec, control_sets=Whole(spec.m), rate_bounds=np.full(spec.T - 1, np.inf))


@dataclass
class ExperimentRecord:
    """Outcome of one run. Rates are always recomputed from the stored controls."""

    label: str
    spec: OcpSpec
    designed: Trajectory
    costs: dict
    checks: dict
    naive: Trajectory | None = None
    unconstrained: Trajectory | None = None
    report: ResidualReport | None = None
    certificate: PmpCertificate | None = None
    exact_max_gap: float | None = None
    solver: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def rates(self, which: str = "designed") -> np.ndarray:
        """Componentwise |u(t+1) - u(t)|, shape (T-1, m)."""
        return np.abs(np.diff(getattr(self, which).u, axis=0))

    def active_flags(self, which: str = "designed", tol: float = RATE_ACTIVE_TOL) -> dict:
        traj = getattr(self, which)
        R = self.spec.rate_bounds
        mags = rate_magnitudes(traj.u, self.spec.rate_norm)
        ctrl = []
        for t, s in enumerate(self.spec.control_sets):
            lo, hi = s.bounding_box()
            ctrl.append(bool(np.any(traj.u[t] >= hi - tol) or np.any(traj.u[t] <= lo + tol)))
        return {"rate": [bool(v) for v in mags >= R - tol], "control": ctrl}

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _rate_active(spec, traj, tol=RATE_ACTIVE_TOL) -> list[int]:
    mags = rate_magnitudes(traj.u, spec.rate_norm)
    return [int(t) for t in np.flatnonzero(mags >= spec.rate_bounds - tol)]


def solve_and_certify(spec: OcpSpec, label: str = "solve", eps_qp: float = 1e-7,
                      eps_cert: float = EPS_CERT, eps_feas: float = EPS_FEAS,
                      n_samples: int = 1000, seed: int = 0) -> ExperimentRecord:
    """Solve a linear-quadratic problem, recover multipliers and certify them."""
    t0 = time.perf_counter()
    traj, sol, rq = solve_ocp(spec, QpSettings(eps=eps_qp), eps_feas)
    elapsed = time.perf_counter() - t0
    log.info("%s: status %s after %d iterations (%.3f s)", label, sol.status, sol.iterations, elapsed)
    cert = recover_multipliers(spec, rq, sol)
    report = check_certificate(spec, traj, cert, eps_cert=eps_cert)
    log.info("%s: certificate %s", label, report.verdict)
    gap = None
    try:
        gap = exact_max_check(spec, traj, cert, n_samples=n_samples, seed=seed)
    except ValueError as exc:
        log.debug("exact maximization check skipped: %s", exc)
    viol = constraint_violations(spec, traj)
    active = _rate_active(spec, traj)
    checks = {"constraints": viol.worst <= eps_feas, "certificate": report.passed}
    notes = []
    if not active:
        notes.append("rate bound never active")
    rec = ExperimentRecord(
        label=label, spec=spec, designed=traj,
        costs={"designed": total_cost(spec, traj), "qp_objective": sol.objective},
        checks=checks, report=report, certificate=cert, exact_max_gap=gap,
        solver={"status": sol.status, "iterations": sol.iterations, "polished": sol.polished,
                "primal_residual": sol.primal_residual, "dual_residual": sol.dual_residual,
                "max_violation": viol.worst, "rate_active_at": active},
        notes=notes)
    rec.solver["_seconds"] = elapsed
    return rec


def run_paper_example(x0=DEFAULT_X0, out=None, **kw) -> ExperimentRecord:
    """Solve and certify the benchmark; write outputs to ``out`` if given."""
    spec = benchmark_problem(DEFAULT_X0 if x0 is None else x0)
    rec = solve_and_certify(spec, label="paper-example", **kw)
    if x0 is None or np.allclose(x0, DEFAULT_X0):
        rec.notes.append(f"x0 = {DEFAULT_X0} is a chosen default (override with --x0)")
    if out is not None:
        write_outputs(rec, out)
    return rec


def run_naive_experiment(problem=None, out=None, order: str = "magnitude-rate", u_prev_init=None,
                         eps_qp: float = 1e-7, eps_feas: float = EPS_FEAS) -> ExperimentRecord:
    """Compare the rate-aware optimum with clipping of a design that ignores U and R.

    ``problem`` is an OcpSpec, an initial state for the benchmark, or None
    for the benchmark at its default initial state.
    """
    if problem is None:
        spec = benchmark_problem()
    elif isinstance(problem, OcpSpec):
        spec = problem
    else:
        spec = benchmark_problem(problem)
    if spec.x0 is None:
        raise ValueError("the clipping experiment needs a fixed x0")
    settings = QpSettings(eps=eps_qp)
    designed, sol, _ = solve_ocp(spec, settings, eps_feas)
    free, _, _ = solve_ocp(_unconstrained_controls(spec), settings, eps_feas)
    u_clip = naive_clip(free.u, list(spec.control_sets), _per_step_rate(spec), u_prev_init,
                        order=order, norm=spec.rate_norm)
    naive = rollout(spec, spec.x0, u_clip)
    J_design, J_naive = total_cost(spec, designed), total_cost(spec, naive)
    viol = constraint_violations(spec, naive)
    checks = {"cost_ordering": J_naive >= J_design - 1e-8,
              "clipped_bounds": _clip_respects_bounds(spec, u_clip, u_prev_init)}
    notes = [f"clipping order: {order}"]
    if viol.state > eps_feas:
        notes.append(f"clipped rollout leaves the state constraints by {viol.state:.3e}")
    log.info("naive clipping: J_designed = %.6g, J_naive = %.6g", J_design, J_naive)
    rec = ExperimentRecord(
        label="naive-clip", spec=spec, designed=designed, naive=naive, unconstrained=free,
        costs={"designed": J_design, "naive": J_naive, "unconstrained": total_cost(spec, free)},
        checks=checks,
        solver={"status": sol.status, "iterations": sol.iterations,
                "naive_state_violation": viol.state},
        notes=notes)
    if out is not None:
        write_outputs(rec, out)
    return rec


def _per_step_rate(spec):
    # the slew bound on u(0) relative to u_prev_init reuses R_0
    return np.concatenate([spec.rate_bounds[:1], spec.rate_bounds])


def _clip_respects_bounds(spec, u, u_prev_init, tol: float = 1e-12) -> bool:
    """Both limits hold up to the rounding of one subtraction."""
    if not all(s.contains(u[t], tol) for t, s in enumerate(spec.control_sets)):
        return False
    prev = np.zeros((1, spec.m)) if u_prev_init is None else np.reshape(u_prev_init, (1, spec.m))
    mags = rate_magnitudes(np.vstack([prev, u]), spec.rate_norm)
    return bool(np.all(mags <= _per_step_rate(spec) + tol))


# --------------------------------------------------------------------------
# output files

def _fmt(v) -> str:
    return format(float(v), ".17g")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)


def write_trajectory_csvs(traj: Trajectory, out: Path, prefix: str = "", norm: str = "inf"):
    d, m = traj.x.shape[1], traj.u.shape[1]
    _write_csv(out / f"{prefix}states.csv", ["t"] + [f"x_{i + 1}" for i in range(d)],
               ([t] + [_fmt(v) for v in row] for t, row in enumerate(traj.x)))
    _write_csv(out / f"{prefix}controls.csv", ["t"] + [f"u_{i + 1}" for i in range(m)],
               ([t] + [_fmt(v) for v in row] for t, row in enumerate(traj.u)))
    du = np.abs(np.diff(traj.u, axis=0))
    _write_csv(out / f"{prefix}rates.csv", ["t"] + [f"abs_rate_{i + 1}" for i in range(m)],
               ([t] + [_fmt(v) for v in row] for t, row in enumerate(du)))


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items() if not str(k).startswith("_")}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def record_to_dict(rec: ExperimentRecord) -> dict:
    doc = {
        "label": rec.label,
        "passed": rec.passed,
        "checks": rec.checks,
        "x0": None if rec.spec.x0 is None else rec.spec.x0.tolist(),
        "costs": rec.costs,
        "solver": rec.solver,
        "existence": check_existence(rec.spec).to_dict(),
        "activity": rec.active_flags("designed"),
        "notes": rec.notes,
    }
    if rec.report is not None:
        doc["certificate"] = rec.report.to_dict()
    if rec.exact_max_gap is not None:
        doc["exact_max_gap"] = rec.exact_max_gap
    if rec.naive is not None:
        doc["naive_activity"] = rec.active_flags("naive")
    return _jsonable(doc)


def summary_text(rec: ExperimentRecord) -> str:
    lines = [f"run: {rec.label}", f"result: {'pass' if rec.passed else 'FAIL'}"]
    if rec.spec.x0 is not None:
        lines.append("x0 = (" + ", ".join(f"{v:g}" for v in rec.spec.x0) + ")")
    for k, v in rec.costs.items():
        lines.append(f"cost[{k}] = {v:.10g}")
    for k, v in rec.checks.items():
        lines.append(f"check[{k}] = {'ok' if v else 'FAIL'}")
    if "rate_active_at" in rec.solver:
        lines.append(f"rate bound active at t = {rec.solver['rate_active_at']}")
    if rec.exact_max_gap is not None:
        lines.append(f"exact maximization gap = {rec.exact_max_gap:.3e}")
    lines += [f"note: {n}" for n in rec.notes]
    text = "\n".join(lines) + "\n"
    if rec.report is not None:
        text += "\n" + rec.report.render()
    return text


def write_outputs(rec: ExperimentRecord, out) -> Path:
    """Write CSVs, report.json and summary.txt into directory ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csvs(rec.designed, out)
    if rec.naive is not None:
        write_trajectory_csvs(rec.naive, out, prefix="naive_")
    if rec.unconstrained is not None:
        write_trajectory_csvs(rec.unconstrained, out, prefix="unconstrained_")
    if rec.certificate is not None:
        dump_trajectory(rec.designed, out / "trajectory.json")
        dump_certificate(rec.certificate, out / "certificate.json")
    (out / "report.json").write_text(json.dumps(record_to_dict(rec), indent=2) + "\n", encoding="utf-8")
    (out / "summary.txt").write_text(summary_text(rec), encoding="utf-8")
    return out


__all__ = [
    "DEFAULT_X0", "CLIP_ORDERS", "benchmark_problem", "naive_clip", "ExperimentRecord",
    "solve_and_certify", "run_paper_example", "run_naive_experiment", "write_outputs",
    "write_trajectory_csvs", "record_to_dict", "summary_text",
]
