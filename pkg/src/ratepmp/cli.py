"""Command-line front end.

Exit codes: 0 when every check passes, 2 on a certificate or constraint
failure, 1 on usage or I/O errors. RATEPMP_LOG selects quiet, info or debug
logging on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .experiment import (CLIP_ORDERS, DEFAULT_X0, run_naive_experiment, run_paper_example,
                         solve_and_certify, summary_text, write_outputs)
from .lifting import LiftedProblem, f12, f21, lifted_cost_equivalence
from .model import EPS_FEAS, constraint_violations, total_cost
from .pmp import EPS_CERT, check_certificate
from .qp import (QpSettings, SearchSpaceTooLarge, SolveError, UnsupportedProblem,
                 brute_force_oracle, solve, solve_ocp, transcribe_lifted)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAIL = 2
LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("ratepmp")


class UsageError(Exception):
    pass


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever sys.stderr is at emit time."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def configure_logging(env=None) -> int:
    value = (os.environ if env is None else env).get("RATEPMP_LOG", "quiet").strip().lower()
    if value not in LOG_LEVELS:
        raise UsageError(f"RATEPMP_LOG must be one of {', '.join(LOG_LEVELS)}, got {value!r}")
    level = LOG_LEVELS[value]
    root = logging.getLogger("ratepmp")
    root.setLevel(level)
    if not any(isinstance(h, _StderrHandler) for h in root.handlers):
        h = _StderrHandler()
        h.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(h)
    return level


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(p) for p in text.split(",")], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _existing_file(text: str) -> Path:
    p = Path(text)
    if not p.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {text}")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ratepmp",
                                     description="Solve and certify rate-constrained optimal control problems.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, cert=True):
        p.add_argument("--out", type=Path, help="directory for CSV/JSON outputs")
        p.add_argument("--eps-qp", type=_positive, default=1e-7, help="QP stopping tolerance")
        p.add_argument("--eps-feas", type=_positive, default=EPS_FEAS, help="constraint tolerance")
        if cert:
            p.add_argument("--eps-cert", type=_positive, default=EPS_CERT, help="certificate tolerance")
            p.add_argument("--seed", type=int, default=0, help="seed for the sampled maximization check")

    p = sub.add_parser("solve", help="solve, certify and export a problem")
    p.add_argument("problem", type=_existing_file)
    p.add_argument("--x0", type=_vector, help="override the initial state, e.g. 1,0,0")
    common(p)

    p = sub.add_parser("paper-example", help="the rotating-integrator benchmark")
    p.add_argument("--x0", type=_vector, default=np.array(DEFAULT_X0),
                   help="initial state (default %s)" % ",".join(f"{v:g}" for v in DEFAULT_X0))
    common(p)

    p = sub.add_parser("naive-clip", help="compare the optimum with clipping an unconstrained design")
    p.add_argument("problem", type=_existing_file, nargs="?",
                   help="problem file (default: the benchmark)")
    p.add_argument("--x0", type=_vector)
    p.add_argument("--clip-order", choices=CLIP_ORDERS, default="magnitude-rate")
    common(p, cert=False)

    p = sub.add_parser("verify", help="check a trajectory and certificate")
    p.add_argument("problem", type=_existing_file)
    p.add_argument("trajectory", type=_existing_file)
    p.add_argument("certificate", type=_existing_file)
    p.add_argument("--eps-cert", type=_positive, default=EPS_CERT)
    p.add_argument("--eps-feas", type=_positive, default=EPS_FEAS)
    p.add_argument("--out", type=Path, help="write report.json here")

    p = sub.add_parser("oracle", help="compare the QP optimum with exhaustive grid search")
    p.add_argument("problem", type=_existing_file)
    p.add_argument("--grid", type=_positive, required=True, help="grid step")
    p.add_argument("--eps-qp", type=_positive, default=1e-7)

    p = sub.add_parser("lift-check", help="check the lifted formulation against the original")
    p.add_argument("problem", type=_existing_file)
    p.add_argument("--reading", choices=("reflect", "literal"), default="reflect")
    p.add_argument("--eps-qp", type=_positive, default=1e-7)
    return parser


def _load(args):
    spec = io.load_problem(args.problem)
    x0 = getattr(args, "x0", None)
    if x0 is not None:
        if x0.shape[0] != spec.d:
            raise UsageError(f"--x0 has {x0.shape[0]} entries, the problem has d = {spec.d}")
        spec = replace(spec, x0=x0)
    return spec


def _finish(rec, args) -> int:
    if args.out is not None:
        write_outputs(rec, args.out)
    sys.stdout.write(summary_text(rec))
    return EXIT_OK if rec.passed else EXIT_FAIL


def cmd_solve(args) -> int:
    spec = _load(args)
    rec = solve_and_certify(spec, label="solve", eps_qp=args.eps_qp, eps_cert=args.eps_cert,
                            eps_feas=args.eps_feas, seed=args.seed)
    return _finish(rec, args)


def cmd_paper_example(args) -> int:
    if args.x0.shape[0] != 3:
        raise UsageError("--x0 needs 3 entries")
    rec = run_paper_example(args.x0, eps_qp=args.eps_qp, eps_cert=args.eps_cert,
                            eps_feas=args.eps_feas, seed=args.seed)
    return _finish(rec, args)


def cmd_naive_clip(args) -> int:
    if args.problem is None:
        problem = args.x0
        if problem is not None and problem.shape[0] != 3:
            raise UsageError("--x0 needs 3 entries")
    else:
        problem = _load(args)
    rec = run_naive_experiment(problem, order=args.clip_order, eps_qp=args.eps_qp,
                               eps_feas=args.eps_feas)
    return _finish(rec, args)


def cmd_verify(args) -> int:
    spec = io.load_problem(args.problem)
    traj = io.load_trajectory(args.trajectory)
    cert = io.load_certificate(args.certificate)
    try:
        report = check_certificate(spec, traj, cert, eps_cert=args.eps_cert)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    viol = constraint_violations(spec, traj)
    sys.stdout.write(report.render())
    sys.stdout.write(f"max constraint violation: {viol.worst:.3e}\n")
    if args.out is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        doc = report.to_dict()
        doc["max_constraint_violation"] = viol.worst
        (Path(args.out) / "report.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    ok = report.passed and viol.worst <= args.eps_feas
    return EXIT_OK if ok else EXIT_FAIL


def cmd_oracle(args) -> int:
    spec = io.load_problem(args.problem)
    traj, sol, _ = solve_ocp(spec, QpSettings(eps=args.eps_qp))
    J_qp = total_cost(spec, traj)
    try:
        _, J_grid = brute_force_oracle(spec, args.grid)
    except SearchSpaceTooLarge as exc:
        raise UsageError(str(exc)) from None
    ok = J_qp <= J_grid + 1e-6
    sys.stdout.write(f"qp cost:     {J_qp:.12g}\ngrid cost:   {J_grid:.12g}\n"
                     f"difference:  {J_grid - J_qp:.3e}\n"
                     f"dominance (qp <= grid + 1e-6): {'ok' if ok else 'FAIL'}\n")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_lift_check(args) -> int:
    spec = io.load_problem(args.problem)
    settings = QpSettings(eps=args.eps_qp)
    traj, _, _ = solve_ocp(spec, settings)
    lifted = LiftedProblem(spec, args.reading)
    ext = f12(spec, traj)
    round_trip = f21(spec, ext) == traj
    in_sets = lifted.contains(ext, tol=1e-6)
    J_orig, J_lift = lifted_cost_equivalence(spec, traj)
    lq = transcribe_lifted(spec, args.reading)
    lsol = solve(lq.qp, settings)
    J_explicit = lsol.objective if lsol.ok else float("nan")
    agree = lsol.ok and abs(J_explicit - J_orig) <= 1e-6 * max(1.0, abs(J_orig))
    sys.stdout.write(f"extended state dimension q = {lifted.q}\n"
                     f"round trip f21(f12(x)) = x: {'ok' if round_trip else 'FAIL'}\n"
                     f"lifted optimum in W(t) ({args.reading}): {'ok' if in_sets else 'FAIL'}\n"
                     f"cost original / lifted: {J_orig:.12g} / {J_lift:.12g}\n"
                     f"explicit lifted QP optimum: {J_explicit:.12g} ({lsol.status})\n"
                     f"optimal values agree: {'ok' if agree else 'FAIL'}\n")
    return EXIT_OK if (round_trip and in_sets and agree) else EXIT_FAIL


COMMANDS = {"solve": cmd_solve, "paper-example": cmd_paper_example, "naive-clip": cmd_naive_clip,
            "verify": cmd_verify, "oracle": cmd_oracle, "lift-check": cmd_lift_check}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; map to the usage code
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        configure_logging()
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ratepmp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except io.SchemaError as exc:
        print(f"ratepmp: invalid problem: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnsupportedProblem as exc:
        print(f"ratepmp: unsupported problem: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"ratepmp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolveError as exc:
        print(f"ratepmp: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
