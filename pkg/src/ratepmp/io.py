"""JSON (de)serialization for problems, trajectories and certificates.

Problem document::

    {
      "T": 30, "d": 3, "m": 1,
      "dynamics":      {"type": "linear", "A": [[..]], "B": [[..]], "c": [..]}   or a list of T,
      "stage_costs":   {"type": "quadratic", "Q": .., "R": .., "q": .., "r": .., "offset": 0}
                       or a list of T,
      "terminal_cost": {"type": "quadratic", "Q": .., "q": .., "offset": 0},
      "state_sets":    <set> or a list of T+1,
      "control_sets":  <set> or a list of T,
      "rate_bounds":   [R_0, .., R_{T-2}],
      "rate_norm":     "inf" | "two",
      "x0":            [..] | null
    }

A <set> is one of ``{"type": "box", "lower": [..], "upper": [..]}``,
``{"type": "ball", "center": [..], "radius": r, "norm": "inf"}``,
``{"type": "singleton", "point": [..]}`` or ``{"type": "whole", "dim": n}``.
Matrices are row-major nested arrays. Infinite box bounds are written as
the strings "inf" / "-inf".
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .model import (LinearDynamics, OcpSpec, QuadraticCost, QuadraticTerminalCost, Trajectory)
from .pmp import PmpCertificate
from .sets import Box, ConvexSet, NormBall, Singleton, Whole


class SchemaError(ValueError):
    """Invalid problem document. ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _num(v, path):
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity", "-inf", "-infinity"):
        return float(v.strip().lower().replace("infinity", "inf"))
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(path, f"expected a number, got {type(v).__name__}")
    return float(v)


def _vec(v, path, n=None):
    if not isinstance(v, list):
        raise SchemaError(path, "expected an array")
    out = np.array([_num(x, f"{path}[{i}]") for i, x in enumerate(v)], dtype=float)
    if n is not None and out.shape[0] != n:
        raise SchemaError(path, f"expected {n} entries, got {out.shape[0]}")
    return out


def _mat(v, path, rows, cols):
    if not isinstance(v, list):
        raise SchemaError(path, "expected a nested array")
    if len(v) != rows:
        raise SchemaError(path, f"expected {rows} rows, got {len(v)}")
    return np.array([_vec(r, f"{path}[{i}]", cols) for i, r in enumerate(v)]).reshape(rows, cols)


def _get(obj, key, path, default=...):
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object")
    if key not in obj:
        if default is ...:
            raise SchemaError(f"{path}.{key}" if path else key, "missing field")
        return default
    return obj[key]


def _int(v, path, lo):
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise SchemaError(path, f"expected an integer >= {lo}")
    return v


def _per_stage(doc, key, n, parse):
    v = _get(doc, key, "")
    if isinstance(v, list):
        if len(v) != n:
            raise SchemaError(key, f"expected exactly {n} entries, got {len(v)}")
        return [parse(item, f"{key}[{i}]") for i, item in enumerate(v)]
    return parse(v, key)


def _wrap(path, fn, *args):
    try:
        return fn(*args)
    except SchemaError:
        raise
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def parse_set(obj, path, dim) -> ConvexSet:
    kind = _get(obj, "type", path)
    if kind == "box":
        lo = _vec(_get(obj, "lower", path), f"{path}.lower", dim)
        hi = _vec(_get(obj, "upper", path), f"{path}.upper", dim)
        return _wrap(path, Box, lo, hi)
    if kind == "ball":
        c = _vec(_get(obj, "center", path), f"{path}.center", dim)
        r = _num(_get(obj, "radius", path), f"{path}.radius")
        return _wrap(path, NormBall, c, r, _get(obj, "norm", path, "inf"))
    if kind == "singleton":
        return Singleton(_vec(_get(obj, "point", path), f"{path}.point", dim))
    if kind == "whole":
        n = _int(_get(obj, "dim", path, dim), f"{path}.dim", 1)
        if n != dim:
            raise SchemaError(f"{path}.dim", f"expected {dim}, got {n}")
        return Whole(n)
    raise SchemaError(f"{path}.type", f"unknown set type {kind!r}")


def problem_from_dict(doc: dict) -> OcpSpec:
    if not isinstance(doc, dict):
        raise SchemaError("$", "problem must be a JSON object")
    T = _int(_get(doc, "T", ""), "T", 2)
    d = _int(_get(doc, "d", ""), "d", 1)
    m = _int(_get(doc, "m", ""), "m", 1)

    def dyn(obj, path):
        if _get(obj, "type", path) != "linear":
            raise SchemaError(f"{path}.type", "only 'linear' dynamics can be loaded from JSON")
        A = _mat(_get(obj, "A", path), f"{path}.A", d, d)
        B = _mat(_get(obj, "B", path), f"{path}.B", d, m)
        c = _get(obj, "c", path, None)
        return LinearDynamics(A, B, None if c is None else _vec(c, f"{path}.c", d))

    def cost(obj, path):
        if _get(obj, "type", path) != "quadratic":
            raise SchemaError(f"{path}.type", "only 'quadratic' costs can be loaded from JSON")
        Q = _mat(_get(obj, "Q", path), f"{path}.Q", d, d)
        R = _mat(_get(obj, "R", path), f"{path}.R", m, m)
        q = _get(obj, "q", path, None)
        r = _get(obj, "r", path, None)
        return _wrap(path, QuadraticCost, Q, R,
                     None if q is None else _vec(q, f"{path}.q", d),
                     None if r is None else _vec(r, f"{path}.r", m),
                     _num(_get(obj, "offset", path, 0.0), f"{path}.offset"))

    def terminal(obj, path):
        if _get(obj, "type", path) != "quadratic":
            raise SchemaError(f"{path}.type", "only 'quadratic' terminal costs can be loaded")
        Q = _mat(_get(obj, "Q", path), f"{path}.Q", d, d)
        q = _get(obj, "q", path, None)
        return _wrap(path, QuadraticTerminalCost, Q,
                     None if q is None else _vec(q, f"{path}.q", d),
                     _num(_get(obj, "offset", path, 0.0), f"{path}.offset"))

    dynamics = _per_stage(doc, "dynamics", T, dyn)
    costs = _per_stage(doc, "stage_costs", T, cost)
    term = terminal(_get(doc, "terminal_cost", ""), "terminal_cost")
    states = _per_stage(doc, "state_sets", T + 1, lambda o, p: parse_set(o, p, d))
    controls = _per_stage(doc, "control_sets", T, lambda o, p: parse_set(o, p, m))
    rb = _get(doc, "rate_bounds", "")
    R = _vec(rb, "rate_bounds", T - 1)
    for i, v in enumerate(R):
        if not (v > 0 and math.isfinite(v)):
            raise SchemaError(f"rate_bounds[{i}]", "must be a positive finite number")
    norm = _get(doc, "rate_norm", "", "inf")
    if norm not in ("inf", "two"):
        raise SchemaError("rate_norm", "must be 'inf' or 'two'")
    x0 = _get(doc, "x0", "", None)
    x0 = None if x0 is None else _vec(x0, "x0", d)
    return _wrap("$", OcpSpec, T, d, m, dynamics, costs, term, states, controls, R, norm, x0)


def _num_out(v):
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def set_to_dict(s: ConvexSet) -> dict:
    if isinstance(s, Box):
        return {"type": "box", "lower": [_num_out(v) for v in s.lower],
                "upper": [_num_out(v) for v in s.upper]}
    if isinstance(s, NormBall):
        return {"type": "ball", "center": s.center.tolist(), "radius": float(s.radius), "norm": s.norm}
    if isinstance(s, Singleton):
        return {"type": "singleton", "point": s.point.tolist()}
    if isinstance(s, Whole):
        return {"type": "whole", "dim": s.dim}
    raise TypeError(f"cannot serialize {type(s).__name__}")


def _collapse(items):
    """A single object when every stage shares it, else the list."""
    items = list(items)
    return items[0] if all(i == items[0] for i in items) else items


def problem_to_dict(spec: OcpSpec) -> dict:
    if not spec.is_linear_quadratic:
        raise TypeError("only linear dynamics with quadratic costs can be serialized")

    def dyn(f):
        return {"type": "linear", "A": f.A.tolist(), "B": f.B.tolist(), "c": f.c.tolist()}

    def cost(c):
        return {"type": "quadratic", "Q": c.Q.tolist(), "R": c.R.tolist(), "q": c.q.tolist(),
                "r": c.r.tolist(), "offset": float(c.offset)}

    tc = spec.terminal_cost
    return {
        "T": spec.T, "d": spec.d, "m": spec.m,
        "dynamics": _collapse(dyn(f) for f in spec.dynamics),
        "stage_costs": _collapse(cost(c) for c in spec.stage_costs),
        "terminal_cost": {"type": "quadratic", "Q": tc.Q.tolist(), "q": tc.q.tolist(),
                          "offset": float(tc.offset)},
        "state_sets": _collapse(set_to_dict(s) for s in spec.state_sets),
        "control_sets": _collapse(set_to_dict(s) for s in spec.control_sets),
        "rate_bounds": spec.rate_bounds.tolist(),
        "rate_norm": spec.rate_norm,
        "x0": None if spec.x0 is None else spec.x0.tolist(),
    }


def _read_json(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None


def _write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def load_problem(path) -> OcpSpec:
    return problem_from_dict(_read_json(path))


def dump_problem(spec: OcpSpec, path) -> None:
    _write_json(problem_to_dict(spec), path)


def trajectory_to_dict(traj: Trajectory) -> dict:
    return {"x": traj.x.tolist(), "u": traj.u.tolist()}


def trajectory_from_dict(doc) -> Trajectory:
    if not isinstance(doc, dict):
        raise SchemaError("$", "trajectory must be a JSON object")
    try:
        x = np.array(_get(doc, "x", ""), dtype=float)
        u = np.array(_get(doc, "u", ""), dtype=float)
        return Trajectory(x, u)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError("$", str(exc)) from None


def load_trajectory(path) -> Trajectory:
    return trajectory_from_dict(_read_json(path))


def dump_trajectory(traj: Trajectory, path) -> None:
    _write_json(trajectory_to_dict(traj), path)


def load_certificate(path) -> PmpCertificate:
    doc = _read_json(path)
    try:
        return PmpCertificate.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise SchemaError("$", str(exc)) from None


def dump_certificate(cert: PmpCertificate, path) -> None:
    _write_json(cert.to_dict(), path)
