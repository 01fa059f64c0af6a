"""Structural sufficient conditions for the existence of an optimal trajectory.

Two routes are checked. Route A needs compact M(0) and U(t), closed M(t)
and continuous data. Route B replaces compactness of the initial and
control sets by weak coercivity of the first stage cost. Only the set
variants and matrix definiteness are inspected; the report is never a
proof of nonexistence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import (ControlAffineDynamics, LinearDynamics, OcpSpec, QuadraticCost,
                    QuadraticTerminalCost, is_positive_definite)

PASS = "pass"
FAIL = "fail"
ASSUMED = "assumed"
NOT_ESTABLISHED = "not-established"


def _combine(verdicts) -> str:
    verdicts = list(verdicts)
    if FAIL in verdicts:
        return FAIL
    if NOT_ESTABLISHED in verdicts:
        return NOT_ESTABLISHED
    if ASSUMED in verdicts:
        return ASSUMED
    return PASS


@dataclass
class ExistenceReport:
    route_a: str
    route_b: str
    conditions: dict[str, str]
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"route_a": self.route_a, "route_b": self.route_b,
                "conditions": dict(self.conditions), "notes": list(self.notes)}


def check_existence(spec: OcpSpec) -> ExistenceReport:
    """Evaluate both existence routes structurally."""
    notes = []
    init = spec.initial_set()
    compact = init.is_bounded and all(s.is_bounded for s in spec.control_sets)
    cond = {"a": PASS if compact else FAIL}
    # every supported set variant is closed
    cond["b"] = PASS if all(s.is_closed for s in spec.state_sets) else FAIL

    structural = (LinearDynamics, ControlAffineDynamics)
    cond["c"] = PASS if all(isinstance(f, structural) for f in spec.dynamics) else ASSUMED
    cost_ok = (all(isinstance(c, QuadraticCost) for c in spec.stage_costs)
               and isinstance(spec.terminal_cost, QuadraticTerminalCost))
    cond["d"] = PASS if cost_ok else ASSUMED

    cond["e"] = PASS if init.is_closed and all(s.is_closed for s in spec.control_sets) else FAIL
    cond["f"] = _combine([cond["b"], cond["c"], cond["d"]])
    c0 = spec.stage_costs[0]
    if isinstance(c0, QuadraticCost) and is_positive_definite(c0.Q) and is_positive_definite(c0.R):
        cond["g"] = PASS
    else:
        cond["g"] = NOT_ESTABLISHED

    degenerate = [f"U({t})" for t, s in enumerate(spec.control_sets) if s.is_degenerate]
    degenerate += [f"M({t})" for t, s in enumerate(spec.state_sets) if s.is_degenerate]
    if degenerate:
        notes.append("sets with empty interior (nonempty-relative-interior assumption flagged): "
                     + ", ".join(degenerate))
    if spec.x0 is not None:
        notes.append("x(0) fixed: M(0) taken as the singleton {x0}")

    route_a = _combine([cond["a"], cond["b"], cond["c"], cond["d"]])
    route_b = _combine([cond["e"], cond["f"], cond["g"]])
    return ExistenceReport(route_a, route_b, cond, notes)
