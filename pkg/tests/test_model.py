import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratepmp.experiment import benchmark_problem
from ratepmp.model import (LinearDynamics, OcpSpec, QuadraticCost, QuadraticTerminalCost,
                           Trajectory, central_difference, check_derivatives,
                           constraint_violations, is_feasible, is_positive_definite,
                           rate_magnitudes, rollout, total_cost)
from ratepmp.sets import Box, Whole

from _problems import control_affine_problem, pendulum_like, random_lq, scalar_problem


def test_rollout_scalar_hand_recursion():
    spec = scalar_problem(T=2)
    traj = rollout(spec, [1.0], [0.5, -0.25])
    np.testing.assert_array_equal(traj.x.ravel(), [1.0, 1.5, 1.25])


def test_rollout_benchmark_zero_equilibrium():
    spec = benchmark_problem((0.0, 0.0, 0.0))
    traj = rollout(spec, np.zeros(3), np.zeros(30))
    assert np.all(traj.x == 0.0)


def test_rollout_benchmark_one_rotation_step():
    spec = benchmark_problem()
    traj = rollout(spec, [1.0, 0.0, 0.0], np.zeros(30))
    np.testing.assert_allclose(traj.x[1], [np.cos(np.pi / 4), np.sin(np.pi / 4), 0.0], atol=1e-15)


def test_rollout_dimension_mismatch():
    spec = scalar_problem(T=2)
    with pytest.raises(ValueError):
        rollout(spec, [1.0], [0.5])
    with pytest.raises(ValueError):
        rollout(spec, [1.0, 2.0], [0.5, 0.1])


def test_rollout_is_deterministic():
    rng = np.random.default_rng(3)
    spec = random_lq(rng, T=6, d=3, m=2)
    u = rng.standard_normal((6, 2))
    a, b = rollout(spec, spec.x0, u), rollout(spec, spec.x0, u)
    assert a.x.tobytes() == b.x.tobytes()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3))
def test_rollout_linearity_without_offset(seed, alpha):
    rng = np.random.default_rng(seed)
    T, d, m = 5, 3, 2
    spec = OcpSpec(T, d, m, LinearDynamics(rng.standard_normal((d, d)), rng.standard_normal((d, m))),
                   QuadraticCost(np.eye(d), np.eye(m)), QuadraticTerminalCost(np.eye(d)),
                   Whole(d), Whole(m), 1.0)
    x0, u = rng.standard_normal(d), rng.standard_normal((T, m))
    base = rollout(spec, x0, u).x
    scaled = rollout(spec, alpha * x0, alpha * u).x
    np.testing.assert_allclose(scaled, alpha * base, rtol=1e-12, atol=1e-12 * np.max(np.abs(scaled)))


def test_total_cost_examples():
    spec = benchmark_problem((0.0, 0.0, 0.0))
    zero = Trajectory(np.zeros((31, 3)), np.zeros((30, 1)))
    assert total_cost(spec, zero) == 0.0
    # d = m = 1, stage cost 0.5 (x^2 + u^2), terminal ||x||^2
    spec1 = OcpSpec(1 + 1, 1, 1, LinearDynamics([[1.0]], [[1.0]]), QuadraticCost([[1.0]], [[1.0]]),
                    QuadraticTerminalCost([[2.0]]), Whole(1), Whole(1), 1.0)
    traj = Trajectory([[1.0], [0.0], [0.0]], [[1.0], [0.0]])
    assert total_cost(spec1, traj) == pytest.approx(1.0)


def test_total_cost_matches_manual_sum():
    rng = np.random.default_rng(0)
    spec = random_lq(rng, T=4, d=2, m=2)
    traj = rollout(spec, spec.x0, rng.standard_normal((4, 2)))
    manual = 0.0
    for t in range(4):
        c = spec.stage_costs[t]
        x, u = traj.x[t], traj.u[t]
        manual += 0.5 * x @ c.Q @ x + 0.5 * u @ c.R @ u + c.q @ x + c.r @ u + c.offset
    tc = spec.terminal_cost
    manual += 0.5 * traj.x[4] @ tc.Q @ traj.x[4] + tc.q @ traj.x[4] + tc.offset
    assert total_cost(spec, traj) == pytest.approx(manual, rel=1e-14)


def test_spec_sequence_lengths_enforced():
    kw = dict(T=3, d=1, m=1, dynamics=LinearDynamics([[1.0]], [[1.0]]),
              stage_costs=QuadraticCost([[1.0]], [[1.0]]), terminal_cost=QuadraticTerminalCost([[1.0]]),
              state_sets=Whole(1), control_sets=Whole(1))
    OcpSpec(**kw, rate_bounds=[1.0, 1.0])
    with pytest.raises(ValueError, match="T-1"):
        OcpSpec(**kw, rate_bounds=[1.0, 1.0, 1.0])
    with pytest.raises(ValueError, match="positive"):
        OcpSpec(**kw, rate_bounds=[1.0, 0.0])
    with pytest.raises(ValueError, match="state_sets"):
        OcpSpec(**{**kw, "state_sets": [Whole(1)] * 3}, rate_bounds=1.0)
    with pytest.raises(ValueError, match="horizon"):
        OcpSpec(**{**kw, "T": 1}, rate_bounds=1.0)


def test_quadratic_cost_validation():
    with pytest.raises(ValueError, match="symmetric"):
        QuadraticCost([[1.0, 1.0], [0.0, 1.0]], [[1.0]])
    with pytest.raises(ValueError):
        QuadraticCost([[-1.0]], [[1.0]])
    assert is_positive_definite(np.eye(2))
    assert not is_positive_definite(np.diag([1.0, 0.0]))


def test_constraint_violations_and_rates():
    spec = scalar_problem(T=3, u_bound=1.0, rate=0.5)
    traj = rollout(spec, [1.0], [0.0, 0.7, 1.5])
    v = constraint_violations(spec, traj)
    assert v.control == pytest.approx(0.5)
    assert v.rate == pytest.approx(0.3)
    assert v.dynamics == 0.0
    assert not is_feasible(spec, traj)
    np.testing.assert_allclose(rate_magnitudes(traj.u), [0.7, 0.8])
    np.testing.assert_allclose(rate_magnitudes([[0, 0], [3, 4]], "two"), [5.0])


def test_central_difference_on_polynomial():
    jac = central_difference(lambda z: np.array([z[0] ** 2 * z[1]]), np.array([1.0, 2.0]))
    np.testing.assert_allclose(jac, [[4.0, 1.0]], rtol=1e-9)


@pytest.mark.parametrize("make", [
    lambda: random_lq(np.random.default_rng(5), T=4, d=3, m=2),
    lambda: pendulum_like(),
    lambda: control_affine_problem(),
], ids=["linear-quadratic", "general-smooth", "control-affine"])
def test_analytic_derivatives_match_finite_differences(make):
    rep = check_derivatives(make(), n_probes=100, rng=11)
    assert rep.probes == 100
    assert rep.worst <= 1e-6


def test_derivative_check_detects_wrong_jacobian():
    spec = pendulum_like()
    bad = OcpSpec(spec.T, spec.d, spec.m,
                  type(spec.dynamics[0])(spec.dynamics[0].f, lambda t, x, u: np.eye(2), spec.dynamics[0].fu),
                  spec.stage_costs[0], spec.terminal_cost, spec.state_sets[0], spec.control_sets[0], 0.5)
    assert check_derivatives(bad, n_probes=20, rng=0).dynamics_x > 1e-3


def test_trajectory_shape_checks():
    spec = scalar_problem(T=2)
    with pytest.raises(ValueError):
        Trajectory(np.zeros((2, 1)), np.zeros((2, 1)))
    with pytest.raises(ValueError):
        Trajectory(np.zeros((3, 2)), np.zeros((2, 1))).check_consistent(spec)


def test_box_bounds_in_benchmark():
    spec = benchmark_problem()
    assert spec.state_sets[5] == Box([-8, -8, -0.2], [8, 8, 8])
    assert spec.control_sets[0] == Box([-1.0], [1.0])
    assert spec.rate_bounds.shape == (29,)
