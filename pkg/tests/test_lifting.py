import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratepmp.experiment import benchmark_problem
from ratepmp.lifting import (ExtendedTrajectory, LiftedProblem, build_rate_matrix, f12, f21,
                             g_step, lift_trajectory, lifted_cost_equivalence, rate_rhs,
                             write_rate_matrix_csv)
from ratepmp.model import Trajectory, rollout
from ratepmp.qp import solve, solve_ocp, transcribe_lifted
from ratepmp.sets import Box, NormBall, Singleton

from _problems import random_lq, scalar_problem


def test_lift_small_example():
    spec = scalar_problem(T=2)
    traj = rollout(spec, [1.0], [0.3, -0.2])
    ext = lift_trajectory(spec, traj)
    np.testing.assert_allclose(ext.y[0, :, 0], [0.0, -0.3, -0.5])
    assert ext.y[0, 2, 0] == pytest.approx(-0.2 - 0.3)


def test_constant_controls_give_zero_lift_tail():
    spec = scalar_problem(T=6)
    ext = lift_trajectory(spec, rollout(spec, [0.0], np.full(6, 0.4)))
    for k in range(5):
        assert np.all(ext.y[k, k + 2:] == 0.0)


def test_g_step_branches():
    np.testing.assert_allclose(g_step(0, 0, [123.0], [0.3]), [-0.3])
    np.testing.assert_allclose(g_step(0, 1, [-0.3], [-0.2]), [-0.5])
    np.testing.assert_allclose(g_step(3, 0, [0.7], [9.0]), [0.7])
    with pytest.raises(IndexError):
        g_step(2, 0, [0.0], [0.0], T=3)
    with pytest.raises(IndexError):
        g_step(0, 3, [0.0], [0.0], T=3)


def test_iterating_g_step_reproduces_lift():
    rng = np.random.default_rng(1)
    spec = random_lq(rng, T=5, m=2)
    traj = rollout(spec, spec.x0, rng.standard_normal((5, 2)))
    ext = lift_trajectory(spec, traj)
    for k in range(4):
        y = np.zeros(2)
        for t in range(5):
            y = g_step(k, t, y, traj.u[t], T=5)
            np.testing.assert_array_equal(y, ext.y[k, t + 1])


def test_extended_dynamics_matches_lift():
    rng = np.random.default_rng(2)
    spec = random_lq(rng, T=4, d=2, m=1)
    traj = rollout(spec, spec.x0, rng.standard_normal((4, 1)))
    ext = lift_trajectory(spec, traj)
    lifted = LiftedProblem(spec)
    assert lifted.q == 2 + 3
    for t in range(4):
        np.testing.assert_allclose(lifted.dynamics(t, ext.w(t), traj.u[t]), ext.w(t + 1), atol=1e-14)


def test_rate_matrix_small_example():
    A = build_rate_matrix(0, 2, 1)
    np.testing.assert_array_equal(A, [[1, 0, 0], [0, 1, 0], [0, -1, 1]])
    assert np.linalg.det(A) == 1.0
    np.testing.assert_allclose(np.linalg.solve(A, [0.0, -0.3, -0.2]), [0.0, -0.3, -0.5])
    np.testing.assert_allclose(rate_rhs(0, np.array([[0.3], [-0.2]])), [0.0, -0.3, -0.2])


def test_rate_matrix_unit_lower_triangular_exhaustive():
    for T in range(2, 13):
        for m in range(1, 4):
            for k in range(T - 1):
                A = build_rate_matrix(k, T, m)
                assert np.array_equal(np.triu(A, 1), np.zeros_like(A))
                assert np.all(np.diag(A) == 1.0)
                assert round(np.linalg.det(A), 12) == 1.0


def test_rate_matrix_solution_equals_lift():
    rng = np.random.default_rng(4)
    T, m = 6, 2
    spec = random_lq(rng, T=T, m=m)
    traj = rollout(spec, spec.x0, rng.standard_normal((T, m)))
    ext = lift_trajectory(spec, traj)
    for k in range(T - 1):
        y = np.linalg.solve(build_rate_matrix(k, T, m), rate_rhs(k, traj.u))
        np.testing.assert_allclose(y.reshape(T + 1, m), ext.y[k], atol=1e-14)


def test_rate_matrix_index_errors():
    with pytest.raises(IndexError):
        build_rate_matrix(2, 3, 1)
    with pytest.raises(IndexError):
        build_rate_matrix(-1, 3, 1)


def test_y_sets_and_readings():
    spec = scalar_problem(T=4, u_bound=1.0, rate=0.5)
    spec = type(spec)(**{**spec.__dict__, "control_sets": [Box([-1.0], [2.0])] * 4})
    reflect = LiftedProblem(spec)
    literal = LiftedProblem(spec, "literal")
    assert reflect.y_set(1, 0) == Singleton([0.0])
    assert reflect.y_set(1, 1) == Singleton([0.0])
    assert reflect.y_set(1, 2) == Box([-2.0], [1.0])
    assert literal.y_set(1, 2) == Box([-1.0], [2.0])
    assert reflect.y_set(1, 3) == NormBall([0.0], 0.5, "inf")
    assert len(reflect.extended_sets(2)) == 1 + 3
    with pytest.raises(ValueError):
        LiftedProblem(spec, "other")


def test_f21_f12_round_trip_bitwise():
    rng = np.random.default_rng(5)
    spec = random_lq(rng, T=5, d=2, m=2)
    traj = rollout(spec, spec.x0, rng.standard_normal((5, 2)))
    back = f21(spec, f12(spec, traj))
    assert back.x.tobytes() == traj.x.tobytes()
    assert back.u.tobytes() == traj.u.tobytes()
    ext = f12(spec, traj)
    again = f12(spec, f21(spec, ext))
    np.testing.assert_allclose(again.y, ext.y, atol=1e-12, rtol=0)


def test_f21_rejects_corrupted_lift():
    spec = scalar_problem(T=3)
    ext = f12(spec, rollout(spec, [1.0], [0.1, 0.2, 0.3]))
    y = ext.y.copy()
    y[0, 1, 0] += 1e-3
    with pytest.raises(ValueError, match=r"y_0\(1\)"):
        f21(spec, ExtendedTrajectory(ext.x, y, ext.u))
    y[0, 1, 0] = ext.y[0, 1, 0] + 1e-11
    f21(spec, ExtendedTrajectory(ext.x, y, ext.u))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 7), st.integers(1, 3))
def test_telescoping_identity(seed, T, m):
    rng = np.random.default_rng(seed)
    spec = random_lq(rng, T=T, m=m)
    u = rng.standard_normal((T, m))
    ext = lift_trajectory(spec, Trajectory(np.zeros((T + 1, spec.d)), u))
    for k in range(T - 1):
        for t in range(k + 2, T + 1):
            np.testing.assert_array_equal(ext.y[k, t], u[k + 1] - u[k])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["inf", "two"]))
def test_rate_bound_iff_lifted_membership(seed, norm):
    rng = np.random.default_rng(seed)
    T, m = 5, 2
    spec = random_lq(rng, T=T, m=m)
    spec = type(spec)(**{**spec.__dict__, "rate_norm": norm})
    lifted = LiftedProblem(spec)
    u = rng.uniform(-1, 1, (T, m))
    ext = lift_trajectory(spec, Trajectory(np.zeros((T + 1, spec.d)), u))
    diff = np.diff(u, axis=0)
    mags = np.max(np.abs(diff), axis=1) if norm == "inf" else np.linalg.norm(diff, axis=1)
    for k in range(T - 1):
        assert (mags[k] <= spec.rate_bounds[k]) == lifted.y_set(k, k + 2).contains(ext.y[k, k + 2], 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_feasibility_transport(seed):
    rng = np.random.default_rng(seed)
    spec = random_lq(rng, T=5, m=2)
    # rate-feasible controls inside U: random walk with clipped steps
    ub = spec.control_sets[0].upper
    u = [rng.uniform(-ub, ub)]
    for t in range(4):
        step = np.clip(rng.uniform(-1, 1, 2), -spec.rate_bounds[t], spec.rate_bounds[t])
        u.append(np.clip(u[-1] + step, -ub, ub))
        # clipping to U can only shrink the step
    traj = rollout(spec, spec.x0, np.array(u))
    lifted = LiftedProblem(spec)
    ext = f12(spec, traj)
    for k in range(4):
        for t in range(6):
            assert lifted.y_set(k, t).contains(ext.y[k, t])


def test_lifted_cost_equivalence_exact():
    spec = benchmark_problem()
    traj, _, _ = solve_ocp(spec)
    J1, J2 = lifted_cost_equivalence(spec, traj)
    assert J1 == J2
    zero = benchmark_problem((0.0, 0.0, 0.0))
    assert lifted_cost_equivalence(zero, rollout(zero, np.zeros(3), np.zeros(30))) == (0.0, 0.0)


def test_benchmark_optimum_lift_within_rate_ball():
    spec = benchmark_problem()
    traj, _, _ = solve_ocp(spec)
    ext = f12(spec, traj)
    for k in range(29):
        assert abs(ext.y[k, k + 2, 0]) <= 0.75 + 1e-6


@pytest.mark.parametrize("seed", range(6))
def test_explicit_lifted_qp_matches_original(seed):
    rng = np.random.default_rng(100 + seed)
    spec = random_lq(rng, T=int(rng.integers(2, 7)))
    traj, sol, _ = solve_ocp(spec)
    lq = transcribe_lifted(spec)
    lsol = solve(lq.qp)
    assert lsol.ok
    assert abs(lsol.objective - sol.objective) <= 1e-6 * max(1.0, abs(sol.objective))
    # the y block of the lifted solution is the lift of its (x, u) block
    ext_u = lsol.z[lq.layout.n - spec.T * spec.m:lq.layout.n].reshape(spec.T, spec.m)
    for k in range(spec.T - 1):
        y = lsol.z[lq.y(k)].reshape(spec.T + 1, spec.m)
        np.testing.assert_allclose(y[k + 2], ext_u[k + 1] - ext_u[k], atol=1e-6)


def test_rate_matrix_csv(tmp_path):
    path = tmp_path / "A.csv"
    write_rate_matrix_csv(path, 1, 4, 2)
    rows = path.read_text().splitlines()
    assert len(rows) == 10
    back = np.array([[float(v) for v in r.split(",")] for r in rows])
    np.testing.assert_array_equal(back, build_rate_matrix(1, 4, 2))
    assert "\r" not in path.read_text()


def test_all_index_pairs_covered():
    spec = scalar_problem(T=5)
    lifted = LiftedProblem(spec)
    kinds = {type(lifted.y_set(k, t)).__name__ for k, t in itertools.product(range(4), range(6))}
    assert kinds == {"Singleton", "Box", "NormBall"}
