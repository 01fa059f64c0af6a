import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratepmp.experiment import (DEFAULT_X0, benchmark_problem, naive_clip, record_to_dict,
                                run_naive_experiment, run_paper_example, solve_and_certify,
                                write_outputs)
from ratepmp.sets import Box

from _problems import BENCHMARK_COST, random_benchmark_variant, random_lq

UNIT = Box([-1.0], [1.0])


def test_naive_clip_hand_example():
    out = naive_clip([0.0, 2.0, -2.0], UNIT, 0.75, [0.0])
    np.testing.assert_array_equal(out.ravel(), [0.0, 0.75, 0.0])


def test_naive_clip_feasible_input_unchanged():
    u = np.array([0.1, 0.5, 0.9, 0.3, -0.4])
    np.testing.assert_array_equal(naive_clip(u, UNIT, 0.75, [0.0]).ravel(), u)


def test_naive_clip_huge_rate_is_magnitude_only():
    u = np.array([3.0, -0.2, -7.0, 0.4])
    np.testing.assert_array_equal(naive_clip(u, UNIT, 1e9).ravel(), np.clip(u, -1, 1))


def test_naive_clip_other_order():
    # slew first: 0 -> 0.75; 0.75 -> 1.5, clamped to 1; 1 -> 0.25
    out = naive_clip([2.0, 2.0, -2.0], UNIT, 0.75, order="rate-magnitude")
    np.testing.assert_allclose(out.ravel(), [0.75, 1.0, 0.25])
    with pytest.raises(ValueError):
        naive_clip([0.0], UNIT, 1.0, order="sideways")


def test_naive_clip_per_step_sets_and_initial_value():
    out = naive_clip([5.0, 5.0], [Box([-1.0], [1.0]), Box([-2.0], [2.0])], [0.5, 2.0], [0.8])
    np.testing.assert_allclose(out.ravel(), [1.0, 2.0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=40), st.floats(0.01, 3.0),
       st.floats(0.1, 5.0), st.floats(-1, 1), st.sampled_from(["magnitude-rate", "rate-magnitude"]))
def test_naive_clip_respects_both_bounds(u, R, ub, u0, order):
    u0 = u0 * ub
    out = naive_clip(u, Box([-ub], [ub]), R, [u0], order=order).ravel()
    assert np.all(np.abs(out) <= ub)
    steps = np.abs(np.diff(np.concatenate([[u0], out])))
    assert np.all(steps <= R * (1 + 1e-15) + 1e-15)


@pytest.fixture(scope="module")
def bench_run():
    return run_paper_example()


def test_paper_example(bench_run):
    assert bench_run.passed
    assert bench_run.solver["status"] == "optimal"
    assert np.max(np.abs(bench_run.designed.u)) <= 1 + 1e-6
    assert np.max(bench_run.rates()) <= 0.75 + 1e-6
    assert np.max(bench_run.rates()) >= 0.75 - 1e-3
    assert any(bench_run.active_flags()["rate"])
    assert bench_run.costs["designed"] == pytest.approx(BENCHMARK_COST, abs=1e-6)
    assert bench_run.report.passed and bench_run.exact_max_gap <= 1e-4
    assert any("chosen default" in n for n in bench_run.notes)


def test_origin_stays_at_rest():
    rec = run_paper_example((0.0, 0.0, 0.0))
    assert np.max(np.abs(rec.designed.u)) <= 1e-9
    assert rec.costs["designed"] <= 1e-12
    assert "rate bound never active" in rec.notes
    assert rec.passed


def test_naive_experiment_on_benchmark():
    rec = run_naive_experiment()
    assert rec.passed
    assert rec.costs["naive"] >= rec.costs["designed"] - 1e-8
    assert rec.costs["unconstrained"] <= rec.costs["designed"] + 1e-8
    # the unconstrained design really violates both limits
    assert np.max(np.abs(rec.unconstrained.u)) > 1.0
    assert np.max(rec.rates("unconstrained")) > 0.75


def test_naive_experiment_rate_first_order():
    rec = run_naive_experiment(order="rate-magnitude")
    assert rec.checks["cost_ordering"] and rec.checks["clipped_bounds"]


@pytest.mark.parametrize("seed", range(10))
def test_cost_ordering_on_variants(seed):
    rec = run_naive_experiment(random_benchmark_variant(np.random.default_rng(1000 + seed)))
    assert rec.checks["cost_ordering"], rec.costs
    assert rec.checks["clipped_bounds"]


def test_loose_bounds_make_clipping_inactive():
    spec = benchmark_problem(DEFAULT_X0, u_bound=100.0, rate=100.0)
    rec = run_naive_experiment(spec)
    np.testing.assert_allclose(rec.naive.u, rec.designed.u, atol=1e-6)
    np.testing.assert_allclose(rec.naive.x, rec.designed.x, atol=1e-6)


def test_naive_experiment_needs_fixed_x0():
    with pytest.raises(ValueError, match="fixed x0"):
        run_naive_experiment(benchmark_problem(None))


def _read_csv(path):
    lines = path.read_bytes().decode("utf-8").split("\n")
    assert lines[-1] == ""
    return lines[0].split(","), [[float(v) for v in ln.split(",")] for ln in lines[1:-1]]


def test_csv_outputs(bench_run, tmp_path):
    write_outputs(bench_run, tmp_path)
    for name in ("states.csv", "controls.csv", "rates.csv", "report.json", "summary.txt",
                 "trajectory.json", "certificate.json"):
        assert (tmp_path / name).exists(), name
    hs, states = _read_csv(tmp_path / "states.csv")
    hu, controls = _read_csv(tmp_path / "controls.csv")
    hr, rates = _read_csv(tmp_path / "rates.csv")
    assert hs == ["t", "x_1", "x_2", "x_3"] and hu == ["t", "u_1"] and hr == ["t", "abs_rate_1"]
    assert len(states) == 31 and len(controls) == 30 and len(rates) == 29
    assert b"\r" not in (tmp_path / "states.csv").read_bytes()
    u = np.array(controls)[:, 1]
    # 17 significant digits round-trip exactly
    np.testing.assert_array_equal(u, bench_run.designed.u[:, 0])
    np.testing.assert_allclose(np.array(rates)[:, 1], np.abs(np.diff(u)), atol=1e-15, rtol=0)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"] and report["certificate"]["verdict"] == "pass"
    assert report["existence"]["route_a"] == "pass"
    summary = (tmp_path / "summary.txt").read_text()
    assert "x0 = (2, 2, 1)" in summary and "chosen default" in summary


def test_naive_outputs_have_prefixed_csvs(tmp_path):
    rec = run_naive_experiment(out=tmp_path)
    for prefix in ("", "naive_", "unconstrained_"):
        assert (tmp_path / f"{prefix}controls.csv").exists()
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["costs"]["naive"] == rec.costs["naive"]
    assert "naive_activity" in doc


def test_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_paper_example(out=a)
    run_paper_example(out=b)
    for f in sorted(p.name for p in a.iterdir()):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_solve_and_certify_random_instance():
    rec = solve_and_certify(random_lq(np.random.default_rng(6)))
    assert rec.passed
    doc = record_to_dict(rec)
    json.dumps(doc, allow_nan=False)
    assert "_seconds" not in doc["solver"]
