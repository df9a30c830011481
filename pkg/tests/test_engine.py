import json
import logging
import sys

import numpy as np
import pytest

from django_autostop.bo.engine import EngineOptions, Proposer, ProposerKind, selection_gap_check, run
from django_autostop.bo.exception import ConfigError, InvalidArgument, ObjectiveFailure, ReplayExhausted
from django_autostop.bo.objectives import Replay, Subprocess, Synthetic, gp_sample, sphere
from django_autostop.bo.space import LinearDimension, SearchSpace

from .conftest import plateau_trace, write_trace


@pytest.fixture
def unit_space():
    return SearchSpace(dims=(LinearDimension("x0", 0, 1),))


def _sphere_run(options, seed=0, max_iters=7):
    objective = Synthetic(sphere(dim=2))
    criterion = "regret_fixed:threshold=0.001,warmup=3"
    return run(objective.space, objective, "gpbo", criterion, max_iters, seed, options, continue_after_stop=True)


class TestProposer:
    def test_from_config(self):
        assert Proposer.from_config("random").kind is ProposerKind.RANDOM
        proposer = Proposer.from_config({"type": "gpbo", "acquisition": "pi"})
        assert proposer.name == "gpbo_pi"

    def test_invalid(self):
        with pytest.raises(ConfigError):
            Proposer.from_config("annealing")


class TestSyntheticRuns:
    def test_deterministic(self, fast_options):
        assert _sphere_run(fast_options).dumps() == _sphere_run(fast_options).dumps()

    def test_seed_changes_candidates(self, fast_options):
        first = _sphere_run(fast_options, seed=0, max_iters=2)
        second = _sphere_run(fast_options, seed=1, max_iters=2)
        assert first.rows[0].candidate != second.rows[0].candidate

    def test_rows(self, fast_options):
        record = _sphere_run(fast_options)
        assert [row.t for row in record.rows] == list(range(1, 8))
        assert [row.cum_seconds for row in record.rows] == [float(t) for t in range(1, 8)]
        incumbents = [row.incumbent_value for row in record.rows]
        assert incumbents == list(np.minimum.accumulate([row.y for row in record.rows]))
        assert record.rows[0].r_bar is None
        assert all(row.r_bar is not None and row.r_bar >= 0 for row in record.rows[2:])
        for row in record.rows:
            assert row.true_regret == pytest.approx(row.incumbent_test)
            assert set(row.candidate) == {"x0", "x1"}
            assert all(-1 <= value <= 1 for value in row.candidate.values())

    def test_stop_and_continue(self, fast_options):
        objective = Synthetic(sphere(dim=1))
        stopped = run(objective.space, objective, "random", "conv:i=2", 30, 0, fast_options)
        assert stopped.summary.reason == "criterion"
        assert len(stopped.rows) == stopped.stop_iteration

        objective = Synthetic(sphere(dim=1))
        full = run(objective.space, objective, "random", "conv:i=2", 30, 0, fast_options, continue_after_stop=True)
        assert len(full.rows) == 30
        assert full.stop_iteration == stopped.stop_iteration
        assert sum(row.stopped for row in full.rows) == 1
        assert full.stop_row.t == stopped.stop_iteration
        assert full.summary.iterations == 30

    def test_random_search_on_finite_domain(self, fast_options):
        function = gp_sample(dim=1, points=50, seed=2)
        objective = Synthetic(function)
        record = run(function.space, objective, "random", "regret_fixed:threshold=1e-3", 6, 0, fast_options)
        grid = set(np.round(function.domain[:, 0], 12))
        assert all(round(row.candidate["x0"], 12) in grid for row in record.rows)

    def test_matched_kernel_bound(self, fast_options):
        function = gp_sample(dim=1, points=40, seed=1)
        options = EngineOptions(
            gp_restarts=1, acq_budget=64, bound_budget=64, polish_steps=0, init_points=2, kernel=function.kernel
        )
        record = run(function.space, Synthetic(function), "gpbo", "regret_fixed:threshold=1e-6", 8, 3, options)
        assert all(row.r_bar is not None for row in record.rows[2:])

    def test_cross_validated_objective(self, fast_options):
        objective = Synthetic(sphere(dim=1), noise_std=0.05, folds=5)
        record = run(objective.space, objective, "random", "regret_cv:warmup=2", 6, 0, fast_options)
        assert all(row.stop_threshold is not None and row.stop_threshold >= 0 for row in record.rows)

    def test_cross_validation_without_folds(self, fast_options, caplog):
        objective = Synthetic(sphere(dim=1))
        with caplog.at_level(logging.WARNING, logger="django_autostop.bo.engine"):
            record = run(objective.space, objective, "random", "regret_cv:warmup=0", 5, 0, fast_options)
        assert record.stop_iteration is None
        assert record.summary.reason == "budget"
        assert all(row.stop_threshold is None for row in record.rows)
        assert len([item for item in caplog.records if "fold values" in item.getMessage()]) == 1

    def test_max_iters_must_be_positive(self, fast_options):
        objective = Synthetic(sphere())
        with pytest.raises(InvalidArgument):
            run(objective.space, objective, "random", "conv:i=2", 0, 0, fast_options)


class TestReplay:
    def test_plateau_stops_convergence_rule(self, tmp_path, unit_space, fast_options):
        objective = Replay.from_file(plateau_trace(tmp_path / "trace.jsonl"))
        record = run(unit_space, objective, "gpbo", "conv:i=10", 50, 0, fast_options)
        assert record.stop_iteration == 22
        assert len(record.rows) == 22
        assert record.rows[-1].incumbent_test == pytest.approx(0.4 + 0.1)
        assert all(row.candidate is None for row in record.rows)

    def test_bound_unavailable_without_candidates(self, tmp_path, unit_space, fast_options):
        objective = Replay.from_file(plateau_trace(tmp_path / "trace.jsonl", rows=25))
        record = run(unit_space, objective, "gpbo", "regret_fixed:threshold=0.5,warmup=0", 25, 0, fast_options)
        assert record.stop_iteration is None
        assert record.summary.reason == "budget"
        assert all(row.r_bar is None for row in record.rows)

    def test_bound_with_candidates(self, tmp_path, unit_space, fast_options):
        xs = [0.1, 0.9, 0.5, 0.3, 0.7]
        trace = write_trace(tmp_path / "trace.jsonl", [(x - 0.35) ** 2 for x in xs], candidates=[{"x0": x} for x in xs])
        record = run(unit_space, Replay.from_file(trace), "gpbo", "regret_fixed:threshold=1e-3", 5, 0, fast_options)
        assert record.rows[0].r_bar is None
        assert record.rows[1].r_bar is None
        assert all(row.r_bar is not None for row in record.rows[2:])
        assert [row.candidate["x0"] for row in record.rows] == pytest.approx(xs)

    def test_acquisition_threshold(self, tmp_path, unit_space, fast_options):
        xs = [0.1, 0.9, 0.5, 0.3, 0.7]
        trace = write_trace(tmp_path / "trace.jsonl", [x**2 for x in xs], candidates=[{"x0": x} for x in xs])
        criterion = "ei_threshold:threshold=1e6,warmup=2"
        record = run(unit_space, Replay.from_file(trace), "gpbo", criterion, 5, 0, fast_options)
        assert record.stop_iteration == 3
        assert record.rows[0].max_acq is None
        assert record.rows[1].max_acq is not None

    def test_single_fold_per_row(self, tmp_path, unit_space, fast_options):
        xs = [0.1, 0.9, 0.5, 0.3, 0.7]
        lines = []
        for t, x in enumerate(xs, start=1):
            y = (x - 0.35) ** 2
            lines.append(json.dumps({"iteration": t, "y": y, "candidate": {"x0": x}, "fold_metrics": [y]}))
        trace = tmp_path / "trace.jsonl"
        trace.write_text("\n".join(lines) + "\n", encoding="utf-8")
        record = run(unit_space, Replay.from_file(trace), "gpbo", "regret_cv:warmup=0", 5, 0, fast_options)
        assert len(record.rows) == 5
        assert record.stop_iteration is None
        assert all(row.stop_threshold is None for row in record.rows)

    def test_short_plateau_stops_convergence_rule(self, tmp_path, unit_space, fast_options):
        trace = write_trace(tmp_path / "trace.jsonl", [1.0, 0.9, 0.9, 0.9, 0.9, 0.8, 0.7])
        record = run(unit_space, Replay.from_file(trace), "gpbo", "conv:i=3", 7, 0, fast_options)
        assert record.stop_iteration == 5
        assert [row.stopped for row in record.rows] == [False, False, False, False, True]

    def test_probability_threshold(self, tmp_path, unit_space, fast_options):
        xs = [0.1, 0.9, 0.5, 0.3, 0.7]
        trace = write_trace(tmp_path / "trace.jsonl", [x**2 for x in xs], candidates=[{"x0": x} for x in xs])
        criterion = "pi_threshold:threshold=1.01,warmup=2"
        record = run(unit_space, Replay.from_file(trace), "gpbo", criterion, 5, 0, fast_options)
        assert record.stop_iteration == 3
        assert all(0 <= row.max_acq <= 1 for row in record.rows[1:])

    def test_exhausted(self, tmp_path, unit_space, fast_options):
        objective = Replay.from_file(plateau_trace(tmp_path / "trace.jsonl", rows=5))
        with pytest.raises(ReplayExhausted) as error:
            run(unit_space, objective, "gpbo", "conv:i=50", 8, 0, fast_options)
        assert len(error.value.record.rows) == 5


class TestSubprocess:
    def test_echo_stub(self, echo_command, fast_options):
        space = SearchSpace(dims=(LinearDimension("x0", 0, 1), LinearDimension("x1", 0, 1)))
        objective = Subprocess(echo_command, folds=3, task="echo")
        record = run(space, objective, "random", "regret_cv:warmup=1", 4, 0, fast_options)
        for row in record.rows:
            expected = sum((row.candidate[name] - 0.3) ** 2 for name in ("x0", "x1"))
            assert row.y == pytest.approx(expected, abs=1e-12)
            assert row.eval_seconds == 0.5
        assert record.summary.task == "echo"

    def test_failure_keeps_partial_record(self, unit_space, fast_options):
        objective = Subprocess([sys.executable, "-c", "import sys; sys.exit(3)"])
        with pytest.raises(ObjectiveFailure) as error:
            run(unit_space, objective, "random", "conv:i=2", 5, 0, fast_options)
        assert error.value.iteration == 1
        assert error.value.record.rows == []
        assert error.value.cause.returncode == 3


class TestGapCheck:
    def test_example(self):
        result = selection_gap_check([0.0, 1.0, 2.0], [0.5, 0.4, 2.0], 2)
        assert result["lhs"] == pytest.approx(1.0)
        assert result["rhs"] == pytest.approx(1.2)
        assert result["holds"]

    def test_random_instances(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(2, 30))
            f = rng.normal(size=n)
            fhat = f + rng.normal(scale=rng.uniform(0, 1), size=n)
            assert selection_gap_check(f, fhat, int(rng.integers(1, n + 1)))["holds"]

    def test_invalid(self):
        with pytest.raises(InvalidArgument):
            selection_gap_check([0.0, 1.0], [0.0], 1)
        with pytest.raises(InvalidArgument):
            selection_gap_check([0.0, 1.0], [0.0, 1.0], 3)
